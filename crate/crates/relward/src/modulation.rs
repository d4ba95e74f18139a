//! Modulation filtering: K learnable 2-D kernels correlated over the
//! normalized spectrogram (valid mode, single input channel), a rectifier,
//! and 3×1 max-pooling along the frequency axis.

use crate::error::{Error, Result};
use crate::tensor::{Mat, Tensor3};

/// Learnable spectro-temporal kernels, one kf×kt filter per output map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationKernels {
    pub kernels: Tensor3,
    pub bias: Vec<f64>,
}

impl ModulationKernels {
    pub fn zeros(k: usize, kf: usize, kt: usize) -> Self {
        Self { kernels: Tensor3::zeros(k, kf, kt), bias: vec![0.0; k] }
    }

    pub fn count(&self) -> usize {
        self.kernels.d0
    }

    pub fn validate(&self) -> Result<()> {
        let (kf, kt) = (self.kernels.d1, self.kernels.d2);
        if kf % 2 == 0 || kt % 2 == 0 || kf == 0 || kt == 0 {
            return Err(Error::argument(format!("modulation kernel dims must be odd, got {kf}x{kt}")));
        }
        if self.bias.len() != self.count() {
            return Err(Error::argument(format!(
                "{} bias entries for {} kernels",
                self.bias.len(),
                self.count()
            )));
        }
        if !self.kernels.data.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::argument("non-finite modulation parameters".to_string()));
        }
        Ok(())
    }
}

/// Which point of the modulation stage a map stack belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapStage {
    PConv,
    PPooled,
    QWeighted,
}

/// K stacked feature maps tagged with their stage.
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    pub maps: Tensor3,
    pub stage: MapStage,
}

/// Pre-activation values, kept so the backward pass can gate through the
/// rectifier.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub pre: Tensor3,
}

/// Valid-mode 2-D correlation of the spectrogram with every kernel, plus
/// bias and rectifier. Output maps are (f-kf+1)×(t-kt+1).
pub fn modulation_forward(z: &Mat, kernels: &ModulationKernels) -> Result<(FeatureMaps, ConvCache)> {
    kernels.validate()?;
    let (kf, kt) = (kernels.kernels.d1, kernels.kernels.d2);
    if z.rows < kf || z.cols < kt {
        return Err(Error::argument(format!(
            "input {}x{} smaller than kernel {kf}x{kt}",
            z.rows, z.cols
        )));
    }
    let k = kernels.count();
    let (fo, to) = (z.rows - kf + 1, z.cols - kt + 1);
    let mut pre = Tensor3::zeros(k, fo, to);
    let mut maps = Tensor3::zeros(k, fo, to);
    for c in 0..k {
        let kern = kernels.kernels.plane(c);
        let pre_plane = pre.plane_mut(c);
        for i in 0..fo {
            for j in 0..to {
                let mut acc = kernels.bias[c];
                for a in 0..kf {
                    acc += crate::tensor::dot(&z.row(i + a)[j..j + kt], &kern[a * kt..(a + 1) * kt]);
                }
                pre_plane[i * to + j] = acc;
            }
        }
        let maps_plane = maps.plane_mut(c);
        for (m, &p) in maps_plane.iter_mut().zip(pre.plane(c)) {
            *m = p.max(0.0);
        }
    }
    Ok((FeatureMaps { maps, stage: MapStage::PConv }, ConvCache { pre }))
}

/// Gradients of `modulation_forward` for the input, the kernels, and the
/// biases.
pub fn modulation_backward(
    z: &Mat,
    kernels: &ModulationKernels,
    cache: &ConvCache,
    dmaps: &Tensor3,
) -> Result<(Mat, Tensor3, Vec<f64>)> {
    let (kf, kt) = (kernels.kernels.d1, kernels.kernels.d2);
    let k = kernels.count();
    let (fo, to) = (cache.pre.d1, cache.pre.d2);
    if dmaps.d0 != k || dmaps.d1 != fo || dmaps.d2 != to {
        return Err(Error::contract("modulation_backward", "gradient shape mismatch"));
    }
    let mut dz = Mat::zeros(z.rows, z.cols);
    let mut dkernels = Tensor3::zeros(k, kf, kt);
    let mut dbias = vec![0.0; k];
    for c in 0..k {
        let pre = cache.pre.plane(c);
        let g = dmaps.plane(c);
        let kern = kernels.kernels.plane(c);
        let dkern = dkernels.plane_mut(c);
        for i in 0..fo {
            for j in 0..to {
                let idx = i * to + j;
                if pre[idx] <= 0.0 {
                    continue;
                }
                let d = g[idx];
                if d == 0.0 {
                    continue;
                }
                dbias[c] += d;
                for a in 0..kf {
                    let zrow = &z.row(i + a)[j..j + kt];
                    let dzrow = &mut dz.row_mut(i + a)[j..j + kt];
                    let krow = &kern[a * kt..(a + 1) * kt];
                    let dkrow = &mut dkern[a * kt..(a + 1) * kt];
                    for b in 0..kt {
                        dkrow[b] += d * zrow[b];
                        dzrow[b] += d * krow[b];
                    }
                }
            }
        }
    }
    Ok((dz, dkernels, dbias))
}

/// Source-row indices chosen by each pooling window, for gradient routing.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub argmax: Vec<usize>,
    pub in_d1: usize,
}

/// Non-overlapping 3-row max windows along the frequency axis, stride (3,1);
/// leftover rows are dropped. Records per-cell argmax rows.
pub fn max_pool_3x1(p: &FeatureMaps) -> Result<(FeatureMaps, PoolCache)> {
    let maps = &p.maps;
    if maps.d1 < 3 {
        return Err(Error::argument(format!("max pool needs at least 3 frequency rows, got {}", maps.d1)));
    }
    let (k, fo, to) = (maps.d0, maps.d1 / 3, maps.d2);
    let mut out = Tensor3::zeros(k, fo, to);
    let mut argmax = vec![0usize; k * fo * to];
    for c in 0..k {
        let plane = maps.plane(c);
        let out_plane = out.plane_mut(c);
        for i in 0..fo {
            for j in 0..to {
                let mut best = f64::NEG_INFINITY;
                let mut best_row = 3 * i;
                for r in 3 * i..3 * i + 3 {
                    let v = plane[r * to + j];
                    if v > best {
                        best = v;
                        best_row = r;
                    }
                }
                out_plane[i * to + j] = best;
                argmax[c * fo * to + i * to + j] = best_row;
            }
        }
    }
    Ok((FeatureMaps { maps: out, stage: MapStage::PPooled }, PoolCache { argmax, in_d1: maps.d1 }))
}

/// Routes pooled-map gradients back to the rows that won each window.
pub fn max_pool_backward(cache: &PoolCache, dpooled: &Tensor3) -> Tensor3 {
    let (k, fo, to) = (dpooled.d0, dpooled.d1, dpooled.d2);
    let mut dinput = Tensor3::zeros(k, cache.in_d1, to);
    for c in 0..k {
        let g = dpooled.plane(c);
        let din = dinput.plane_mut(c);
        for i in 0..fo {
            for j in 0..to {
                let src = cache.argmax[c * fo * to + i * to + j];
                din[src * to + j] += g[i * to + j];
            }
        }
    }
    dinput
}
