//! Parametric acoustic filterbank: time-domain kernels synthesized from
//! per-filter center frequencies, applied to framed raw samples to produce an
//! f×t log-energy representation.
//!
//! Three kernel families are supported. `CosineGaussian` kernels follow
//! g_i(n) = cos(2π·mu_i·n)·exp(-n²·mu_i²/2) with the Gaussian width tied to
//! the center frequency, and are the only family whose centers are learnable.
//! `Sinc` kernels are Hamming-windowed band-passes at equal parameter count.
//! `FixedMel` uses the cosine-Gaussian shape frozen at its mel-scale
//! initialization.

use crate::dsp::RawFrameBlock;
use crate::error::{Error, Result};
use crate::tensor::{Mat, Tensor3};

/// Floor added inside the log so silent frames stay finite.
pub const LOG_FLOOR: f64 = 1e-8;
/// Center frequencies are kept inside [MU_MIN, MU_MAX] (normalized
/// cycles/sample; Nyquist is 0.5).
pub const MU_MIN: f64 = 1e-4;
pub const MU_MAX: f64 = 0.5 - 1e-4;
/// Default mel initialization range in Hz.
pub const DEFAULT_FMIN: f64 = 60.0;
pub const DEFAULT_FMAX: f64 = 7800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterFamily {
    CosineGaussian,
    Sinc,
    FixedMel,
}

impl FilterFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FilterFamily::CosineGaussian => "cosine_gaussian",
            FilterFamily::Sinc => "sinc",
            FilterFamily::FixedMel => "fixed_mel",
        }
    }

    /// Whether gradients flow into the center frequencies.
    pub fn learnable(&self) -> bool {
        matches!(self, FilterFamily::CosineGaussian)
    }
}

impl std::str::FromStr for FilterFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine_gaussian" => Ok(FilterFamily::CosineGaussian),
            "sinc" => Ok(FilterFamily::Sinc),
            "fixed_mel" => Ok(FilterFamily::FixedMel),
            other => Err(Error::argument(format!(
                "unknown filter family '{other}' (expected cosine_gaussian|sinc|fixed_mel)"
            ))),
        }
    }
}

impl std::fmt::Display for FilterFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// mel(h) = 2595·log10(1 + h/700)
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Normalized center frequency in cycles/sample: Nyquist (fs/2) maps to 0.5.
pub fn hz_to_mu(hz: f64, fs: f64) -> f64 {
    hz / fs
}

/// Center frequencies plus everything needed to synthesize kernel taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankParams {
    pub family: FilterFamily,
    /// Length-f, strictly increasing at init, each in (0, 0.5).
    pub mu: Vec<f64>,
    /// Kernel length in samples, odd.
    pub k: usize,
    /// Per-filter band-pass width for the sinc family, frozen at the
    /// mel-spacing of adjacent filters at initialization. Unused by the
    /// other families but kept so exports stay family-agnostic.
    pub band: Vec<f64>,
}

impl FilterbankParams {
    /// Mel-scale initialization: f center points equally spaced on the mel
    /// scale between fmin and fmax (inclusive), normalized by fs.
    pub fn init_mel(family: FilterFamily, f: usize, k: usize, fmin: f64, fmax: f64, fs: f64) -> Result<Self> {
        if f < 2 {
            return Err(Error::argument(format!("need at least 2 filters, got {f}")));
        }
        if k == 0 || k % 2 == 0 {
            return Err(Error::argument(format!("kernel length must be odd, got {k}")));
        }
        if !(0.0 < fmin && fmin < fmax && fmax <= fs / 2.0) {
            return Err(Error::argument(format!(
                "mel range must satisfy 0 < fmin < fmax <= fs/2, got fmin={fmin} fmax={fmax} fs={fs}"
            )));
        }
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let mu: Vec<f64> = (0..f)
            .map(|i| {
                let mel = mel_lo + (mel_hi - mel_lo) * i as f64 / (f - 1) as f64;
                hz_to_mu(mel_to_hz(mel), fs).clamp(MU_MIN, MU_MAX)
            })
            .collect();
        // Average spacing to each neighbor; single-sided at the ends.
        let band: Vec<f64> = (0..f)
            .map(|i| {
                if i == 0 {
                    mu[1] - mu[0]
                } else if i == f - 1 {
                    mu[f - 1] - mu[f - 2]
                } else {
                    (mu[i + 1] - mu[i - 1]) / 2.0
                }
            })
            .collect();
        let params = Self { family, mu, k, band };
        params.validate()?;
        Ok(params)
    }

    /// Mel init over the default 60-7800 Hz speech band at 16 kHz.
    pub fn init_mel_default(family: FilterFamily, f: usize, k: usize) -> Result<Self> {
        Self::init_mel(family, f, k, DEFAULT_FMIN, DEFAULT_FMAX, crate::dsp::SAMPLE_RATE as f64)
    }

    pub fn f(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::argument(format!("kernel length must be odd, got {}", self.k)));
        }
        if self.band.len() != self.mu.len() {
            return Err(Error::argument("band and mu length mismatch".to_string()));
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if !m.is_finite() || m <= 0.0 || m >= 0.5 {
                return Err(Error::argument(format!("mu[{i}] = {m} outside (0, 0.5)")));
            }
        }
        Ok(())
    }
}

/// Synthesized time-domain taps, one kernel per row.
#[derive(Debug, Clone)]
pub struct KernelBank {
    /// f×k taps.
    pub kernels: Mat,
}

fn cosine_gaussian_tap(mu: f64, n: f64) -> f64 {
    (std::f64::consts::TAU * mu * n).cos() * (-n * n * mu * mu / 2.0).exp()
}

/// Builds the kernel taps for the current parameters. Kernels are indexed by
/// integer offsets n in [-(k-1)/2, (k-1)/2] and are not amplitude-normalized;
/// the log in the forward pass compresses scale differences.
pub fn synthesize_kernels(params: &FilterbankParams) -> Result<KernelBank> {
    params.validate()?;
    let f = params.f();
    let k = params.k;
    let half = (k as i64 - 1) / 2;
    let kernels = match params.family {
        FilterFamily::CosineGaussian | FilterFamily::FixedMel => Mat::from_fn(f, k, |i, v| {
            let n = v as i64 - half;
            cosine_gaussian_tap(params.mu[i], n as f64)
        }),
        FilterFamily::Sinc => {
            let n_half = half as f64;
            Mat::from_fn(f, k, |i, v| {
                let f1 = (params.mu[i] - params.band[i] / 2.0).max(MU_MIN / 10.0);
                let f2 = (params.mu[i] + params.band[i] / 2.0).min(0.5 - MU_MIN / 10.0);
                let n = (v as i64 - half) as f64;
                let ideal = if n == 0.0 {
                    2.0 * (f2 - f1)
                } else {
                    ((std::f64::consts::TAU * f2 * n).sin() - (std::f64::consts::TAU * f1 * n).sin())
                        / (std::f64::consts::PI * n)
                };
                let window = 0.54 + 0.46 * (std::f64::consts::PI * n / n_half).cos();
                ideal * window
            })
        }
    };
    if !kernels.all_finite() {
        return Err(Error::contract("synthesize_kernels", "non-finite kernel tap"));
    }
    Ok(KernelBank { kernels })
}

/// ∂g_i(n)/∂mu_i for every tap, rows aligned with the kernel bank. Only the
/// cosine-Gaussian family is mu-learnable; other families are a contract
/// error.
pub fn kernel_mu_jacobian(params: &FilterbankParams) -> Result<Mat> {
    if !params.family.learnable() {
        return Err(Error::contract(
            "kernel_mu_jacobian",
            format!("family {} has no learnable center frequencies", params.family),
        ));
    }
    params.validate()?;
    let half = (params.k as i64 - 1) / 2;
    Ok(Mat::from_fn(params.f(), params.k, |i, v| {
        let n = (v as i64 - half) as f64;
        let mu = params.mu[i];
        let phase = std::f64::consts::TAU * mu * n;
        (-std::f64::consts::TAU * n * phase.sin() - n * n * mu * phase.cos())
            * (-n * n * mu * mu / 2.0).exp()
    }))
}

/// Which stage of the front end a spectrogram-shaped value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    XRaw,
    YWeighted,
    ZNormalized,
}

/// f×t matrix of real values tagged with its pipeline stage.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub values: Mat,
    pub stage: Stage,
}

/// Intermediates kept from the forward pass for the backward pass: raw
/// correlations (f × t × s-k+1) and floored frame energies (f×t).
#[derive(Debug, Clone)]
pub struct AcousticCache {
    pub corr: Tensor3,
    pub energy: Mat,
}

/// Per-frame log energies: for frame j and filter i, correlate the frame with
/// the kernel (valid mode), square, average, and log with a floor of 1e-8.
pub fn acoustic_forward(block: &RawFrameBlock, bank: &KernelBank) -> Result<(Spectrogram, AcousticCache)> {
    let t = block.frames.rows;
    let s = block.frames.cols;
    let f = bank.kernels.rows;
    let k = bank.kernels.cols;
    if s < k {
        return Err(Error::argument(format!("frame length {s} shorter than kernel length {k}")));
    }
    let l = s - k + 1;
    let mut corr = Tensor3::zeros(f, t, l);
    let mut energy = Mat::zeros(f, t);
    let mut values = Mat::zeros(f, t);
    for i in 0..f {
        let g = bank.kernels.row(i);
        let plane = corr.plane_mut(i);
        for j in 0..t {
            let frame = block.frames.row(j);
            let row = &mut plane[j * l..(j + 1) * l];
            let mut sum_sq = 0.0;
            for (u, out) in row.iter_mut().enumerate() {
                let c = crate::tensor::dot(&frame[u..u + k], g);
                *out = c;
                sum_sq += c * c;
            }
            let e = sum_sq / l as f64 + LOG_FLOOR;
            energy.data[i * t + j] = e;
            values.data[i * t + j] = e.ln();
        }
    }
    Ok((Spectrogram { values, stage: Stage::XRaw }, AcousticCache { corr, energy }))
}

/// Reverse-mode gradients of `acoustic_forward`. Returns the gradient with
/// respect to the kernel taps and, when `want_dframes` is set, with respect to
/// the raw frame samples.
pub fn acoustic_backward(
    block: &RawFrameBlock,
    bank: &KernelBank,
    cache: &AcousticCache,
    dx: &Mat,
    want_dframes: bool,
) -> Result<(Mat, Option<Mat>)> {
    let t = block.frames.rows;
    let s = block.frames.cols;
    let f = bank.kernels.rows;
    let k = bank.kernels.cols;
    let l = s - k + 1;
    if dx.rows != f || dx.cols != t {
        return Err(Error::contract(
            "acoustic_backward",
            format!("dx is {}x{}, expected {f}x{t}", dx.rows, dx.cols),
        ));
    }
    let mut dkernels = Mat::zeros(f, k);
    let mut dframes = want_dframes.then(|| Mat::zeros(t, s));
    for i in 0..f {
        let g = bank.kernels.row(i);
        let plane = cache.corr.plane(i);
        let dg = dkernels.row_mut(i);
        for j in 0..t {
            let frame = block.frames.row(j);
            let c = &plane[j * l..(j + 1) * l];
            // x = ln(mean(c²) + eps)  →  dc[u] = dx · 2c[u] / (l · (mean+eps))
            let scale = dx.at(i, j) * 2.0 / (l as f64 * cache.energy.at(i, j));
            for (u, &cu) in c.iter().enumerate() {
                let dc = scale * cu;
                if dc == 0.0 {
                    continue;
                }
                for (v, dgv) in dg.iter_mut().enumerate() {
                    *dgv += dc * frame[u + v];
                }
                if let Some(dfr) = dframes.as_mut() {
                    let drow = dfr.row_mut(j);
                    for (v, &gv) in g.iter().enumerate() {
                        drow[u + v] += dc * gv;
                    }
                }
            }
        }
    }
    Ok((dkernels, dframes))
}
