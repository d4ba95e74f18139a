//! Normalization stages: per-row instance normalization of the weighted
//! spectrogram, center-frame pruning, and batch normalization with frozen
//! test-time statistics for the weighted modulation maps.

use crate::error::{Error, Result};
use crate::filterbank::{Spectrogram, Stage};
use crate::tensor::{Mat, Tensor3};

/// Stabilizer added to variances in both norms.
pub const NORM_EPS: f64 = 1e-4;
/// Exponential-momentum factor for the batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// z[i,j] = (y[i,j] - m_i) / sqrt(v_i + c) with per-row mean m and population
/// variance v. Returns the per-row 1/sqrt(v+c) for the backward pass.
pub fn instance_norm_mat(y: &Mat, c: f64) -> Result<(Mat, Vec<f64>)> {
    if y.cols < 2 {
        return Err(Error::argument(format!("instance norm needs at least 2 frames, got {}", y.cols)));
    }
    if c <= 0.0 {
        return Err(Error::argument(format!("stabilizer must be positive, got {c}")));
    }
    let t = y.cols as f64;
    let mut out = Mat::zeros(y.rows, y.cols);
    let mut inv_std = vec![0.0; y.rows];
    for i in 0..y.rows {
        let row = y.row(i);
        let mean = row.iter().sum::<f64>() / t;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / t;
        let inv = 1.0 / (var + c).sqrt();
        inv_std[i] = inv;
        for (o, &v) in out.row_mut(i).iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
    }
    Ok((out, inv_std))
}

/// Reverse-mode instance norm. `z` is the forward output.
pub fn instance_norm_backward(z: &Mat, inv_std: &[f64], dz: &Mat) -> Mat {
    let t = z.cols as f64;
    let mut dy = Mat::zeros(z.rows, z.cols);
    for i in 0..z.rows {
        let zr = z.row(i);
        let dzr = dz.row(i);
        let mean_dz = dzr.iter().sum::<f64>() / t;
        let mean_dzz = crate::tensor::dot(dzr, zr) / t;
        for j in 0..z.cols {
            *dy.at_mut(i, j) = (dzr[j] - mean_dz - zr[j] * mean_dzz) * inv_std[i];
        }
    }
    dy
}

/// Spectrogram wrapper tagging the output as the normalized stage.
pub fn instance_norm(y: &Spectrogram, c: f64) -> Result<(Spectrogram, Vec<f64>)> {
    let (values, inv_std) = instance_norm_mat(&y.values, c)?;
    Ok((Spectrogram { values, stage: Stage::ZNormalized }, inv_std))
}

/// Keeps the `keep` center columns: [(t-keep)/2, (t+keep)/2).
pub fn prune_center_mat(z: &Mat, keep: usize) -> Result<Mat> {
    if keep % 2 == 0 || keep == 0 {
        return Err(Error::argument(format!("keep must be odd, got {keep}")));
    }
    if keep > z.cols {
        return Err(Error::argument(format!("keep {} exceeds frame count {}", keep, z.cols)));
    }
    if z.cols % 2 == 0 {
        return Err(Error::argument(format!("pruning expects an odd frame count, got {}", z.cols)));
    }
    let start = (z.cols - keep) / 2;
    Ok(Mat::from_fn(z.rows, keep, |i, j| z.at(i, start + j)))
}

/// Scatters pruned-frame gradients back into the full frame range; dropped
/// columns get zero.
pub fn prune_center_backward(dpruned: &Mat, t: usize) -> Mat {
    let start = (t - dpruned.cols) / 2;
    let mut dz = Mat::zeros(dpruned.rows, t);
    for i in 0..dpruned.rows {
        for j in 0..dpruned.cols {
            *dz.at_mut(i, start + j) = dpruned.at(i, j);
        }
    }
    dz
}

pub fn prune_center(z: &Spectrogram, keep: usize) -> Result<Spectrogram> {
    Ok(Spectrogram { values: prune_center_mat(&z.values, keep)?, stage: z.stage })
}

/// Per-channel batch-norm parameters and running statistics. Training-mode
/// application never mutates this; it returns the proposed running statistics
/// and the trainer commits them, so forward passes stay pure and replayable.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub momentum: f64,
    pub c_bn: f64,
}

impl BatchNormState {
    /// Fresh state: running mean 0, running variance 1, identity affine.
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            momentum: BN_MOMENTUM,
            c_bn: NORM_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.channels();
        if self.running_mean.len() != k || self.running_var.len() != k || self.beta.len() != k {
            return Err(Error::argument("batch-norm vectors disagree on channel count".to_string()));
        }
        if self.running_var.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::argument("running variance must be finite and non-negative".to_string()));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::argument(format!("momentum {} outside (0,1)", self.momentum)));
        }
        Ok(())
    }
}

/// Batch statistics proposed by a training-mode pass, already blended with
/// the previous running values.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-cell normalized values and per-channel scale kept for the backward
/// pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<Tensor3>,
    pub inv_std: Vec<f64>,
}

fn check_batch_shapes(batch: &[Tensor3], channels: usize) -> Result<(usize, usize)> {
    let first = &batch[0];
    if first.d0 != channels {
        return Err(Error::argument(format!("{} maps per sample, state has {} channels", first.d0, channels)));
    }
    for q in batch {
        if q.d0 != first.d0 || q.d1 != first.d1 || q.d2 != first.d2 {
            return Err(Error::argument("batch samples disagree on map shape".to_string()));
        }
    }
    Ok((first.d1, first.d2))
}

/// Training-mode batch norm over a batch of map stacks: per-channel batch
/// mean and population variance normalize every cell, then the affine
/// (gamma, beta) is applied. Returns outputs, the backward cache, and the
/// blended running statistics for the trainer to commit.
pub fn batch_norm_train(
    batch: &[Tensor3],
    state: &BatchNormState,
) -> Result<(Vec<Tensor3>, BnCache, BnStats)> {
    state.validate()?;
    if batch.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "training-mode batch norm needs a batch of at least 2, got {}",
            batch.len()
        )));
    }
    let k = state.channels();
    let (d1, d2) = check_batch_shapes(batch, k)?;
    let cells = (batch.len() * d1 * d2) as f64;

    let mut outputs: Vec<Tensor3> = batch.iter().map(|q| Tensor3::zeros(q.d0, q.d1, q.d2)).collect();
    let mut xhat: Vec<Tensor3> = outputs.clone();
    let mut inv_std = vec![0.0; k];
    let mut stats = BnStats { mean: vec![0.0; k], var: vec![0.0; k] };
    for c in 0..k {
        let mut sum = 0.0;
        for q in batch {
            sum += q.plane(c).iter().sum::<f64>();
        }
        let mean = sum / cells;
        let mut var = 0.0;
        for q in batch {
            var += q.plane(c).iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
        }
        var /= cells;
        let inv = 1.0 / (var + state.c_bn).sqrt();
        inv_std[c] = inv;
        for ((q, out), xh) in batch.iter().zip(&mut outputs).zip(&mut xhat) {
            let src = q.plane(c);
            let dst = out.plane_mut(c);
            let xh = xh.plane_mut(c);
            for i in 0..src.len() {
                let n = (src[i] - mean) * inv;
                xh[i] = n;
                dst[i] = state.gamma[c] * n + state.beta[c];
            }
        }
        stats.mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
        stats.var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var;
    }
    Ok((outputs, BnCache { xhat, inv_std }, stats))
}

/// Reverse-mode training batch norm: gradients for the batch inputs and the
/// affine parameters.
pub fn batch_norm_train_backward(
    state: &BatchNormState,
    cache: &BnCache,
    dout: &[Tensor3],
) -> (Vec<Tensor3>, Vec<f64>, Vec<f64>) {
    let k = state.channels();
    let cells = (dout.len() * cache.xhat[0].d1 * cache.xhat[0].d2) as f64;
    let mut dx: Vec<Tensor3> = dout.iter().map(|q| Tensor3::zeros(q.d0, q.d1, q.d2)).collect();
    let mut dgamma = vec![0.0; k];
    let mut dbeta = vec![0.0; k];
    for c in 0..k {
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for (g, xh) in dout.iter().zip(&cache.xhat) {
            let gp = g.plane(c);
            let xp = xh.plane(c);
            sum_d += gp.iter().sum::<f64>();
            sum_dx += crate::tensor::dot(gp, xp);
        }
        dgamma[c] = sum_dx;
        dbeta[c] = sum_d;
        let mean_d = sum_d / cells;
        let mean_dx = sum_dx / cells;
        let scale = state.gamma[c] * cache.inv_std[c];
        for ((g, xh), out) in dout.iter().zip(&cache.xhat).zip(&mut dx) {
            let gp = g.plane(c);
            let xp = xh.plane(c);
            let op = out.plane_mut(c);
            for i in 0..gp.len() {
                op[i] = scale * (gp[i] - mean_d - xp[i] * mean_dx);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Inference-mode batch norm: a fixed affine map using the running statistics
/// only. Never mutates anything.
pub fn batch_norm_eval(q: &Tensor3, state: &BatchNormState) -> Result<Tensor3> {
    state.validate()?;
    if q.d0 != state.channels() {
        return Err(Error::argument(format!("{} maps, state has {} channels", q.d0, state.channels())));
    }
    let mut out = Tensor3::zeros(q.d0, q.d1, q.d2);
    for c in 0..q.d0 {
        let scale = state.gamma[c] / (state.running_var[c] + state.c_bn).sqrt();
        let shift = state.beta[c] - scale * state.running_mean[c];
        let src = q.plane(c);
        let dst = out.plane_mut(c);
        for i in 0..src.len() {
            dst[i] = scale * src[i] + shift;
        }
    }
    Ok(out)
}
