//! Relevance weighting: small two-layer networks that score how informative
//! each acoustic filter (or modulation filter) is for the current input, and
//! the element-wise application of those scores.
//!
//! Both sub-networks share one shape: pool the representation to a vector,
//! run it through two dense layers with a rectifier between them, and squash
//! the outputs with a softmax. The weights multiply the representation row-
//! or map-wise; they never mix filters, so this is soft feature selection
//! rather than attention.

use crate::error::{Error, Result};
use crate::filterbank::{Spectrogram, Stage};
use crate::tensor::{dot, Mat, Tensor3};

/// How the representation is reduced to the net's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Average each filter's row over time (acoustic path: f×t → f).
    TimeAverage,
    /// Average each feature map over all its cells (modulation path: K maps → K).
    GlobalAverage,
}

/// Two dense layers with a rectifier between them; softmax applied by the
/// relevance ops. `w1` is H×D, `w2` is D×H (the output dimension equals the
/// input dimension for both relevance paths).
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceNet {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub pooling: Pooling,
}

impl RelevanceNet {
    pub fn zeros(d: usize, h: usize, pooling: Pooling) -> Self {
        Self { w1: Mat::zeros(h, d), b1: vec![0.0; h], w2: Mat::zeros(d, h), b2: vec![0.0; d], pooling }
    }

    /// Input (and output) dimension.
    pub fn dim(&self) -> usize {
        self.w1.cols
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.dim(), self.hidden());
        if self.b1.len() != h || self.w2.rows != d || self.w2.cols != h || self.b2.len() != d {
            return Err(Error::argument(format!(
                "relevance net shape mismatch: w1 {}x{}, b1 {}, w2 {}x{}, b2 {}",
                self.w1.rows,
                self.w1.cols,
                self.b1.len(),
                self.w2.rows,
                self.w2.cols,
                self.b2.len()
            )));
        }
        let finite = self.w1.all_finite()
            && self.w2.all_finite()
            && self.b1.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::argument("relevance net has non-finite parameters".to_string()));
        }
        Ok(())
    }
}

/// Gradients with the same shape as [`RelevanceNet`].
#[derive(Debug, Clone)]
pub struct RelevanceNetGrads {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl RelevanceNetGrads {
    pub fn zeros_like(net: &RelevanceNet) -> Self {
        Self {
            w1: Mat::zeros(net.w1.rows, net.w1.cols),
            b1: vec![0.0; net.b1.len()],
            w2: Mat::zeros(net.w2.rows, net.w2.cols),
            b2: vec![0.0; net.b2.len()],
        }
    }
}

/// A probability vector over filters or maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceWeights {
    pub w: Vec<f64>,
}

impl RelevanceWeights {
    pub fn validate(&self) -> Result<()> {
        for &v in &self.w {
            if !(v > 0.0 && v < 1.0) && v != 1.0 {
                return Err(Error::contract("relevance_weights", format!("weight {v} outside (0,1]")));
            }
        }
        let sum: f64 = self.w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::contract("relevance_weights", format!("weights sum to {sum}")));
        }
        Ok(())
    }
}

/// Max-shifted softmax: out_i = exp(v_i - max v) / Σ_j exp(v_j - max v).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::argument("softmax of an empty vector".to_string()));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::argument(format!("softmax input contains {bad}")));
    }
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Reverse-mode softmax: given w = softmax(a) and dL/dw, returns dL/da where
/// da_i = w_i · (dw_i - Σ_j dw_j·w_j).
pub fn softmax_backward(w: &[f64], dw: &[f64]) -> Vec<f64> {
    let inner = dot(w, dw);
    w.iter().zip(dw).map(|(&wi, &dwi)| wi * (dwi - inner)).collect()
}

/// Everything the relevance-net backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct NetEval {
    pub pooled: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Dense → rectifier → dense → softmax on an already-pooled input.
pub fn relevance_net_forward(net: &RelevanceNet, pooled: Vec<f64>) -> Result<NetEval> {
    net.validate()?;
    if pooled.len() != net.dim() {
        return Err(Error::argument(format!(
            "pooled input has {} entries, net expects {}",
            pooled.len(),
            net.dim()
        )));
    }
    let h = net.hidden();
    let d = net.dim();
    let mut hidden_pre = vec![0.0; h];
    for i in 0..h {
        hidden_pre[i] = dot(net.w1.row(i), &pooled) + net.b1[i];
    }
    let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let mut logits = vec![0.0; d];
    for i in 0..d {
        logits[i] = dot(net.w2.row(i), &hidden) + net.b2[i];
    }
    let weights = softmax(&logits)?;
    Ok(NetEval { pooled, hidden_pre, hidden, logits, weights })
}

/// Gradients of the net parameters and of the pooled input, given dL/dw at
/// the softmax outputs.
pub fn relevance_net_backward(
    net: &RelevanceNet,
    eval: &NetEval,
    dweights: &[f64],
) -> (RelevanceNetGrads, Vec<f64>) {
    let d = net.dim();
    let h = net.hidden();
    let dlogits = softmax_backward(&eval.weights, dweights);
    let mut grads = RelevanceNetGrads::zeros_like(net);
    let mut dhidden = vec![0.0; h];
    for i in 0..d {
        let g = dlogits[i];
        grads.b2[i] = g;
        let row = grads.w2.row_mut(i);
        for j in 0..h {
            row[j] = g * eval.hidden[j];
            dhidden[j] += g * net.w2.at(i, j);
        }
    }
    let mut dpooled = vec![0.0; d];
    for j in 0..h {
        let g = if eval.hidden_pre[j] > 0.0 { dhidden[j] } else { 0.0 };
        grads.b1[j] = g;
        let row = grads.w1.row_mut(j);
        for i in 0..d {
            row[i] = g * eval.pooled[i];
            dpooled[i] += g * net.w1.at(j, i);
        }
    }
    (grads, dpooled)
}

/// Per-filter weights from the time-averaged spectrogram.
pub fn acoustic_relevance(x: &Mat, net: &RelevanceNet) -> Result<(RelevanceWeights, NetEval)> {
    if net.pooling != Pooling::TimeAverage {
        return Err(Error::argument("acoustic relevance needs a time-average net".to_string()));
    }
    if net.dim() != x.rows {
        return Err(Error::argument(format!("net dimension {} != filter count {}", net.dim(), x.rows)));
    }
    let t = x.cols.max(1) as f64;
    let pooled: Vec<f64> = (0..x.rows).map(|i| x.row(i).iter().sum::<f64>() / t).collect();
    let eval = relevance_net_forward(net, pooled)?;
    Ok((RelevanceWeights { w: eval.weights.clone() }, eval))
}

/// Per-map weights from globally averaged feature maps.
pub fn modulation_relevance(p: &Tensor3, net: &RelevanceNet) -> Result<(RelevanceWeights, NetEval)> {
    if net.pooling != Pooling::GlobalAverage {
        return Err(Error::argument("modulation relevance needs a global-average net".to_string()));
    }
    if net.dim() != p.d0 {
        return Err(Error::argument(format!("net dimension {} != map count {}", net.dim(), p.d0)));
    }
    let cells = (p.d1 * p.d2).max(1) as f64;
    let pooled: Vec<f64> = (0..p.d0).map(|c| p.plane(c).iter().sum::<f64>() / cells).collect();
    let eval = relevance_net_forward(net, pooled)?;
    Ok((RelevanceWeights { w: eval.weights.clone() }, eval))
}

/// y[i,j] = w[i] · x[i,j]: each row scaled by its weight, no mixing.
pub fn apply_row_weights(x: &Mat, w: &[f64]) -> Result<Mat> {
    if w.len() != x.rows {
        return Err(Error::argument(format!("{} weights for {} rows", w.len(), x.rows)));
    }
    let mut out = x.clone();
    for i in 0..x.rows {
        for v in out.row_mut(i) {
            *v *= w[i];
        }
    }
    Ok(out)
}

/// Gradients of `apply_row_weights`: the part of dL/dx flowing directly
/// through the product, and dL/dw.
pub fn apply_row_weights_backward(x: &Mat, w: &[f64], dy: &Mat) -> (Mat, Vec<f64>) {
    let mut dx = dy.clone();
    let mut dw = vec![0.0; w.len()];
    for i in 0..x.rows {
        dw[i] = dot(dy.row(i), x.row(i));
        for v in dx.row_mut(i) {
            *v *= w[i];
        }
    }
    (dx, dw)
}

/// Spectrogram wrapper for the acoustic path: tags the result as the weighted
/// stage.
pub fn apply_acoustic_weights(x: &Spectrogram, w: &RelevanceWeights) -> Result<Spectrogram> {
    Ok(Spectrogram { values: apply_row_weights(&x.values, &w.w)?, stage: Stage::YWeighted })
}

/// q[c,·,·] = w[c] · p[c,·,·]: each map scaled by its weight.
pub fn apply_map_weights(p: &Tensor3, w: &[f64]) -> Result<Tensor3> {
    if w.len() != p.d0 {
        return Err(Error::argument(format!("{} weights for {} maps", w.len(), p.d0)));
    }
    let mut out = p.clone();
    for c in 0..p.d0 {
        for v in out.plane_mut(c) {
            *v *= w[c];
        }
    }
    Ok(out)
}

/// Gradients of `apply_map_weights`.
pub fn apply_map_weights_backward(p: &Tensor3, w: &[f64], dq: &Tensor3) -> (Tensor3, Vec<f64>) {
    let mut dp = dq.clone();
    let mut dw = vec![0.0; w.len()];
    for c in 0..p.d0 {
        dw[c] = dot(dq.plane(c), p.plane(c));
        for v in dp.plane_mut(c) {
            *v *= w[c];
        }
    }
    (dp, dw)
}
