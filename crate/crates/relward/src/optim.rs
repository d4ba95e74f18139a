//! Adam with bias correction, applied to the model's named parameter groups.

use crate::error::{Error, Result};
use crate::model::{AcousticModel, GradientSet};

/// First and second moment accumulators per parameter group, plus the shared
/// step counter. Groups are keyed by the canonical names from
/// [`AcousticModel::trainable`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<(String, Vec<f64>)>,
    pub v: Vec<(String, Vec<f64>)>,
}

impl AdamState {
    /// Fresh state with zero moments, shaped after the model's trainable
    /// groups.
    pub fn new(model: &mut AcousticModel, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::argument(format!("learning rate {lr} must be positive and finite")));
        }
        let groups = model.trainable();
        let m: Vec<(String, Vec<f64>)> =
            groups.iter().map(|(n, p)| (n.to_string(), vec![0.0; p.len()])).collect();
        let v = m.clone();
        Ok(Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v })
    }
}

/// One bias-corrected Adam update over every trainable group. The step
/// counter advances once per call; gradient groups must align with the
/// model's trainable groups by name and size.
pub fn adam_step(model: &mut AcousticModel, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    let ggroups = grads.groups();
    let pgroups = model.trainable();
    if pgroups.len() != ggroups.len() || pgroups.len() != state.m.len() {
        return Err(Error::contract(
            "adam",
            format!(
                "group count mismatch: {} params, {} grads, {} moments",
                pgroups.len(),
                ggroups.len(),
                state.m.len()
            ),
        ));
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);
    for (((pname, params), (gname, grad)), ((mname, m), (_, v))) in
        pgroups.into_iter().zip(ggroups).zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if pname != gname || pname != mname {
            return Err(Error::contract("adam", format!("group order mismatch: {pname} vs {gname} vs {mname}")));
        }
        if params.len() != grad.len() || params.len() != m.len() {
            return Err(Error::contract("adam", format!("group {pname} size mismatch")));
        }
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            params[i] -= state.lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}
