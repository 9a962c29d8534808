//! Central finite-difference checks of tape gradients.

use super::{Bound, Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Step used unless the caller picks another.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Error of one checked tensor: `||a - n|| / max(||a||, ||n||, floor)`
/// over the checked entries.
fn tensor_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest per-tensor relative error.
    pub max_rel_err: f64,
    /// Index of the tensor with that error.
    pub worst: usize,
    pub per_tensor: Vec<f64>,
    /// Entries perturbed in total.
    pub checked: usize,
}

impl GradCheck {
    fn new() -> Self {
        Self {
            max_rel_err: 0.0,
            worst: 0,
            per_tensor: Vec::new(),
            checked: 0,
        }
    }

    fn record(&mut self, analytic: &[f64], numeric: &[f64]) {
        let e = tensor_error(analytic, numeric);
        if e > self.max_rel_err {
            self.max_rel_err = e;
            self.worst = self.per_tensor.len();
        }
        self.per_tensor.push(e);
        self.checked += analytic.len();
    }
}

fn scalar(v: Var<'_>) -> Result<f64> {
    v.value().item()
}

/// Compares `d f / d inputs` from the tape with central differences of step `h`.
///
/// `f` receives the inputs as leaves and must return a 1x1 value.
pub fn check_gradients<F>(inputs: &[Matrix], h: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let tape = Tape::new();
        let leaves: Vec<Var<'_>> = values.iter().map(|m| tape.leaf(m.clone())).collect();
        scalar(f(&tape, &leaves)?)
    };
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let root = f(&tape, &leaves)?;
    let grads = tape.backward(root)?;
    let mut report = GradCheck::new();
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads.wrt(*leaf).into_data();
        let mut numeric = Vec::with_capacity(analytic.len());
        for e in 0..inputs[i].len() {
            let orig = inputs[i].data()[e];
            work[i].data_mut()[e] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[e] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[e] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        report.record(&analytic, &numeric);
    }
    Ok(report)
}

/// Finite-difference check against parameters of a store.
///
/// Checks up to `max_per_param` evenly spaced elements of each id in `ids`;
/// `per_tensor` follows the order of `ids`.
pub fn check_store_gradients<F>(
    store: &ParamStore,
    ids: &[ParamId],
    max_per_param: usize,
    h: f64,
    f: F,
) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    if max_per_param == 0 {
        return Err(Error::Contract("max_per_param must be at least 1".into()));
    }
    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let bound = s.bind(&tape);
        scalar(f(&tape, &bound)?)
    };
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let root = f(&tape, &bound)?;
    let grads = bound.gradients(&tape.backward(root)?);
    let mut work = store.clone();
    let mut report = GradCheck::new();
    for &id in ids {
        let len = store.get(id).len();
        let stride = len.div_ceil(max_per_param).max(1);
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for e in (0..len).step_by(stride) {
            let orig = store.get(id).data()[e];
            work.get_mut(id).data_mut()[e] = orig + h;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[e] = orig - h;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[e] = orig;
            analytic.push(grads[id.index()].data()[e]);
            numeric.push((up - down) / (2.0 * h));
        }
        report.record(&analytic, &numeric);
    }
    Ok(report)
}
