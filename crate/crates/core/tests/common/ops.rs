//! One finite-difference case per differentiable tape operation.

use std::sync::Arc;

use milcap::dec::{clustering_loss_var, soft_assign, soft_assign_var, target_distribution, ALPHA};
use milcap::error::Result;
use milcap::numerics::{check_gradients, GradCheck, Matrix, Tape, Var, DEFAULT_STEP};

use super::uniform_matrix;

/// Receives the inputs as leaves plus the case's fixed constants.
pub type OpFn = for<'t> fn(&'t Tape, &[Var<'t>], &[Matrix]) -> Result<Var<'t>>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: fn(u64) -> Vec<Matrix>,
    /// Constants computed once from the unperturbed inputs.
    pub fixed: fn(&[Matrix]) -> Vec<Matrix>,
    pub f: OpFn,
}

/// Weighted sum with fixed weights so every output entry matters.
fn reduce(v: Var<'_>) -> Result<Var<'_>> {
    let (r, c) = v.shape();
    let w = v.constant(uniform_matrix(r, c, -1.0, 1.0, (r * 31 + c) as u64));
    Ok(v.mul(w)?.sum())
}

fn any(r: usize, c: usize, seed: u64) -> Matrix {
    uniform_matrix(r, c, -1.0, 1.0, seed)
}

fn pos(r: usize, c: usize, seed: u64) -> Matrix {
    uniform_matrix(r, c, 0.5, 2.0, seed)
}

fn wide(r: usize, c: usize, seed: u64) -> Matrix {
    uniform_matrix(r, c, -3.0, 3.0, seed)
}

const MASK: [bool; 12] = [
    true, false, true, true, //
    false, true, false, false, //
    true, true, true, true,
];

macro_rules! case {
    ($name:literal, |$s:ident| [$($input:expr),+], |$v:ident| $body:expr) => {
        OpCase {
            name: $name,
            inputs: |$s| vec![$($input),+],
            fixed: |_| Vec::new(),
            f: |_, $v, _| reduce($body),
        }
    };
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case!("add", |s| [any(3, 4, s), any(3, 4, s + 100)], |v| v[0].add(v[1])?),
        case!("add row broadcast", |s| [any(3, 4, s), any(1, 4, s + 100)], |v| v[0].add(v[1])?),
        case!("add column broadcast", |s| [any(3, 4, s), any(3, 1, s + 100)], |v| v[0].add(v[1])?),
        case!("add scalar broadcast", |s| [any(3, 4, s), any(1, 1, s + 100)], |v| v[0].add(v[1])?),
        case!("sub row broadcast", |s| [any(3, 4, s), any(1, 4, s + 100)], |v| v[0].sub(v[1])?),
        case!("mul", |s| [any(3, 4, s), any(3, 4, s + 100)], |v| v[0].mul(v[1])?),
        case!("mul column broadcast", |s| [any(3, 4, s), any(3, 1, s + 100)], |v| v[0].mul(v[1])?),
        case!("div", |s| [any(3, 4, s), pos(3, 4, s + 100)], |v| v[0].div(v[1])?),
        case!("div column broadcast", |s| [any(3, 4, s), pos(3, 1, s + 100)], |v| v[0].div(v[1])?),
        case!("matmul", |s| [any(3, 4, s), any(4, 2, s + 100)], |v| v[0].matmul(v[1])?),
        case!("scale", |s| [any(2, 3, s)], |v| v[0].scale(-1.7)?),
        case!("add_scalar", |s| [any(2, 3, s)], |v| v[0].add_scalar(0.4)?),
        case!("transpose", |s| [any(2, 3, s)], |v| v[0].transpose()),
        case!("concat_rows", |s| [any(2, 3, s), any(4, 3, s + 100)], |v| Var::concat_rows(&[v[0], v[1], v[0]])?),
        case!("concat_cols", |s| [any(3, 2, s), any(3, 1, s + 100)], |v| Var::concat_cols(&[v[1], v[0]])?),
        case!("slice_cols", |s| [any(3, 5, s)], |v| v[0].slice_cols(1, 3)?),
        case!("gather_rows", |s| [any(4, 3, s)], |v| v[0].gather_rows(&[2, 0, 2, 3])?),
        case!("leaky_relu", |s| [any(4, 4, s)], |v| v[0].leaky_relu(0.2)),
        case!("sigmoid", |s| [uniform_matrix(3, 3, -6.0, 6.0, s)], |v| v[0].sigmoid()),
        case!("log", |s| [pos(3, 3, s)], |v| v[0].log()?),
        case!("exp", |s| [any(3, 3, s)], |v| v[0].exp()?),
        case!("powf fractional", |s| [pos(3, 3, s)], |v| v[0].powf(-1.5)?),
        case!("powf integer", |s| [any(3, 3, s)], |v| v[0].powf(3.0)?),
        case!("clamp", |s| [uniform_matrix(4, 4, -2.0, 2.0, s)], |v| v[0].clamp(-0.5, 0.5)),
        case!("sum", |s| [any(3, 2, s)], |v| v[0].sum()),
        case!("mean", |s| [any(3, 2, s)], |v| v[0].mean()),
        case!("row_sum", |s| [any(3, 4, s)], |v| v[0].row_sum()),
        case!("col_sum", |s| [any(3, 4, s)], |v| v[0].col_sum()),
        case!("col_mean", |s| [any(3, 4, s)], |v| v[0].col_mean()),
        case!("l2_normalize_rows", |s| [pos(3, 4, s)], |v| v[0].l2_normalize_rows()?),
        case!("softmax_rows", |s| [wide(3, 5, s)], |v| v[0].softmax_rows()),
        case!("masked_softmax_rows", |s| [any(3, 4, s)], |v| v[0].masked_softmax_rows(Arc::new(MASK.to_vec()))?),
        case!("log_softmax_rows", |s| [wide(3, 5, s)], |v| v[0].log_softmax_rows()),
        case!("pick", |s| [any(3, 4, s)], |v| v[0].pick(&[3, 0, 3])?),
        case!("soft_assign alpha 2.5", |s| [any(5, 2, s), any(2, 2, s + 9)], |v| soft_assign_var(v[0], v[1], 2.5)?),
        OpCase {
            name: "clustering loss",
            inputs: |s| vec![wide(6, 3, s), wide(3, 3, s + 50)],
            // targets are held fixed between refreshes, as in fitting
            fixed: |x| vec![target_distribution(&soft_assign(&x[0], &x[1], ALPHA).unwrap())],
            f: |_, v, t| clustering_loss_var(&t[0], soft_assign_var(v[0], v[1], ALPHA)?),
        },
    ]
}

pub fn run(case: &OpCase, seed: u64) -> GradCheck {
    let inputs = (case.inputs)(seed);
    let fixed = (case.fixed)(&inputs);
    check_gradients(&inputs, DEFAULT_STEP, |t, v| (case.f)(t, v, &fixed)).unwrap()
}
