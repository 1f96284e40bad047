//! Central finite-difference checks against tape gradients.

use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor for relative errors; components whose gradients are both
/// below this magnitude are compared absolutely. At ε = 1e-5 with O(1)
/// activations, rounding in `f(x±ε)` alone limits a central difference to
/// roughly 1e-10 absolute accuracy, so smaller gradients have no meaningful
/// relative error.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = libm::fabs(analytic - numeric);
    if diff == 0.0 {
        return 0.0;
    }
    diff / libm::fabs(analytic).max(libm::fabs(numeric)).max(REL_FLOOR)
}

/// Per-component comparison produced by [`grad_check_detailed`].
///
/// `kinked[i]` marks components whose `x ± ε` probes fall on different
/// pieces of some ReLU; the central difference there does not estimate a
/// derivative, so such components are excluded from the error summaries.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub errors: Vec<f64>,
    pub kinked: Vec<bool>,
}

impl GradCheckReport {
    fn smooth(&self) -> impl Iterator<Item = f64> + '_ {
        self.errors.iter().zip(&self.kinked).filter(|(_, &k)| !k).map(|(&e, _)| e)
    }

    pub fn max_error(&self) -> f64 {
        self.smooth().fold(0.0, |m, e| m.max(e))
    }

    pub fn fraction_within(&self, tol: f64) -> f64 {
        let (ok, n) = self.smooth().fold((0usize, 0usize), |(ok, n), e| (ok + (e <= tol) as usize, n + 1));
        ok as f64 / n.max(1) as f64
    }

    pub fn kinked_fraction(&self) -> f64 {
        self.kinked.iter().filter(|&&k| k).count() as f64 / self.kinked.len().max(1) as f64
    }
}

fn eval<F>(f: &F, x: &Tensor) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    Ok((tape.value(out).item(), tape.activation_pattern()))
}

/// Largest relative error between the tape gradient of scalar `f` at `x`
/// and the central difference `(f(x+ε) − f(x−ε)) / 2ε`, over components
/// whose probes stay on one piece of every ReLU.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    Ok(grad_check_detailed(f, x, eps, None)?.max_error())
}

/// Like [`grad_check`] but restricted to `indices` (all components when `None`).
pub fn grad_check_detailed<F>(f: F, x: &Tensor, eps: f64, indices: Option<&[usize]>) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    let grads = tape.backward(out)?;
    let zero = Tensor::zeros(x.shape());
    let g = grads.get(v).unwrap_or(&zero);

    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut report = GradCheckReport {
        analytic: Vec::with_capacity(idx.len()),
        numeric: Vec::with_capacity(idx.len()),
        errors: Vec::with_capacity(idx.len()),
        kinked: Vec::with_capacity(idx.len()),
    };
    let mut probe = x.clone();
    for &i in idx {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (plus, above) = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let (minus, below) = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = g.data()[i];
        report.errors.push(relative_error(analytic, numeric));
        report.analytic.push(analytic);
        report.numeric.push(numeric);
        report.kinked.push(above != below);
    }
    Ok(report)
}
