//! Finite-difference verification of the reverse pass.

use super::param::ParamSet;
use super::tape::{Tape, Tensor, TensorError};
use crate::scalar::Real;

/// Outcome for a single named parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck<S> {
    pub name: String,
    pub max_rel: S,
    pub checked: usize,
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport<S> {
    pub per_param: Vec<ParamCheck<S>>,
    pub max_rel: S,
    pub pass: bool,
}

const FD_STEP: f64 = 1e-4;
/// One-sided slopes disagreeing by more than this (relative) mark a kink.
const KINK_FACTOR: f64 = 0.05;

/// Compare backward-pass gradients of a scalar-valued function against
/// central finite differences, coordinate by coordinate.
///
/// `forward` must rebuild the same computation on the given tape from the
/// current parameter values. Coordinates sitting on a nondifferentiable kink
/// (detected by disagreeing one-sided slopes) are skipped.
pub fn grad_check<S, F>(
    params: &ParamSet<S>,
    mut forward: F,
    tolerance: S,
) -> Result<GradCheckReport<S>, TensorError>
where
    S: Real,
    F: FnMut(&Tape<S>) -> Result<Tensor<S>, TensorError>,
{
    let eval = |forward: &mut F| -> Result<S, TensorError> {
        let tape = Tape::new();
        let loss = forward(&tape)?;
        let v = loss.item();
        if !v.is_finite() {
            return Err(TensorError::NonFinite { op: "grad_check forward" });
        }
        Ok(v)
    };

    // analytic gradients
    params.zero_grad();
    let tape = Tape::new();
    let loss = forward(&tape)?;
    let f0 = loss.item();
    if !f0.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check forward" });
    }
    loss.backward()?;

    let h = S::of(FD_STEP);
    let two_h = h + h;
    let mut report = GradCheckReport {
        per_param: Vec::new(),
        max_rel: S::zero(),
        pass: true,
    };

    for (name, param) in params.iter() {
        let analytic = param.grad();
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel: S::zero(),
            checked: 0,
            skipped: 0,
            pass: true,
        };
        for i in 0..param.numel() {
            param.perturb(i, h);
            let fp = eval(&mut forward)?;
            param.perturb(i, -two_h);
            let fm = eval(&mut forward)?;
            param.perturb(i, h);

            let d_plus = (fp - f0) / h;
            let d_minus = (f0 - fm) / h;
            let slope_gap = (d_plus - d_minus).abs();
            let scale = d_plus.abs() + d_minus.abs() + S::one();
            if slope_gap > S::of(KINK_FACTOR) * scale {
                check.skipped += 1;
                continue;
            }

            let fd = (fp - fm) / two_h;
            let a = analytic[i];
            let denom = S::one().max(a.abs()).max(fd.abs());
            let rel = (a - fd).abs() / denom;
            check.checked += 1;
            if rel > check.max_rel {
                check.max_rel = rel;
            }
        }
        check.pass = check.max_rel <= tolerance;
        if check.max_rel > report.max_rel {
            report.max_rel = check.max_rel;
        }
        report.pass &= check.pass;
        report.per_param.push(check);
    }
    Ok(report)
}
