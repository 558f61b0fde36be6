use super::{Tape, Tensor};
use crate::error::{Result, SgrError};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    pub max_rel_err: f64,
    pub pass: bool,
    pub tol: f64,
}

/// Relative error with a small floor so near-zero gradients are compared
/// absolutely instead of dividing by ~0.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compare analytic gradients of a scalar function against central finite
/// differences, parameter by parameter.
///
/// `f` must be a deterministic function of the parameter values; it is
/// called once on a recording tape for the analytic pass and twice per
/// parameter element (at ±step) on evaluation-only tapes.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape) -> Result<Tensor>,
{
    if step <= 0.0 {
        return Err(SgrError::Contract(format!(
            "grad_check step must be positive, got {step}"
        )));
    }
    for p in params {
        if !p.requires_grad() {
            return Err(SgrError::Contract(
                "grad_check parameters must have requires_grad set".into(),
            ));
        }
        p.zero_grad();
    }

    let tape = Tape::new();
    let loss = f(&tape)?;
    if loss.numel() != 1 {
        return Err(SgrError::Contract(format!(
            "grad_check function must return a scalar, got {:?}",
            loss.shape()
        )));
    }
    if !loss.item()?.is_finite() {
        return Err(SgrError::Numeric("grad_check function value is not finite".into()));
    }
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |tape: &Tape| -> Result<f64> {
        let v = f(tape)?;
        let v = v.item()?;
        if !v.is_finite() {
            return Err(SgrError::Numeric("grad_check probe value is not finite".into()));
        }
        Ok(v)
    };

    let mut per_param = Vec::with_capacity(params.len());
    for (p, grads) in params.iter().zip(&analytic) {
        let mut worst = 0.0f64;
        for idx in 0..p.numel() {
            let orig = p.data()[idx];
            p.update_data(|d| d[idx] = orig + step)?;
            let plus = eval(&Tape::no_grad())?;
            p.update_data(|d| d[idx] = orig - step)?;
            let minus = eval(&Tape::no_grad())?;
            p.update_data(|d| d[idx] = orig)?;
            let fd = (plus - minus) / (2.0 * step);
            worst = worst.max(rel_err(grads[idx], fd));
        }
        per_param.push(worst);
    }
    let max_rel_err = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_err,
        pass: max_rel_err <= tol,
        tol,
    })
}
