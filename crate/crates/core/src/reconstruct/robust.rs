//! Levenberg-Marquardt on a sum of Huber losses over 2D reprojection errors, solved by
//! iteratively reweighted Gauss-Newton steps with monotone acceptance.

use nalgebra::{SMatrix, SVector, Vector2};

/// `s²/2` for `s ≤ δ`, `δ(s − δ/2)` beyond.
#[inline]
pub fn huber(s: f64, delta: f64) -> f64 {
    if s <= delta {
        0.5 * s * s
    } else {
        delta * (s - 0.5 * delta)
    }
}

/// One reprojection term: error `e` (pixels), confidence scale `s`, and `∂e/∂x`.
pub(crate) struct Term<const P: usize> {
    pub e: Vector2<f64>,
    pub scale: f64,
    pub jac: SMatrix<f64, 2, P>,
}

pub(crate) fn cost<const P: usize>(terms: &[Term<P>], delta: f64) -> f64 {
    terms.iter().map(|t| huber(t.scale * t.e.norm(), delta)).sum()
}

pub(crate) struct Solved<const P: usize> {
    pub x: SVector<f64, P>,
    pub cost: f64,
    /// Cost at the start and after each accepted step.
    pub trace: Vec<f64>,
}

/// `eval` returns `None` when `x` is infeasible (e.g. a point behind a camera); such
/// candidates are rejected like any cost increase.
pub(crate) fn minimize<const P: usize>(
    x0: SVector<f64, P>,
    eval: impl Fn(&SVector<f64, P>) -> Option<Vec<Term<P>>>,
    delta: f64,
    max_iterations: usize,
    rel_tol: f64,
) -> Option<Solved<P>> {
    let mut x = x0;
    let mut terms = eval(&x)?;
    let mut f = cost(&terms, delta);
    let mut trace = vec![f];
    let mut lambda = 1e-4;
    for _ in 0..max_iterations {
        if f == 0.0 {
            break;
        }
        let mut normal = SMatrix::<f64, P, P>::zeros();
        let mut grad = SVector::<f64, P>::zeros();
        for t in &terms {
            let s = t.scale * t.e.norm();
            let w = if s <= delta { 1.0 } else { delta / s } * t.scale * t.scale;
            normal += t.jac.transpose() * t.jac * w;
            grad += t.jac.transpose() * t.e * w;
        }
        if grad.norm() == 0.0 {
            break;
        }
        let diag_max = normal.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = normal;
            for i in 0..P {
                damped[(i, i)] += lambda * (normal[(i, i)] + 1e-12 * diag_max);
            }
            if let Some(chol) = damped.cholesky() {
                let cand = x - chol.solve(&grad);
                if let Some(ct) = eval(&cand) {
                    let fc = cost(&ct, delta);
                    if fc < f {
                        accepted = Some((cand, ct, fc));
                        break;
                    }
                }
            }
            lambda *= 4.0;
        }
        let Some((cand, ct, fc)) = accepted else {
            break;
        };
        let rel = (f - fc) / f;
        x = cand;
        terms = ct;
        f = fc;
        trace.push(f);
        lambda = (lambda / 3.0).max(1e-12);
        if rel < rel_tol {
            break;
        }
    }
    Some(Solved { x, cost: f, trace })
}
