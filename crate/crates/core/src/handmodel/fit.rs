//! Fitting the kinematic hand to target joints.
//!
//! The objective `||J(β, θ) - J*|| + (1/σ)||β - 1||` uses plain (unsquared) norms, with
//! joint positions in millimeters so that the shape prior cannot outweigh an exact fit. It is
//! minimized by majorize-minimize: each outer step replaces both norms by their quadratic
//! upper bounds at the current iterate and takes a damped Gauss-Newton step, accepted
//! only if the true objective decreases.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};

use super::kinematics::{joints_unchecked, parameter_bounds, KinematicHand, FINGER_OFFSET, PARAM_COUNT};
use super::skeleton::{HandSkeleton, JOINT_COUNT, PALM_JOINTS};
use super::{rest_skeleton, HandModelError};

pub const DEFAULT_SIGMA: f64 = 10.0;
/// Joint residuals enter the objective in millimeters.
const JOINT_SCALE: f64 = 1000.0;

const RESIDUALS: usize = 3 * JOINT_COUNT;
type Params = SVector<f64, PARAM_COUNT>;
type Normal = SMatrix<f64, PARAM_COUNT, PARAM_COUNT>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub sigma: f64,
    pub max_iterations: usize,
    /// Retry from bent-finger initializations when the first run leaves a residual.
    pub restarts: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            max_iterations: 300,
            restarts: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandFit {
    pub hand: KinematicHand,
    pub joints: HandSkeleton,
    /// Euclidean distance between each fitted and target joint, meters.
    pub joint_errors: [f64; JOINT_COUNT],
    /// Final objective value (joint term in millimeters).
    pub objective: f64,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
}

impl HandFit {
    pub fn mean_error(&self) -> f64 {
        self.joint_errors.iter().sum::<f64>() / JOINT_COUNT as f64
    }

    /// `||J - J*||` over all joints.
    pub fn residual(&self) -> f64 {
        self.joint_errors.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

pub fn fit_hand(target: &HandSkeleton, sigma: f64) -> Result<HandFit, HandModelError> {
    fit_hand_with(
        target,
        &FitConfig {
            sigma,
            ..FitConfig::default()
        },
    )
}

pub fn fit_hand_with(target: &HandSkeleton, config: &FitConfig) -> Result<HandFit, HandModelError> {
    if !(config.sigma > 0.0) {
        return Err(HandModelError::InvalidSigma(config.sigma));
    }
    let handedness = target.handedness;
    let rest = rest_skeleton(handedness);
    let src: Vec<Vec3> = PALM_JOINTS.iter().map(|&j| rest.joint(j)).collect();
    let dst: Vec<Vec3> = PALM_JOINTS.iter().map(|&j| target.joint(j)).collect();
    let world_from_canonical = RigidTransform::align_points(&src, &dst).ok_or(HandModelError::DegeneratePalm)?;
    // Solving in the aligned frame makes the fit equivariant to rigid motions of the target.
    let canonical_from_world = world_from_canonical.inverse();
    let problem = Problem {
        hand: KinematicHand::rest(handedness),
        target: target.joints().map(|j| canonical_from_world.apply(&j)),
        reg: 1.0 / config.sigma,
    };

    let mut best = problem.solve(problem.initial(0.0), config.max_iterations)?;
    if config.restarts && problem.max_error(&best.0) > 1e-7 {
        for bend in [0.6, 1.2] {
            let cand = problem.solve(problem.initial(bend), config.max_iterations)?;
            if cand.1 < best.1 {
                best = cand;
            }
        }
    }
    let (x, objective, trace) = best;

    let mut hand = problem.hand_at(&x);
    hand.root = world_from_canonical * hand.root;
    let joints = HandSkeleton::new(handedness, joints_unchecked(&hand))?;
    let joint_errors = std::array::from_fn(|i| (joints.joint(i) - target.joint(i)).norm());
    Ok(HandFit {
        hand,
        joints,
        joint_errors,
        objective,
        trace,
    })
}

struct Problem {
    hand: KinematicHand,
    target: [Vec3; JOINT_COUNT],
    reg: f64,
}

impl Problem {
    fn initial(&self, bend: f64) -> Params {
        let mut x = Params::from_column_slice(&self.hand.to_vector());
        for f in 0..5 {
            for k in 1..4 {
                x[FINGER_OFFSET + 4 * f + k] = bend;
            }
        }
        x
    }

    fn hand_at(&self, x: &Params) -> KinematicHand {
        let arr: [f64; PARAM_COUNT] = std::array::from_fn(|i| x[i]);
        KinematicHand::from_vector(self.hand.handedness, &arr)
    }

    fn residual(&self, x: &Params) -> SVector<f64, RESIDUALS> {
        let j = joints_unchecked(&self.hand_at(x));
        SVector::from_fn(|r, _| JOINT_SCALE * (j[r / 3][r % 3] - self.target[r / 3][r % 3]))
    }

    fn shape_offset(x: &Params) -> SVector<f64, 6> {
        SVector::from_fn(|i, _| x[i] - 1.0)
    }

    fn objective(&self, x: &Params) -> f64 {
        self.residual(x).norm() + self.reg * Self::shape_offset(x).norm()
    }

    /// Largest joint error in meters.
    fn max_error(&self, x: &Params) -> f64 {
        let r = self.residual(x);
        (0..JOINT_COUNT)
            .map(|j| r.fixed_rows::<3>(3 * j).norm())
            .fold(0.0, f64::max)
            / JOINT_SCALE
    }

    fn jacobian(&self, x: &Params) -> SMatrix<f64, RESIDUALS, PARAM_COUNT> {
        let mut jac = SMatrix::<f64, RESIDUALS, PARAM_COUNT>::zeros();
        for c in 0..PARAM_COUNT {
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut xp = *x;
            let mut xm = *x;
            xp[c] += h;
            xm[c] -= h;
            let d = (self.residual(&xp) - self.residual(&xm)) / (2.0 * h);
            jac.set_column(c, &d);
        }
        jac
    }

    fn clamp(x: &mut Params) {
        for i in 0..PARAM_COUNT {
            if let Some((lo, hi)) = parameter_bounds(i) {
                let lo = if i < 6 { lo.max(1e-6) } else { lo };
                x[i] = x[i].clamp(lo, hi);
            }
        }
    }

    /// Returns the final parameters, objective and trace of accepted objectives.
    fn solve(&self, mut x: Params, max_iterations: usize) -> Result<(Params, f64, Vec<f64>), HandModelError> {
        Self::clamp(&mut x);
        let mut f = self.objective(&x);
        let mut trace = vec![f];
        if !f.is_finite() {
            return Err(HandModelError::Diverged { trace });
        }
        let mut lambda = 1e-3;
        for _ in 0..max_iterations {
            if f < 1e-11 {
                break;
            }
            let r = self.residual(&x);
            let b = Self::shape_offset(&x);
            // Quadratic majorizers ||v|| <= (||v||^2 + m^2) / 2m, any m > 0.
            let wr = 1.0 / r.norm().max(1e-300);
            let wb = self.reg / b.norm().max(1e-6);
            let jac = self.jacobian(&x);
            let mut normal: Normal = jac.transpose() * jac * wr;
            let mut grad: Params = jac.transpose() * r * wr;
            for i in 0..6 {
                normal[(i, i)] += wb;
                grad[i] += wb * b[i];
            }
            let diag_max = normal.diagonal().max();
            let mut accepted = false;
            while lambda < 1e12 {
                let mut damped = normal;
                for i in 0..PARAM_COUNT {
                    damped[(i, i)] += lambda * (normal[(i, i)] + 1e-9 * diag_max);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let mut cand = x - chol.solve(&grad);
                Self::clamp(&mut cand);
                let fc = self.objective(&cand);
                if fc < f {
                    let decrease = f - fc;
                    x = cand;
                    f = fc;
                    trace.push(f);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = decrease > 1e-13 * f.max(1e-300);
                    break;
                }
                if !fc.is_finite() && !f.is_finite() {
                    return Err(HandModelError::Diverged { trace });
                }
                lambda *= 4.0;
            }
            if diverged(&trace) {
                return Err(HandModelError::Diverged { trace });
            }
            if !accepted {
                break;
            }
        }
        Ok((x, f, trace))
    }
}

/// Ten consecutive increases of the accepted objective.
fn diverged(trace: &[f64]) -> bool {
    trace.len() > 10 && trace.windows(2).rev().take(10).all(|w| w[1] > w[0])
}
