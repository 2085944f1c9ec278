//! Global rigid motion between consecutive frames.
//!
//! The camera motion is fitted on associated centroids, objects that do not
//! follow it are flagged with a mean/standard-deviation rule on the
//! registration errors, and the fit is redone on the remaining (stationary)
//! objects.

use serde::{Deserialize, Serialize};

use crate::geometry::{centroid, Point};
use crate::scalar::Real;

/// `p' = R(theta) p + (tx, ty)` with registration-error statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion<T> {
    pub theta: T,
    pub tx: T,
    pub ty: T,
    pub mean_err: T,
    pub std_err: T,
    /// Number of correspondences the transform was fitted on.
    pub n_inliers: usize,
    pub pass: u8,
    /// Fewer correspondences than the full model needs.
    pub degraded: bool,
}

impl<T: Real> RigidMotion<T> {
    pub fn identity() -> Self {
        Self {
            theta: T::zero(),
            tx: T::zero(),
            ty: T::zero(),
            mean_err: T::zero(),
            std_err: T::zero(),
            n_inliers: 0,
            pass: 1,
            degraded: false,
        }
    }

    pub fn from_params(theta: T, tx: T, ty: T) -> Self {
        Self {
            theta,
            tx,
            ty,
            ..Self::identity()
        }
    }

    #[inline]
    pub fn apply(&self, p: Point<T>) -> Point<T> {
        p.rotate(self.theta) + Point::new(self.tx, self.ty)
    }

    pub fn translation(&self) -> Point<T> {
        Point::new(self.tx, self.ty)
    }
}

/// Least-squares rigid fit of `dst ≈ R src + t` (2-D Procrustes).
///
/// Both sets are centred; the rotation angle is
/// `atan2(Σ(x·y' − y·x'), Σ(x·x' + y·y'))` over centred coordinates and the
/// translation carries the rotated source centroid onto the destination
/// centroid. A single pair gives a pure translation, no pairs the identity;
/// both are marked degraded. Error statistics are filled from `pairs`.
pub fn estimate_rigid<T: Real>(pairs: &[(Point<T>, Point<T>)]) -> RigidMotion<T> {
    let mut motion = match pairs.len() {
        0 => {
            return RigidMotion {
                degraded: true,
                ..RigidMotion::identity()
            }
        }
        1 => {
            let d = pairs[0].1 - pairs[0].0;
            RigidMotion {
                degraded: true,
                ..RigidMotion::from_params(T::zero(), d.x, d.y)
            }
        }
        _ => {
            let cs = centroid(pairs.iter().map(|p| p.0)).unwrap();
            let cd = centroid(pairs.iter().map(|p| p.1)).unwrap();
            let (mut sin_acc, mut cos_acc) = (T::zero(), T::zero());
            for &(s, d) in pairs {
                let (s, d) = (s - cs, d - cd);
                sin_acc = sin_acc + s.cross(d);
                cos_acc = cos_acc + s.dot(d);
            }
            let theta = if sin_acc == T::zero() && cos_acc == T::zero() {
                T::zero()
            } else {
                sin_acc.atan2(cos_acc)
            };
            let t = cd - cs.rotate(theta);
            RigidMotion::from_params(theta, t.x, t.y)
        }
    };
    let (_, mean, std) = registration_errors(pairs, &motion);
    motion.mean_err = mean;
    motion.std_err = std;
    motion.n_inliers = pairs.len();
    motion
}

/// Per-pair errors `‖R p + t − p'‖`, their mean and population standard
/// deviation.
pub fn registration_errors<T: Real>(
    pairs: &[(Point<T>, Point<T>)],
    motion: &RigidMotion<T>,
) -> (Vec<T>, T, T) {
    if pairs.is_empty() {
        return (Vec::new(), T::zero(), T::zero());
    }
    let errors: Vec<T> = pairs
        .iter()
        .map(|&(s, d)| motion.apply(s).distance(d))
        .collect();
    let (mean, std) = mean_std(&errors);
    (errors, mean, std)
}

fn mean_std<T: Real>(values: &[T]) -> (T, T) {
    let n = T::from_usize(values.len()).unwrap();
    let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = values
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
        / n;
    (mean, var.sqrt())
}

/// Geometric mean of the errors (0 when any error is 0). Reported only.
pub fn geometric_mean<T: Real>(errors: &[T]) -> T {
    if errors.is_empty() || errors.iter().any(|&e| e <= T::zero()) {
        return T::zero();
    }
    let n = T::from_usize(errors.len()).unwrap();
    (errors.iter().fold(T::zero(), |a, &e| a + e.ln()) / n).exp()
}

/// `moving[k]` iff `|e_k − mean| > sigma_factor · std`.
///
/// A standard deviation that is zero up to rounding (identical residuals)
/// flags nothing.
pub fn flag_outliers<T: Real>(errors: &[T], mean: T, std: T, sigma_factor: T) -> Vec<bool> {
    let scale = mean.abs().max(T::one());
    if std <= T::zero_tolerance() * scale {
        return vec![false; errors.len()];
    }
    let limit = sigma_factor * std;
    errors.iter().map(|&e| (e - mean).abs() > limit).collect()
}

/// Result of the two-pass registration.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPassResult<T> {
    pub first: RigidMotion<T>,
    /// Pass-2 motion, or the pass-1 motion when too few pairs survive.
    pub motion: RigidMotion<T>,
    /// Stationary flags from pass 1: the pairs pass 2 was fitted on.
    pub stationary_first: Vec<bool>,
    /// Errors of every pair under `motion`.
    pub errors: Vec<T>,
    /// Final flags from `errors`.
    pub moving: Vec<bool>,
}

/// Fit on all pairs, drop the pass-1 outliers, refit on the stationary
/// rest, then re-flag every pair against the refined transform.
pub fn two_pass_motion<T: Real>(
    pairs: &[(Point<T>, Point<T>)],
    sigma_factor: T,
) -> TwoPassResult<T> {
    let first = estimate_rigid(pairs);
    let (errors1, _, _) = registration_errors(pairs, &first);
    let moving1 = flag_outliers(&errors1, first.mean_err, first.std_err, sigma_factor);
    let stationary_first: Vec<bool> = moving1.iter().map(|m| !m).collect();
    let inliers: Vec<_> = pairs
        .iter()
        .zip(&stationary_first)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| *p)
        .collect();

    let motion = if inliers.len() >= 2 {
        RigidMotion {
            pass: 2,
            ..estimate_rigid(&inliers)
        }
    } else {
        RigidMotion {
            degraded: true,
            ..first
        }
    };
    let (errors, mean, std) = registration_errors(pairs, &motion);
    let moving = flag_outliers(&errors, mean, std, sigma_factor);
    TwoPassResult {
        first,
        motion,
        stationary_first,
        errors,
        moving,
    }
}
