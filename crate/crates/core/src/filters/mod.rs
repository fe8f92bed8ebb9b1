//! The three estimators run side by side on identical sensor streams:
//!
//! * [`EkfFilter`] — standalone per-vehicle EKF; vehicle-to-vehicle
//!   measurements are dropped.
//! * [`CclFilter`] — centralized filter over the stacked `6N` network state;
//!   receives every measurement and serves as the optimality reference.
//! * [`DclVehicleFilter`] — decentralized per-vehicle filter that tracks one
//!   cross-correlation factor per other vehicle, so a pair can fuse a
//!   relative range with a single message exchange and no third party.

mod ccl;
mod dcl;
mod ekf;

pub use ccl::CclFilter;
pub use dcl::{DclVehicleFilter, DetectMessage, ReplyMessage};
pub use ekf::EkfFilter;

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::models::{gps_model, landmark_range_model, odom_model, Landmark};
use crate::types::{enforce_symmetry, Mat6, VehicleState};
use crate::{Error, Result};

/// A measurement involving only one vehicle's state, with its noise sigma.
/// GPS, odometry, and landmark ranges are all fused this way; none of them
/// measures an angle, so innovations are plain differences (an angular
/// measurement would wrap its residual here).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrivateMeasurement<'a> {
    Gps { z: [f64; 2], sigma: f64 },
    Odom { speed: f64, sigma: f64 },
    LandmarkRange {
        landmark: &'a Landmark,
        range: f64,
        sigma: f64,
    },
}

impl PrivateMeasurement<'_> {
    /// Applies the standard EKF update for this measurement to a single
    /// vehicle's state and covariance, returning `I - K H` for cross-term
    /// bookkeeping by the decentralized filter.
    fn apply(&self, state: &mut VehicleState, covariance: &mut Mat6) -> Result<Mat6> {
        match *self {
            PrivateMeasurement::Gps { z, sigma } => {
                let (z_pred, h) = gps_model(state);
                let innovation = SVector::<f64, 2>::new(z[0] - z_pred[0], z[1] - z_pred[1]);
                let q = SMatrix::<f64, 2, 2>::identity() * sigma * sigma;
                kalman_update(state, covariance, &innovation, &h, &q)
            }
            PrivateMeasurement::Odom { speed, sigma } => {
                let (z_pred, h) = odom_model(state);
                let innovation = SVector::<f64, 1>::new(speed - z_pred);
                let q = SMatrix::<f64, 1, 1>::new(sigma * sigma);
                kalman_update(state, covariance, &innovation, &h, &q)
            }
            PrivateMeasurement::LandmarkRange {
                landmark,
                range,
                sigma,
            } => {
                let (z_pred, h) = landmark_range_model(state, landmark)?;
                let innovation = SVector::<f64, 1>::new(range - z_pred);
                let q = SMatrix::<f64, 1, 1>::new(sigma * sigma);
                kalman_update(state, covariance, &innovation, &h, &q)
            }
        }
    }
}

/// Shared measurement-update core: gain from the vehicle's own covariance,
/// state moved by the gained innovation, covariance `(I - K H) Sigma`
/// re-symmetrized.
fn kalman_update<const K: usize>(
    state: &mut VehicleState,
    covariance: &mut Mat6,
    innovation: &SVector<f64, K>,
    h: &SMatrix<f64, K, 6>,
    q: &SMatrix<f64, K, K>,
) -> Result<Mat6> {
    let s = h * *covariance * h.transpose() + q;
    let chol = Cholesky::new(s).ok_or(Error::SingularInnovation)?;
    let gain = *covariance * h.transpose() * chol.inverse();
    let x = state.to_vector() + gain * innovation;
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            context: "measurement update",
        });
    }
    let i_kh = Mat6::identity() - gain * h;
    *covariance = enforce_symmetry(&(i_kh * *covariance));
    *state = VehicleState::from_vector(&x);
    Ok(i_kh)
}

/// Computes `numerator * denominator^-1` for symmetric positive definite
/// `denominator` via a Cholesky solve. Falls back to a Tikhonov-regularized
/// solve (`+ 1e-12 I`) when the matrix fails to factor or its estimated
/// condition number exceeds 1e12.
fn solve_right_inverse(numerator: &Mat6, denominator: &Mat6) -> Result<Mat6> {
    const COND_LIMIT: f64 = 1e12;
    let solve = |chol: &Cholesky<f64, nalgebra::Const<6>>| -> Mat6 {
        // numerator * denom^-1 == (denom^-1 * numerator^T)^T for symmetric
        // denominators.
        chol.solve(&numerator.transpose()).transpose()
    };
    if let Some(chol) = Cholesky::new(*denominator) {
        let diag = chol.l_dirty().diagonal();
        let max = diag.amax();
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 && (max / min).powi(2) <= COND_LIMIT {
            return Ok(solve(&chol));
        }
    }
    let regularized = denominator + Mat6::identity() * 1e-12;
    let chol = Cholesky::new(regularized).ok_or(Error::SingularCovariance)?;
    Ok(solve(&chol))
}
