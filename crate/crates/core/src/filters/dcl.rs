//! Decentralized collaborative localization.
//!
//! Each vehicle runs its own filter over its own 6-state and keeps one
//! cross-correlation factor per other vehicle. Predictions and private
//! updates fold their local transition into every factor; when vehicle `i`
//! ranges vehicle `j`, the pair reconstructs their joint 12x12 covariance
//! from the factors, performs the joint update, and re-splits: the detector
//! keeps the posterior cross block as its factor, the detected side resets
//! its factor to identity, and factors toward uninvolved vehicles are
//! rescaled through the ratio of posterior to prior own-covariance.

use std::collections::BTreeMap;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::models::{motion_jacobian, motion_step, range_model, ImuControl};
use crate::types::{
    enforce_symmetry, reconstruct_cross_correlation, CovarianceBlock, CrossCorrFactor, Mat6,
    VehicleId, VehicleState,
};
use crate::{Error, Result};

use super::{solve_right_inverse, PrivateMeasurement};

type Mat12 = SMatrix<f64, 12, 12>;
type Vec12 = SVector<f64, 12>;
type RowVec12 = SMatrix<f64, 1, 12>;

/// State packet the detected vehicle sends to the detector when a relative
/// measurement occurs: its estimate, own covariance, and its factor toward
/// the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectMessage {
    pub sender: VehicleId,
    pub state: VehicleState,
    pub covariance: CovarianceBlock,
    /// `sigma_ji`: the sender's factor toward the detector.
    pub factor_toward_detector: Mat6,
}

/// Posterior handed back to the detected vehicle after the joint update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyMessage {
    pub state: VehicleState,
    pub covariance: CovarianceBlock,
}

/// Per-vehicle decentralized filter.
#[derive(Debug, Clone, PartialEq)]
pub struct DclVehicleFilter {
    id: VehicleId,
    pub state: VehicleState,
    pub covariance: CovarianceBlock,
    factors: BTreeMap<VehicleId, CrossCorrFactor>,
}

impl DclVehicleFilter {
    /// Creates a filter holding one zero factor per other vehicle: the
    /// network starts uncorrelated.
    pub fn new(
        id: VehicleId,
        state: VehicleState,
        covariance: CovarianceBlock,
        others: impl IntoIterator<Item = VehicleId>,
    ) -> Self {
        let factors = others
            .into_iter()
            .filter(|&other| other != id)
            .map(|other| (other, CrossCorrFactor::zero(id, other)))
            .collect();
        DclVehicleFilter {
            id,
            state,
            covariance,
            factors,
        }
    }

    pub fn id(&self) -> VehicleId {
        self.id
    }

    pub fn factor(&self, other: VehicleId) -> Option<&CrossCorrFactor> {
        self.factors.get(&other)
    }

    pub fn factors(&self) -> impl Iterator<Item = &CrossCorrFactor> {
        self.factors.values()
    }

    /// Overwrites the factor toward `other`; used to bootstrap known
    /// correlations in tests and compositions.
    pub fn set_factor(&mut self, other: VehicleId, sigma: Mat6) {
        self.factors
            .insert(other, CrossCorrFactor { owner: self.id, other, sigma });
    }

    /// Prediction step: advances the state through the motion model,
    /// propagates the covariance as `F Sigma F^T + R`, and left-multiplies
    /// every cross-correlation factor by `F`.
    pub fn predict(&mut self, u: &ImuControl, dt: f64, process_noise: &Mat6) {
        let f = motion_jacobian(&self.state, u, dt);
        self.state = motion_step(&self.state, u, dt);
        self.covariance = enforce_symmetry(&(f * self.covariance * f.transpose() + process_noise));
        for factor in self.factors.values_mut() {
            factor.sigma = f * factor.sigma;
        }
    }

    /// Private update: the standard EKF update on this vehicle's state and
    /// covariance, with every cross-correlation factor left-multiplied by
    /// `I - K H`.
    pub fn private_update(&mut self, meas: &PrivateMeasurement) -> Result<()> {
        let i_kh = meas.apply(&mut self.state, &mut self.covariance)?;
        for factor in self.factors.values_mut() {
            factor.sigma = i_kh * factor.sigma;
        }
        Ok(())
    }

    /// Builds the packet this vehicle sends when `detector` ranges it.
    pub fn detect_message(&self, detector: VehicleId) -> DetectMessage {
        let factor = self
            .factors
            .get(&detector)
            .map(|f| f.sigma)
            .unwrap_or_else(Mat6::zeros);
        DetectMessage {
            sender: self.id,
            state: self.state,
            covariance: self.covariance,
            factor_toward_detector: factor,
        }
    }

    /// Relative update, detector side. Reconstructs the pair's joint
    /// covariance, fuses the range measurement over the stacked 12-state,
    /// keeps the posterior `ii` block and cross block, rescales factors
    /// toward uninvolved vehicles, and returns the detected vehicle's
    /// posterior for the reply message.
    pub fn relative_update_detector(
        &mut self,
        msg: &DetectMessage,
        range: f64,
        uwb_sigma: f64,
    ) -> Result<ReplyMessage> {
        let own_factor = self
            .factors
            .get(&msg.sender)
            .map(|f| f.sigma)
            .unwrap_or_else(Mat6::zeros);
        let cross = reconstruct_cross_correlation(&own_factor, &msg.factor_toward_detector);

        let mut joint_cov = Mat12::zeros();
        joint_cov.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.covariance);
        joint_cov.fixed_view_mut::<6, 6>(0, 6).copy_from(&cross);
        joint_cov
            .fixed_view_mut::<6, 6>(6, 0)
            .copy_from(&cross.transpose());
        joint_cov.fixed_view_mut::<6, 6>(6, 6).copy_from(&msg.covariance);

        // Measurement Jacobian evaluated at both current estimates.
        let (z_pred, h_i, h_j) = range_model(&self.state, &msg.state)?;
        let mut h = RowVec12::zeros();
        h.fixed_view_mut::<1, 6>(0, 0).copy_from(&h_i);
        h.fixed_view_mut::<1, 6>(0, 6).copy_from(&h_j);

        let h_cov = h * joint_cov;
        let s = (h_cov * h.transpose())[(0, 0)] + uwb_sigma * uwb_sigma;
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::SingularInnovation);
        }
        let gain: Vec12 = joint_cov * h.transpose() / s;

        let mut joint_state = Vec12::zeros();
        joint_state.fixed_view_mut::<6, 1>(0, 0).copy_from(&self.state.to_vector());
        joint_state
            .fixed_view_mut::<6, 1>(6, 0)
            .copy_from(&msg.state.to_vector());
        joint_state += gain * (range - z_pred);
        if joint_state.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                context: "relative update",
            });
        }

        let posterior = joint_cov - gain * h_cov;
        let prior_own = self.covariance;

        self.state = VehicleState::from_vector(&joint_state.fixed_view::<6, 1>(0, 0).into_owned());
        self.covariance = enforce_symmetry(&posterior.fixed_view::<6, 6>(0, 0).into_owned());
        let new_cross = posterior.fixed_view::<6, 6>(0, 6).into_owned();

        // Factors toward vehicles not involved in this update are carried
        // over through the ratio of posterior to prior own-covariance.
        let rescale = solve_right_inverse(&self.covariance, &prior_own)?;
        for factor in self.factors.values_mut() {
            if factor.other == msg.sender {
                factor.sigma = new_cross;
            } else {
                factor.sigma = rescale * factor.sigma;
            }
        }

        Ok(ReplyMessage {
            state: VehicleState::from_vector(&joint_state.fixed_view::<6, 1>(6, 0).into_owned()),
            covariance: enforce_symmetry(&posterior.fixed_view::<6, 6>(6, 6).into_owned()),
        })
    }

    /// Relative update, detected side. Adopts the posterior from the reply,
    /// resets the factor toward the detector to identity (the detector now
    /// holds the whole cross block), and rescales factors toward uninvolved
    /// vehicles.
    pub fn relative_update_detected(
        &mut self,
        detector: VehicleId,
        reply: &ReplyMessage,
    ) -> Result<()> {
        let rescale = solve_right_inverse(&reply.covariance, &self.covariance)?;
        self.state = reply.state;
        self.covariance = reply.covariance;
        for factor in self.factors.values_mut() {
            if factor.other == detector {
                factor.sigma = Mat6::identity();
            } else {
                factor.sigma = rescale * factor.sigma;
            }
        }
        Ok(())
    }
}
