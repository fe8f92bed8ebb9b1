//! Standalone per-vehicle EKF baseline: identical prediction and private
//! updates to the decentralized filter, no cross-correlation bookkeeping,
//! and vehicle-to-vehicle measurements are never fed to it.

use crate::models::{motion_jacobian, motion_step, ImuControl};
use crate::types::{enforce_symmetry, CovarianceBlock, Mat6, VehicleId, VehicleState};
use crate::Result;

use super::PrivateMeasurement;

#[derive(Debug, Clone, PartialEq)]
pub struct EkfFilter {
    id: VehicleId,
    pub state: VehicleState,
    pub covariance: CovarianceBlock,
}

impl EkfFilter {
    pub fn new(id: VehicleId, state: VehicleState, covariance: CovarianceBlock) -> Self {
        EkfFilter {
            id,
            state,
            covariance,
        }
    }

    pub fn id(&self) -> VehicleId {
        self.id
    }

    pub fn predict(&mut self, u: &ImuControl, dt: f64, process_noise: &Mat6) {
        let f = motion_jacobian(&self.state, u, dt);
        self.state = motion_step(&self.state, u, dt);
        self.covariance = enforce_symmetry(&(f * self.covariance * f.transpose() + process_noise));
    }

    pub fn private_update(&mut self, meas: &PrivateMeasurement) -> Result<()> {
        meas.apply(&mut self.state, &mut self.covariance)?;
        Ok(())
    }
}
