//! Centralized collaborative localization: one EKF over the stacked `6N`
//! network state. It receives every sensor message — private measurements
//! enter with a zero-padded Jacobian, relative ranges couple two blocks —
//! and is the optimality reference the decentralized filter approximates.

use nalgebra::{Cholesky, DMatrix, DVector, SMatrix};

use crate::models::{
    gps_model, landmark_range_model, motion_jacobian, motion_step, odom_model, range_model,
    ImuControl,
};
use crate::types::{enforce_symmetry, wrap_angle, Mat6, VehicleId, VehicleState};
use crate::{Error, Result};

use super::PrivateMeasurement;

#[derive(Debug, Clone, PartialEq)]
pub struct CclFilter {
    n: usize,
    state: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl CclFilter {
    /// Initializes the joint filter from per-vehicle estimates with zero
    /// cross-correlations.
    pub fn new(states: &[VehicleState], covariances: &[Mat6]) -> Self {
        assert_eq!(states.len(), covariances.len());
        let n = states.len();
        let mut state = DVector::zeros(6 * n);
        let mut covariance = DMatrix::zeros(6 * n, 6 * n);
        for v in 0..n {
            state.fixed_rows_mut::<6>(6 * v).copy_from(&states[v].to_vector());
            covariance
                .fixed_view_mut::<6, 6>(6 * v, 6 * v)
                .copy_from(&covariances[v]);
        }
        CclFilter {
            n,
            state,
            covariance,
        }
    }

    /// Builds a filter from an explicit joint covariance (cross blocks
    /// included); used to bootstrap correlated comparisons.
    pub fn from_joint(states: &[VehicleState], joint_covariance: DMatrix<f64>) -> Self {
        let n = states.len();
        assert_eq!(joint_covariance.nrows(), 6 * n);
        assert_eq!(joint_covariance.ncols(), 6 * n);
        let mut state = DVector::zeros(6 * n);
        for v in 0..n {
            state.fixed_rows_mut::<6>(6 * v).copy_from(&states[v].to_vector());
        }
        CclFilter {
            n,
            state,
            covariance: joint_covariance,
        }
    }

    pub fn n_vehicles(&self) -> usize {
        self.n
    }

    pub fn vehicle_state(&self, v: VehicleId) -> VehicleState {
        VehicleState::from_vector(&self.state.fixed_rows::<6>(6 * v.0).into_owned())
    }

    pub fn vehicle_covariance(&self, v: VehicleId) -> Mat6 {
        self.covariance.fixed_view::<6, 6>(6 * v.0, 6 * v.0).into_owned()
    }

    pub fn cross_covariance(&self, i: VehicleId, j: VehicleId) -> Mat6 {
        self.covariance.fixed_view::<6, 6>(6 * i.0, 6 * j.0).into_owned()
    }

    pub fn joint_covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Prediction over the whole network: block-diagonal motion Jacobian
    /// applied to the joint covariance, per-vehicle process noise added on
    /// the diagonal blocks.
    pub fn predict(&mut self, controls: &[ImuControl], dt: f64, process_noise: &Mat6) {
        assert_eq!(controls.len(), self.n);
        let jacobians: Vec<Mat6> = (0..self.n)
            .map(|v| motion_jacobian(&self.vehicle_state(VehicleId(v)), &controls[v], dt))
            .collect();
        for v in 0..self.n {
            let next = motion_step(&self.vehicle_state(VehicleId(v)), &controls[v], dt);
            self.state.fixed_rows_mut::<6>(6 * v).copy_from(&next.to_vector());
        }
        // Sigma <- F Sigma F^T blockwise: each block B_vw <- F_v B_vw F_w^T.
        for v in 0..self.n {
            for w in 0..self.n {
                let block = self.covariance.fixed_view::<6, 6>(6 * v, 6 * w).into_owned();
                self.covariance
                    .fixed_view_mut::<6, 6>(6 * v, 6 * w)
                    .copy_from(&(jacobians[v] * block * jacobians[w].transpose()));
            }
        }
        for v in 0..self.n {
            let mut block = self.covariance.fixed_view_mut::<6, 6>(6 * v, 6 * v);
            block += process_noise;
        }
        self.symmetrize();
    }

    /// Private measurement of one vehicle, fused over the joint state: with
    /// nonzero cross-correlation the gain also moves every other vehicle.
    pub fn private_update(&mut self, v: VehicleId, meas: &PrivateMeasurement) -> Result<()> {
        let state_v = self.vehicle_state(v);
        match *meas {
            PrivateMeasurement::Gps { z, sigma } => {
                let (z_pred, h) = gps_model(&state_v);
                let innovation = [z[0] - z_pred[0], z[1] - z_pred[1]];
                self.update_single_block::<2>(v, &h, &innovation, sigma)
            }
            PrivateMeasurement::Odom { speed, sigma } => {
                let (z_pred, h) = odom_model(&state_v);
                self.update_single_block::<1>(v, &h, &[speed - z_pred], sigma)
            }
            PrivateMeasurement::LandmarkRange {
                landmark,
                range,
                sigma,
            } => {
                let (z_pred, h) = landmark_range_model(&state_v, landmark)?;
                self.update_single_block::<1>(v, &h, &[range - z_pred], sigma)
            }
        }
    }

    fn update_single_block<const K: usize>(
        &mut self,
        v: VehicleId,
        h: &SMatrix<f64, K, 6>,
        innovation: &[f64; K],
        sigma: f64,
    ) -> Result<()> {
        // Row strip M_w = H * Sigma_vw for every block column w.
        let strips: Vec<SMatrix<f64, K, 6>> = (0..self.n)
            .map(|w| h * self.covariance.fixed_view::<6, 6>(6 * v.0, 6 * w).into_owned())
            .collect();
        let s = strips[v.0] * h.transpose() + SMatrix::<f64, K, K>::identity() * sigma * sigma;
        let chol = Cholesky::new(s).ok_or(Error::SingularInnovation)?;
        let s_inv = chol.inverse();
        let innovation = SMatrix::<f64, K, 1>::from_column_slice(innovation);

        let gains: Vec<SMatrix<f64, 6, K>> =
            strips.iter().map(|m| m.transpose() * s_inv).collect();
        self.apply_gains::<K>(&gains, &strips, &innovation)
    }

    /// Relative range between vehicles `i` and `j`, fused over the joint
    /// state; the measurement Jacobian has nonzero entries only in the two
    /// involved blocks.
    pub fn relative_update(
        &mut self,
        i: VehicleId,
        j: VehicleId,
        range: f64,
        uwb_sigma: f64,
    ) -> Result<()> {
        assert_ne!(i, j, "relative update needs two distinct vehicles");
        let (z_pred, h_i, h_j) = range_model(&self.vehicle_state(i), &self.vehicle_state(j))?;
        let strips: Vec<SMatrix<f64, 1, 6>> = (0..self.n)
            .map(|w| {
                h_i * self.covariance.fixed_view::<6, 6>(6 * i.0, 6 * w).into_owned()
                    + h_j * self.covariance.fixed_view::<6, 6>(6 * j.0, 6 * w).into_owned()
            })
            .collect();
        let s = (strips[i.0] * h_i.transpose() + strips[j.0] * h_j.transpose())[(0, 0)]
            + uwb_sigma * uwb_sigma;
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::SingularInnovation);
        }
        let gains: Vec<SMatrix<f64, 6, 1>> =
            strips.iter().map(|m| m.transpose() / s).collect();
        let innovation = SMatrix::<f64, 1, 1>::new(range - z_pred);
        self.apply_gains::<1>(&gains, &strips, &innovation)
    }

    fn apply_gains<const K: usize>(
        &mut self,
        gains: &[SMatrix<f64, 6, K>],
        strips: &[SMatrix<f64, K, 6>],
        innovation: &SMatrix<f64, K, 1>,
    ) -> Result<()> {
        for w in 0..self.n {
            let mut rows = self.state.fixed_rows_mut::<6>(6 * w);
            rows += gains[w] * innovation;
        }
        if self.state.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                context: "joint measurement update",
            });
        }
        for v in 0..self.n {
            self.state[6 * v + 2] = wrap_angle(self.state[6 * v + 2]);
        }
        // Sigma <- Sigma - K (H Sigma), blockwise.
        for a in 0..self.n {
            for b in 0..self.n {
                let mut block = self.covariance.fixed_view_mut::<6, 6>(6 * a, 6 * b);
                block -= gains[a] * strips[b];
            }
        }
        self.symmetrize();
        Ok(())
    }

    fn symmetrize(&mut self) {
        self.covariance = enforce_symmetry(&self.covariance);
    }
}
