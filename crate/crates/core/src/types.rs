//! Domain types and small-matrix utilities shared by every filter.

use std::f64::consts::PI;

use nalgebra::{Dim, Matrix, OMatrix, SMatrix, SVector, Storage};
use serde::{Deserialize, Serialize};

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;

/// One 6x6 block of the joint network covariance. Diagonal blocks are kept
/// symmetric and numerically PSD (minimum eigenvalue >= -[`PSD_EIG_TOL`]);
/// off-diagonal blocks carry no symmetry requirement.
pub type CovarianceBlock = Mat6;

/// Eigenvalue slack accepted when checking a covariance block for positive
/// semi-definiteness; absorbs floating-point drift accumulated over
/// thousands of filter steps without masking genuine indefiniteness.
pub const PSD_EIG_TOL: f64 = 1e-9;

/// Index of one vehicle in the network; doubles as the block index into the
/// stacked network state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub usize);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar pose and velocity of one vehicle.
///
/// Position in meters (east, north), heading in radians wrapped to
/// (-pi, pi], global-frame velocities in m/s, and yaw rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, vx: f64, vy: f64, omega: f64) -> Self {
        VehicleState {
            x,
            y,
            theta: wrap_angle(theta),
            vx,
            vy,
            omega,
        }
    }

    /// Builds a state from a 6-vector `[x, y, theta, vx, vy, omega]`,
    /// wrapping the heading component.
    pub fn from_vector(v: &Vec6) -> Self {
        VehicleState::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(self.x, self.y, self.theta, self.vx, self.vy, self.omega)
    }

    /// Ground speed, `hypot(vx, vy)`.
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

/// Wraps an angle into (-pi, pi]; the boundary -pi maps to +pi.
///
/// Values already inside the interval are returned unchanged, which makes
/// the function exactly idempotent.
pub fn wrap_angle(a: f64) -> f64 {
    if -PI < a && a <= PI {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut r = a.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    // rem_euclid can return exactly 0 for inputs congruent to -pi (e.g. a
    // multiple of 2*pi below it rounds that way); 0 is in range.
    if r == -PI {
        r = PI;
    }
    r
}

/// Averages a matrix with its transpose, removing floating-point asymmetry.
/// Symmetric inputs are returned bit-exactly.
pub fn enforce_symmetry<D, S>(m: &Matrix<f64, D, D, S>) -> OMatrix<f64, D, D>
where
    D: Dim,
    S: Storage<f64, D, D>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<D, D>,
{
    (m + m.transpose()) * 0.5
}

/// One side of the cross-correlation factorization
/// `Sigma_ij = sigma_ij * sigma_ji^T`, held by vehicle `owner` toward
/// vehicle `other` and updated locally between encounters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrFactor {
    pub owner: VehicleId,
    pub other: VehicleId,
    pub sigma: Mat6,
}

impl CrossCorrFactor {
    /// Zero factor: the pair is uncorrelated until the first encounter.
    pub fn zero(owner: VehicleId, other: VehicleId) -> Self {
        CrossCorrFactor {
            owner,
            other,
            sigma: Mat6::zeros(),
        }
    }
}

/// Splits a cross-covariance block into the two per-vehicle factors: the
/// detecting side keeps the block itself, the detected side keeps identity.
pub fn decompose_cross_correlation(s: &Mat6) -> (Mat6, Mat6) {
    (*s, Mat6::identity())
}

/// Rebuilds a cross-covariance block from its two factors,
/// `sigma_ij * sigma_ji^T`.
pub fn reconstruct_cross_correlation(sigma_ij: &Mat6, sigma_ji: &Mat6) -> Mat6 {
    sigma_ij * sigma_ji.transpose()
}

/// Largest relative asymmetry `|m - m^T|` over the matrix scale.
pub fn max_relative_asymmetry(m: &Mat6) -> f64 {
    let scale = m.amax().max(1e-300);
    let mut worst: f64 = 0.0;
    for r in 0..6 {
        for c in (r + 1)..6 {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst / scale
}

/// Checks a symmetric matrix for numerical positive semi-definiteness:
/// either its Cholesky factorization succeeds or its minimum eigenvalue is
/// above `-tol`.
pub fn is_numerically_psd(m: &Mat6, tol: f64) -> bool {
    if nalgebra::Cholesky::new(*m).is_some() {
        return true;
    }
    min_symmetric_eigenvalue(m) >= -tol
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &Mat6) -> f64 {
    enforce_symmetry(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Noise magnitudes for the simulated sensors plus the filter's process
/// noise floor. Sensor sigmas are the standard deviations of the injected
/// zero-mean Gaussian errors; the same values parameterize the filters'
/// measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Diagonal of the process-noise floor, per second of simulated time;
    /// each prediction step adds `diag * dt` on top of the covariance
    /// injected through the IMU control noise.
    pub process_noise_diag: [f64; 6],
    /// GPS position sigma per axis, meters.
    pub gps_sigma: f64,
    /// Wheel-odometry speed sigma, m/s.
    pub odom_sigma: f64,
    /// UWB range sigma, meters (vehicle-to-vehicle and landmark).
    pub uwb_sigma: f64,
    /// IMU forward-acceleration sigma, m/s^2.
    pub imu_accel_sigma: f64,
    /// IMU yaw-rate sigma, rad/s.
    pub imu_gyro_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        // The velocity floor is the largest entry: the motion model ties
        // velocity to the heading direction, and that near-degenerate
        // covariance direction must stay wide enough to absorb
        // linearization error (calibrated against NEES ~ 6).
        NoiseSpec {
            process_noise_diag: [1e-6, 1e-6, 1e-6, 1.5e-4, 1.5e-4, 1e-8],
            gps_sigma: 0.3,
            odom_sigma: 0.05,
            uwb_sigma: 0.1,
            imu_accel_sigma: 0.05,
            imu_gyro_sigma: 0.005,
        }
    }
}

impl NoiseSpec {
    /// Process-noise floor as a matrix (per second of simulated time).
    pub fn process_noise(&self) -> Mat6 {
        Mat6::from_diagonal(&Vec6::from_row_slice(&self.process_noise_diag))
    }

    pub fn validate(&self) -> crate::Result<()> {
        let sigmas = [
            ("noise.gps_sigma", self.gps_sigma),
            ("noise.odom_sigma", self.odom_sigma),
            ("noise.uwb_sigma", self.uwb_sigma),
            ("noise.imu_accel_sigma", self.imu_accel_sigma),
            ("noise.imu_gyro_sigma", self.imu_gyro_sigma),
        ];
        for (field, s) in sigmas {
            if s < 0.0 || !s.is_finite() {
                return Err(crate::Error::invalid_config(
                    field,
                    format!("must be finite and >= 0, got {s}"),
                ));
            }
        }
        for d in self.process_noise_diag {
            if d < 0.0 || !d.is_finite() {
                return Err(crate::Error::invalid_config(
                    "noise.process_noise_diag",
                    format!("entries must be finite and >= 0, got {d}"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_matrix() -> Mat6 {
        Mat6::from_fn(|r, c| 0.3 * r as f64 - 1.7 * c as f64 + 0.01 * (r * c) as f64)
    }

    #[test]
    fn decompose_zero_and_identity() {
        let (a, b) = decompose_cross_correlation(&Mat6::zeros());
        assert_eq!(a, Mat6::zeros());
        assert_eq!(b, Mat6::identity());

        let (a, b) = decompose_cross_correlation(&Mat6::identity());
        assert_eq!(a, Mat6::identity());
        assert_eq!(b, Mat6::identity());
    }

    #[test]
    fn decompose_arbitrary_matrix_reconstructs() {
        let s = test_matrix();
        let (a, b) = decompose_cross_correlation(&s);
        assert_eq!(a, s);
        assert_eq!(b, Mat6::identity());
        assert_eq!(reconstruct_cross_correlation(&a, &b), s);
    }

    #[test]
    fn reconstruct_examples() {
        let a = test_matrix();
        assert_eq!(reconstruct_cross_correlation(&a, &Mat6::identity()), a);
        assert_eq!(
            reconstruct_cross_correlation(&Mat6::identity(), &Mat6::identity()),
            Mat6::identity()
        );
        assert_eq!(
            reconstruct_cross_correlation(&(Mat6::identity() * 2.0), &(Mat6::identity() * 3.0)),
            Mat6::identity() * 6.0
        );
    }

    #[test]
    fn decompose_reconstruct_round_trip_is_bit_exact() {
        // 1,000 pseudo-random matrices; the round trip must be bit-exact
        // because the product against an identity transpose copies entries.
        let mut stream = crate::sensing::RngStream::keyed(0xC0FFEE, &[42]);
        for _ in 0..1_000 {
            let s = Mat6::from_fn(|_, _| stream.sample_gaussian(10.0));
            let (a, b) = decompose_cross_correlation(&s);
            let back = reconstruct_cross_correlation(&a, &b);
            assert_eq!(back, s);
        }
    }

    #[test]
    fn enforce_symmetry_examples() {
        let sym = enforce_symmetry(&(test_matrix() + test_matrix().transpose()));
        assert_eq!(enforce_symmetry(&sym), sym);

        let mut near = Mat6::zeros();
        near[(0, 1)] = 1.0;
        near[(1, 0)] = 1.0 + 1e-15;
        let fixed = enforce_symmetry(&near);
        assert_eq!(fixed[(0, 1)], fixed[(1, 0)]);
        assert_relative_eq!(fixed[(0, 1)], 1.0 + 5e-16, max_relative = 1e-15);

        assert_eq!(enforce_symmetry(&Mat6::zeros()), Mat6::zeros());
    }

    #[test]
    fn wrap_angle_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_relative_eq!(wrap_angle(1.5 * PI), -0.5 * PI, max_relative = 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
    }

    #[test]
    fn wrap_angle_of_negative_two_pi_is_zero() {
        assert_eq!(wrap_angle(-2.0 * PI), 0.0);
    }

    proptest! {
        #[test]
        fn wrap_angle_idempotent(a in -1e6f64..1e6) {
            let w = wrap_angle(a);
            prop_assert!(-PI < w && w <= PI);
            prop_assert_eq!(wrap_angle(w), w);
        }

        #[test]
        fn wrap_angle_periodic(a in -10.0f64..10.0, k in -3i32..3) {
            let shifted = a + 2.0 * PI * k as f64;
            prop_assert!((wrap_angle(shifted) - wrap_angle(a)).abs() < 1e-9);
        }

        #[test]
        fn enforce_symmetry_idempotent(seed in 0u64..1000) {
            let mut stream = crate::sensing::RngStream::keyed(seed, &[7]);
            let m = Mat6::from_fn(|_, _| stream.sample_gaussian(3.0));
            let once = enforce_symmetry(&m);
            prop_assert_eq!(enforce_symmetry(&once), once);
        }
    }

    #[test]
    fn psd_check_accepts_small_negative_drift() {
        let mut m = Mat6::identity();
        m[(5, 5)] = -0.5e-9;
        assert!(is_numerically_psd(&m, PSD_EIG_TOL));
        m[(5, 5)] = -1e-6;
        assert!(!is_numerically_psd(&m, PSD_EIG_TOL));
    }

    #[test]
    fn vehicle_state_round_trip_wraps_heading() {
        let s = VehicleState::new(1.0, 2.0, 3.0 * PI, 0.5, -0.5, 0.1);
        assert_relative_eq!(s.theta, PI, max_relative = 1e-12);
        let v = s.to_vector();
        assert_eq!(VehicleState::from_vector(&v), s);
    }

    #[test]
    fn noise_spec_rejects_negative_sigma() {
        let n = NoiseSpec {
            uwb_sigma: -0.1,
            ..NoiseSpec::default()
        };
        assert!(matches!(
            n.validate(),
            Err(crate::Error::InvalidConfig { field: "noise.uwb_sigma", .. })
        ));
    }
}
