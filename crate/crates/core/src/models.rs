//! Motion and measurement models with analytic Jacobians.
//!
//! The motion model is a planar unicycle-style integration: position
//! integrates the previous velocity, the IMU forward acceleration changes
//! speed, the gyro sets the yaw rate directly, and the velocity vector is
//! recomputed from speed and the new heading so it stays collinear with the
//! heading (ground-vehicle nonholonomy).

use serde::{Deserialize, Serialize};

use crate::types::{wrap_angle, Mat6, NoiseSpec, VehicleState};
use crate::{Error, Result};

/// Speed below which speed-direction Jacobians switch to a defined
/// degenerate branch instead of dividing by ~0.
pub const SPEED_EPSILON: f64 = 1e-6;

/// Range below which a ranging measurement is rejected as geometrically
/// degenerate (the range gradient direction is undefined at coincidence).
pub const RANGE_EPSILON: f64 = 0.1;

/// Body-frame IMU reading used as the control input: forward acceleration
/// in m/s^2 and yaw rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuControl {
    pub accel: f64,
    pub gyro: f64,
}

impl ImuControl {
    pub const ZERO: ImuControl = ImuControl {
        accel: 0.0,
        gyro: 0.0,
    };

    pub fn new(accel: f64, gyro: f64) -> Self {
        ImuControl { accel, gyro }
    }
}

/// Stationary UWB anchor at an exactly known position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// Advances a vehicle state by one step of the motion model:
///
/// ```text
/// x'  = x + vx*dt          y'  = y + vy*dt
/// th' = wrap(th + om*dt)   s'  = hypot(vx, vy) + accel*dt
/// vx' = s'*cos(th')        vy' = s'*sin(th')
/// om' = gyro
/// ```
pub fn motion_step(state: &VehicleState, u: &ImuControl, dt: f64) -> VehicleState {
    let theta_new = wrap_angle(state.theta + state.omega * dt);
    let speed_new = state.speed() + u.accel * dt;
    VehicleState {
        x: state.x + state.vx * dt,
        y: state.y + state.vy * dt,
        theta: theta_new,
        vx: speed_new * theta_new.cos(),
        vy: speed_new * theta_new.sin(),
        omega: u.gyro,
    }
}

/// Jacobian of [`motion_step`] with respect to the state.
///
/// At speeds below [`SPEED_EPSILON`] the speed direction is undefined and
/// the derivative of speed falls back to `(1, 0)`, matching the degenerate
/// branch of [`odom_model`].
pub fn motion_jacobian(state: &VehicleState, u: &ImuControl, dt: f64) -> Mat6 {
    let theta_new = wrap_angle(state.theta + state.omega * dt);
    let (sin_t, cos_t) = theta_new.sin_cos();
    let speed = state.speed();
    let speed_new = speed + u.accel * dt;
    // Direction of d(speed)/d(vx, vy).
    let (dvx, dvy) = if speed >= SPEED_EPSILON {
        (state.vx / speed, state.vy / speed)
    } else {
        (1.0, 0.0)
    };

    let mut f = Mat6::zeros();
    // Position rows.
    f[(0, 0)] = 1.0;
    f[(0, 3)] = dt;
    f[(1, 1)] = 1.0;
    f[(1, 4)] = dt;
    // Heading row.
    f[(2, 2)] = 1.0;
    f[(2, 5)] = dt;
    // Velocity rows: v' = (speed + accel*dt) * (cos th', sin th').
    f[(3, 2)] = -speed_new * sin_t;
    f[(3, 3)] = dvx * cos_t;
    f[(3, 4)] = dvy * cos_t;
    f[(3, 5)] = -dt * speed_new * sin_t;
    f[(4, 2)] = speed_new * cos_t;
    f[(4, 3)] = dvx * sin_t;
    f[(4, 4)] = dvy * sin_t;
    f[(4, 5)] = dt * speed_new * cos_t;
    // Yaw-rate row is zero: omega' is reset from the control input.
    f
}

/// Per-step process noise used by every filter: the configured floor plus
/// the covariance injected through the IMU control noise (acceleration into
/// the velocity components, gyro into the yaw rate).
pub fn process_noise_step(noise: &NoiseSpec, dt: f64) -> Mat6 {
    let mut r = noise.process_noise() * dt;
    let accel_var = (dt * noise.imu_accel_sigma).powi(2);
    r[(3, 3)] += accel_var;
    r[(4, 4)] += accel_var;
    r[(5, 5)] += noise.imu_gyro_sigma.powi(2);
    r
}

/// GPS position fix: measures `[x, y]` directly.
pub fn gps_model(state: &VehicleState) -> (nalgebra::Vector2<f64>, nalgebra::SMatrix<f64, 2, 6>) {
    let z = nalgebra::Vector2::new(state.x, state.y);
    let mut h = nalgebra::SMatrix::<f64, 2, 6>::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    (z, h)
}

/// Wheel odometry: measures ground speed `hypot(vx, vy)`.
pub fn odom_model(state: &VehicleState) -> (f64, nalgebra::SMatrix<f64, 1, 6>) {
    let speed = state.speed();
    let mut h = nalgebra::SMatrix::<f64, 1, 6>::zeros();
    if speed >= SPEED_EPSILON {
        h[(0, 3)] = state.vx / speed;
        h[(0, 4)] = state.vy / speed;
    } else {
        h[(0, 3)] = 1.0;
    }
    (speed, h)
}

/// Vehicle-to-vehicle UWB range between two states, with the Jacobians
/// toward both vehicles. `h_j == -h_i` by construction.
pub fn range_model(
    state_i: &VehicleState,
    state_j: &VehicleState,
) -> Result<(f64, nalgebra::SMatrix<f64, 1, 6>, nalgebra::SMatrix<f64, 1, 6>)> {
    let dx = state_i.x - state_j.x;
    let dy = state_i.y - state_j.y;
    let range = dx.hypot(dy);
    if range < RANGE_EPSILON {
        return Err(Error::DegenerateGeometry {
            range,
            min: RANGE_EPSILON,
        });
    }
    let mut h_i = nalgebra::SMatrix::<f64, 1, 6>::zeros();
    h_i[(0, 0)] = dx / range;
    h_i[(0, 1)] = dy / range;
    Ok((range, h_i, -h_i))
}

/// UWB range from a vehicle to a stationary landmark with exactly known
/// position; a private measurement because only one vehicle state enters.
pub fn landmark_range_model(
    state: &VehicleState,
    landmark: &Landmark,
) -> Result<(f64, nalgebra::SMatrix<f64, 1, 6>)> {
    let dx = state.x - landmark.x;
    let dy = state.y - landmark.y;
    let range = dx.hypot(dy);
    if range < RANGE_EPSILON {
        return Err(Error::DegenerateGeometry {
            range,
            min: RANGE_EPSILON,
        });
    }
    let mut h = nalgebra::SMatrix::<f64, 1, 6>::zeros();
    h[(0, 0)] = dx / range;
    h[(0, 1)] = dy / range;
    Ok((range, h))
}
