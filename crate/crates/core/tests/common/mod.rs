#![allow(dead_code)] // not every test binary uses every helper

//! Shared helpers for the integration suites: a twin network that feeds
//! identical operation sequences to a set of decentralized filters and one
//! centralized filter, plus deterministic random sequence generation.

use colloc_core::filters::{CclFilter, DclVehicleFilter, PrivateMeasurement};
use colloc_core::models::ImuControl;
use colloc_core::sensing::RngStream;
use colloc_core::types::{
    reconstruct_cross_correlation, wrap_angle, Mat6, Vec6, VehicleId, VehicleState,
};
use colloc_core::Result;

pub struct TwinNetwork {
    pub dcl: Vec<DclVehicleFilter>,
    pub ccl: CclFilter,
}

impl TwinNetwork {
    /// Starts both filter banks from identical uncorrelated estimates.
    pub fn new(states: &[VehicleState], covariance: Mat6) -> Self {
        let n = states.len();
        let dcl = (0..n)
            .map(|v| {
                DclVehicleFilter::new(VehicleId(v), states[v], covariance, (0..n).map(VehicleId))
            })
            .collect();
        let ccl = CclFilter::new(states, &vec![covariance; n]);
        TwinNetwork { dcl, ccl }
    }

    pub fn n(&self) -> usize {
        self.dcl.len()
    }

    pub fn predict_all(&mut self, controls: &[ImuControl], dt: f64, process_noise: &Mat6) {
        for (v, f) in self.dcl.iter_mut().enumerate() {
            f.predict(&controls[v], dt, process_noise);
        }
        self.ccl.predict(controls, dt, process_noise);
    }

    pub fn private(&mut self, v: usize, meas: &PrivateMeasurement) -> Result<()> {
        self.dcl[v].private_update(meas)?;
        self.ccl.private_update(VehicleId(v), meas)
    }

    /// Two-message relative exchange on the DCL side, joint update on the
    /// CCL side, both with the same measured range.
    pub fn relative(&mut self, detector: usize, detected: usize, range: f64, sigma: f64) -> Result<()> {
        let msg = self.dcl[detected].detect_message(VehicleId(detector));
        let reply = self.dcl[detector].relative_update_detector(&msg, range, sigma)?;
        self.dcl[detected].relative_update_detected(VehicleId(detector), &reply)?;
        self.ccl
            .relative_update(VehicleId(detector), VehicleId(detected), range, sigma)
    }

    /// Largest absolute per-component state difference between the two
    /// banks, heading components compared wrap-aware.
    pub fn max_state_discrepancy(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, f) in self.dcl.iter().enumerate() {
            let mut diff = f.state.to_vector() - self.ccl.vehicle_state(VehicleId(v)).to_vector();
            diff[2] = wrap_angle(diff[2]);
            worst = worst.max(diff.amax());
        }
        worst
    }

    /// Largest absolute entry difference over all covariance blocks: each
    /// vehicle's own block and every reconstructed cross block.
    pub fn max_covariance_discrepancy(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let n = self.n();
        for v in 0..n {
            worst = worst.max(
                (self.dcl[v].covariance - self.ccl.vehicle_covariance(VehicleId(v))).amax(),
            );
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let sigma_ij = self.dcl[i].factor(VehicleId(j)).unwrap().sigma;
                let sigma_ji = self.dcl[j].factor(VehicleId(i)).unwrap().sigma;
                let cross = reconstruct_cross_correlation(&sigma_ij, &sigma_ji);
                worst = worst
                    .max((cross - self.ccl.cross_covariance(VehicleId(i), VehicleId(j))).amax());
            }
        }
        worst
    }
}

/// Well-separated moving start states so ranging geometry never degenerates.
pub fn spread_states(n: usize) -> Vec<VehicleState> {
    (0..n)
        .map(|v| {
            let heading = 0.15 * v as f64;
            VehicleState::new(
                25.0 * v as f64,
                8.0 * ((v as f64) - 0.7),
                heading,
                5.0 * heading.cos(),
                5.0 * heading.sin(),
                0.0,
            )
        })
        .collect()
}

pub fn default_start_covariance() -> Mat6 {
    Mat6::from_diagonal(&Vec6::new(1.0, 1.0, 0.01, 0.25, 0.25, 0.0025))
}

/// One step of the simulator cadence against both banks: predict and update
/// odometry every step, GPS and one vehicle-to-vehicle range every tenth
/// step. Measurement values are the current centralized predictions
/// perturbed by sensor-scale noise.
pub fn simulator_cadence_step(
    net: &mut TwinNetwork,
    stream: &mut RngStream,
    process_noise: &Mat6,
    step: usize,
) -> Result<()> {
    let n = net.n();
    let controls: Vec<ImuControl> = (0..n)
        .map(|_| ImuControl::new(stream.sample_gaussian(0.3), stream.sample_gaussian(0.05)))
        .collect();
    net.predict_all(&controls, 0.01, process_noise);

    if step.is_multiple_of(10) {
        for v in 0..n {
            let state = net.ccl.vehicle_state(VehicleId(v));
            net.private(
                v,
                &PrivateMeasurement::Gps {
                    z: [
                        state.x + stream.sample_gaussian(0.5),
                        state.y + stream.sample_gaussian(0.5),
                    ],
                    sigma: 0.5,
                },
            )?;
        }
    }
    for v in 0..n {
        let speed = net.ccl.vehicle_state(VehicleId(v)).speed();
        net.private(
            v,
            &PrivateMeasurement::Odom {
                speed: speed + stream.sample_gaussian(0.05),
                sigma: 0.05,
            },
        )?;
    }
    if step.is_multiple_of(10) {
        let i = (stream.next_u64() % n as u64) as usize;
        let mut j = (stream.next_u64() % n as u64) as usize;
        if j == i {
            j = (j + 1) % n;
        }
        let si = net.ccl.vehicle_state(VehicleId(i));
        let sj = net.ccl.vehicle_state(VehicleId(j));
        let range = (si.x - sj.x).hypot(si.y - sj.y) + stream.sample_gaussian(0.1);
        net.relative(i.min(j), i.max(j), range, 0.1)?;
    }
    Ok(())
}

/// One randomized operation against both banks. Measurement values are the
/// current centralized predictions perturbed by sensor-scale noise, which
/// keeps innovations realistic without needing a truth trajectory.
pub fn random_op(net: &mut TwinNetwork, stream: &mut RngStream, process_noise: &Mat6) -> Result<()> {
    let n = net.n();
    let dt = 0.01;
    let controls: Vec<ImuControl> = (0..n)
        .map(|_| ImuControl::new(stream.sample_gaussian(0.3), stream.sample_gaussian(0.05)))
        .collect();
    net.predict_all(&controls, dt, process_noise);

    let pick = stream.next_u64() % 10;
    match pick {
        // Predict-only step.
        0..=3 => Ok(()),
        // Private update on a random vehicle.
        4..=6 => {
            let v = (stream.next_u64() % n as u64) as usize;
            let state = net.ccl.vehicle_state(VehicleId(v));
            let meas = if pick == 4 {
                PrivateMeasurement::Odom {
                    speed: state.speed() + stream.sample_gaussian(0.05),
                    sigma: 0.05,
                }
            } else {
                PrivateMeasurement::Gps {
                    z: [
                        state.x + stream.sample_gaussian(0.5),
                        state.y + stream.sample_gaussian(0.5),
                    ],
                    sigma: 0.5,
                }
            };
            net.private(v, &meas)
        }
        // Relative update between a random ordered pair.
        _ => {
            let i = (stream.next_u64() % n as u64) as usize;
            let mut j = (stream.next_u64() % n as u64) as usize;
            if j == i {
                j = (j + 1) % n;
            }
            let si = net.ccl.vehicle_state(VehicleId(i));
            let sj = net.ccl.vehicle_state(VehicleId(j));
            let range = (si.x - sj.x).hypot(si.y - sj.y) + stream.sample_gaussian(0.1);
            net.relative(i, j, range, 0.1)
        }
    }
}
