//! Ground-truth trajectory and landmark generation for the three benchmark
//! scenarios: vehicles driving in parallel lanes, perpendicular street
//! crossings, and GPS-denied tunnels with UWB landmarks along the corridor.

use serde::{Deserialize, Serialize};

use crate::models::{ImuControl, Landmark};
use crate::types::{NoiseSpec, VehicleState};
use crate::{Error, Result};

/// Lateral distance from the corridor centerline at which tunnel landmarks
/// are placed, alternating sides.
pub const LANDMARK_LATERAL_OFFSET: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Parallel,
    Crossing,
    Tunnel,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Parallel => "parallel",
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Tunnel => "tunnel",
        }
    }
}

/// Full scenario configuration; the effective values after defaults.
///
/// `from_json_str` accepts a partial JSON object with `scenario` mandatory
/// and every other key optional, then validates the resolved result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(rename = "scenario")]
    pub kind: ScenarioKind,
    pub n_vehicles: usize,
    /// Constant vehicle speed, m/s.
    pub speed: f64,
    /// Distance each vehicle travels, meters.
    pub run_length: f64,
    /// Lateral spacing between lanes, meters.
    pub lane_offset: f64,
    /// Spacing of UWB landmarks along the corridor, meters; 0 disables them.
    pub landmark_spacing: f64,
    pub gps_enabled: bool,
    /// Simulation step, seconds; IMU and odometry fire every tick.
    pub dt: f64,
    /// GPS fix rate, Hz; must divide the tick rate.
    pub gps_rate: f64,
    /// UWB ranging rate, Hz; must divide the tick rate.
    pub uwb_rate: f64,
    /// Maximum UWB communication range, meters.
    pub uwb_max_range: f64,
    pub noise: NoiseSpec,
    /// Diagonal of the initial state covariance, SI units squared.
    pub init_cov_diag: [f64; 6],
    /// Scale on the sampled initial estimation error: 1 draws it from the
    /// initial covariance, 0 initializes every filter exactly at truth.
    pub init_error_scale: f64,
}

impl ScenarioConfig {
    fn base(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            kind,
            n_vehicles: 2,
            speed: 5.0,
            run_length: 180.0,
            lane_offset: 3.5,
            landmark_spacing: match kind {
                ScenarioKind::Tunnel => 50.0,
                _ => 0.0,
            },
            gps_enabled: !matches!(kind, ScenarioKind::Tunnel),
            dt: 0.01,
            gps_rate: 10.0,
            uwb_rate: 10.0,
            uwb_max_range: 50.0,
            noise: NoiseSpec::default(),
            init_cov_diag: [1.0, 1.0, 0.01, 0.25, 0.25, 0.0025],
            init_error_scale: 1.0,
        }
    }

    /// Vehicles in adjacent lanes driving the same direction, GPS available.
    pub fn parallel() -> Self {
        Self::base(ScenarioKind::Parallel)
    }

    /// Perpendicular street crossing, GPS available. Paths intersect near
    /// the midpoint of each run; the crossing vehicle is offset by half a
    /// lane so the trajectories never coincide in space and time.
    pub fn crossing() -> Self {
        Self::base(ScenarioKind::Crossing)
    }

    /// GPS-denied corridor with UWB landmarks every 50 m, alternating sides.
    pub fn tunnel() -> Self {
        Self::base(ScenarioKind::Tunnel)
    }

    pub fn for_kind(kind: ScenarioKind) -> Self {
        Self::base(kind)
    }

    /// Parses a partial JSON config: `scenario` is required, all other keys
    /// default per scenario kind. The result is validated.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioConfigFile = serde_json::from_str(text)
            .map_err(|e| Error::invalid_config("config", e.to_string()))?;
        let cfg = file.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_ticks(&self) -> usize {
        (self.run_length / self.speed / self.dt).round() as usize
    }

    pub fn duration(&self) -> f64 {
        self.n_ticks() as f64 * self.dt
    }

    fn tick_interval(&self, rate: f64) -> usize {
        (1.0 / (self.dt * rate)).round() as usize
    }

    /// Ticks between GPS fixes.
    pub fn gps_tick_interval(&self) -> usize {
        self.tick_interval(self.gps_rate)
    }

    /// Ticks between UWB rangings.
    pub fn uwb_tick_interval(&self) -> usize {
        self.tick_interval(self.uwb_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_length <= 0.0 || !self.run_length.is_finite() {
            return Err(Error::invalid_config("run_length", "must be finite and > 0"));
        }
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::invalid_config("dt", "must be finite and > 0"));
        }
        if self.speed <= 0.0 || !self.speed.is_finite() {
            return Err(Error::invalid_config("speed", "must be finite and > 0"));
        }
        if self.n_vehicles == 0 || self.n_vehicles > 10 {
            return Err(Error::invalid_config(
                "n_vehicles",
                format!("must be in 1..=10, got {}", self.n_vehicles),
            ));
        }
        if matches!(self.kind, ScenarioKind::Crossing) && self.n_vehicles < 2 {
            return Err(Error::invalid_config(
                "n_vehicles",
                "crossing scenario needs at least 2 vehicles",
            ));
        }
        if matches!(self.kind, ScenarioKind::Tunnel) && self.gps_enabled {
            return Err(Error::invalid_config(
                "gps_enabled",
                "tunnel scenario is GPS-denied; set gps_enabled to false",
            ));
        }
        if self.lane_offset <= 0.0 || !self.lane_offset.is_finite() {
            return Err(Error::invalid_config("lane_offset", "must be finite and > 0"));
        }
        if self.landmark_spacing < 0.0 || !self.landmark_spacing.is_finite() {
            return Err(Error::invalid_config(
                "landmark_spacing",
                "must be finite and >= 0",
            ));
        }
        if self.uwb_max_range <= 0.0 || !self.uwb_max_range.is_finite() {
            return Err(Error::invalid_config("uwb_max_range", "must be finite and > 0"));
        }
        for (field, rate) in [("gps_rate", self.gps_rate), ("uwb_rate", self.uwb_rate)] {
            if rate <= 0.0 || !rate.is_finite() {
                return Err(Error::invalid_config(field, "must be finite and > 0"));
            }
            let ratio = 1.0 / (self.dt * rate);
            if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-6 {
                return Err(Error::invalid_config(
                    field,
                    format!("must divide the tick rate {} Hz", 1.0 / self.dt),
                ));
            }
        }
        for d in self.init_cov_diag {
            if d < 0.0 || !d.is_finite() {
                return Err(Error::invalid_config(
                    "init_cov_diag",
                    format!("entries must be finite and >= 0, got {d}"),
                ));
            }
        }
        if self.init_error_scale < 0.0 || !self.init_error_scale.is_finite() {
            return Err(Error::invalid_config(
                "init_error_scale",
                "must be finite and >= 0",
            ));
        }
        self.noise.validate()?;
        if self.n_ticks() == 0 {
            return Err(Error::invalid_config(
                "run_length",
                "too short: zero simulation ticks",
            ));
        }
        Ok(())
    }
}

/// Partial JSON form of [`ScenarioConfig`]; absent keys take the scenario
/// kind's defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioConfigFile {
    scenario: ScenarioKind,
    n_vehicles: Option<usize>,
    speed: Option<f64>,
    run_length: Option<f64>,
    lane_offset: Option<f64>,
    landmark_spacing: Option<f64>,
    gps_enabled: Option<bool>,
    dt: Option<f64>,
    gps_rate: Option<f64>,
    uwb_rate: Option<f64>,
    uwb_max_range: Option<f64>,
    #[serde(default)]
    noise: NoiseSpecFile,
    init_cov_diag: Option<[f64; 6]>,
    init_error_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSpecFile {
    process_noise_diag: Option<[f64; 6]>,
    gps_sigma: Option<f64>,
    odom_sigma: Option<f64>,
    uwb_sigma: Option<f64>,
    imu_accel_sigma: Option<f64>,
    imu_gyro_sigma: Option<f64>,
}

impl ScenarioConfigFile {
    fn resolve(self) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::base(self.scenario);
        if let Some(v) = self.n_vehicles {
            cfg.n_vehicles = v;
        }
        if let Some(v) = self.speed {
            cfg.speed = v;
        }
        if let Some(v) = self.run_length {
            cfg.run_length = v;
        }
        if let Some(v) = self.lane_offset {
            cfg.lane_offset = v;
        }
        if let Some(v) = self.landmark_spacing {
            cfg.landmark_spacing = v;
        }
        if let Some(v) = self.gps_enabled {
            cfg.gps_enabled = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.gps_rate {
            cfg.gps_rate = v;
        }
        if let Some(v) = self.uwb_rate {
            cfg.uwb_rate = v;
        }
        if let Some(v) = self.uwb_max_range {
            cfg.uwb_max_range = v;
        }
        if let Some(v) = self.noise.process_noise_diag {
            cfg.noise.process_noise_diag = v;
        }
        if let Some(v) = self.noise.gps_sigma {
            cfg.noise.gps_sigma = v;
        }
        if let Some(v) = self.noise.odom_sigma {
            cfg.noise.odom_sigma = v;
        }
        if let Some(v) = self.noise.uwb_sigma {
            cfg.noise.uwb_sigma = v;
        }
        if let Some(v) = self.noise.imu_accel_sigma {
            cfg.noise.imu_accel_sigma = v;
        }
        if let Some(v) = self.noise.imu_gyro_sigma {
            cfg.noise.imu_gyro_sigma = v;
        }
        if let Some(v) = self.init_cov_diag {
            cfg.init_cov_diag = v;
        }
        if let Some(v) = self.init_error_scale {
            cfg.init_error_scale = v;
        }
        cfg
    }
}

/// Exact analytic states of one vehicle, sampled at every tick, plus the
/// true control over each step.
#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    /// States at ticks `0..=n_ticks`.
    pub states: Vec<VehicleState>,
    /// Controls over `(tick, tick+1]`, length `n_ticks`.
    pub controls: Vec<ImuControl>,
}

/// Ground truth for one run: per-vehicle trajectories and landmark map.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub dt: f64,
    pub n_ticks: usize,
    pub vehicles: Vec<TruthTrajectory>,
    pub landmarks: Vec<Landmark>,
}

struct StraightTrack {
    x0: f64,
    y0: f64,
    heading: f64,
}

fn track_layout(cfg: &ScenarioConfig) -> Vec<StraightTrack> {
    let half = cfg.run_length / 2.0;
    (0..cfg.n_vehicles)
        .map(|k| match cfg.kind {
            ScenarioKind::Parallel | ScenarioKind::Tunnel => StraightTrack {
                x0: 0.0,
                y0: k as f64 * cfg.lane_offset,
                heading: 0.0,
            },
            ScenarioKind::Crossing => {
                if k % 2 == 0 {
                    // Eastbound lanes.
                    StraightTrack {
                        x0: 0.0,
                        y0: (k / 2) as f64 * cfg.lane_offset,
                        heading: 0.0,
                    }
                } else {
                    // Northbound lanes, staggered half a lane so no pair of
                    // perpendicular tracks ever coincides in space and time.
                    let lane = (k / 2) as f64 + 0.5;
                    StraightTrack {
                        x0: half + lane * cfg.lane_offset,
                        y0: -half,
                        heading: std::f64::consts::FRAC_PI_2,
                    }
                }
            }
        })
        .collect()
}

/// Generates exact constant-speed straight-line truth for the scenario,
/// self-consistent with the motion model: stepping a truth state with the
/// true control reproduces the next truth state.
pub fn generate_truth(cfg: &ScenarioConfig) -> Result<ScenarioTruth> {
    cfg.validate()?;
    let n_ticks = cfg.n_ticks();

    let vehicles = track_layout(cfg)
        .into_iter()
        .map(|track| {
            let (sin_h, cos_h) = track.heading.sin_cos();
            let vx = cfg.speed * cos_h;
            let vy = cfg.speed * sin_h;
            let states = (0..=n_ticks)
                .map(|tick| {
                    let t = tick as f64 * cfg.dt;
                    VehicleState::new(
                        track.x0 + vx * t,
                        track.y0 + vy * t,
                        track.heading,
                        vx,
                        vy,
                        0.0,
                    )
                })
                .collect();
            TruthTrajectory {
                states,
                controls: vec![ImuControl::ZERO; n_ticks],
            }
        })
        .collect();

    let mut landmarks = Vec::new();
    if cfg.landmark_spacing > 0.0 {
        let count = (cfg.run_length / cfg.landmark_spacing).floor() as u32 + 1;
        for m in 0..count {
            let x = m as f64 * cfg.landmark_spacing;
            if x > cfg.run_length {
                break;
            }
            let side = if m % 2 == 0 { 1.0 } else { -1.0 };
            landmarks.push(Landmark {
                id: m,
                x,
                y: side * LANDMARK_LATERAL_OFFSET,
            });
        }
    }

    Ok(ScenarioTruth {
        dt: cfg.dt,
        n_ticks,
        vehicles,
        landmarks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::motion_step;
    use approx::assert_relative_eq;

    #[test]
    fn parallel_duration_and_displacement() {
        let cfg = ScenarioConfig::parallel();
        let truth = generate_truth(&cfg).unwrap();
        assert_relative_eq!(cfg.duration(), 36.0, epsilon = 1e-9);
        for v in &truth.vehicles {
            let first = v.states.first().unwrap();
            let last = v.states.last().unwrap();
            assert_relative_eq!(last.x - first.x, 180.0, epsilon = 1e-9);
            assert_relative_eq!(last.y, first.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn tunnel_landmarks_every_50_meters_alternating() {
        let cfg = ScenarioConfig::tunnel();
        let truth = generate_truth(&cfg).unwrap();
        let xs: Vec<f64> = truth.landmarks.iter().map(|l| l.x).collect();
        assert_eq!(xs, vec![0.0, 50.0, 100.0, 150.0]);
        let ys: Vec<f64> = truth.landmarks.iter().map(|l| l.y).collect();
        assert_eq!(ys, vec![5.0, -5.0, 5.0, -5.0]);
    }

    #[test]
    fn crossing_minimum_range_near_path_intersection() {
        let cfg = ScenarioConfig::crossing();
        let truth = generate_truth(&cfg).unwrap();
        let ranges: Vec<f64> = (0..=truth.n_ticks)
            .map(|tick| {
                let a = &truth.vehicles[0].states[tick];
                let b = &truth.vehicles[1].states[tick];
                (a.x - b.x).hypot(a.y - b.y)
            })
            .collect();
        let (argmin, min) = ranges
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &r)| {
                if r < acc.1 {
                    (i, r)
                } else {
                    acc
                }
            });
        // Closest approach happens near the middle of the run, close to the
        // path-intersection point, and never degenerates to coincidence.
        let t_min = argmin as f64 * cfg.dt;
        assert!((t_min - cfg.duration() / 2.0).abs() < 2.0, "t_min = {t_min}");
        assert!(min > crate::models::RANGE_EPSILON);
        assert!(min < 2.0 * cfg.lane_offset, "min range = {min}");
    }

    #[test]
    fn truth_is_self_consistent_with_motion_model() {
        for cfg in [
            ScenarioConfig::parallel(),
            ScenarioConfig::crossing(),
            ScenarioConfig::tunnel(),
        ] {
            let truth = generate_truth(&cfg).unwrap();
            for v in &truth.vehicles {
                for tick in 0..truth.n_ticks {
                    let stepped = motion_step(&v.states[tick], &v.controls[tick], cfg.dt);
                    let expect = &v.states[tick + 1];
                    let diff = (stepped.to_vector() - expect.to_vector()).amax();
                    assert!(diff < 1e-9, "tick {tick}: {diff}");
                }
            }
        }
    }

    #[test]
    fn truth_heading_matches_velocity_direction() {
        for cfg in [ScenarioConfig::parallel(), ScenarioConfig::crossing()] {
            let truth = generate_truth(&cfg).unwrap();
            for v in &truth.vehicles {
                for s in &v.states {
                    assert!(s.speed() > 0.0);
                    assert_relative_eq!(s.theta, s.vy.atan2(s.vx), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = ScenarioConfig::tunnel();
        cfg.gps_enabled = true;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { field: "gps_enabled", .. })
        ));

        let mut cfg = ScenarioConfig::parallel();
        cfg.run_length = 0.0;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { field: "run_length", .. })
        ));

        let mut cfg = ScenarioConfig::parallel();
        cfg.gps_rate = 7.3;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { field: "gps_rate", .. })
        ));

        let mut cfg = ScenarioConfig::crossing();
        cfg.n_vehicles = 1;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { field: "n_vehicles", .. })
        ));
    }

    #[test]
    fn minimal_json_config_resolves_defaults() {
        let cfg = ScenarioConfig::from_json_str(r#"{"scenario": "tunnel"}"#).unwrap();
        assert_eq!(cfg, ScenarioConfig::tunnel());
        assert!(!cfg.gps_enabled);
        assert_eq!(cfg.landmark_spacing, 50.0);

        let cfg =
            ScenarioConfig::from_json_str(r#"{"scenario": "parallel", "n_vehicles": 3}"#).unwrap();
        assert_eq!(cfg.n_vehicles, 3);
        assert!(cfg.gps_enabled);
    }

    #[test]
    fn unknown_config_key_is_rejected_by_name() {
        let err = ScenarioConfig::from_json_str(r#"{"scenario": "parallel", "speeed": 4}"#)
            .unwrap_err();
        match err {
            Error::InvalidConfig { reason, .. } => assert!(reason.contains("speeed")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        let cfg = ScenarioConfig::crossing();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ScenarioConfig::from_json_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn crossing_layout_avoids_collisions_for_larger_networks() {
        let mut cfg = ScenarioConfig::crossing();
        cfg.n_vehicles = 6;
        let truth = generate_truth(&cfg).unwrap();
        for tick in 0..=truth.n_ticks {
            for i in 0..cfg.n_vehicles {
                for j in (i + 1)..cfg.n_vehicles {
                    let a = &truth.vehicles[i].states[tick];
                    let b = &truth.vehicles[j].states[tick];
                    let range = (a.x - b.x).hypot(a.y - b.y);
                    assert!(range > crate::models::RANGE_EPSILON);
                }
            }
        }
    }
}
