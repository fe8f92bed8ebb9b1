//! Seeded stochastic sensor simulation.
//!
//! Every sensor of every vehicle draws its noise from its own counter-based
//! substream keyed on `(seed, sensor kind, ids)`, so turning a sensor on or
//! off never perturbs another sensor's noise sequence, and a given seed
//! reproduces the same event list on every platform. All algorithms under
//! comparison consume the same event list.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::models::{range_model, ImuControl};
use crate::scenarios::{ScenarioConfig, ScenarioTruth};
use crate::types::VehicleId;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective 64-bit mix with full avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fold_in(key: u64, data: u64) -> u64 {
    mix64(key ^ mix64(data.wrapping_add(0xD6E8_FEB8_6659_FD93)))
}

/// Deterministic counter-based random stream.
///
/// The `i`-th output is a pure function `mix64(key + (i+1)*gamma)` of the
/// derived key and the draw counter, so identical keys yield identical
/// sequences on every platform and distinct keys yield statistically
/// independent substreams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Root stream for a seed.
    pub fn new(seed: u64) -> Self {
        RngStream {
            key: mix64(seed),
            counter: 0,
        }
    }

    /// Substream derived from `seed` and a path of identifiers (sensor kind,
    /// vehicle id, target id, ...). The same path always lands on the same
    /// substream.
    pub fn keyed(seed: u64, path: &[u64]) -> Self {
        let mut key = mix64(seed);
        for &part in path {
            key = fold_in(key, part);
        }
        RngStream { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64) / DEN
    }

    /// Zero-mean Gaussian draw with standard deviation `sigma`, by the
    /// Marsaglia polar method. `sigma == 0` returns exactly 0 without
    /// consuming any draws.
    pub fn sample_gaussian(&mut self, sigma: f64) -> f64 {
        debug_assert!(sigma >= 0.0);
        if sigma == 0.0 {
            return 0.0;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return sigma * u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

/// Sensor kinds, in the processing order used within one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Imu,
    Gps,
    Odom,
    UwbV2v,
    UwbLandmark,
}

impl SensorKind {
    pub fn name(&self) -> &'static str {
        match self {
            SensorKind::Imu => "imu",
            SensorKind::Gps => "gps",
            SensorKind::Odom => "odom",
            SensorKind::UwbV2v => "uwb_v2v",
            SensorKind::UwbLandmark => "uwb_landmark",
        }
    }

    fn stream_tag(&self) -> u64 {
        match self {
            SensorKind::Imu => 1,
            SensorKind::Gps => 2,
            SensorKind::Odom => 3,
            SensorKind::UwbV2v => 4,
            SensorKind::UwbLandmark => 5,
        }
    }
}

/// One sensor reading; the shape depends on the sensor kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reading {
    Imu { accel: f64, gyro: f64 },
    Position { x: f64, y: f64 },
    Speed(f64),
    Range(f64),
}

impl Reading {
    /// Flattens the reading into up to two components for CSV export.
    pub fn components(&self) -> ([f64; 2], usize) {
        match *self {
            Reading::Imu { accel, gyro } => ([accel, gyro], 2),
            Reading::Position { x, y } => ([x, y], 2),
            Reading::Speed(s) => ([s, 0.0], 1),
            Reading::Range(r) => ([r, 0.0], 1),
        }
    }
}

/// One timestamped sensor reading. Events within a run are totally ordered
/// by `(tick, kind, source, target)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub tick: u64,
    /// Time in seconds, `tick * dt`.
    pub t: f64,
    pub kind: SensorKind,
    pub source: VehicleId,
    /// Other vehicle id for `UwbV2v`, landmark id for `UwbLandmark`.
    pub target: Option<u32>,
    /// Noisy reading consumed by the filters.
    pub value: Reading,
    /// Noiseless value, retained for diagnostics only.
    pub truth: Reading,
}

impl MeasurementEvent {
    fn order_key(&self) -> (u64, SensorKind, usize, u32) {
        (self.tick, self.kind, self.source.0, self.target.unwrap_or(0))
    }
}

/// Generates the full ordered measurement-event list for one run.
///
/// IMU and odometry fire at every tick; GPS fires at its own rate only when
/// the scenario has GPS enabled; UWB events fire at the UWB rate for every
/// vehicle pair and every (vehicle, landmark) pair within `uwb_max_range`
/// of each other in truth. Each noisy value is its truth plus a Gaussian
/// draw from the sensor's own substream.
pub fn generate_events(
    truth: &ScenarioTruth,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Vec<MeasurementEvent> {
    let n = cfg.n_vehicles;
    let gps_every = cfg.gps_tick_interval();
    let uwb_every = cfg.uwb_tick_interval();
    let noise = &cfg.noise;

    let mut imu_streams: Vec<RngStream> = (0..n)
        .map(|v| RngStream::keyed(seed, &[SensorKind::Imu.stream_tag(), v as u64]))
        .collect();
    let mut gps_streams: Vec<RngStream> = (0..n)
        .map(|v| RngStream::keyed(seed, &[SensorKind::Gps.stream_tag(), v as u64]))
        .collect();
    let mut odom_streams: Vec<RngStream> = (0..n)
        .map(|v| RngStream::keyed(seed, &[SensorKind::Odom.stream_tag(), v as u64]))
        .collect();
    let mut v2v_streams: Vec<Vec<RngStream>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    RngStream::keyed(
                        seed,
                        &[SensorKind::UwbV2v.stream_tag(), i as u64, j as u64],
                    )
                })
                .collect()
        })
        .collect();
    let mut lm_streams: Vec<Vec<RngStream>> = (0..n)
        .map(|v| {
            truth
                .landmarks
                .iter()
                .map(|lm| {
                    RngStream::keyed(
                        seed,
                        &[SensorKind::UwbLandmark.stream_tag(), v as u64, lm.id as u64],
                    )
                })
                .collect()
        })
        .collect();

    let mut events = Vec::new();
    for tick in 1..=truth.n_ticks {
        let t = tick as f64 * truth.dt;

        // IMU: the control applied over (tick-1, tick].
        for v in 0..n {
            let u = truth.vehicles[v].controls[tick - 1];
            let noisy = ImuControl::new(
                u.accel + imu_streams[v].sample_gaussian(noise.imu_accel_sigma),
                u.gyro + imu_streams[v].sample_gaussian(noise.imu_gyro_sigma),
            );
            events.push(MeasurementEvent {
                tick: tick as u64,
                t,
                kind: SensorKind::Imu,
                source: VehicleId(v),
                target: None,
                value: Reading::Imu {
                    accel: noisy.accel,
                    gyro: noisy.gyro,
                },
                truth: Reading::Imu {
                    accel: u.accel,
                    gyro: u.gyro,
                },
            });
        }

        if cfg.gps_enabled && tick.is_multiple_of(gps_every) {
            for v in 0..n {
                let s = &truth.vehicles[v].states[tick];
                events.push(MeasurementEvent {
                    tick: tick as u64,
                    t,
                    kind: SensorKind::Gps,
                    source: VehicleId(v),
                    target: None,
                    value: Reading::Position {
                        x: s.x + gps_streams[v].sample_gaussian(noise.gps_sigma),
                        y: s.y + gps_streams[v].sample_gaussian(noise.gps_sigma),
                    },
                    truth: Reading::Position { x: s.x, y: s.y },
                });
            }
        }

        for v in 0..n {
            let speed = truth.vehicles[v].states[tick].speed();
            events.push(MeasurementEvent {
                tick: tick as u64,
                t,
                kind: SensorKind::Odom,
                source: VehicleId(v),
                target: None,
                value: Reading::Speed(speed + odom_streams[v].sample_gaussian(noise.odom_sigma)),
                truth: Reading::Speed(speed),
            });
        }

        if tick.is_multiple_of(uwb_every) {
            // One measurement per unordered pair in range; the lower id acts
            // as the detector.
            for i in 0..n {
                for j in (i + 1)..n {
                    let si = &truth.vehicles[i].states[tick];
                    let sj = &truth.vehicles[j].states[tick];
                    let range = match range_model(si, sj) {
                        Ok((r, _, _)) => r,
                        Err(_) => continue,
                    };
                    if range > cfg.uwb_max_range {
                        continue;
                    }
                    events.push(MeasurementEvent {
                        tick: tick as u64,
                        t,
                        kind: SensorKind::UwbV2v,
                        source: VehicleId(i),
                        target: Some(j as u32),
                        value: Reading::Range(
                            range + v2v_streams[i][j].sample_gaussian(noise.uwb_sigma),
                        ),
                        truth: Reading::Range(range),
                    });
                }
            }
            for v in 0..n {
                let s = &truth.vehicles[v].states[tick];
                for (li, lm) in truth.landmarks.iter().enumerate() {
                    let range = (s.x - lm.x).hypot(s.y - lm.y);
                    if range > cfg.uwb_max_range || range < crate::models::RANGE_EPSILON {
                        continue;
                    }
                    events.push(MeasurementEvent {
                        tick: tick as u64,
                        t,
                        kind: SensorKind::UwbLandmark,
                        source: VehicleId(v),
                        target: Some(lm.id),
                        value: Reading::Range(
                            range + lm_streams[v][li].sample_gaussian(noise.uwb_sigma),
                        ),
                        truth: Reading::Range(range),
                    });
                }
            }
        }
    }

    debug_assert!(events.windows(2).all(|w| w[0].order_key() < w[1].order_key()));
    events
}

/// Writes an event list as CSV for debugging and replay inspection.
pub fn write_events_csv<W: Write>(w: &mut W, events: &[MeasurementEvent]) -> io::Result<()> {
    writeln!(w, "t,kind,source,target,value0,value1,truth0,truth1")?;
    for e in events {
        let (v, vn) = e.value.components();
        let (tr, _) = e.truth.components();
        let target = e.target.map(|t| t.to_string()).unwrap_or_default();
        write!(w, "{},{},{},{},{}", e.t, e.kind.name(), e.source, target, v[0])?;
        if vn > 1 {
            write!(w, ",{}", v[1])?;
        } else {
            write!(w, ",")?;
        }
        write!(w, ",{}", tr[0])?;
        if vn > 1 {
            writeln!(w, ",{}", tr[1])?;
        } else {
            writeln!(w, ",")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{generate_truth, ScenarioConfig};

    #[test]
    fn zero_sigma_is_exactly_zero() {
        let mut s = RngStream::new(1);
        for _ in 0..10 {
            assert_eq!(s.sample_gaussian(0.0), 0.0);
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::keyed(99, &[1, 2]);
        let mut b = RngStream::keyed(99, &[1, 2]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut a = RngStream::keyed(99, &[1, 2]);
        let mut b = RngStream::keyed(99, &[1, 2]);
        for _ in 0..100 {
            assert_eq!(a.sample_gaussian(2.0), b.sample_gaussian(2.0));
        }
    }

    #[test]
    fn different_paths_diverge() {
        let mut a = RngStream::keyed(99, &[1, 2]);
        let mut b = RngStream::keyed(99, &[1, 3]);
        let equal = (0..32).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(equal, 0);
    }

    #[test]
    fn gaussian_sample_statistics() {
        // Statistical oracle: 1e5 unit-sigma draws must have sample mean
        // within 4/sqrt(n) and sample variance within [0.97, 1.03].
        let n = 100_000;
        let mut s = RngStream::keyed(2024, &[0]);
        let draws: Vec<f64> = (0..n).map(|_| s.sample_gaussian(1.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 0.013, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn uniform_draws_in_unit_interval() {
        let mut s = RngStream::new(7);
        for _ in 0..10_000 {
            let u = s.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn tunnel_scenario_has_zero_gps_events() {
        let cfg = ScenarioConfig::tunnel();
        let truth = generate_truth(&cfg).unwrap();
        let events = generate_events(&truth, &cfg, 5);
        assert!(events.iter().all(|e| e.kind != SensorKind::Gps));
        assert!(events.iter().any(|e| e.kind == SensorKind::UwbLandmark));
    }

    #[test]
    fn v2v_event_count_matches_rate() {
        // Two vehicles always in range, 10 s at 100 Hz, UWB at 10 Hz.
        let mut cfg = ScenarioConfig::parallel();
        cfg.run_length = 50.0; // 10 s at 5 m/s
        let truth = generate_truth(&cfg).unwrap();
        assert_eq!(truth.n_ticks, 1000);
        let events = generate_events(&truth, &cfg, 5);
        let v2v = events.iter().filter(|e| e.kind == SensorKind::UwbV2v).count();
        assert_eq!(v2v, 100);
    }

    #[test]
    fn zero_noise_events_equal_truth() {
        let mut cfg = ScenarioConfig::parallel();
        cfg.noise.gps_sigma = 0.0;
        cfg.noise.odom_sigma = 0.0;
        cfg.noise.uwb_sigma = 0.0;
        cfg.noise.imu_accel_sigma = 0.0;
        cfg.noise.imu_gyro_sigma = 0.0;
        cfg.run_length = 10.0;
        let truth = generate_truth(&cfg).unwrap();
        for e in generate_events(&truth, &cfg, 5) {
            assert_eq!(e.value, e.truth);
        }
    }

    #[test]
    fn event_list_is_deterministic_and_ordered() {
        let cfg = ScenarioConfig::crossing();
        let truth = generate_truth(&cfg).unwrap();
        let a = generate_events(&truth, &cfg, 42);
        let b = generate_events(&truth, &cfg, 42);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].order_key() < w[1].order_key()));
        let c = generate_events(&truth, &cfg, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn adding_a_sensor_does_not_perturb_other_streams() {
        // The same scenario with GPS toggled must produce identical odometry
        // and UWB noise sequences.
        let mut with_gps = ScenarioConfig::parallel();
        with_gps.run_length = 20.0;
        let mut without_gps = with_gps.clone();
        without_gps.gps_enabled = false;

        let truth = generate_truth(&with_gps).unwrap();
        let a = generate_events(&truth, &with_gps, 11);
        let b = generate_events(&truth, &without_gps, 11);

        let non_gps = |evs: &[MeasurementEvent]| -> Vec<MeasurementEvent> {
            evs.iter()
                .filter(|e| e.kind != SensorKind::Gps)
                .cloned()
                .collect()
        };
        assert_eq!(non_gps(&a), non_gps(&b));
        assert!(a.iter().any(|e| e.kind == SensorKind::Gps));
    }

    #[test]
    fn events_csv_has_header_and_rows() {
        let mut cfg = ScenarioConfig::parallel();
        cfg.run_length = 1.0;
        let truth = generate_truth(&cfg).unwrap();
        let events = generate_events(&truth, &cfg, 1);
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,kind,source,target,value0,value1,truth0,truth1"
        );
        assert_eq!(lines.count(), events.len());
    }
}
