//! Single-run simulation loop and Monte-Carlo aggregation.
//!
//! One run generates exact truth, synthesizes one noisy event list, replays
//! it through every selected estimator, and scores each against truth.
//! Monte-Carlo batches fan runs out over a thread pool and reduce results
//! in seed order, so output is bit-identical for any parallelism degree.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filters::{CclFilter, DclVehicleFilter, EkfFilter, PrivateMeasurement};
use crate::models::{process_noise_step, ImuControl};
use crate::scenarios::{generate_truth, ScenarioConfig, ScenarioTruth};
use crate::sensing::{generate_events, MeasurementEvent, Reading, RngStream, SensorKind};
use crate::types::{wrap_angle, Mat6, Vec6, VehicleId, VehicleState, PSD_EIG_TOL};
use crate::{Error, Result};

/// Position error, in meters, beyond which a run is flagged as diverged.
pub const DIVERGENCE_POS_M: f64 = 1e3;

/// Number of bins in the RMS-error histograms.
const HISTOGRAM_BINS: usize = 40;

/// Substream tag for the initial-estimate perturbation (sensor kinds use
/// tags 1..=5).
const INIT_STREAM_TAG: u64 = 6;

/// Estimator identifiers, in report order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ekf,
    Dcl,
    Ccl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ekf, Algorithm::Dcl, Algorithm::Ccl];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ekf => "ekf",
            Algorithm::Dcl => "dcl",
            Algorithm::Ccl => "ccl",
        }
    }

    pub fn from_name(name: &str) -> Option<Algorithm> {
        match name {
            "ekf" => Some(Algorithm::Ekf),
            "dcl" => Some(Algorithm::Dcl),
            "ccl" => Some(Algorithm::Ccl),
            _ => None,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which estimators a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgoSelection {
    pub ekf: bool,
    pub dcl: bool,
    pub ccl: bool,
}

impl AlgoSelection {
    pub const ALL: AlgoSelection = AlgoSelection {
        ekf: true,
        dcl: true,
        ccl: true,
    };

    pub fn contains(&self, a: Algorithm) -> bool {
        match a {
            Algorithm::Ekf => self.ekf,
            Algorithm::Dcl => self.dcl,
            Algorithm::Ccl => self.ccl,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Algorithm> + '_ {
        Algorithm::ALL.into_iter().filter(|a| self.contains(*a))
    }

    /// Parses a comma-separated subset such as `ekf,dcl`.
    pub fn from_names(names: &str) -> Result<Self> {
        let mut sel = AlgoSelection {
            ekf: false,
            dcl: false,
            ccl: false,
        };
        for raw in names.split(',') {
            let name = raw.trim();
            match Algorithm::from_name(name) {
                Some(Algorithm::Ekf) => sel.ekf = true,
                Some(Algorithm::Dcl) => sel.dcl = true,
                Some(Algorithm::Ccl) => sel.ccl = true,
                None => {
                    return Err(Error::invalid_config(
                        "algos",
                        format!("unknown algorithm `{name}` (expected ekf, dcl, ccl)"),
                    ))
                }
            }
        }
        Ok(sel)
    }
}

/// Per-vehicle error statistics for one algorithm in one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleRunStats {
    pub rms_pos: f64,
    pub rms_heading: f64,
    /// Mean normalized estimation error squared over the run; `None` when
    /// the covariance was not invertible at any scored tick.
    pub mean_nees: Option<f64>,
}

/// One algorithm's outcome for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoRunResult {
    pub vehicles: Vec<VehicleRunStats>,
    pub divergence: bool,
    pub numerical_failure: bool,
    /// Measurements skipped for degenerate geometry (coincident estimates).
    pub degenerate_skips: u32,
}

impl AlgoRunResult {
    pub fn failed(&self) -> bool {
        self.divergence || self.numerical_failure
    }

    /// RMS position error averaged over vehicles; the per-run scalar used
    /// by summary statistics.
    pub fn mean_rms_pos(&self) -> f64 {
        let n = self.vehicles.len() as f64;
        self.vehicles.iter().map(|v| v.rms_pos).sum::<f64>() / n
    }

    pub fn mean_nees(&self) -> Option<f64> {
        let mut sum = 0.0;
        for v in &self.vehicles {
            sum += v.mean_nees?;
        }
        Some(sum / self.vehicles.len() as f64)
    }
}

/// Per-run, per-algorithm, per-vehicle RMS errors and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: u64,
    pub seed: u64,
    pub algorithms: BTreeMap<Algorithm, AlgoRunResult>,
}

/// One per-tick, per-vehicle trace sample for the `run` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub vehicle: VehicleId,
    pub truth: [f64; 3],
    /// Per algorithm: estimated x, y, theta, and covariance trace.
    pub estimates: BTreeMap<Algorithm, [f64; 4]>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ErrAccum {
    pos_sq: f64,
    heading_sq: f64,
    nees_sum: f64,
    nees_count: u64,
    samples: u64,
}

/// Filters and bookkeeping for one algorithm during a run.
struct AlgoTracker {
    algorithm: Algorithm,
    alive: bool,
    divergence: bool,
    numerical_failure: bool,
    skips: u32,
    accum: Vec<ErrAccum>,
}

impl AlgoTracker {
    fn new(algorithm: Algorithm, n: usize) -> Self {
        AlgoTracker {
            algorithm,
            alive: true,
            divergence: false,
            numerical_failure: false,
            skips: 0,
            accum: vec![ErrAccum::default(); n],
        }
    }

    fn fail_numerical(&mut self) {
        self.numerical_failure = true;
        self.alive = false;
    }

    /// Routes a fallible filter-update outcome: degenerate geometry is
    /// skipped and counted, numerical trouble kills the algorithm for the
    /// rest of the run.
    fn absorb(&mut self, outcome: Result<()>) {
        match outcome {
            Ok(()) => {}
            Err(Error::DegenerateGeometry { .. }) => self.skips += 1,
            Err(_) => self.fail_numerical(),
        }
    }

    fn finish(self) -> (Algorithm, AlgoRunResult) {
        let failed = self.divergence || self.numerical_failure;
        let vehicles = self
            .accum
            .into_iter()
            .map(|acc| {
                if failed || acc.samples == 0 {
                    VehicleRunStats {
                        rms_pos: f64::NAN,
                        rms_heading: f64::NAN,
                        mean_nees: None,
                    }
                } else {
                    VehicleRunStats {
                        rms_pos: (acc.pos_sq / acc.samples as f64).sqrt(),
                        rms_heading: (acc.heading_sq / acc.samples as f64).sqrt(),
                        mean_nees: (acc.nees_count > 0)
                            .then(|| acc.nees_sum / acc.nees_count as f64),
                    }
                }
            })
            .collect();
        (
            self.algorithm,
            AlgoRunResult {
                vehicles,
                divergence: self.divergence,
                numerical_failure: self.numerical_failure,
                degenerate_skips: self.skips,
            },
        )
    }
}

/// Runs one seed through all three estimators.
pub fn run_single(cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    run_single_with(cfg, seed, AlgoSelection::ALL)
}

/// Runs one seed through the selected estimators.
pub fn run_single_with(cfg: &ScenarioConfig, seed: u64, algos: AlgoSelection) -> Result<RunResult> {
    cfg.validate()?;
    Ok(run_inner(cfg, seed, 0, algos, None))
}

/// Like [`run_single_with`], additionally recording a per-tick trace.
pub fn run_single_with_trace(
    cfg: &ScenarioConfig,
    seed: u64,
    algos: AlgoSelection,
) -> Result<(RunResult, Vec<TraceRow>)> {
    cfg.validate()?;
    let mut trace = Vec::new();
    let result = run_inner(cfg, seed, 0, algos, Some(&mut trace));
    Ok((result, trace))
}

/// Initial estimate shared by every algorithm: truth perturbed by an error
/// drawn from the configured initial covariance.
fn initial_estimates(
    cfg: &ScenarioConfig,
    truth: &ScenarioTruth,
    seed: u64,
) -> (Vec<VehicleState>, Mat6) {
    let cov = Mat6::from_diagonal(&Vec6::from_row_slice(&cfg.init_cov_diag));
    let states = (0..cfg.n_vehicles)
        .map(|v| {
            let mut stream = RngStream::keyed(seed, &[INIT_STREAM_TAG, v as u64]);
            let mut x = truth.vehicles[v].states[0].to_vector();
            for k in 0..6 {
                x[k] +=
                    cfg.init_error_scale * stream.sample_gaussian(cfg.init_cov_diag[k].sqrt());
            }
            VehicleState::from_vector(&x)
        })
        .collect();
    (states, cov)
}

fn run_inner(
    cfg: &ScenarioConfig,
    seed: u64,
    run_id: u64,
    algos: AlgoSelection,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> RunResult {
    let truth = generate_truth(cfg).expect("config validated by caller");
    let events = generate_events(&truth, cfg, seed);
    let n = cfg.n_vehicles;
    let (init_states, init_cov) = initial_estimates(cfg, &truth, seed);

    let mut ekf: Vec<EkfFilter> = if algos.ekf {
        (0..n)
            .map(|v| EkfFilter::new(VehicleId(v), init_states[v], init_cov))
            .collect()
    } else {
        Vec::new()
    };
    let mut dcl: Vec<DclVehicleFilter> = if algos.dcl {
        (0..n)
            .map(|v| {
                DclVehicleFilter::new(VehicleId(v), init_states[v], init_cov, (0..n).map(VehicleId))
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut ccl: Option<CclFilter> = algos
        .ccl
        .then(|| CclFilter::new(&init_states, &vec![init_cov; n]));

    let mut trackers: Vec<AlgoTracker> =
        algos.iter().map(|a| AlgoTracker::new(a, n)).collect();

    let r_step = process_noise_step(&cfg.noise, cfg.dt);
    let uwb_sigma = cfg.noise.uwb_sigma;
    let mut controls = vec![ImuControl::ZERO; n];

    let score = |tick: usize,
                 trackers: &mut Vec<AlgoTracker>,
                 ekf: &Vec<EkfFilter>,
                 dcl: &Vec<DclVehicleFilter>,
                 ccl: &Option<CclFilter>,
                 trace: &mut Option<&mut Vec<TraceRow>>| {
        let mut row_estimates: Vec<BTreeMap<Algorithm, [f64; 4]>> =
            vec![BTreeMap::new(); if trace.is_some() { n } else { 0 }];
        for tracker in trackers.iter_mut() {
            for v in 0..n {
                let (est, cov) = match tracker.algorithm {
                    Algorithm::Ekf => (ekf[v].state, ekf[v].covariance),
                    Algorithm::Dcl => (dcl[v].state, dcl[v].covariance),
                    Algorithm::Ccl => {
                        let f = ccl.as_ref().expect("selected");
                        (f.vehicle_state(VehicleId(v)), f.vehicle_covariance(VehicleId(v)))
                    }
                };
                if trace.is_some() {
                    row_estimates[v].insert(
                        tracker.algorithm,
                        [est.x, est.y, est.theta, cov.trace()],
                    );
                }
                if !tracker.alive {
                    continue;
                }
                let truth_state = &truth.vehicles[v].states[tick];
                let mut err = est.to_vector() - truth_state.to_vector();
                err[2] = wrap_angle(err[2]);
                if err.iter().any(|c| !c.is_finite()) {
                    tracker.fail_numerical();
                    continue;
                }
                let pos_sq = err[0] * err[0] + err[1] * err[1];
                if pos_sq > DIVERGENCE_POS_M * DIVERGENCE_POS_M {
                    tracker.divergence = true;
                    tracker.alive = false;
                    continue;
                }
                // PSD check doubles as the NEES solve.
                let nees = match Cholesky::new(cov) {
                    Some(chol) => Some(err.dot(&chol.solve(&err))),
                    None => {
                        if crate::types::min_symmetric_eigenvalue(&cov) < -PSD_EIG_TOL {
                            tracker.fail_numerical();
                            continue;
                        }
                        None
                    }
                };
                let acc = &mut tracker.accum[v];
                acc.pos_sq += pos_sq;
                acc.heading_sq += err[2] * err[2];
                acc.samples += 1;
                if let Some(value) = nees {
                    if value.is_finite() {
                        acc.nees_sum += value;
                        acc.nees_count += 1;
                    }
                }
            }
            // Joint network covariance must stay PSD too.
            if tracker.alive && tracker.algorithm == Algorithm::Ccl {
                let joint = ccl.as_ref().expect("selected").joint_covariance();
                if Cholesky::new(joint.clone()).is_none() {
                    let min_eig = joint
                        .clone()
                        .symmetric_eigenvalues()
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min);
                    if min_eig < -PSD_EIG_TOL {
                        tracker.fail_numerical();
                    }
                }
            }
        }
        if let Some(rows) = trace.as_deref_mut() {
            for v in 0..n {
                let truth_state = &truth.vehicles[v].states[tick];
                rows.push(TraceRow {
                    t: tick as f64 * cfg.dt,
                    vehicle: VehicleId(v),
                    truth: [truth_state.x, truth_state.y, truth_state.theta],
                    estimates: std::mem::take(&mut row_estimates[v]),
                });
            }
        }
    };

    score(0, &mut trackers, &ekf, &dcl, &ccl, &mut trace);

    let mut cursor = 0usize;
    for tick in 1..=truth.n_ticks {
        let start = cursor;
        while cursor < events.len() && events[cursor].tick == tick as u64 {
            cursor += 1;
        }
        let tick_events: &[MeasurementEvent] = &events[start..cursor];

        // IMU events sort first within a tick and drive the prediction.
        for e in tick_events.iter().take_while(|e| e.kind == SensorKind::Imu) {
            if let Reading::Imu { accel, gyro } = e.value {
                controls[e.source.0] = ImuControl::new(accel, gyro);
            }
        }
        for tracker in trackers.iter_mut() {
            if !tracker.alive {
                continue;
            }
            match tracker.algorithm {
                Algorithm::Ekf => {
                    for (v, f) in ekf.iter_mut().enumerate() {
                        f.predict(&controls[v], cfg.dt, &r_step);
                    }
                }
                Algorithm::Dcl => {
                    for (v, f) in dcl.iter_mut().enumerate() {
                        f.predict(&controls[v], cfg.dt, &r_step);
                    }
                }
                Algorithm::Ccl => {
                    ccl.as_mut().expect("selected").predict(&controls, cfg.dt, &r_step);
                }
            }
        }

        for e in tick_events.iter().filter(|e| e.kind != SensorKind::Imu) {
            let v = e.source;
            let private: Option<PrivateMeasurement> = match (e.kind, e.value) {
                (SensorKind::Gps, Reading::Position { x, y }) => Some(PrivateMeasurement::Gps {
                    z: [x, y],
                    sigma: cfg.noise.gps_sigma,
                }),
                (SensorKind::Odom, Reading::Speed(speed)) => Some(PrivateMeasurement::Odom {
                    speed,
                    sigma: cfg.noise.odom_sigma,
                }),
                (SensorKind::UwbLandmark, Reading::Range(range)) => {
                    let lm = &truth.landmarks[e.target.expect("landmark id") as usize];
                    Some(PrivateMeasurement::LandmarkRange {
                        landmark: lm,
                        range,
                        sigma: uwb_sigma,
                    })
                }
                _ => None,
            };

            if let Some(meas) = private {
                for tracker in trackers.iter_mut() {
                    if !tracker.alive {
                        continue;
                    }
                    let outcome = match tracker.algorithm {
                        Algorithm::Ekf => ekf[v.0].private_update(&meas),
                        Algorithm::Dcl => dcl[v.0].private_update(&meas),
                        Algorithm::Ccl => {
                            ccl.as_mut().expect("selected").private_update(v, &meas)
                        }
                    };
                    tracker.absorb(outcome);
                }
            } else if let (SensorKind::UwbV2v, Reading::Range(range)) = (e.kind, e.value) {
                let j = VehicleId(e.target.expect("target vehicle") as usize);
                for tracker in trackers.iter_mut() {
                    if !tracker.alive {
                        continue;
                    }
                    match tracker.algorithm {
                        // The standalone EKF drops relative measurements.
                        Algorithm::Ekf => {}
                        Algorithm::Dcl => {
                            let msg = dcl[j.0].detect_message(v);
                            let outcome = dcl[v.0]
                                .relative_update_detector(&msg, range, uwb_sigma)
                                .and_then(|reply| dcl[j.0].relative_update_detected(v, &reply));
                            tracker.absorb(outcome);
                        }
                        Algorithm::Ccl => {
                            let outcome = ccl
                                .as_mut()
                                .expect("selected")
                                .relative_update(v, j, range, uwb_sigma);
                            tracker.absorb(outcome);
                        }
                    }
                }
            }
        }

        score(tick, &mut trackers, &ekf, &dcl, &ccl, &mut trace);
    }

    RunResult {
        run_id,
        seed,
        algorithms: trackers.into_iter().map(AlgoTracker::finish).collect(),
    }
}

/// One bin of an RMS-error histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Distribution summary for one algorithm over a Monte-Carlo batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub mean_rms_pos: f64,
    pub median_rms_pos: f64,
    pub std_rms_pos: f64,
    pub histogram: Vec<HistogramBin>,
    pub failures: u64,
    pub successes: u64,
}

/// Monte-Carlo summary across all runs of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_runs: u64,
    pub algorithms: BTreeMap<Algorithm, AlgoSummary>,
}

/// Runs `n_runs` seeds `base_seed..base_seed + n_runs` over a pool of
/// `jobs` worker threads. Results and the summary are identical for any
/// `jobs` value.
pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    n_runs: u64,
    base_seed: u64,
    jobs: usize,
    algos: AlgoSelection,
) -> Result<(McSummary, Vec<RunResult>)> {
    cfg.validate()?;
    if n_runs == 0 {
        return Err(Error::invalid_config("runs", "must be >= 1"));
    }
    if jobs == 0 {
        return Err(Error::invalid_config("jobs", "must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid_config("jobs", e.to_string()))?;
    let results: Vec<RunResult> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|i| run_inner(cfg, base_seed.wrapping_add(i), i, algos, None))
            .collect()
    });
    let summary = summarize_runs(&results, algos);
    Ok((summary, results))
}

/// Aggregates per-run results into per-algorithm distribution summaries.
/// Aggregation only depends on the run order in `results` (seed order), not
/// on any completion order.
pub fn summarize_runs(results: &[RunResult], algos: AlgoSelection) -> McSummary {
    let mut algorithms = BTreeMap::new();
    for algo in algos.iter() {
        let mut values: Vec<f64> = Vec::with_capacity(results.len());
        let mut failures = 0u64;
        for run in results {
            if let Some(a) = run.algorithms.get(&algo) {
                if a.failed() {
                    failures += 1;
                } else {
                    values.push(a.mean_rms_pos());
                }
            }
        }
        algorithms.insert(algo, summarize_values(&values, failures));
    }
    McSummary {
        n_runs: results.len() as u64,
        algorithms,
    }
}

fn summarize_values(values: &[f64], failures: u64) -> AlgoSummary {
    let n = values.len();
    if n == 0 {
        return AlgoSummary {
            mean_rms_pos: f64::NAN,
            median_rms_pos: f64::NAN,
            std_rms_pos: f64::NAN,
            histogram: Vec::new(),
            failures,
            successes: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite rms"));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    let max = sorted[n - 1];
    let hi = if max > 0.0 { max * (1.0 + 1e-12) } else { 1e-9 };
    let width = hi / HISTOGRAM_BINS as f64;
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &v in values {
        let bin = ((v / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count,
        })
        .collect();

    AlgoSummary {
        mean_rms_pos: mean,
        median_rms_pos: median,
        std_rms_pos: std,
        histogram,
        failures,
        successes: n as u64,
    }
}

/// One scenario's Monte-Carlo outcome, input to the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub gps_enabled: bool,
    pub summary: McSummary,
}

/// One row of the cross-scenario summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummaryRow {
    pub scenario: String,
    pub gps: bool,
    pub mean_rms_pos: BTreeMap<Algorithm, f64>,
}

/// Builds the per-scenario mean-RMS table (one row per scenario, one column
/// per algorithm). Errors on empty input.
pub fn summarize_table(results: &[ScenarioResult]) -> Result<Vec<ScenarioSummaryRow>> {
    if results.is_empty() {
        return Err(Error::invalid_config(
            "scenarios",
            "summary table needs at least one scenario result",
        ));
    }
    Ok(results
        .iter()
        .map(|r| ScenarioSummaryRow {
            scenario: r.name.clone(),
            gps: r.gps_enabled,
            mean_rms_pos: r
                .summary
                .algorithms
                .iter()
                .map(|(a, s)| (*a, s.mean_rms_pos))
                .collect(),
        })
        .collect())
}

/// Renders the summary table as aligned text with means to 2 decimals.
pub fn format_summary_table(rows: &[ScenarioSummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<4} {:>6} {:>6} {:>6}\n",
        "Scenario", "GPS", "EKF", "DCL", "CCL"
    ));
    for row in rows {
        let cell = |a: Algorithm| {
            row.mean_rms_pos
                .get(&a)
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".to_string())
        };
        out.push_str(&format!(
            "{:<10} {:<4} {:>6} {:>6} {:>6}\n",
            row.scenario,
            if row.gps { "yes" } else { "no" },
            cell(Algorithm::Ekf),
            cell(Algorithm::Dcl),
            cell(Algorithm::Ccl),
        ));
    }
    out
}

/// Writes per-run results: one row per (run, algorithm, vehicle).
pub fn write_results_csv<W: Write>(
    w: &mut W,
    scenario: &str,
    results: &[RunResult],
) -> io::Result<()> {
    writeln!(
        w,
        "run_id,seed,scenario,algorithm,vehicle_id,rms_pos_m,rms_heading_rad,failed"
    )?;
    for run in results {
        for (algo, outcome) in &run.algorithms {
            for (v, stats) in outcome.vehicles.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    run.run_id,
                    run.seed,
                    scenario,
                    algo,
                    v,
                    stats.rms_pos,
                    stats.rms_heading,
                    outcome.failed()
                )?;
            }
        }
    }
    Ok(())
}

/// Writes the scenario summary table: 2-decimal columns as displayed plus
/// full-precision columns.
pub fn write_summary_csv<W: Write>(w: &mut W, rows: &[ScenarioSummaryRow]) -> io::Result<()> {
    writeln!(
        w,
        "scenario,gps,ekf_rms_m,dcl_rms_m,ccl_rms_m,ekf_rms_m_full,dcl_rms_m_full,ccl_rms_m_full"
    )?;
    for row in rows {
        let rounded = |a: Algorithm| {
            row.mean_rms_pos
                .get(&a)
                .map(|v| format!("{v:.2}"))
                .unwrap_or_default()
        };
        let full = |a: Algorithm| {
            row.mean_rms_pos
                .get(&a)
                .map(|v| v.to_string())
                .unwrap_or_default()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.scenario,
            row.gps,
            rounded(Algorithm::Ekf),
            rounded(Algorithm::Dcl),
            rounded(Algorithm::Ccl),
            full(Algorithm::Ekf),
            full(Algorithm::Dcl),
            full(Algorithm::Ccl),
        )?;
    }
    Ok(())
}

/// Writes the RMS-error histograms of one scenario's Monte-Carlo batch.
pub fn write_histogram_csv<W: Write>(w: &mut W, summary: &McSummary) -> io::Result<()> {
    writeln!(w, "algorithm,bin_lo,bin_hi,count")?;
    for (algo, s) in &summary.algorithms {
        for bin in &s.histogram {
            writeln!(w, "{},{},{},{}", algo, bin.lo, bin.hi, bin.count)?;
        }
    }
    Ok(())
}

/// Writes the per-tick trace of a single run.
pub fn write_trace_csv<W: Write>(
    w: &mut W,
    rows: &[TraceRow],
    algos: AlgoSelection,
) -> io::Result<()> {
    write!(w, "t,vehicle,true_x,true_y,true_theta")?;
    for a in algos.iter() {
        write!(w, ",{a}_x,{a}_y,{a}_theta,{a}_cov_trace")?;
    }
    writeln!(w)?;
    for row in rows {
        write!(
            w,
            "{},{},{},{},{}",
            row.t, row.vehicle, row.truth[0], row.truth[1], row.truth[2]
        )?;
        for a in algos.iter() {
            match row.estimates.get(&a) {
                Some(e) => write!(w, ",{},{},{},{}", e[0], e[1], e[2], e[3])?,
                None => write!(w, ",,,,")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
