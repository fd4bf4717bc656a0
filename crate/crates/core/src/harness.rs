//! Experiment runner: scenarios, seeded runs, convergence traces and
//! multi-seed summaries.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    generate_measurements, predict, CostModel, Covariance, CovarianceSpec, MeasurementSet, Point, ReceiverSet,
};
use crate::optim::{step, Algorithm, OptimizerConfig, OptimizerState};
use crate::signal::{estimate_range_differences, generate_waveform, synthesize_received, SignalParams};

/// A run is declared divergent once the cost exceeds this.
pub const DIVERGENCE_COST: f64 = 1e12;
/// Iterations at which suite summaries report error statistics.
pub const CHECKPOINTS: [usize; 3] = [50, 150, 300];
pub const DEFAULT_ERROR_THRESHOLD: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementSource {
    /// Range differences drawn as `g(p) + L u`.
    #[default]
    Direct,
    /// Range differences estimated from synthesized received signals.
    Signal,
}

impl std::str::FromStr for MeasurementSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "direct-noise" => Ok(Self::Direct),
            "signal" | "signal-frontend" => Ok(Self::Signal),
            other => Err(Error::Config(format!("unknown measurement source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub receivers: Vec<Point>,
    pub true_position: Point,
    pub covariance: CovarianceSpec,
    /// Defaults to the receiver centroid.
    pub initial_position: Option<Point>,
    pub iterations: usize,
    pub measurement_source: MeasurementSource,
    pub signal: Option<SignalParams>,
    /// Redraw the measurements before every step instead of once per run.
    pub resample_each_iteration: bool,
}

impl Scenario {
    /// Four receivers around a transmitter at (40, 80).
    pub fn scenario1() -> Self {
        Self::preset("scenario1", Point::new(40.0, 80.0))
    }

    /// Same receivers with the transmitter at (75, 65).
    pub fn scenario2() -> Self {
        Self::preset("scenario2", Point::new(75.0, 65.0))
    }

    fn preset(id: &str, transmitter: Point) -> Self {
        Self {
            id: id.to_string(),
            receivers: vec![
                Point::new(0.0, 0.0),
                Point::new(10.0, 60.0),
                Point::new(70.0, 70.0),
                Point::new(60.0, 10.0),
            ],
            true_position: transmitter,
            covariance: CovarianceSpec::Uniform {
                diag: 0.4,
                offdiag: 0.1,
            },
            initial_position: None,
            iterations: 300,
            measurement_source: MeasurementSource::Direct,
            signal: None,
            resample_each_iteration: false,
        }
    }

    pub fn presets() -> Vec<Scenario> {
        vec![Self::scenario1(), Self::scenario2()]
    }

    pub fn by_name(name: &str) -> Option<Scenario> {
        match name {
            "scenario1" => Some(Self::scenario1()),
            "scenario2" => Some(Self::scenario2()),
            _ => None,
        }
    }

    pub fn receiver_set(&self) -> Result<ReceiverSet> {
        ReceiverSet::new(self.receivers.clone())
    }

    pub fn covariance(&self) -> Result<Covariance> {
        let m = crate::measurement::pair_count(self.receivers.len());
        Covariance::new(self.covariance.to_matrix(m)?)
    }

    pub fn start(&self) -> Result<Point> {
        Ok(match self.initial_position {
            Some(p) => p,
            None => self.receiver_set()?.centroid(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.receiver_set()?;
        self.covariance()?;
        let start = self.start()?;
        for (what, p) in [("true_position", self.true_position), ("initial_position", start)] {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidArgument(format!("{what} is not finite")));
            }
        }
        if let Some(signal) = &self.signal {
            signal.validate()?;
        }
        Ok(())
    }

    /// Signal parameters for the signal path, falling back to defaults.
    pub fn signal_params(&self) -> SignalParams {
        self.signal.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub position: Point,
    pub cost: f64,
    /// Distance to the true position, meters.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub scenario_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config: OptimizerConfig,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn error_at(&self, iteration: usize) -> Option<f64> {
        self.records.get(iteration).map(|r| r.error)
    }
}

/// A run that stopped early. `trace` holds every record up to the last
/// valid iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub trace: ConvergenceTrace,
    pub reason: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} on {} (seed {}) failed after {} iterations: {}",
            self.trace.algorithm,
            self.trace.scenario_id,
            self.trace.seed,
            self.trace.records.len().saturating_sub(1),
            self.reason
        )
    }
}

impl std::error::Error for RunFailure {}

/// Draws one measurement vector for `scenario` from `rng`.
pub fn draw_measurements<R: Rng + ?Sized>(
    scenario: &Scenario,
    receivers: &ReceiverSet,
    covariance: &Covariance,
    rng: &mut R,
) -> Result<MeasurementSet> {
    match scenario.measurement_source {
        MeasurementSource::Direct => generate_measurements(receivers, &scenario.true_position, covariance, rng),
        MeasurementSource::Signal => {
            let params = scenario.signal_params();
            let values = signal_range_differences(receivers, &scenario.true_position, &params, rng)?;
            MeasurementSet::new(values, covariance.clone())
        }
    }
}

/// Synthesizes one received record per receiver and correlates them.
///
/// Each receiver sees the waveform delayed by its propagation time rounded
/// to whole samples, through a unit-magnitude channel with random phase.
pub fn signal_range_differences<R: Rng + ?Sized>(
    receivers: &ReceiverSet,
    transmitter: &Point,
    params: &SignalParams,
    rng: &mut R,
) -> Result<DVector<f64>> {
    params.validate()?;
    let waveform = generate_waveform(params.waveform, params.num_samples, rng);
    let signals = receivers
        .positions()
        .iter()
        .enumerate()
        .map(|(id, anchor)| {
            let delay = ((transmitter - anchor).norm() / params.range_resolution()).round() as usize;
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            synthesize_received(
                &waveform,
                delay,
                Complex64::from_polar(1.0, phase),
                params.noise_stddev,
                id,
                rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates = estimate_range_differences(&signals, params)?;
    Ok(DVector::from_iterator(
        estimates.len(),
        estimates.iter().map(|r| r.meters),
    ))
}

/// Runs one optimizer on one scenario. Measurements come from an RNG seeded
/// with `seed`, so the trace is a pure function of the inputs.
pub fn run(scenario: &Scenario, config: &OptimizerConfig, seed: u64) -> Result<ConvergenceTrace, RunFailure> {
    let mut trace = ConvergenceTrace {
        scenario_id: scenario.id.clone(),
        algorithm: config.algorithm,
        seed,
        config: config.clone(),
        records: Vec::with_capacity(scenario.iterations + 1),
    };
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(reason) => return Err(RunFailure { trace, reason }),
            }
        };
    }
    bail!(scenario.validate());
    bail!(config.validate());
    let receivers = bail!(scenario.receiver_set());
    let covariance = bail!(scenario.covariance());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measurements = bail!(draw_measurements(scenario, &receivers, &covariance, &mut rng));
    let mut model = bail!(CostModel::new(receivers.clone(), measurements));
    let mut state = OptimizerState::new(bail!(scenario.start()), config);

    let record = |model: &CostModel, p: Point, iteration: usize| -> Result<TraceRecord> {
        let cost = model.cost(&p);
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::NonFinite(format!("position at iteration {iteration}")));
        }
        if !cost.is_finite() || cost > DIVERGENCE_COST {
            return Err(Error::NonFinite(format!("cost {cost:e} at iteration {iteration}")));
        }
        Ok(TraceRecord {
            iteration,
            position: p,
            cost,
            error: (p - scenario.true_position).norm(),
        })
    };

    let first = bail!(record(&model, state.position, 0));
    trace.records.push(first);
    for k in 1..=scenario.iterations {
        if scenario.resample_each_iteration {
            let fresh = bail!(draw_measurements(scenario, &receivers, &covariance, &mut rng));
            model = bail!(CostModel::new(receivers.clone(), fresh));
        }
        let gradient = bail!(model.gradient(&state.position));
        bail!(step(&mut state, &gradient, config));
        let rec = bail!(record(&model, state.position, k));
        trace.records.push(rec);
    }
    Ok(trace)
}

/// Smallest iteration whose error is at most `threshold` and stays within
/// `1.5 * threshold` for the rest of the trace.
pub fn iterations_to_threshold(trace: &ConvergenceTrace, threshold: f64) -> Option<usize> {
    iterations_to_threshold_in(&trace.records, threshold)
}

fn iterations_to_threshold_in(records: &[TraceRecord], threshold: f64) -> Option<usize> {
    let band = 1.5 * threshold;
    let mut found = None;
    for rec in records.iter().rev() {
        if rec.error > band {
            break;
        }
        if rec.error <= threshold {
            found = Some(rec.iteration);
        }
    }
    found
}

/// Linear-interpolated quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

pub fn median(values: &[f64]) -> f64 {
    quantile_sorted(&sorted(values.to_vec()), 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl QuantileSummary {
    pub fn of(values: &[f64]) -> Self {
        let s = sorted(values.to_vec());
        Self {
            median: quantile_sorted(&s, 0.5),
            q1: quantile_sorted(&s, 0.25),
            q3: quantile_sorted(&s, 0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Metrics kept per (scenario, config, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    /// Error at each entry of [`CHECKPOINTS`] that the run covers; failed runs
    /// report infinity past the failure point.
    pub checkpoint_errors: Vec<(usize, f64)>,
    pub final_error: f64,
    pub iterations_to_threshold: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario_id: String,
    pub algorithm: Algorithm,
    pub config: OptimizerConfig,
    /// Sorted by seed.
    pub runs: Vec<RunMetrics>,
    pub checkpoints: Vec<(usize, QuantileSummary)>,
    pub final_error: QuantileSummary,
    /// Not-reached runs count as infinitely many iterations.
    pub iterations_to_threshold: QuantileSummary,
    pub reached: usize,
    pub failures: usize,
}

impl CellSummary {
    pub fn checkpoint(&self, iteration: usize) -> Option<&QuantileSummary> {
        self.checkpoints.iter().find(|(k, _)| *k == iteration).map(|(_, q)| q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellSummary>,
}

impl SuiteSummary {
    pub fn cell(&self, scenario_id: &str, algorithm: Algorithm) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.scenario_id == scenario_id && c.algorithm == algorithm)
    }
}

fn metrics(
    scenario: &Scenario,
    outcome: &Result<ConvergenceTrace, RunFailure>,
    seed: u64,
    threshold: f64,
) -> RunMetrics {
    let (trace, failure) = match outcome {
        Ok(t) => (t, None),
        Err(f) => (&f.trace, Some(f.reason.to_string())),
    };
    let covered = |k: usize| trace.error_at(k).unwrap_or(f64::INFINITY);
    RunMetrics {
        seed,
        checkpoint_errors: CHECKPOINTS
            .iter()
            .filter(|&&k| k <= scenario.iterations)
            .map(|&k| (k, covered(k)))
            .collect(),
        final_error: if failure.is_some() {
            f64::INFINITY
        } else {
            trace.final_record().map_or(f64::INFINITY, |r| r.error)
        },
        iterations_to_threshold: if failure.is_some() {
            None
        } else {
            iterations_to_threshold(trace, threshold)
        },
        failure,
    }
}

/// Runs the full `scenarios x configs x seeds` cross product in parallel.
/// Summaries depend only on the set of seeds, not their order.
pub fn run_suite(
    scenarios: &[Scenario],
    configs: &[OptimizerConfig],
    seeds: &[u64],
    threshold: f64,
) -> Result<SuiteSummary> {
    if scenarios.is_empty() || configs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "suite needs at least one scenario, config and seed".into(),
        ));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let mut seeds: Vec<u64> = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();

    let cells = scenarios
        .iter()
        .flat_map(|s| configs.iter().map(move |c| (s, c)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(scenario, config)| {
            let runs: Vec<RunMetrics> = seeds
                .par_iter()
                .map(|&seed| metrics(scenario, &run(scenario, config, seed), seed, threshold))
                .collect();
            summarize_cell(scenario, config, runs)
        })
        .collect();

    Ok(SuiteSummary {
        threshold,
        seeds,
        cells,
    })
}

fn summarize_cell(scenario: &Scenario, config: &OptimizerConfig, runs: Vec<RunMetrics>) -> CellSummary {
    let checkpoints = CHECKPOINTS
        .iter()
        .filter(|&&k| k <= scenario.iterations)
        .map(|&k| {
            let errs: Vec<f64> = runs
                .iter()
                .map(|r| {
                    r.checkpoint_errors
                        .iter()
                        .find(|(c, _)| *c == k)
                        .map_or(f64::INFINITY, |(_, e)| *e)
                })
                .collect();
            (k, QuantileSummary::of(&errs))
        })
        .collect();
    let finals: Vec<f64> = runs.iter().map(|r| r.final_error).collect();
    let itt: Vec<f64> = runs
        .iter()
        .map(|r| r.iterations_to_threshold.map_or(f64::INFINITY, |k| k as f64))
        .collect();
    CellSummary {
        scenario_id: scenario.id.clone(),
        algorithm: config.algorithm,
        config: config.clone(),
        checkpoints,
        final_error: QuantileSummary::of(&finals),
        iterations_to_threshold: QuantileSummary::of(&itt),
        reached: runs.iter().filter(|r| r.iterations_to_threshold.is_some()).count(),
        failures: runs.iter().filter(|r| r.failure.is_some()).count(),
        runs,
    }
}

/// Noise-free range differences at the true position, for oracles.
pub fn ideal_measurements(scenario: &Scenario) -> Result<DVector<f64>> {
    Ok(predict(&scenario.true_position, &scenario.receiver_set()?))
}
