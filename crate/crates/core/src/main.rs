use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tdoa_af::config::{parse_config, Experiment};
use tdoa_af::csv::{emit_csv, emit_summary};
use tdoa_af::harness::{run, run_suite, ConvergenceTrace, MeasurementSource, Scenario, DEFAULT_ERROR_THRESHOLD};
use tdoa_af::svg::{emit_svg, Geometry, PlotKind};
use tdoa_af::{Algorithm, OptimizerConfig};

#[derive(Parser)]
#[command(
    name = "tdoa",
    version,
    about = "TDOA localization experiments with first-order optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario for one seed and write its traces.
    Run(RunArgs),
    /// Run scenarios x algorithms x seeds and summarize.
    Suite(SuiteArgs),
    /// List the built-in scenarios.
    Presets,
    /// Parse and validate a configuration file without running it.
    Validate { path: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Algorithm name, comma-separated list, or "all".
    #[arg(long)]
    algo: Option<String>,
    /// Override the number of iterations.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated subset of csv, svg, summary.
    #[arg(long)]
    emit: Option<String>,
    #[arg(long)]
    measurement_source: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a configuration file.
    #[arg(long, default_value = "scenario1")]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SuiteArgs {
    /// Preset name or configuration path; repeat for several. Defaults to all presets.
    #[arg(long)]
    scenario: Vec<String>,
    /// Half-open range `a..b` or inclusive `a..=b`.
    #[arg(long, default_value = "0..30")]
    seeds: String,
    #[arg(long, default_value_t = DEFAULT_ERROR_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Input(String),
    Run(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Run(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Run(m) | Failure::Io(m) => m,
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

#[derive(Clone, Copy, Default)]
struct Emit {
    csv: bool,
    svg: bool,
    summary: bool,
}

fn parse_emit(spec: Option<&str>, default: Emit) -> Result<Emit, Failure> {
    let Some(spec) = spec else { return Ok(default) };
    let mut emit = Emit::default();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "csv" => emit.csv = true,
            "svg" => emit.svg = true,
            "summary" => emit.summary = true,
            other => return Err(Failure::Input(format!("unknown --emit item '{other}'"))),
        }
    }
    Ok(emit)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Input(format!("--seeds expects a..b or a..=b, got '{spec}'"));
    let (a, b, inclusive) = if let Some((a, b)) = spec.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = spec.split_once("..") {
        (a, b, false)
    } else {
        let n: u64 = spec.parse().map_err(|_| bad())?;
        return Ok(vec![n]);
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(Failure::Input(format!("--seeds '{spec}' is empty")));
    }
    Ok(seeds)
}

fn parse_algorithms(spec: &str) -> Result<Vec<Algorithm>, Failure> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ALL.to_vec());
    }
    let mut algs = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let alg: Algorithm = name
            .parse()
            .map_err(|e: tdoa_af::Error| Failure::Input(e.to_string()))?;
        if !algs.contains(&alg) {
            algs.push(alg);
        }
    }
    if algs.is_empty() {
        return Err(Failure::Input("--algo names no algorithm".into()));
    }
    Ok(algs)
}

/// Resolves a preset name or configuration path into an experiment with CLI overrides applied.
fn load_experiment(reference: &str, common: &Common) -> Result<Experiment, Failure> {
    let mut experiment = match Scenario::by_name(reference) {
        Some(scenario) => Experiment {
            scenario,
            optimizers: Algorithm::ALL.iter().map(|&a| OptimizerConfig::new(a)).collect(),
        },
        None => {
            let path = Path::new(reference);
            if !path.exists() {
                return Err(Failure::Input(format!(
                    "'{reference}' is neither a preset nor an existing file"
                )));
            }
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            parse_config(&text).map_err(|e| Failure::Input(format!("{reference}: {e}")))?
        }
    };
    if let Some(spec) = &common.algo {
        let wanted = parse_algorithms(spec)?;
        experiment.optimizers = wanted
            .into_iter()
            .map(|alg| {
                experiment
                    .optimizers
                    .iter()
                    .find(|c| c.algorithm == alg)
                    .cloned()
                    .unwrap_or_else(|| OptimizerConfig::new(alg))
            })
            .collect();
    }
    if let Some(k) = common.iterations {
        experiment.scenario.iterations = k;
    }
    if let Some(src) = &common.measurement_source {
        experiment.scenario.measurement_source = src
            .parse::<MeasurementSource>()
            .map_err(|e| Failure::Input(e.to_string()))?;
    }
    experiment
        .scenario
        .validate()
        .map_err(|e| Failure::Input(format!("scenario '{}': {e}", experiment.scenario.id)))?;
    Ok(experiment)
}

fn slug(alg: Algorithm) -> String {
    alg.name().to_ascii_lowercase().replace('+', "-")
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut sink = BufWriter::new(file);
    body(&mut sink)
        .and_then(|_| sink.flush())
        .map_err(|e| io_failure(path, e))
}

fn write_svg(path: &Path, traces: &[ConvergenceTrace], kind: PlotKind, scenario: &Scenario) -> Result<(), Failure> {
    let geometry = Geometry {
        receivers: &scenario.receivers,
        transmitter: scenario.true_position,
    };
    write_file(path, |sink| {
        emit_svg(traces, kind, Some(&geometry), sink).map_err(|e| io::Error::other(e.to_string()))
    })
}

/// Runs each optimizer once and writes the requested artifacts.
fn run_experiment(experiment: &Experiment, seed: u64, out: &Path, emit: Emit) -> Result<Vec<String>, Failure> {
    let scenario = &experiment.scenario;
    let results: Vec<_> = experiment
        .optimizers
        .par_iter()
        .map(|config| run(scenario, config, seed))
        .collect();
    let mut traces = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(trace) => traces.push(trace),
            Err(failure) => {
                failures.push(failure.to_string());
                traces.push(failure.trace);
            }
        }
    }
    if emit.csv {
        for trace in &traces {
            let path = out.join(format!("{}_{}_seed{}.csv", scenario.id, slug(trace.algorithm), seed));
            write_file(&path, |sink| emit_csv(trace, sink))?;
        }
    }
    if emit.svg {
        let stem = format!("{}_seed{}", scenario.id, seed);
        write_svg(
            &out.join(format!("{stem}_convergence.svg")),
            &traces,
            PlotKind::Convergence,
            scenario,
        )?;
        write_svg(
            &out.join(format!("{stem}_trajectory.svg")),
            &traces,
            PlotKind::Trajectory,
            scenario,
        )?;
    }
    if emit.summary {
        for trace in &traces {
            if let Some(last) = trace.final_record() {
                println!(
                    "{} {} seed={} k={} x={:.4} y={:.4} cost={:.6e} error={:.4}",
                    scenario.id,
                    trace.algorithm,
                    seed,
                    last.iteration,
                    last.position.x,
                    last.position.y,
                    last.cost,
                    last.error
                );
            }
        }
    }
    Ok(failures)
}

fn ensure_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let emit = parse_emit(
        args.common.emit.as_deref(),
        Emit {
            csv: true,
            summary: true,
            ..Emit::default()
        },
    )?;
    let experiment = load_experiment(&args.scenario, &args.common)?;
    ensure_dir(&args.common.out)?;
    let failures = run_experiment(&experiment, args.seed, &args.common.out, emit)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(failures.join("\n")))
    }
}

fn cmd_suite(args: SuiteArgs) -> Result<(), Failure> {
    let emit = parse_emit(
        args.common.emit.as_deref(),
        Emit {
            summary: true,
            ..Emit::default()
        },
    )?;
    let seeds = parse_seeds(&args.seeds)?;
    let references = if args.scenario.is_empty() {
        vec!["scenario1".to_string(), "scenario2".to_string()]
    } else {
        args.scenario.clone()
    };
    let experiments = references
        .iter()
        .map(|r| load_experiment(r, &args.common))
        .collect::<Result<Vec<_>, _>>()?;
    ensure_dir(&args.common.out)?;

    let mut failures = 0;
    let mut summaries = Vec::new();
    for experiment in &experiments {
        let summary = run_suite(
            std::slice::from_ref(&experiment.scenario),
            &experiment.optimizers,
            &seeds,
            args.threshold,
        )
        .map_err(|e| Failure::Input(e.to_string()))?;
        failures += summary.cells.iter().map(|c| c.failures).sum::<usize>();
        summaries.push(summary);
        if emit.csv || emit.svg {
            let per_run = Emit { summary: false, ..emit };
            for &seed in &seeds {
                run_experiment(experiment, seed, &args.common.out, per_run)?;
            }
        }
    }
    if emit.summary {
        let path = args.common.out.join("summary.csv");
        write_file(&path, |sink| {
            for summary in &summaries {
                emit_summary(summary, sink)?;
            }
            Ok(())
        })?;
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        for summary in &summaries {
            emit_summary(summary, &mut lock).map_err(|e| Failure::Io(e.to_string()))?;
        }
    }
    if failures > 0 {
        Err(Failure::Run(format!("{failures} run(s) diverged")))
    } else {
        Ok(())
    }
}

fn cmd_presets() {
    for s in Scenario::presets() {
        let receivers: Vec<String> = s.receivers.iter().map(|p| format!("({}, {})", p.x, p.y)).collect();
        println!(
            "{}: transmitter ({}, {}), receivers {}, iterations {}",
            s.id,
            s.true_position.x,
            s.true_position.y,
            receivers.join(" "),
            s.iterations
        );
    }
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let experiment = parse_config(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let names: Vec<&str> = experiment.optimizers.iter().map(|c| c.algorithm.name()).collect();
    println!("ok: scenario '{}' with {}", experiment.scenario.id, names.join(", "));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
        Command::Validate { path } => cmd_validate(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("tdoa: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
