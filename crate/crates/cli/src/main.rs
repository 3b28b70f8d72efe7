use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thermal_mor::airflow::FlowSchedule;
use thermal_mor::building::description::BuildingDescription;
use thermal_mor::building::weather::parse_timestamp;
use thermal_mor::building::{assemble_building, BuildingModel, WeatherSeries};
use thermal_mor::experiment::{bench, compare, order_sweep, reduction_report};
use thermal_mor::simulation::{simulate_building, FlowSource, SimulationConfig, Strategy, DEFAULT_EPS};
use thermal_mor::statespace::DEFAULT_DT;
use thermal_mor::tvreduction::{DEFAULT_ITERATION_EPS, DEFAULT_MAX_ITERATIONS};
use thermal_mor::Error;

/// Balanced reduction of building thermal models with natural ventilation.
#[derive(Debug, Parser)]
#[command(name = "thermor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hankel singular values, selected orders and error bounds per zone (JSON).
    Reduce(ReduceArgs),
    /// Run one strategy and write the trajectory (CSV).
    Simulate(SimulateArgs),
    /// Run strategies against the full model; writes report.json and one CSV per run.
    Compare(CompareArgs),
    /// Sweep eps (or single-zone orders) and fit t = t_f + c * sum(n^3).
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    building: PathBuf,
    #[arg(long, default_value = "reduce-lti")]
    strategy: Strategy,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    building: PathBuf,
    #[arg(long)]
    weather: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Conditional strategy only, kg/s. Default: 10 % of the mean initial flow.
    #[arg(long = "flow-tol")]
    flow_tol: Option<f64>,
    /// Separate strategy fixed-point tolerance, degC.
    #[arg(long = "iter-eps", default_value_t = DEFAULT_ITERATION_EPS)]
    iter_eps: f64,
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iter: usize,
    /// Time step, s.
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    /// Start timestamp (ISO 8601). Default: first weather record.
    #[arg(long)]
    from: Option<String>,
    /// End timestamp (ISO 8601). Default: last weather record.
    #[arg(long)]
    to: Option<String>,
    /// Mass-flow schedule CSV (timestamp,link_id,mass_flow) replacing the pressure network.
    #[arg(long)]
    flows: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "full")]
    strategy: Strategy,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Strategies compared with the full baseline, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    strategy: Vec<Strategy>,
    /// Timed repetitions per strategy; the median is reported.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    building: Option<PathBuf>,
    #[arg(long)]
    weather: PathBuf,
    #[arg(long, default_value = "reduce-lti")]
    strategy: Strategy,
    /// Tolerance sweep, comma separated (at least four values).
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4,0.8")]
    eps: Vec<f64>,
    /// Time a single ventilated zone at these full orders instead of sweeping eps.
    #[arg(long, value_delimiter = ',')]
    orders: Vec<usize>,
    #[arg(long = "flow-tol")]
    flow_tol: Option<f64>,
    #[arg(long = "iter-eps", default_value_t = DEFAULT_ITERATION_EPS)]
    iter_eps: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Table CSV; the fit goes to stdout as JSON. Defaults to stdout for both.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// 2 configuration, 3 numerical non-convergence, 4 I/O.
fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io(_) => 4,
        Error::Convergence { .. } | Error::Unstable(_) | Error::SingularStep { .. } | Error::Split { .. } => 3,
        _ => 2,
    }
}

type CliResult<T> = thermal_mor::Result<T>;

fn load_building(path: &Path) -> CliResult<BuildingModel> {
    assemble_building(&BuildingDescription::load(path)?)
}

fn flow_source(model: &BuildingModel, path: Option<&Path>) -> CliResult<FlowSource> {
    match path {
        None => Ok(FlowSource::Network),
        Some(p) => {
            let links: Vec<String> = model.openings.iter().map(|o| o.id.clone()).collect();
            Ok(FlowSource::Schedule(FlowSchedule::load(&links, p)?))
        }
    }
}

fn timestamp(s: Option<&String>) -> CliResult<Option<f64>> {
    s.map(|s| parse_timestamp(s)).transpose()
}

struct Prepared {
    model: BuildingModel,
    weather: WeatherSeries,
    source: FlowSource,
    config: SimulationConfig,
}

fn prepare(run: &RunArgs, strategies: &[Strategy]) -> CliResult<Prepared> {
    if run.flow_tol.is_some() && !strategies.contains(&Strategy::Conditional) {
        return Err(Error::Argument("--flow-tol only applies to the conditional strategy".into()));
    }
    let model = load_building(&run.building)?;
    let weather = WeatherSeries::load(&run.weather)?;
    let source = flow_source(&model, run.flows.as_deref())?;
    let config = SimulationConfig {
        strategy: strategies.first().copied().unwrap_or(Strategy::Full),
        eps: run.eps,
        flow_tolerance: run.flow_tol,
        iteration_eps: run.iter_eps,
        max_iterations: run.max_iter,
        dt: run.dt,
        start: timestamp(run.from.as_ref())?,
        end: timestamp(run.to.as_ref())?,
    };
    config.validate()?;
    Ok(Prepared { model, weather, source, config })
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn cmd_reduce(a: &ReduceArgs) -> CliResult<()> {
    let model = load_building(&a.building)?;
    let report = reduction_report(&model, a.strategy, a.eps)?;
    let mut w = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let p = prepare(&a.run, &[a.strategy])?;
    let result = simulate_building(&p.model, &p.weather, &p.source, &p.config)?;
    let mut w = output(a.out.as_deref())?;
    result.write_csv(&mut w)?;
    w.flush()?;
    if a.out.is_some() {
        eprintln!(
            "{}: {} steps, reduced orders {:?}, loop {:.4} s",
            result.strategy,
            result.steps(),
            result.reduced_orders,
            result.loop_seconds
        );
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let p = prepare(&a.run, &a.strategy)?;
    fs::create_dir_all(&a.out)?;
    let (report, baseline, results) = compare(&p.model, &p.weather, &p.source, &p.config, &a.strategy, a.runs)?;
    baseline.write_csv(BufWriter::new(File::create(a.out.join("full.csv"))?))?;
    for r in &results {
        r.write_csv(BufWriter::new(File::create(a.out.join(format!("{}.csv", r.strategy)))?))?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(a.out.join("report.json"), &json)?;
    emit(&json)?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let weather = WeatherSeries::load(&a.weather)?;
    if !a.orders.is_empty() {
        let (timings, fit) = order_sweep(&a.orders, &weather, a.runs)?;
        let mut w = output(a.out.as_deref())?;
        writeln!(w, "order,seconds")?;
        for t in &timings {
            writeln!(w, "{},{:.9}", t.order, t.seconds)?;
        }
        w.flush()?;
        drop(w);
        emit(&serde_json::to_string_pretty(&fit)?)?;
        return Ok(());
    }
    let building = a.building.as_ref().ok_or_else(|| Error::Argument("--building is required for an eps sweep".into()))?;
    let run = RunArgs {
        building: building.clone(),
        weather: a.weather.clone(),
        eps: a.eps.first().copied().unwrap_or(DEFAULT_EPS),
        flow_tol: a.flow_tol,
        iter_eps: a.iter_eps,
        max_iter: DEFAULT_MAX_ITERATIONS,
        dt: a.dt,
        from: a.from.clone(),
        to: a.to.clone(),
        flows: a.flows.clone(),
    };
    let p = prepare(&run, &[a.strategy])?;
    let report = bench(&p.model, &p.weather, &p.source, &p.config, &a.eps, a.runs)?;
    let w = output(a.out.as_deref())?;
    report.write_csv(w)?;
    emit(&serde_json::json!({ "baseline_seconds": report.baseline_seconds, "fit": report.fit }).to_string())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Reduce(a) => cmd_reduce(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
