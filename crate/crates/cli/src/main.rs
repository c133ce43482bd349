use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pcmsim::harness::{
    bench, compare_samples, read_trace_csv, run, stability_scan, write_scan_csv, write_trace_csv, BenchSpec,
    RunSettings,
};
use pcmsim::Method;

#[derive(Parser)]
#[command(name = "pcmsim", version, about = "Variable-step DAE integration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace as CSV.
    Simulate(SimulateArgs),
    /// Compare a candidate trace CSV against a reference trace CSV.
    Compare(CompareArgs),
    /// Run a scenario file and report accuracy and efficiency per method.
    Bench(BenchArgs),
    /// Fixed-step AM-2 stability verdicts over a (lambda, h) grid.
    StabilityScan(ScanArgs),
}

/// Scenario options. Each flag has a config-file key of the same name
/// (dashes or underscores); flags override the file.
#[derive(Args, Default)]
struct ScenarioArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fitm, fam2, vitm, vam2 or pcm.
    #[arg(long)]
    method: Option<Method>,
    /// analytic, linear:<lambda> or swing:<fixture name or path>.
    #[arg(long)]
    system: Option<String>,
    /// Fixed step, or initial step of the variable-step methods.
    #[arg(long)]
    h0: Option<String>,
    #[arg(long)]
    h_min: Option<String>,
    #[arg(long)]
    h_max: Option<String>,
    /// Truncation-error threshold below which the step doubles.
    #[arg(long)]
    g_low: Option<String>,
    /// Truncation-error threshold above which the step halves.
    #[arg(long)]
    g_high: Option<String>,
    #[arg(long)]
    iters_low: Option<String>,
    #[arg(long)]
    iters_high: Option<String>,
    #[arg(long)]
    grow_factor: Option<String>,
    #[arg(long)]
    shrink_factor: Option<String>,
    /// Redo steps whose estimate exceeds g-high at half the step.
    #[arg(long)]
    reject_on_high_error: Option<String>,
    /// Corrector applications per step.
    #[arg(long)]
    corrector_iterations: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    /// Fault as `bus,start,duration`, or `none`.
    #[arg(long)]
    fault: Option<String>,
    #[arg(long)]
    newton_tolerance: Option<String>,
    #[arg(long)]
    newton_max_iterations: Option<String>,
    #[arg(long)]
    fd_epsilon: Option<String>,
    /// Accepted for reproducibility records; every algorithm is deterministic.
    #[arg(long)]
    seed: Option<String>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |key: &'static str, value: &Option<String>| {
            if let Some(v) = value {
                out.push((key, v.clone()));
            }
        };
        put("system", &self.system);
        put("h0", &self.h0);
        put("h_min", &self.h_min);
        put("h_max", &self.h_max);
        put("g_low", &self.g_low);
        put("g_high", &self.g_high);
        put("iters_low", &self.iters_low);
        put("iters_high", &self.iters_high);
        put("grow_factor", &self.grow_factor);
        put("shrink_factor", &self.shrink_factor);
        put("reject_on_high_error", &self.reject_on_high_error);
        put("corrector_iterations", &self.corrector_iterations);
        put("t_end", &self.t_end);
        put("fault", &self.fault);
        put("newton_tolerance", &self.newton_tolerance);
        put("newton_max_iterations", &self.newton_max_iterations);
        put("fd_epsilon", &self.fd_epsilon);
        put("seed", &self.seed);
        if let Some(m) = self.method {
            out.push(("method", m.to_string()));
        }
        out
    }

    fn apply(&self, settings: &mut RunSettings) -> Result<()> {
        for (key, value) in self.overrides() {
            settings
                .set(key, &value)
                .with_context(|| format!("invalid --{} `{value}`", key.replace('_', "-")))?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trace CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference trace CSV; its time grid is used for sampling.
    reference: PathBuf,
    /// Candidate trace CSV, interpolated onto the reference grid.
    candidate: PathBuf,
    /// Comma-separated variable names to compare (default: all).
    #[arg(long, value_delimiter = ',')]
    variables: Option<Vec<String>>,
    /// JSON output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario file: run keys plus `methods`, `reference` and `faults`.
    #[arg(long)]
    config: PathBuf,
    /// JSON report path. The text table goes to standard output; without
    /// this flag the JSON goes to standard output and the table to standard
    /// error.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-case CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave wall-clock timings out of the JSON so repeated runs match.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ScanArgs {
    /// Comma-separated negative eigenvalues.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    lambdas: Vec<f64>,
    /// Comma-separated step lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    hs: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes `bytes` to `path`, or to standard output.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut settings = match &args.scenario.config {
        Some(path) => RunSettings::from_config_str(&read(path)?).with_context(|| format!("in {}", path.display()))?,
        None => RunSettings::default(),
    };
    args.scenario.apply(&mut settings)?;
    if let Some(out) = args.out {
        settings.out = Some(out);
    }
    let out = settings.out.take();
    let trace = run(&settings)?;
    let mut buf = Vec::new();
    write_trace_csv(&trace, &mut buf)?;
    emit(out.as_deref(), &buf)?;
    eprintln!(
        "{}: {} steps, {} Newton iterations, t_end {}",
        trace.method,
        trace.accepted_steps,
        trace.total_newton_iterations,
        trace.last().state.t
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let load = |p: &Path| -> Result<_> {
        read_trace_csv(fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?)
            .with_context(|| format!("in {}", p.display()))
    };
    let reference = load(&args.reference)?;
    let candidate = load(&args.candidate)?;
    let comparison = compare_samples(&reference, &candidate, args.variables.as_deref())?;
    let mut json = serde_json::to_string_pretty(&comparison)?;
    json.push('\n');
    emit(args.out.as_deref(), json.as_bytes())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let spec = BenchSpec::from_config_str(&read(&args.config)?)
        .with_context(|| format!("in {}", args.config.display()))?;
    let report = bench(&spec)?;
    let mut json = report.to_json(!args.no_timing)?;
    json.push('\n');
    if let Some(path) = &args.csv {
        let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        report.write_cases_csv(file)?;
    }
    match &args.out {
        Some(path) => {
            emit(Some(path), json.as_bytes())?;
            print!("{}", report.to_table());
        }
        None => {
            eprint!("{}", report.to_table());
            emit(None, json.as_bytes())?;
        }
    }
    Ok(())
}

fn scan(args: ScanArgs) -> Result<()> {
    if args.lambdas.is_empty() || args.hs.is_empty() {
        bail!("need at least one lambda and one step");
    }
    let rows = stability_scan(&args.lambdas, &args.hs, args.steps, &Default::default())?;
    let mut buf = Vec::new();
    write_scan_csv(&rows, &mut buf)?;
    emit(args.out.as_deref(), &buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Bench(a) => run_bench(a),
        Command::StabilityScan(a) => scan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
