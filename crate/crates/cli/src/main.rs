//! `pdsim`: simulate, estimate, coverage and serve from the command line.
//!
//! Exit codes: 0 success, 1 coverage check failed, 2 invalid input,
//! 3 numerical failure, 4 could not bind the server address.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pdsim_core::diagnostics::{coverage_rate, DEFAULT_LEVEL, DEFAULT_THRESHOLD};
use pdsim_core::estimate::estimate;
use pdsim_core::export;
use pdsim_core::filters::ObservationPanel;
use pdsim_core::simulator::simulate;
use pdsim_core::spec::{SimulationSpec, ValidatedSpec};
use pdsim_core::{FilterKind, ModelKind};
use pdsim_service::{to_json, AppState, ServiceConfig};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pdsim", version, about = "Two-factor commodity futures simulation and filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override values in the parameter file.
#[derive(clap::Args, Default)]
struct SpecFlags {
    /// JSON run spec, or a bare parameter object.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    n_obs: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Time step in years.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement-error standard deviation of the nearest contract.
    #[arg(long)]
    sigma_first: Option<f64>,
    /// Measurement-error standard deviation of the farthest contract.
    #[arg(long)]
    sigma_last: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel and write prices.csv, maturities.csv, states.csv, spec.json.
    Simulate {
        #[command(flatten)]
        spec: SpecFlags,
        #[arg(long, value_enum)]
        filter: Option<FilterArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter a simulated panel and write states_est.csv, prices_fit.csv, bands.csv, summary.json.
    Estimate {
        #[arg(long, value_enum)]
        filter: Option<FilterArg>,
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        /// Spec to use instead of `<in>/spec.json`.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Coverage-rate check; writes coverage.json and exits 1 when it fails.
    Coverage {
        #[command(flatten)]
        spec: SpecFlags,
        #[arg(long, value_enum)]
        filter: Option<FilterArg>,
        #[arg(long)]
        n_traj: usize,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        /// Overrides PDSIM_ADDR.
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Ss,
    Pd,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FilterArg {
    Kf,
    Ekf,
    Ukf,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ss => ModelKind::Ss,
            ModelArg::Pd => ModelKind::Pd,
        }
    }
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Kf => FilterKind::Kf,
            FilterArg::Ekf => FilterKind::Ekf,
            FilterArg::Ukf => FilterKind::Ukf,
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(field: impl std::fmt::Display, message: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: format!("invalid {field}: {message}"),
        }
    }
}

impl From<pdsim_core::Error> for Failure {
    fn from(e: pdsim_core::Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::invalid(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(path.display(), e))
}

fn set(doc: &mut Value, section: &str, key: &str, value: Value) {
    if !doc[section].is_object() {
        doc[section] = json!({});
    }
    doc[section][key] = value;
}

/// Loads the parameter file and applies flag overrides.
fn load_spec(flags: &SpecFlags, filter: Option<FilterArg>) -> CliResult<SimulationSpec> {
    let mut doc = match &flags.params {
        Some(path) => read_json(path)?,
        None => json!({}),
    };
    if !doc.is_object() {
        return Err(Failure::invalid("params", "expected a JSON object"));
    }
    if doc.get("kappa").is_some() {
        doc = json!({ "params": doc });
    }
    if let Some(m) = flags.model {
        doc["model"] = serde_json::to_value(ModelKind::from(m)).expect("enum serializes");
    }
    if let Some(n) = flags.n_obs {
        set(&mut doc, "config", "n_obs", json!(n));
    }
    if let Some(m) = flags.m {
        set(&mut doc, "config", "m", json!(m));
    }
    if let Some(dt) = flags.dt {
        set(&mut doc, "config", "dt", json!(dt));
    }
    if let Some(seed) = flags.seed {
        set(&mut doc, "config", "seed", json!(seed));
    }
    if let Some(v) = flags.sigma_first {
        set(&mut doc, "errors", "sigma_first", json!(v));
    }
    if let Some(v) = flags.sigma_last {
        set(&mut doc, "errors", "sigma_last", json!(v));
    }
    if let Some(f) = filter {
        set(&mut doc, "config", "filter", serde_json::to_value(FilterKind::from(f)).expect("enum serializes"));
    }
    parse_spec(doc)
}

fn parse_spec(doc: Value) -> CliResult<SimulationSpec> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "spec".to_string() } else { path };
        Failure::invalid(field, e.inner())
    })
}

fn validate(spec: &SimulationSpec) -> CliResult<ValidatedSpec> {
    let v = spec.validate(None)?;
    for w in &v.warnings {
        eprintln!("warning: {}: {}", w.field, w.message);
    }
    Ok(v)
}

/// Writes via a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)
        .and_then(|_| std::fs::rename(&tmp, &target))
        .map_err(|e| Failure::invalid(target.display(), e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::invalid(dir.display(), e))
}

fn cmd_simulate(flags: &SpecFlags, filter: Option<FilterArg>, out: &Path) -> CliResult<()> {
    let spec = load_spec(flags, filter)?;
    let v = validate(&spec)?;
    let panel = simulate(&v.params, &v.errs, &v.config)?;
    ensure_dir(out)?;
    write_atomic(out, "prices.csv", &export::prices_csv(&panel))?;
    write_atomic(out, "maturities.csv", &export::maturities_csv(&panel))?;
    write_atomic(out, "states.csv", &export::states_csv(&panel.states))?;
    write_atomic(out, "spec.json", &to_json(&spec.effective()))?;
    println!(
        "simulated {} panel: {} observations x {} contracts -> {}",
        spec.model,
        panel.n(),
        panel.m(),
        out.display()
    );
    Ok(())
}

fn read_table(dir: &Path, name: &str) -> CliResult<pdsim_core::mathcore::Matrix> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::invalid(path.display(), e))?;
    let (_, m) = export::parse_csv(&text).map_err(|e| Failure::invalid(path.display(), e))?;
    Ok(m)
}

fn cmd_estimate(
    filter: Option<FilterArg>,
    input: &Path,
    out: &Path,
    level: f64,
    params: Option<&Path>,
) -> CliResult<()> {
    let spec_path = params.map(Path::to_path_buf).unwrap_or_else(|| input.join("spec.json"));
    let mut doc = read_json(&spec_path)?;
    let prices = read_table(input, "prices.csv")?;
    let maturities = read_table(input, "maturities.csv")?;
    if prices.shape() != maturities.shape() {
        return Err(Failure::invalid("maturities.csv", "shape differs from prices.csv"));
    }
    set(&mut doc, "config", "n_obs", json!(prices.nrows()));
    set(&mut doc, "config", "m", json!(prices.ncols()));
    if let Some(f) = filter {
        set(&mut doc, "config", "filter", serde_json::to_value(FilterKind::from(f)).expect("enum serializes"));
    }
    let spec = parse_spec(doc)?;
    let v = validate(&spec)?;

    let y = match spec.model {
        ModelKind::Ss => {
            if prices.iter().any(|p| *p <= 0.0) {
                return Err(Failure::invalid("prices.csv", "Schwartz-Smith prices must be positive"));
            }
            prices.map(f64::ln)
        }
        ModelKind::Pd => prices,
    };
    let panel = ObservationPanel::new(y, maturities, v.config.dt, spec.model)?;
    let est = estimate(&v.params, &v.errs, v.config.filter_kind, &panel, level)?;

    ensure_dir(out)?;
    write_atomic(out, "states_est.csv", &export::states_csv(&est.output.filtered_states()))?;
    write_atomic(out, "prices_fit.csv", &export::contracts_csv(&est.fitted_prices))?;
    write_atomic(out, "bands.csv", &export::bands_csv(&est.bands))?;
    let summary = est.summary();
    write_atomic(out, "summary.json", &to_json(&summary))?;
    println!("{} filter, log-likelihood {:.6}", summary.filter, summary.loglik);
    for (j, r) in summary.rmse.iter().enumerate() {
        println!("  C{} rmse {:.6}", j + 1, r);
    }
    Ok(())
}

fn cmd_coverage(
    flags: &SpecFlags,
    filter: Option<FilterArg>,
    n_traj: usize,
    level: f64,
    threshold: f64,
    out: &Path,
) -> CliResult<bool> {
    let spec = load_spec(flags, filter)?;
    let v = validate(&spec)?;
    let report = coverage_rate(&v.params, &v.errs, &v.config, n_traj, level, threshold)?;
    ensure_dir(out)?;
    write_atomic(out, "coverage.json", &to_json(&report))?;

    let min = report.per_traj_coverage.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = report.per_traj_coverage.iter().sum::<f64>() / report.n_traj as f64;
    println!("{:<26}{}", "trajectories", report.n_traj);
    println!("{:<26}{}", "seed", report.seed);
    println!("{:<26}{:.4}", "band level", report.level);
    println!("{:<26}{:.4}", "mean point coverage", mean);
    println!("{:<26}{:.4}", "min point coverage", min);
    println!("{:<26}{:.4}", "coverage rate", report.coverage_rate);
    println!("{:<26}{:.4}", "threshold", report.threshold);
    println!("{:<26}{}", "result", if report.pass { "PASS" } else { "FAIL" });
    Ok(report.pass)
}

fn cmd_serve(addr: Option<String>) -> CliResult<()> {
    let mut config = ServiceConfig::from_env().map_err(|e| Failure::invalid("environment", e))?;
    if let Some(a) = addr {
        config.addr = a.parse().map_err(|e| Failure::invalid("addr", e))?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.addr).await.map_err(|e| Failure {
            code: 4,
            message: format!("cannot bind {}: {e}", config.addr),
        })?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("interrupt received, draining requests");
        };
        pdsim_service::serve(listener, AppState::new(&config), shutdown)
            .await
            .map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })
    })
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Simulate { spec, filter, out } => cmd_simulate(&spec, filter, &out)?,
        Command::Estimate {
            filter,
            input,
            out,
            level,
            params,
        } => {
            let out = out.unwrap_or_else(|| input.clone());
            cmd_estimate(filter, &input, &out, level, params.as_deref())?
        }
        Command::Coverage {
            spec,
            filter,
            n_traj,
            level,
            threshold,
            out,
        } => {
            let pass = cmd_coverage(&spec, filter, n_traj, level, threshold, &out)?;
            return Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Serve { addr } => cmd_serve(addr)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
