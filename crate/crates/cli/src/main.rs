use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use ustat_core::harness::{
    config_value, parse_config_text, run_convergence_experiment, run_rate_experiment, write_output,
    ExperimentConfig, OutputFormat,
};
use ustat_core::kernels::CATALOG;
use ustat_core::{w2_empirical_empirical, w2_empirical_gaussian, EmpiricalDistribution, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "ustat-lab", version, about = "Convergence experiments for U-statistics in Wasserstein-2 distance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicate sqrt(n) U_h over an n-grid and report d2 to the Gaussian limit
    Converge(ExperimentArgs),
    /// Fit log-log slopes of the Hoeffding component norms
    Rates(ExperimentArgs),
    /// Applicability, degeneracy and integrability diagnostics as JSON
    Diagnose(ExperimentArgs),
    /// d2 between two samples (one number per line), or a sample and N(0, s^2)
    W2 {
        a: PathBuf,
        b: Option<PathBuf>,
        /// Compare against N(0, s^2) instead of a second sample
        #[arg(long, value_name = "S", conflicts_with = "b")]
        normal: Option<f64>,
    },
    /// List built-in kernels and process families
    Catalog,
}

#[derive(Args)]
struct ExperimentArgs {
    /// key = value lines or a JSON object
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    /// e.g. iid_normal(0,1), ar1_gaussian(0.5,1), ma_q_gaussian(1,0.4)@poly(6)
    #[arg(long)]
    process: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["analytic", "estimated"])]
    sigma: Option<String>,
    /// Component orders for `rates`
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Directory for the output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, as key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut map = match &self.config {
            Some(path) => parse_config_text(&read(path)?)?,
            None => Map::new(),
        };
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {item:?}")))?;
            map.insert(k.trim().replace('-', "_"), config_value(v.trim()));
        }
        let mut put = |key: &str, value: Option<Value>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        put("kernel", self.kernel.clone().map(Value::from));
        put("process", self.process.clone().map(Value::from));
        put("n_grid", self.n_grid.clone().map(|g| json!(g)));
        put("reps", self.reps.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("sigma", self.sigma.clone().map(Value::from));
        put("orders", self.orders.clone().map(|o| json!(o)));
        put("format", self.format.clone().map(Value::from));
        put("out", self.out.as_ref().map(|p| Value::from(p.display().to_string())));
        ExperimentConfig::from_map(map)
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_sample(path: &Path) -> Result<EmpiricalDistribution, Error> {
    let values = read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: not a number: {l:?}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    EmpiricalDistribution::new(values)
}

fn emit(cfg: &ExperimentConfig, stem: &str, text: &str) -> Result<(), Error> {
    match &cfg.out {
        Some(dir) => {
            let ext = match cfg.format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            };
            let path = write_output(dir, &format!("{stem}.{ext}"), text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Converge(args) => {
            let cfg = args.resolve()?;
            let report = run_convergence_experiment(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&cfg, "convergence", &report.render(cfg.format)?)
        }
        Command::Rates(args) => {
            let cfg = args.resolve()?;
            let report = run_rate_experiment(&cfg)?;
            emit(&cfg, "rates", &report.render(cfg.format)?)
        }
        Command::Diagnose(args) => {
            let cfg = args.resolve()?;
            let report = run_convergence_experiment(&cfg)?;
            let summary = json!({
                "config_hash": report.config_hash,
                "kernel": cfg.kernel,
                "process": cfg.process.to_string(),
                "applicability": report.applicability,
                "degeneracy_order": report.degeneracy_order,
                "degenerate": report.degenerate,
                "sigma_sq": report.sigma_sq,
                "sigma_sq_se": report.sigma_sq_se,
                "sigma_source": report.sigma_source,
                "second_moments": report.records.iter().map(|r| json!({
                    "n": r.n, "mean_square": r.mean_square, "se": r.mean_square_se,
                })).collect::<Vec<_>>(),
                "ui_profile": report.ui_profile,
                "warnings": report.warnings,
            });
            let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Numeric(e.to_string()))?;
            emit(&ExperimentConfig { format: OutputFormat::Json, ..cfg }, "diagnostics", &(text + "\n"))
        }
        Command::W2 { a, b, normal } => {
            let a = read_sample(&a)?;
            let d = match (b, normal) {
                (Some(b), None) => w2_empirical_empirical(&a, &read_sample(&b)?),
                (None, Some(sigma)) => w2_empirical_gaussian(&a, sigma)?,
                _ => return Err(Error::Config("give a second sample file or --normal S".into())),
            };
            println!("{d}");
            Ok(())
        }
        Command::Catalog => {
            println!("kernels:");
            for (name, degree, formula) in CATALOG {
                println!("  {name:<10} m={degree}  {formula}");
            }
            println!("processes:");
            for p in [
                "iid_normal(mean,sd)",
                "iid_uniform(low,high)",
                "iid_pareto(shape,scale)",
                "ar1_gaussian(phi,innovation_sd)",
                "ma_q_gaussian(c0,c1,...,cq)",
                "<any>@poly(r)   declared beta(n) = O(n^-r)",
            ] {
                println!("  {p}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERIC })
        }
    }
}
