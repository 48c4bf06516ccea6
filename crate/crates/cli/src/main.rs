//! `rica`: robust ICA on delimited data files, simulation benchmarks and
//! standalone dependence measurement.

mod commands;
mod error;
mod input;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rica::evalsim::{
    BenchConfig, ContaminationKind, ContaminationSpec, DistributionChoice, MethodKind,
};

use commands::{canonical, Outcome};
use error::{CliError, CliResult};
use manifest::{BenchSettings, DcorSettings, Invocation, Transform, UnmixSettings};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_OUT_DIR: &str = "rica-out";

#[derive(Parser)]
#[command(
    name = "rica",
    version,
    about = "Robust independent component analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate independent sources from a delimited data file.
    Unmix(UnmixArgs),
    /// Run a seeded simulation benchmark.
    Bench(BenchArgs),
    /// Distance covariance and correlation between two column groups.
    Dcor(DcorArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rica,
    RicaNosweep,
    Dcovica,
}

impl From<MethodArg> for MethodKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rica => MethodKind::Rica,
            MethodArg::RicaNosweep => MethodKind::RicaNoSweeps,
            MethodArg::Dcovica => MethodKind::Dcovica,
        }
    }
}

#[derive(Args)]
struct UnmixArgs {
    /// Observations, one per row.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rica")]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Sweeps after the first pass (default d + 1).
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long, default_value_t = 500)]
    mcd_starts: usize,
    /// d x d mixing matrix A with x = A s; reports the Amari error.
    #[arg(long)]
    true_mixing: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_OUT_DIR)]
    out_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON benchmark configuration; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<MethodArg>>,
    /// Comma-separated catalogue keys a..r, or `random`.
    #[arg(long, value_delimiter = ',')]
    distributions: Option<Vec<String>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    contamination: Option<String>,
    #[arg(long)]
    fraction: Option<f64>,
    /// Outlier count for the increasing scheme.
    #[arg(long)]
    count: Option<usize>,
    /// Multiplicative scheme: one min/max choice per row instead of per entry.
    #[arg(long)]
    per_row: bool,
    #[arg(long)]
    mcd_starts: Option<usize>,
    /// Use one mixing matrix drawn from this seed for every replication.
    #[arg(long)]
    fixed_mixing_seed: Option<u64>,
    /// Write measured runtimes (otherwise zero, keeping outputs reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value = DEFAULT_OUT_DIR)]
    out_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    None,
    Bowl,
    Biloop,
}

#[derive(Args)]
struct DcorArgs {
    input: PathBuf,
    /// 0-based column indices of the first sample.
    #[arg(long, value_delimiter = ',', required = true)]
    cols_x: Vec<usize>,
    /// 0-based column indices of the second sample.
    #[arg(long, value_delimiter = ',', required = true)]
    cols_y: Vec<usize>,
    #[arg(long, value_enum, default_value = "none")]
    transform: TransformArg,
    #[arg(long)]
    json: bool,
    /// Also write report.json and a manifest here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn bench_config(args: &BenchArgs) -> CliResult<BenchConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => BenchConfig::default(),
    };
    let cfg_err = |key: &str, e: rica::Error| CliError::Config(format!("{key}: {e}"));
    if let Some(m) = &args.method {
        cfg.methods = m.iter().map(|&m| m.into()).collect();
    }
    if let Some(ds) = &args.distributions {
        cfg.distributions = ds
            .iter()
            .map(|s| DistributionChoice::parse(s).map_err(|e| cfg_err("distributions", e)))
            .collect::<CliResult<_>>()?;
    }
    cfg.d = args.d.unwrap_or(cfg.d);
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.replications = args.replications.unwrap_or(cfg.replications);
    cfg.seed = args.seed.unwrap_or(if args.config.is_some() {
        cfg.seed
    } else {
        DEFAULT_SEED
    });
    cfg.sweeps = args.sweeps.or(cfg.sweeps);
    cfg.mcd_starts = args.mcd_starts.unwrap_or(cfg.mcd_starts);
    cfg.fixed_mixing_seed = args.fixed_mixing_seed.or(cfg.fixed_mixing_seed);
    if args.contamination.is_some()
        || args.fraction.is_some()
        || args.count.is_some()
        || args.per_row
    {
        let kind = match &args.contamination {
            Some(k) => ContaminationKind::parse(k).map_err(|e| cfg_err("contamination", e))?,
            None => cfg.contamination.kind,
        };
        let fraction = args
            .fraction
            .unwrap_or(ContaminationSpec::default().fraction);
        cfg.contamination = match kind {
            ContaminationKind::None => ContaminationSpec {
                fraction,
                ..ContaminationSpec::none()
            },
            ContaminationKind::Clustered => ContaminationSpec::clustered(fraction),
            ContaminationKind::Multiplicative => ContaminationSpec {
                per_column_choice: !args.per_row,
                ..ContaminationSpec::multiplicative(fraction)
            },
            ContaminationKind::Increasing => match args.count {
                Some(c) => ContaminationSpec::increasing(c),
                None => ContaminationSpec {
                    kind,
                    fraction,
                    ..ContaminationSpec::default()
                },
            },
        };
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Unmix(a) => {
            let settings = UnmixSettings {
                input: canonical(&a.input)?,
                method: a.method.into(),
                seed: a.seed,
                sweeps: a.sweeps,
                mcd_starts: a.mcd_starts,
                true_mixing: a.true_mixing.as_deref().map(canonical).transpose()?,
            };
            let (outcome, inputs) = commands::unmix(&settings, a.json, None)?;
            outcome.commit(&a.out_dir, Invocation::Unmix(settings), inputs)
        }
        Command::Bench(a) => {
            let settings = BenchSettings {
                bench: bench_config(&a)?,
                timing: a.timing,
            };
            commands::bench(&settings, a.json)?.commit(
                &a.out_dir,
                Invocation::Bench(settings),
                Vec::new(),
            )
        }
        Command::Dcor(a) => {
            let settings = DcorSettings {
                input: canonical(&a.input)?,
                cols_x: a.cols_x,
                cols_y: a.cols_y,
                transform: match a.transform {
                    TransformArg::None => Transform::None,
                    TransformArg::Bowl => Transform::Bowl,
                    TransformArg::Biloop => Transform::Biloop,
                },
            };
            let (report, digest) = commands::dcor(&settings, None)?;
            let text = commands::dcor_text(&report, a.json);
            match a.out_dir {
                Some(dir) => {
                    let outcome = Outcome {
                        files: vec![("report.json".into(), commands::dcor_text(&report, true))],
                        stdout: text,
                    };
                    outcome.commit(&dir, Invocation::Dcor(settings), vec![digest])
                }
                None => Ok(text),
            }
        }
        Command::Replay(a) => commands::replay(&a.manifest, a.out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rica: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
