//! Replication harness: sample, contaminate, mix, fit, score.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contamination::{ContaminationKind, ContaminationSpec};
use super::metrics::random_mixing_matrix;
use super::sources::{sample_sources, DistributionChoice};
use crate::ica::{dcovica_fit, rica_fit, OptimizerBudget, RicaConfig};
use crate::par::{map_indexed, Execution};
use crate::{DataMatrix, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    /// MCD whitening, bowl-dCor stages, default sweeps.
    Rica,
    /// As `Rica` with sweeps disabled.
    #[serde(rename = "rica-nosweep")]
    RicaNoSweeps,
    Dcovica,
}

impl MethodKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rica" => Ok(MethodKind::Rica),
            "rica-nosweep" => Ok(MethodKind::RicaNoSweeps),
            "dcovica" => Ok(MethodKind::Dcovica),
            other => Err(Error::Validation(format!(
                "unknown method '{other}', expected rica, rica-nosweep or dcovica"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Rica => "rica",
            MethodKind::RicaNoSweeps => "rica-nosweep",
            MethodKind::Dcovica => "dcovica",
        }
    }
}

/// Everything a benchmark run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<MethodKind>,
    pub distributions: Vec<DistributionChoice>,
    #[serde(default)]
    pub contamination: ContaminationSpec,
    pub d: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Sweeps for `rica`; `None` means `d + 1`.
    #[serde(default)]
    pub sweeps: Option<usize>,
    #[serde(default = "default_mcd_starts")]
    pub mcd_starts: usize,
    #[serde(default)]
    pub budget: OptimizerBudget,
    /// Use one mixing matrix (drawn from this seed) for every replication
    /// instead of a fresh one per replication.
    #[serde(default)]
    pub fixed_mixing_seed: Option<u64>,
}

fn default_mcd_starts() -> usize {
    500
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![MethodKind::Rica, MethodKind::Dcovica],
            distributions: ('a'..='r').map(DistributionChoice::Key).collect(),
            contamination: ContaminationSpec::none(),
            d: 2,
            n: 1000,
            replications: 10,
            seed: 0,
            sweeps: None,
            mcd_starts: default_mcd_starts(),
            budget: OptimizerBudget::default(),
            fixed_mixing_seed: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Validation(
                "methods: at least one method is required".into(),
            ));
        }
        if self.distributions.is_empty() {
            return Err(Error::Validation(
                "distributions: at least one entry is required".into(),
            ));
        }
        if self.d < 2 {
            return Err(Error::Validation(format!(
                "d: must be at least 2, got {}",
                self.d
            )));
        }
        if self.n < 2 * self.d + 2 {
            return Err(Error::Validation(format!(
                "n: too small for d = {}, got {}",
                self.d, self.n
            )));
        }
        if self.mcd_starts == 0 {
            return Err(Error::Validation("mcd_starts: must be positive".into()));
        }
        self.contamination
            .validate()
            .map_err(|e| Error::Validation(format!("contamination: {e}")))
    }

    /// Fit settings for one method under this configuration.
    pub fn fit_config(&self, method: MethodKind, seed: u64) -> RicaConfig {
        let mut cfg = match method {
            MethodKind::Dcovica => RicaConfig::dcovica_baseline(),
            MethodKind::Rica => RicaConfig {
                sweeps: self.sweeps,
                ..RicaConfig::default()
            },
            MethodKind::RicaNoSweeps => RicaConfig {
                sweeps: Some(0),
                ..RicaConfig::default()
            },
        };
        cfg.seed = seed;
        cfg.budget = self.budget;
        cfg.mcd.starts = self.mcd_starts;
        cfg.mcd.execution = Execution::Sequential;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: MethodKind,
    pub distribution: String,
    pub contamination: String,
    pub d: usize,
    pub n: usize,
    /// Derived seed of the data set this trial was fitted on.
    pub seed: u64,
    /// NaN when the fit failed.
    pub amari: f64,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

impl TrialResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one (stream, index) pair under a master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(master ^ splitmix(stream)) ^ index)
}

/// One contaminated, mixed data set plus the matrix that mixed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sources: DataMatrix,
    pub mixing: DMatrix<f64>,
    /// `sources * mixing^T`, contaminated.
    pub observed: DataMatrix,
    pub seed: u64,
}

/// Data set for distribution slot `dist_index` and replication `rep`.
///
/// The contamination stream is independent of the contamination settings,
/// so runs that differ only in outlier count share their clean data and
/// their outlier rows are nested.
pub fn generate_dataset(config: &BenchConfig, dist_index: usize, rep: usize) -> Result<Dataset> {
    let seed = derive_seed(config.seed, dist_index as u64, rep as u64);
    let choice = config.distributions[dist_index];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let clean = sample_sources(&mut rng, choice, config.n, config.d)?;
    let mixing_seed = config
        .fixed_mixing_seed
        .unwrap_or_else(|| derive_seed(seed, 3, 0));
    let mixing = random_mixing_matrix(config.d, mixing_seed)?;
    let contamination_seed = derive_seed(seed, 2, 0);
    // gross single-coordinate outliers hit observations; the other schemes
    // replace source rows before mixing
    if config.contamination.kind == ContaminationKind::Increasing {
        let observed = config
            .contamination
            .apply(&(&clean * mixing.transpose()), contamination_seed)?;
        return Ok(Dataset {
            sources: clean,
            mixing,
            observed,
            seed,
        });
    }
    let sources = config.contamination.apply(&clean, contamination_seed)?;
    let observed = &sources * mixing.transpose();
    Ok(Dataset {
        sources,
        mixing,
        observed,
        seed,
    })
}

fn run_method(config: &BenchConfig, method: MethodKind, data: &Dataset) -> Result<f64> {
    let cfg = config.fit_config(method, derive_seed(data.seed, 4, 0));
    let fit = match method {
        MethodKind::Dcovica => dcovica_fit(&data.observed, &cfg)?,
        MethodKind::Rica | MethodKind::RicaNoSweeps => rica_fit(&data.observed, &cfg)?,
    };
    fit.amari_against(&data.mixing)
}

/// Runs every (distribution, replication, method) trial.
///
/// Data sets are processed in parallel under `Execution::Parallel`; each
/// fit stays single-threaded. Results are ordered by distribution, then
/// replication, then method, whatever the schedule. A failing trial is
/// recorded with `amari = NaN` and its error message.
pub fn run_benchmark(config: &BenchConfig, exec: Execution) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let nd = config.distributions.len();
    let contamination = config.contamination.label(config.n);
    let per_set = map_indexed(nd * config.replications, exec, |job| {
        let (dist_index, rep) = (job / config.replications, job % config.replications);
        let label = config.distributions[dist_index].label();
        let data = generate_dataset(config, dist_index, rep);
        config
            .methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let outcome = data
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|ds| run_method(config, method, ds));
                let runtime_seconds = start.elapsed().as_secs_f64();
                let (amari, error) = match outcome {
                    Ok(a) => (a, None),
                    Err(e) => (f64::NAN, Some(e.to_string())),
                };
                TrialResult {
                    method,
                    distribution: label.clone(),
                    contamination: contamination.clone(),
                    d: config.d,
                    n: config.n,
                    seed: derive_seed(config.seed, dist_index as u64, rep as u64),
                    amari,
                    runtime_seconds,
                    error,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(per_set.into_iter().flatten().collect())
}

pub const TRIALS_HEADER: &str = "method,distribution,contamination,d,n,seed,amari,runtime_seconds";

/// Writes trials as CSV. With `timing` off the runtime column is written as
/// zero so the file depends only on the configuration.
pub fn write_trials_csv<W: Write>(
    mut out: W,
    trials: &[TrialResult],
    timing: bool,
) -> std::io::Result<()> {
    writeln!(out, "{TRIALS_HEADER}")?;
    for t in trials {
        let runtime = if timing { t.runtime_seconds } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{},{:.17e},{:.6}",
            t.method.label(),
            t.distribution,
            t.contamination,
            t.d,
            t.n,
            t.seed,
            t.amari,
            runtime
        )?;
    }
    Ok(())
}

/// Mean Amari error x100 per distribution and method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub methods: Vec<MethodKind>,
    /// (distribution label, one mean per method; NaN when nothing succeeded).
    pub rows: Vec<(String, Vec<f64>)>,
    /// Mean over the rows above.
    pub overall: Vec<f64>,
    pub failures: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn summarize(trials: &[TrialResult], methods: &[MethodKind]) -> SummaryTable {
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, MethodKind), Vec<f64>> = BTreeMap::new();
    let mut failures = 0;
    for t in trials {
        if !order.contains(&t.distribution) {
            order.push(t.distribution.clone());
        }
        if t.is_ok() {
            cells
                .entry((t.distribution.clone(), t.method))
                .or_default()
                .push(100.0 * t.amari);
        } else {
            failures += 1;
        }
    }
    let rows: Vec<(String, Vec<f64>)> = order
        .into_iter()
        .map(|dist| {
            let means = methods
                .iter()
                .map(|&m| cells.get(&(dist.clone(), m)).map_or(f64::NAN, |v| mean(v)))
                .collect();
            (dist, means)
        })
        .collect();
    let overall = (0..methods.len())
        .map(|j| {
            mean(
                &rows
                    .iter()
                    .map(|r| r.1[j])
                    .filter(|v| v.is_finite())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    SummaryTable {
        methods: methods.to_vec(),
        rows,
        overall,
        failures,
    }
}

impl SummaryTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<&str> = self.methods.iter().map(|m| m.label()).collect();
        writeln!(out, "distribution,{}", header.join(","))?;
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.2}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        for (dist, means) in &self.rows {
            writeln!(out, "{dist},{}", fmt(means))?;
        }
        if !self.rows.is_empty() {
            writeln!(out, "mean,{}", fmt(&self.overall))?;
        }
        Ok(())
    }

    /// Mean x100 for one method in one row.
    pub fn cell(&self, distribution: &str, method: MethodKind) -> Option<f64> {
        let j = self.methods.iter().position(|&m| m == method)?;
        self.rows
            .iter()
            .find(|r| r.0 == distribution)
            .map(|r| r.1[j])
    }
}
