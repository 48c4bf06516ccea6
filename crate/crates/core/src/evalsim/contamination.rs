//! Outlier generators. Each one replaces whole rows of a source matrix and
//! leaves every other row untouched.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{DataMatrix, Error, Result};

/// Mean of every coordinate of a clustered outlier.
pub const CLUSTER_CENTER: f64 = 15.0;
/// Value (with random sign) written by the increasing scheme.
pub const INCREASING_MAGNITUDE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContaminationKind {
    None,
    Clustered,
    Multiplicative,
    Increasing,
}

impl ContaminationKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ContaminationKind::None),
            "clustered" => Ok(ContaminationKind::Clustered),
            "multiplicative" => Ok(ContaminationKind::Multiplicative),
            "increasing" => Ok(ContaminationKind::Increasing),
            other => Err(Error::Validation(format!(
                "unknown contamination '{other}'"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ContaminationKind::None => "none",
            ContaminationKind::Clustered => "clustered",
            ContaminationKind::Multiplicative => "multiplicative",
            ContaminationKind::Increasing => "increasing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub kind: ContaminationKind,
    /// Fraction of replaced rows (clustered, multiplicative; increasing when
    /// `count` is absent).
    pub fraction: f64,
    /// Exact outlier count for the increasing scheme.
    #[serde(default)]
    pub count: Option<usize>,
    /// Multiplicative scheme: draw min/max per column instead of once per row.
    #[serde(default)]
    pub per_column_choice: bool,
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        ContaminationSpec {
            kind: ContaminationKind::None,
            fraction: 0.10,
            count: None,
            per_column_choice: false,
        }
    }
}

impl ContaminationSpec {
    pub fn none() -> Self {
        ContaminationSpec::default()
    }

    pub fn clustered(fraction: f64) -> Self {
        ContaminationSpec {
            kind: ContaminationKind::Clustered,
            fraction,
            ..Self::default()
        }
    }

    /// Multiplicative outliers as used by the benchmark: min/max drawn per column.
    pub fn multiplicative(fraction: f64) -> Self {
        ContaminationSpec {
            kind: ContaminationKind::Multiplicative,
            fraction,
            per_column_choice: true,
            ..Self::default()
        }
    }

    pub fn increasing(count: usize) -> Self {
        ContaminationSpec {
            kind: ContaminationKind::Increasing,
            fraction: 0.0,
            count: Some(count),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.fraction)
    }

    /// Label used in result tables, e.g. `clustered` or `increasing:50`.
    pub fn label(&self, n: usize) -> String {
        match self.kind {
            ContaminationKind::Increasing => format!("increasing:{}", self.increasing_count(n)),
            k => k.label().to_string(),
        }
    }

    fn increasing_count(&self, n: usize) -> usize {
        self.count
            .unwrap_or((self.fraction * n as f64).floor() as usize)
    }

    pub fn apply(&self, s: &DataMatrix, seed: u64) -> Result<DataMatrix> {
        self.validate()?;
        match self.kind {
            ContaminationKind::None => Ok(s.clone()),
            ContaminationKind::Clustered => contaminate_clustered(s, self.fraction, seed),
            ContaminationKind::Multiplicative => {
                contaminate_multiplicative_with(s, self.fraction, seed, self.per_column_choice)
            }
            ContaminationKind::Increasing => {
                contaminate_increasing(s, self.increasing_count(s.nrows()), seed)
            }
        }
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::Validation(format!(
            "contamination fraction must lie in [0, 0.5], got {fraction}"
        )));
    }
    Ok(())
}

/// Rows replaced for a given fraction, chosen uniformly without replacement.
pub fn replaced_rows(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = (fraction * n as f64).floor() as usize;
    let mut rows = sample_indices(rng, n, m).into_vec();
    rows.sort_unstable();
    rows
}

/// Replaces `floor(fraction * n)` rows by independent `N(15, 1)` coordinates.
pub fn contaminate_clustered(s: &DataMatrix, fraction: f64, seed: u64) -> Result<DataMatrix> {
    check_fraction(fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = replaced_rows(s.nrows(), fraction, &mut rng);
    let normal = Normal::new(CLUSTER_CENTER, 1.0).expect("unit sd");
    let mut out = s.clone();
    for &i in &rows {
        for j in 0..s.ncols() {
            out[(i, j)] = normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Multiplicative outliers with one min/max choice per row.
pub fn contaminate_multiplicative(s: &DataMatrix, fraction: f64, seed: u64) -> Result<DataMatrix> {
    contaminate_multiplicative_with(s, fraction, seed, false)
}

/// Each replaced row becomes `d * w_j * extreme_j`, where `w` is uniform on
/// `[0,1]^d` redrawn until its sum exceeds one and `extreme_j` is the
/// minimum or maximum of column `j` of the input.
pub fn contaminate_multiplicative_with(
    s: &DataMatrix,
    fraction: f64,
    seed: u64,
    per_column_choice: bool,
) -> Result<DataMatrix> {
    check_fraction(fraction)?;
    let (n, d) = s.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = replaced_rows(n, fraction, &mut rng);
    let mins: Vec<f64> = s.column_iter().map(|c| c.min()).collect();
    let maxs: Vec<f64> = s.column_iter().map(|c| c.max()).collect();
    let mut out = s.clone();
    let mut w = vec![0.0; d];
    for &i in &rows {
        loop {
            for v in w.iter_mut() {
                *v = rng.random::<f64>();
            }
            if w.iter().sum::<f64>() > 1.0 {
                break;
            }
        }
        let row_max = rng.random::<bool>();
        for j in 0..d {
            let use_max = if per_column_choice {
                rng.random::<bool>()
            } else {
                row_max
            };
            let extreme = if use_max { maxs[j] } else { mins[j] };
            out[(i, j)] = w[j] * d as f64 * extreme;
        }
    }
    Ok(out)
}

/// `count` distinct rows, each with one random coordinate set to +5 or -5.
///
/// Rows are the first `count` entries of a seeded shuffle, so with a fixed
/// seed the outliers at a smaller count are a subset of those at a larger one.
pub fn contaminate_increasing(s: &DataMatrix, count: usize, seed: u64) -> Result<DataMatrix> {
    let (n, d) = s.shape();
    if 5 * count > n {
        return Err(Error::Validation(format!(
            "increasing contamination allows at most 20% of rows ({} of {n}), got {count}",
            n / 5
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let picks: Vec<(usize, f64)> = order
        .iter()
        .map(|_| {
            let j = rng.random_range(0..d);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (j, sign)
        })
        .collect();
    let mut out = s.clone();
    for (&i, &(j, sign)) in order.iter().zip(&picks).take(count) {
        out[(i, j)] = sign * INCREASING_MAGNITUDE;
    }
    Ok(out)
}
