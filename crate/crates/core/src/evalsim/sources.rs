//! Benchmark source distributions `a` .. `r`.
//!
//! The catalogue follows the eighteen-distribution benchmark that is standard
//! in the kernel-ICA literature. Each column is standardized to zero sample
//! mean and unit sample variance after drawing.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::{DataMatrix, Error, Result};

/// Parametric family of one catalogue entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    StudentT {
        df: f64,
    },
    DoubleExponential,
    Uniform,
    Exponential,
    /// Mixture of double exponentials: (weight, location, scale).
    DoubleExponentialMixture(Vec<(f64, f64, f64)>),
    /// Mixture of normals: (weight, mean, sd).
    NormalMixture(Vec<(f64, f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub key: char,
    pub description: &'static str,
    pub family: Family,
}

/// Component weights of the nonsymmetric four-Gaussian entries.
const SKEWED_4: [f64; 4] = [0.125, 0.125, 0.25, 0.5];

fn mix(weights: &[f64], means: &[f64], sds: &[f64]) -> Vec<(f64, f64, f64)> {
    weights
        .iter()
        .zip(means)
        .zip(sds)
        .map(|((w, m), s)| (*w, *m, *s))
        .collect()
}

/// The catalogue entry for `key` in `'a'..='r'`.
pub fn source_spec(key: char) -> Result<SourceSpec> {
    use Family::*;
    let (description, family) = match key {
        'a' => ("Student t, 3 df", StudentT { df: 3.0 }),
        'b' => ("double exponential", DoubleExponential),
        'c' => ("uniform", Uniform),
        'd' => ("Student t, 5 df", StudentT { df: 5.0 }),
        'e' => ("exponential", Exponential),
        'f' => (
            "mixture of two double exponentials",
            DoubleExponentialMixture(mix(&[0.5, 0.5], &[-1.0, 1.0], &[0.5, 0.5])),
        ),
        'g' => (
            "symmetric mixture of 2 Gaussians, multimodal",
            NormalMixture(mix(&[0.5, 0.5], &[-0.5, 0.5], &[0.15, 0.15])),
        ),
        'h' => (
            "symmetric mixture of 2 Gaussians, transitional",
            NormalMixture(mix(&[0.5, 0.5], &[-0.5, 0.5], &[0.4, 0.4])),
        ),
        'i' => (
            "symmetric mixture of 2 Gaussians, unimodal",
            NormalMixture(mix(&[0.5, 0.5], &[-0.5, 0.5], &[0.5, 0.5])),
        ),
        'j' => (
            "nonsymmetric mixture of 2 Gaussians, multimodal",
            NormalMixture(mix(&[0.25, 0.75], &[-0.5, 0.5], &[0.15, 0.15])),
        ),
        'k' => (
            "nonsymmetric mixture of 2 Gaussians, transitional",
            NormalMixture(mix(&[0.25, 0.75], &[-0.7, 0.5], &[0.4, 0.4])),
        ),
        'l' => (
            "nonsymmetric mixture of 2 Gaussians, unimodal",
            NormalMixture(mix(&[0.25, 0.75], &[-0.7, 0.5], &[0.5, 0.5])),
        ),
        'm' => (
            "symmetric mixture of 4 Gaussians, multimodal",
            NormalMixture(mix(&[0.25; 4], &[-1.0, -0.33, 0.33, 1.0], &[0.16; 4])),
        ),
        'n' => (
            "symmetric mixture of 4 Gaussians, transitional",
            NormalMixture(mix(&[0.25; 4], &[-1.0, -0.2, 0.2, 1.0], &[0.2; 4])),
        ),
        'o' => (
            "symmetric mixture of 4 Gaussians, unimodal",
            NormalMixture(mix(&[0.25; 4], &[-0.7, -0.2, 0.2, 0.7], &[0.2; 4])),
        ),
        'p' => (
            "nonsymmetric mixture of 4 Gaussians, multimodal",
            NormalMixture(mix(&SKEWED_4, &[-1.0, -0.33, 0.33, 1.0], &[0.16; 4])),
        ),
        'q' => (
            "nonsymmetric mixture of 4 Gaussians, transitional",
            NormalMixture(mix(&SKEWED_4, &[-1.0, -0.2, 0.2, 1.0], &[0.2; 4])),
        ),
        'r' => (
            "nonsymmetric mixture of 4 Gaussians, unimodal",
            NormalMixture(mix(&SKEWED_4, &[-0.7, -0.2, 0.2, 0.7], &[0.2; 4])),
        ),
        other => {
            return Err(Error::Validation(format!(
                "unknown source distribution '{other}', expected a..r"
            )))
        }
    };
    Ok(SourceSpec {
        key,
        description,
        family,
    })
}

pub fn catalogue() -> Vec<SourceSpec> {
    ('a'..='r')
        .map(|k| source_spec(k).expect("catalogue key"))
        .collect()
}

fn pick_component<R: Rng + ?Sized>(rng: &mut R, comps: &[(f64, f64, f64)]) -> (f64, f64) {
    let total: f64 = comps.iter().map(|c| c.0).sum();
    let mut u = rng.random::<f64>() * total;
    for &(w, loc, scale) in comps {
        if u < w {
            return (loc, scale);
        }
        u -= w;
    }
    let last = comps[comps.len() - 1];
    (last.1, last.2)
}

fn laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        e
    } else {
        -e
    }
}

impl SourceSpec {
    /// One raw (unstandardized) draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::StudentT { df } => StudentT::new(*df).expect("positive df").sample(rng),
            Family::DoubleExponential => laplace(rng),
            Family::Uniform => Uniform::new(0.0, 1.0).expect("unit interval").sample(rng),
            Family::Exponential => Exp1.sample(rng),
            Family::DoubleExponentialMixture(c) => {
                let (loc, scale) = pick_component(rng, c);
                loc + scale * laplace(rng)
            }
            Family::NormalMixture(c) => {
                let (mean, sd) = pick_component(rng, c);
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }

    /// `n` draws standardized to zero mean and unit variance.
    pub fn sample_standardized<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| self.draw(rng)).collect();
        standardize(&mut v);
        v
    }
}

pub fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}

/// Which catalogue entries feed the source columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type", content = "key")]
pub enum DistributionChoice {
    /// Every column from the same entry.
    Key(char),
    /// Each column from an entry drawn uniformly at random.
    Random,
}

impl DistributionChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" | "mixed" => Ok(DistributionChoice::Random),
            k if k.chars().count() == 1 => {
                let c = k.chars().next().expect("one char");
                source_spec(c)?;
                Ok(DistributionChoice::Key(c))
            }
            other => Err(Error::Validation(format!("unknown distribution '{other}'"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DistributionChoice::Key(c) => c.to_string(),
            DistributionChoice::Random => "random".to_string(),
        }
    }
}

/// n x d independent standardized sources.
pub fn sample_sources<R: Rng + ?Sized>(
    rng: &mut R,
    choice: DistributionChoice,
    n: usize,
    d: usize,
) -> Result<DataMatrix> {
    let mut s = DataMatrix::zeros(n, d);
    for j in 0..d {
        let key = match choice {
            DistributionChoice::Key(k) => k,
            DistributionChoice::Random => (b'a' + rng.random_range(0..18u8)) as char,
        };
        let col = source_spec(key)?.sample_standardized(rng, n);
        s.column_mut(j).copy_from_slice(&col);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eighteen_entries() {
        let cat = catalogue();
        assert_eq!(cat.len(), 18);
        assert_eq!(cat[0].key, 'a');
        assert_eq!(cat[17].key, 'r');
        assert!(source_spec('s').is_err());
    }

    #[test]
    fn columns_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in catalogue() {
            let v = spec.sample_standardized(&mut rng, 500);
            let mean = v.iter().sum::<f64>() / 500.0;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 499.0;
            assert!(mean.abs() < 1e-12, "{}", spec.key);
            assert!((var - 1.0).abs() < 1e-12, "{}", spec.key);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_sources(
            &mut ChaCha8Rng::seed_from_u64(3),
            DistributionChoice::Random,
            50,
            3,
        )
        .unwrap();
        let b = sample_sources(
            &mut ChaCha8Rng::seed_from_u64(3),
            DistributionChoice::Random,
            50,
            3,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_choices() {
        assert_eq!(
            DistributionChoice::parse("e").unwrap(),
            DistributionChoice::Key('e')
        );
        assert_eq!(
            DistributionChoice::parse("random").unwrap(),
            DistributionChoice::Random
        );
        assert!(DistributionChoice::parse("z").is_err());
        assert!(DistributionChoice::parse("ab").is_err());
    }
}
