use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rica::evalsim::{
    amari_error, condition_number, contaminate_clustered, contaminate_increasing,
    contaminate_multiplicative, contaminate_multiplicative_with, random_mixing_draw,
    sample_sources, DistributionChoice,
};

fn perm_matrix(perm: &[usize]) -> DMatrix<f64> {
    let d = perm.len();
    DMatrix::from_fn(d, d, |i, j| if perm[i] == j { 1.0 } else { 0.0 })
}

fn perm_and_scale() -> impl Strategy<Value = (DMatrix<f64>, Vec<usize>, Vec<f64>, f64)> {
    (2usize..6).prop_flat_map(|d| {
        (
            prop::collection::vec(-3.0..3.0f64, d * d)
                .prop_map(move |v| DMatrix::from_vec(d, d, v)),
            Just((0..d).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::vec(prop_oneof![Just(-1.0f64), Just(1.0f64)], d),
            prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
        )
    })
}

proptest! {
    #[test]
    fn amari_invariant_to_signed_permutation((p, perm, signs, c) in perm_and_scale()) {
        prop_assume!(p.row_iter().all(|r| r.amax() > 0.0) && p.column_iter().all(|c| c.amax() > 0.0));
        let base = amari_error(&p).unwrap();
        let dp = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(signs)) * perm_matrix(&perm) * c;
        prop_assert!((amari_error(&(&dp * &p)).unwrap() - base).abs() < 1e-12);
        prop_assert!((amari_error(&(&p * &dp)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn scaled_signed_permutations_score_zero((p, perm, _signs, _c) in perm_and_scale()) {
        let scale = nalgebra::DVector::from_iterator(p.nrows(), p.column(0).iter().map(|v| v.abs() + 0.1));
        let dp = DMatrix::from_diagonal(&scale) * perm_matrix(&perm);
        prop_assert!(amari_error(&dp).unwrap().abs() < 1e-12);
    }
}

#[test]
fn amari_range_and_random_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut sum2 = 0.0;
    for i in 0..100_000 {
        let d = 2 + i % 4;
        let p = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = amari_error(&p).unwrap();
        assert!((0.0..=1.0).contains(&a));
        if d == 2 && i < 4000 {
            sum2 += a;
        }
    }
    let mean = sum2 / 1000.0;
    assert!((0.35..=0.45).contains(&mean), "{mean}");
}

#[test]
fn mixing_acceptance_rate_fixture() {
    let total: usize = (0..1000)
        .map(|s| random_mixing_draw(2, s).unwrap().draws)
        .sum();
    // regression guard for the rejection sampler and its seeding
    assert_eq!(total, 5032);
    let rate = 1000.0 / total as f64;
    assert!((0.17..0.23).contains(&rate));
    for s in 0..50 {
        let c = condition_number(&random_mixing_draw(4, s).unwrap().matrix);
        assert!((1.0..=2.0).contains(&c));
    }
}

fn sources(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    sample_sources(
        &mut ChaCha8Rng::seed_from_u64(seed),
        DistributionChoice::Random,
        n,
        d,
    )
    .unwrap()
}

fn changed(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<usize> {
    (0..a.nrows()).filter(|&i| a.row(i) != b.row(i)).collect()
}

#[test]
fn generators_change_exactly_the_requested_rows() {
    for seed in 0..20 {
        let s = sources(300, 3, seed);
        for f in [0.0, 0.05, 0.1, 0.5] {
            let m = (f * 300.0f64).floor() as usize;
            assert_eq!(
                changed(&s, &contaminate_clustered(&s, f, seed).unwrap()).len(),
                m
            );
            assert_eq!(
                changed(&s, &contaminate_multiplicative(&s, f, seed).unwrap()).len(),
                m
            );
        }
        assert_eq!(
            changed(&s, &contaminate_increasing(&s, 60, seed).unwrap()).len(),
            60
        );
    }
}

#[test]
fn clustered_coordinates_average_fifteen() {
    let s = sources(1000, 2, 1);
    let mut total = 0.0;
    let mut count = 0;
    for seed in 0..200 {
        let c = contaminate_clustered(&s, 0.1, seed).unwrap();
        for i in changed(&s, &c) {
            total += c[(i, 0)] + c[(i, 1)];
            count += 2;
        }
    }
    assert!((total / count as f64 - 15.0).abs() < 0.01);
}

// Straight-line second implementation of the multiplicative sampler, on its
// own random stream; only the distribution of replaced values is compared.
fn oracle_mean_abs(s: &DMatrix<f64>, fraction: f64, per_column: bool, reps: u64) -> f64 {
    let (n, d) = s.shape();
    let m = (fraction * n as f64).floor() as usize;
    let mins: Vec<f64> = (0..d).map(|j| s.column(j).min()).collect();
    let maxs: Vec<f64> = (0..d).map(|j| s.column(j).max()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xdead_beef);
    let mut total = 0.0;
    for _ in 0..reps {
        let rows = sample_indices(&mut rng, n, m);
        for _ in rows.iter() {
            let w = loop {
                let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                if w.iter().sum::<f64>() > 1.0 {
                    break w;
                }
            };
            let row_pick: bool = rng.random();
            for j in 0..d {
                let pick = if per_column { rng.random() } else { row_pick };
                total += (w[j] * d as f64 * if pick { maxs[j] } else { mins[j] }).abs();
            }
        }
    }
    total / (reps as usize * m * d) as f64
}

#[test]
fn multiplicative_matches_independent_oracle() {
    let s = sources(200, 3, 9);
    for per_column in [false, true] {
        let mut total = 0.0;
        let mut count = 0;
        for seed in 0..1000 {
            let c = contaminate_multiplicative_with(&s, 0.1, seed, per_column).unwrap();
            for i in changed(&s, &c) {
                total += c.row(i).iter().map(|v| v.abs()).sum::<f64>();
                count += 3;
            }
        }
        let lib = total / count as f64;
        let oracle = oracle_mean_abs(&s, 0.1, per_column, 1000);
        assert!((lib - oracle).abs() < 0.02 * oracle, "{lib} vs {oracle}");
    }
}
