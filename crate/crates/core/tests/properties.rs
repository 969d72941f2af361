use std::sync::Arc;

use polylab::environment::EnvMode;
use polylab::seed::{derive_seed, stream, Purpose};
use polylab::stats::{log_mean_exp, log_sum_exp};
use polylab::{CovarianceKernel, EnvironmentRealization, PathEnsemble, PolymerRun};
use proptest::prelude::*;

fn kernels(dim: usize) -> Vec<CovarianceKernel> {
    vec![
        CovarianceKernel::gaussian(1.7, 0.6, dim).unwrap(),
        CovarianceKernel::cauchy(0.8, 0.4, dim).unwrap(),
        CovarianceKernel::user_radial(2.0, dim, |r| 1.0 / (1.0 + r).powi(3)).unwrap(),
    ]
}

fn paths(n: usize, steps: usize, dim: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = stream(seed, Purpose::Paths, 0);
    let ens = PathEnsemble::sample(n, steps, 0.05, &vec![0.0; dim], &mut rng).unwrap();
    (0..n)
        .map(|j| (0..=steps).map(|i| ens.position(j, i).to_vec()).collect())
        .collect()
}

fn run_of(paths: &[Vec<Vec<f64>>], beta: f64, seed: u64) -> PolymerRun {
    let dim = paths[0][0].len();
    let steps = paths[0].len() - 1;
    let k = CovarianceKernel::gaussian(1.0, 1.0, dim).unwrap();
    let env = EnvironmentRealization::new(&k, EnvMode::Spectral, steps, 0.05, 32, seed).unwrap();
    let ens = PathEnsemble::from_paths(paths, 0.05).unwrap();
    PolymerRun::accumulate(Arc::new(ens), Arc::new(env), beta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_bounded_by_its_value_at_origin(x in prop::collection::vec(-30.0f64..30.0, 2)) {
        for k in kernels(2) {
            let q = k.eval(&x).unwrap();
            let q0 = k.eval(&[0.0, 0.0]).unwrap();
            prop_assert_eq!(q0, k.sigma2());
            prop_assert!(q >= 0.0 && q <= q0, "{:?} {q}", k.family());
            // strict positivity survives in log space where q underflows
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let lq = k.ln_radial(r);
            prop_assert!(lq.is_finite() && lq <= q0.ln() + 1e-12, "{:?} {lq}", k.family());
        }
    }

    #[test]
    fn kernel_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 3), y in prop::collection::vec(-5.0f64..5.0, 3)) {
        for k in kernels(3) {
            prop_assert_eq!(k.eval_between(&x, &y).unwrap(), k.eval_between(&y, &x).unwrap());
        }
    }

    #[test]
    fn log_sum_exp_brackets(xs in prop::collection::vec(-800.0f64..800.0, 1..40)) {
        let peak = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let l = log_sum_exp(&xs);
        prop_assert!(l >= peak);
        prop_assert!(l <= peak + (xs.len() as f64).ln() + 1e-12);
        let m = log_mean_exp(&xs);
        prop_assert!(m <= peak + 1e-12);
    }

    #[test]
    fn distinct_tags_and_indices_give_distinct_seeds(master in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        prop_assume!(i != j);
        let tags = [Purpose::Paths, Purpose::Environment, Purpose::Frequencies, Purpose::Coefficients, Purpose::Resampling];
        for a in tags {
            prop_assert_ne!(derive_seed(master, a, i), derive_seed(master, a, j));
            for b in tags {
                if a != b {
                    prop_assert_ne!(derive_seed(master, a, i), derive_seed(master, b, i));
                }
            }
        }
    }

    #[test]
    fn unit_observable_gibbs_average_is_one(seed in 0u64..1000, beta in 0.0f64..3.0, t in 0usize..=10) {
        let r = run_of(&paths(6, 10, 1, seed), beta, seed);
        prop_assert_eq!(r.gibbs_pair_average(t, |_, _| 1.0).unwrap(), 1.0);
    }

    #[test]
    fn overlap_is_invariant_under_replica_permutation(
        seed in 0u64..1000,
        beta in 0.0f64..2.0,
        perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let original = paths(7, 12, 2, seed);
        let permuted: Vec<_> = perm.iter().map(|&j| original[j].clone()).collect();
        let a = run_of(&original, beta, seed).overlap_estimate(12).unwrap();
        let b = run_of(&permuted, beta, seed).overlap_estimate(12).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn normalized_partition_matches_annealed_scaling(seed in 0u64..1000, beta in 0.0f64..2.0) {
        let r = run_of(&paths(5, 10, 1, seed), beta, seed);
        for i in 0..=10 {
            let z = r.partition_estimate(i).unwrap().log;
            let w = r.normalized_partition(i).unwrap().log;
            let expected = z - beta * beta * r.time(i) / 2.0;
            prop_assert!((w - expected).abs() <= 1e-12 * (1.0 + z.abs()));
        }
    }
}

#[test]
fn identical_seeds_replay_bit_for_bit() {
    let a = run_of(&paths(9, 15, 2, 4), 0.8, 4);
    let b = run_of(&paths(9, 15, 2, 4), 0.8, 4);
    for i in 0..=15 {
        assert_eq!(a.hamiltonians(i), b.hamiltonians(i));
    }
    let c = run_of(&paths(9, 15, 2, 4), 0.8, 5);
    assert_ne!(a.hamiltonians(15), c.hamiltonians(15));
}
