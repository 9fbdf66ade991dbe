use std::sync::Arc;

use proptest::prelude::*;

use poprec::basis::{build_ell, Evaluate};
use poprec::downset::generate_downset;
use poprec::estimators::attenuated_kernel;
use poprec::filter::{build_far_set, exact_t_mu_e};
use poprec::harness::{generate_population, PopulationFile, WeightProfile};
use poprec::local_inverse::{build_noise_matrix, robust_local_inverse};
use poprec::noise::{apply_t_mu_dense, apply_t_mu_inverse_dense};
use poprec::oracle::dense_kernel_oracle;
use poprec::recovery::project_to_simplex;
use poprec::rng::Executor;
use poprec::{chi, BitVec, NoiseRate};

fn bits(n: usize) -> impl Strategy<Value = BitVec> {
    (0..1u64 << n).prop_map(move |m| BitVec::from_u64(n, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn characters_are_multiplicative((s, x, y) in (bits(12), bits(12), bits(12))) {
        let lhs = chi(&s, &x.xor(&y)).unwrap();
        prop_assert_eq!(lhs, chi(&s, &x).unwrap() * chi(&s, &y).unwrap());
        prop_assert_eq!(x.distance(&y), x.xor(&y).weight());
    }

    #[test]
    fn noise_operator_inverts_and_preserves_mass(
        f in prop::collection::vec(0.0f64..1.0, 64),
        mu in 0.2f64..1.0,
    ) {
        let g = apply_t_mu_dense(&f, mu).unwrap();
        prop_assert!((g.iter().sum::<f64>() - f.iter().sum::<f64>()).abs() < 1e-10);
        prop_assert!(g.iter().all(|&v| v >= 0.0));
        let back = apply_t_mu_inverse_dense(&g, mu).unwrap();
        for (a, b) in back.iter().zip(&f) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn filter_keeps_half_the_mass_at_the_origin(
        pts in prop::collection::vec(bits(10), 1..5),
        mu in 0.6f64..1.0,
    ) {
        let mut support = vec![BitVec::zeros(10)];
        for p in pts {
            if !support.contains(&p) {
                support.push(p);
            }
        }
        let fs = build_far_set(&support, NoiseRate::new(mu).unwrap(), support.len()).unwrap();
        prop_assert!(exact_t_mu_e(&BitVec::zeros(10), &fs).unwrap() >= 0.5);
    }

    #[test]
    fn kernel_matches_the_dense_oracle(
        z in bits(9),
        s_mask in 0u64..1 << 9,
        far in prop::collection::vec(bits(9), 0..3),
        mu in 0.5f64..1.0,
    ) {
        let s = BitVec::from_u64(9, s_mask);
        prop_assume!(s.weight() <= 5);
        let mut support = vec![BitVec::zeros(9)];
        support.extend(far);
        let mu = NoiseRate::new(mu).unwrap();
        let fs = build_far_set(&support, mu, support.len()).unwrap();
        let fast = attenuated_kernel(&z, &s, mu, &fs).unwrap();
        let dense = dense_kernel_oracle(&z, &s, mu, &fs).unwrap();
        prop_assert!((fast - dense).abs() <= 1e-9 * (1.0 + dense.abs()));
    }

    #[test]
    fn local_inverse_meets_its_guarantee(delta in 0.05f64..0.6, r in 1usize..9, eps in 0.01f64..0.3) {
        let a = build_noise_matrix(delta, r).unwrap();
        let inv = robust_local_inverse(&a, eps).unwrap();
        let av = a.apply(&inv.v).unwrap();
        prop_assert!((av[0] - 1.0).abs() < 1e-9);
        prop_assert!(av[1..].iter().all(|x| x.abs() <= eps + 1e-9));
    }

    #[test]
    fn test_function_vanishes_approximately_on_the_downset(
        gens in prop::collection::vec(bits(8), 1..4),
        delta in 0.1f64..0.5,
        eta in 0.02f64..0.2,
    ) {
        let ds = Arc::new(generate_downset(&gens).unwrap());
        let ell = build_ell(&ds, delta, eta).unwrap();
        prop_assert!((ell.eval(&BitVec::zeros(8)) - 1.0).abs() < 1e-9);
        for y in ds.members().iter().filter(|y| !y.is_zero()) {
            prop_assert!(ell.eval(y).abs() <= eta * (1.0 + 1e-6));
        }
    }

    #[test]
    fn simplex_projection_is_a_projection(v in prop::collection::vec(-1.0f64..2.0, 1..8)) {
        let p = project_to_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let again = project_to_simplex(&p);
        for (a, b) in again.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shards_partition_the_range(workers in 1usize..6, total in 0usize..1000) {
        let exec = Executor::new(workers);
        let ranges = exec.map_shards(total, |_, range| range);
        let mut next = 0;
        for r in ranges {
            prop_assert_eq!(r.start, next);
            next = r.end;
        }
        prop_assert_eq!(next, total);
    }

    #[test]
    fn population_files_round_trip(n in 3usize..16, k in 1usize..6, seed in 0u64..1000) {
        let pop = generate_population(n, k, WeightProfile::Dirichlet, seed, None).unwrap();
        let mut buf = Vec::new();
        pop.write_to(&mut buf).unwrap();
        let back = PopulationFile::read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.dist.points(), pop.dist.points());
        for (a, b) in back.dist.weights().iter().zip(pop.dist.weights()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
