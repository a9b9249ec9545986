use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ids_core::bratteli::{cauchy_report, ids_approx, transition_weights};
use ids_core::checks;
use ids_core::lattice::{self, Region};
use ids_core::linalg::{self, DEFAULT_RANK_TOL};
use ids_core::models::{enumerate_configs, sample_config, sample_config_stream, DisorderModel};
use ids_core::selfsimilar::{build_level, pattern_operator, PatternKernel, SelfSimilarSpec};
use ids_core::stepfn::{sup_distance, StepFunction};

fn model_strategy() -> impl Strategy<Value = DisorderModel> {
    prop_oneof![
        (proptest::collection::vec(-2.0f64..4.0, 1..4)).prop_filter_map("distinct values", |mut v| {
            v.sort_by(f64::total_cmp);
            v.dedup();
            DisorderModel::uniform_site_potential(v).ok()
        }),
        (0.05f64..0.95).prop_map(|p| DisorderModel::bond_percolation(p).unwrap()),
        (0.05f64..0.95).prop_map(|p| DisorderModel::site_percolation(p).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_is_lipschitz_in_the_rank_metric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = checks::random_low_rank_pair(&mut rng, 3, 6);
        let d = sup_distance(&a.sigma().unwrap(), &b.sigma().unwrap());
        let r = a.sub(&b).unwrap().rank(DEFAULT_RANK_TOL).unwrap();
        prop_assert!(d <= r + 1e-12, "{} > {}", d, r);
    }

    #[test]
    fn rank_is_a_pseudometric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = checks::random_low_rank_pair(&mut rng, 3, 6);
        let tol = DEFAULT_RANK_TOL;
        let dab = a.sub(&b).unwrap().rank(tol).unwrap();
        let dba = b.sub(&a).unwrap().rank(tol).unwrap();
        prop_assert_eq!(dab, dba);
        prop_assert_eq!(a.sub(&a).unwrap().rank(tol).unwrap(), 0.0);
        prop_assert!((0.0..=1.0).contains(&dab));
    }

    #[test]
    fn sup_distance_is_a_metric(
        xs in proptest::collection::vec(-5.0f64..5.0, 1..12),
        ys in proptest::collection::vec(-5.0f64..5.0, 1..12),
        zs in proptest::collection::vec(-5.0f64..5.0, 1..12),
    ) {
        let f = |v: &[f64]| StepFunction::from_samples(v, &vec![1.0 / v.len() as f64; v.len()]).unwrap();
        let (a, b, c) = (f(&xs), f(&ys), f(&zs));
        prop_assert_eq!(sup_distance(&a, &a), 0.0);
        prop_assert!((sup_distance(&a, &b) - sup_distance(&b, &a)).abs() <= 1e-15);
        prop_assert!(sup_distance(&a, &c) <= sup_distance(&a, &b) + sup_distance(&b, &c) + 1e-12);
    }

    #[test]
    fn region_indexing_round_trips(sides in proptest::collection::vec(1usize..6, 1..4), origin in -3i64..3) {
        let d = sides.len();
        let region = Region::new(vec![origin; d], sides).unwrap();
        for k in 0..region.volume() {
            prop_assert_eq!(region.index_of(&region.coords(k)), Some(k));
        }
    }

    #[test]
    fn sampling_is_keyed_by_seed_and_stream(model in model_strategy(), seed in any::<u64>(), n in 1usize..40) {
        let region = Region::new(vec![0], vec![n]).unwrap();
        let a = sample_config(&model, &region, seed).unwrap();
        prop_assert_eq!(&a, &sample_config(&model, &region, seed).unwrap());
        prop_assert_eq!(&a, &sample_config_stream(&model, &region, seed, 0).unwrap());
    }

    #[test]
    fn configuration_probabilities_sum_to_one(model in model_strategy(), n in 1usize..6) {
        let region = Region::new(vec![0], vec![n]).unwrap();
        let total: f64 = enumerate_configs(&model, &region).unwrap().iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn approximants_are_distributions(model in model_strategy(), i in 0usize..3) {
        let f = ids_approx(&model, i, 1).unwrap();
        prop_assert!((f.total() - 1.0).abs() <= 1e-12);
        prop_assert!(f.cumulative().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn each_fine_configuration_restricts_to_two_halves(model in model_strategy(), i in 0usize..3) {
        let w = transition_weights(&model, i, 1).unwrap();
        let fine = w.m_matrix();
        for row in &fine {
            let mass: f64 = row.iter().sum();
            prop_assert!((mass - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn cauchy_bound_holds_for_positive_models(values in proptest::collection::vec(1.0f64..4.0, 1..3), i in 0usize..2) {
        let mut v = values;
        v.sort_by(f64::total_cmp);
        v.dedup();
        let model = DisorderModel::uniform_site_potential(v).unwrap();
        let r = cauchy_report(&model, i, i + 1, 1, DEFAULT_RANK_TOL).unwrap();
        prop_assert!(r.holds(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn laplacians_are_positive_semidefinite(sides in proptest::collection::vec(1usize..5, 1..3)) {
        let g = lattice::box_graph(sides.len(), &sides).unwrap();
        let eig = linalg::sym_spectrum(&lattice::laplacian(&g.graph, None).unwrap()).unwrap();
        prop_assert!(eig[0].abs() <= 1e-8);
        prop_assert!(eig.iter().all(|&e| e >= -1e-8));
    }

    #[test]
    fn pattern_operators_are_symmetric_on_path_levels(level in 1usize..6, c in -2.0f64..2.0) {
        let g = build_level(&SelfSimilarSpec::path(), level).unwrap().graph;
        for kernel in [PatternKernel::adjacency(), PatternKernel::laplacian(), PatternKernel::constant(c)] {
            let m = pattern_operator(&kernel, &g).unwrap();
            prop_assert!(m.as_matrix().is_symmetric());
        }
    }
}
