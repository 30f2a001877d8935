use guided_reasoning::branching::{augment, maximum_branching, total_weight, BranchingConfig};
use gr_testkit::oracle::{brute_force_optimum, check_augmented, check_branching, milli, random_network};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn branching_matches_exhaustive_optimum(seed in any::<u64>()) {
        let net = random_network(&mut StdRng::seed_from_u64(seed), 5, 2);
        let tree = maximum_branching(&net).unwrap();
        prop_assert!(check_branching(&net, &tree).is_ok(), "{:?}", check_branching(&net, &tree));
        let got: i64 = tree.iter().map(|e| milli(e.weight)).sum();
        prop_assert_eq!(got, brute_force_optimum(&net));
    }

    #[test]
    fn augmentation_matches_definition(seed in any::<u64>(), threshold in 0u32..=1000, root_root in any::<bool>()) {
        let net = random_network(&mut StdRng::seed_from_u64(seed), 5, 3);
        let cfg = BranchingConfig { threshold: f64::from(threshold) / 1000.0, allow_root_root_edges: root_root };
        let tree = maximum_branching(&net).unwrap();
        let map = augment(&net, &tree, &cfg, "issue");
        prop_assert!(check_augmented(&net, &tree, &map, &cfg).is_ok(), "{:?}", check_augmented(&net, &tree, &map, &cfg));
    }

    #[test]
    fn raising_the_threshold_only_removes_edges(seed in any::<u64>(), lo in 0u32..=1000, hi in 0u32..=1000) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let net = random_network(&mut StdRng::seed_from_u64(seed), 5, 2);
        let tree = maximum_branching(&net).unwrap();
        let at = |t: u32| {
            let cfg = BranchingConfig { threshold: f64::from(t) / 1000.0, allow_root_root_edges: false };
            augment(&net, &tree, &cfg, "issue").edges
        };
        let (low, high) = (at(lo), at(hi));
        prop_assert!(high.iter().all(|e| low.contains(e)));
    }

    #[test]
    fn input_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let net = random_network(&mut rng, 5, 2);
        let mut shuffled = net.clone();
        shuffled.edges.shuffle(&mut rng);
        let cfg = BranchingConfig::default();
        let a = maximum_branching(&net).unwrap();
        let b = maximum_branching(&shuffled).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(augment(&net, &a, &cfg, "i"), augment(&shuffled, &b, &cfg, "i"));
        prop_assert!((total_weight(&a) - total_weight(&b)).abs() < 1e-12);
    }
}
