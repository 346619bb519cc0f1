use hybrid_choice::features::{
    cpt_value, cpt_weight, effective_probability, features_from_distributions, CptParams, Domain, FeatureConfig,
};
use hybrid_choice::problem::{build_lottery, sample_problem};
use hybrid_choice::svr::{self, KernelSpec, SvrParams};
use hybrid_choice::{
    compute_features, dist_a, dist_b, dominates, msd, Block, Dominance, LotShape, OutcomeDistribution, Problem,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sampled(seed: u64) -> Problem {
    sample_problem(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn block_strategy() -> impl Strategy<Value = Block> {
    (1usize..=5).prop_map(|i| Block::new(i).unwrap())
}

fn check_distribution(d: &OutcomeDistribution) {
    let e = d.entries();
    assert!(e.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(e.iter().all(|&(_, p)| p > 0.0));
    let total: f64 = e.iter().map(|x| x.1).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn dist_b_mean_matches_two_outcome_mean(seed in any::<u64>()) {
        let p = sampled(seed);
        let b = dist_b(&p);
        let expected = p.phb * p.hb + (1.0 - p.phb) * p.lb;
        prop_assert!((b.mean() - expected).abs() < 1e-9);
    }

    #[test]
    fn distributions_are_well_formed(seed in any::<u64>()) {
        let p = sampled(seed);
        check_distribution(&dist_a(&p));
        check_distribution(&dist_b(&p));
    }

    #[test]
    fn dominance_is_asymmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = dist_b(&sampled(s1));
        let b = dist_b(&sampled(s2));
        let fwd = dominates(&a, &b);
        let back = dominates(&b, &a);
        match fwd {
            Dominance::ADominates => prop_assert_eq!(back, Dominance::BDominates),
            Dominance::BDominates => prop_assert_eq!(back, Dominance::ADominates),
            Dominance::Neither => prop_assert_eq!(back, Dominance::Neither),
        }
        prop_assert_eq!(dominates(&a, &a), Dominance::Neither);
    }

    #[test]
    fn symmetric_lottery_reflects(hb in -50i32..=100, n in 1u32..=9) {
        let hb = hb as f64;
        let d = build_lottery(hb, n, LotShape::Symm).unwrap();
        for &(o, p) in d.entries() {
            let mirror = d
                .entries()
                .iter()
                .find(|&&(m, _)| (m - (2.0 * hb - o)).abs() < 1e-9)
                .expect("mirrored outcome");
            prop_assert!((mirror.1 - p).abs() < 1e-12);
        }
    }

    #[test]
    fn skewed_lotteries_mirror_each_other(hb in -50i32..=100, n in 2u32..=9) {
        let hb = hb as f64;
        let r = build_lottery(hb, n, LotShape::RSkew).unwrap();
        let l = build_lottery(hb, n, LotShape::LSkew).unwrap();
        prop_assert_eq!(r.len(), l.len());
        for (&(ro, rp), &(lo, lp)) in r.entries().iter().zip(l.entries().iter().rev()) {
            prop_assert!((ro - hb + (lo - hb)).abs() < 1e-9);
            prop_assert!((rp - lp).abs() < 1e-12);
        }
        prop_assert!((r.mean() - hb).abs() < 1e-9);
    }

    #[test]
    fn effective_probability_moves_monotonically(p in 0.0f64..=1.0) {
        prop_assert_eq!(effective_probability(p, Block::FIRST), p);
        let values: Vec<f64> = Block::all().map(|b| effective_probability(p, b)).collect();
        for w in values.windows(2) {
            if p <= 0.02 {
                prop_assert!(w[1] <= w[0]);
            }
            if p >= 0.98 {
                prop_assert!(w[1] >= w[0]);
            }
        }
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn cpt_value_keeps_sign(o in -1000.0f64..1000.0) {
        let c = CptParams::default();
        let v = cpt_value(o, &c);
        prop_assert_eq!(v.partial_cmp(&0.0), o.partial_cmp(&0.0));
        if o > 0.0 {
            prop_assert!((cpt_value(-o, &c) + c.lambda * o.powf(c.beta)).abs() < 1e-12 * (1.0 + o.powf(c.beta)));
        }
    }

    #[test]
    fn cpt_weight_is_increasing(p in 0.0f64..1.0, dp in 1e-6f64..0.5, gain in any::<bool>()) {
        let c = CptParams::default();
        let d = if gain { Domain::Gain } else { Domain::Loss };
        let q = (p + dp).min(1.0);
        prop_assert!(cpt_weight(q, d, &c) > cpt_weight(p, d, &c));
    }

    #[test]
    fn swapping_options_negates_differences(s1 in any::<u64>(), s2 in any::<u64>()) {
        let cfg = FeatureConfig::default();
        let a = dist_b(&sampled(s1));
        let b = dist_b(&sampled(s2));
        let ab = features_from_distributions(&a, &b, false, &cfg);
        let ba = features_from_distributions(&b, &a, false, &cfg);
        let close = |x: f64, y: f64| (x + y).abs() <= 1e-9 * (1.0 + x.abs());
        prop_assert!(close(ab.bev_b_min_a, ba.bev_b_min_a));
        prop_assert!(close(ab.bev_b_min_a_unif, ba.bev_b_min_a_unif));
        prop_assert!(close(ab.bev_b_min_a_sign, ba.bev_b_min_a_sign));
        prop_assert!(close(ab.var_b_min_a, ba.var_b_min_a));
        prop_assert!(close(ab.ent_b_min_a, ba.ent_b_min_a));
    }

    #[test]
    fn differences_are_exact(seed in any::<u64>(), block in block_strategy()) {
        let p = sampled(seed);
        let f = compute_features(&hybrid_choice::effective_problem(&p, block), block, &FeatureConfig::default());
        prop_assert_eq!(f.bev_b_min_a, f.bev_b - f.ev_a);
        prop_assert_eq!(f.bev_b_min_a_pt, f.bev_b_pt - f.bev_a_pt);
        prop_assert!(f.to_array().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn entry_order_does_not_matter(seed in any::<u64>()) {
        let mut p = sampled(seed);
        p.ambiguous = false;
        let cfg = FeatureConfig::default();
        let a = dist_a(&p);
        let b = dist_b(&p);
        let a_rev = OutcomeDistribution::new(a.entries().iter().rev().copied()).unwrap();
        let b_rev = OutcomeDistribution::new(b.entries().iter().rev().copied()).unwrap();
        let direct = compute_features(&p, Block::FIRST, &cfg);
        let reordered = features_from_distributions(&a_rev, &b_rev, false, &cfg);
        prop_assert_eq!(direct, reordered);
    }

    #[test]
    fn msd_symmetry_and_scaling(v in prop::collection::vec((0.25f64..=0.75, -0.25f64..=0.25), 1..40)) {
        let obs: Vec<f64> = v.iter().map(|x| x.0).collect();
        let pred: Vec<f64> = v.iter().map(|x| x.0 + x.1).collect();
        let pred2: Vec<f64> = v.iter().map(|x| x.0 + 2.0 * x.1).collect();
        let s = msd(&obs, &pred).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert_eq!(s, msd(&pred, &obs).unwrap());
        prop_assert!((msd(&obs, &pred2).unwrap() - 4.0 * s).abs() < 1e-9);
        prop_assert_eq!(msd(&obs, &obs).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svr_dual_is_feasible(seed in any::<u64>(), n in 5usize..40, c in 0.1f64..5.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] - 0.5 * x[1] * x[2] + rng.gen_range(-0.1..0.1)).collect();
        let params = SvrParams { c, epsilon: 0.05, ..SvrParams::default() };
        let out = svr::train(&xs, &ys, KernelSpec::poly(3, 1.0 / 3.0, 1.0).unwrap(), &params, true).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.coefs.iter().sum::<f64>().abs() < 1e-6);
        prop_assert!(out.coefs.iter().all(|b| b.abs() <= c + 1e-9));
        prop_assert!(out.max_kkt_residual(&xs, &ys) < 1e-3);
        prop_assert!(out.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }
}
