use proptest::prelude::*;

use secbf::experiments::{quantile, sci};
use secbf::linalg::{self, CMat, CVec, C64};
use secbf::penalty::lemma1_minorant;
use secbf::physics::{eh_threshold, harvested_power, rank_one_gap, verify_solution, BeamformingSolution, EhParams};
use secbf::scenario::{child_seed, draw_channels, sample_ball, BallSampling, ScenarioConfig};

fn cvec(n: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| CVec::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b))))
}

fn psd(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(cvec(n), 1..=n).prop_map(move |cols| cols.iter().fold(linalg::zeros(n), |acc, c| acc + linalg::outer(c)))
}

proptest! {
    #[test]
    fn harvested_power_is_increasing_and_bounded(a in 0.0f64..0.05, b in 0.0f64..0.05) {
        let eh = EhParams::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pl, ph) = (harvested_power(lo, &eh).unwrap(), harvested_power(hi, &eh).unwrap());
        prop_assert!(pl <= ph);
        prop_assert!((0.0..=eh.p_max).contains(&pl) && ph <= eh.p_max);
    }

    #[test]
    fn threshold_inverts_harvesting(frac in 0.001f64..0.999) {
        let eh = EhParams::default();
        let zeta = frac * eh.p_max;
        let g = eh_threshold(zeta, &eh).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!((harvested_power(g, &eh).unwrap() - zeta).abs() <= 1e-9);
    }

    #[test]
    fn rank_gap_is_nonnegative_and_vanishes_on_outer_products(w in psd(4), v in cvec(4)) {
        prop_assert!(rank_one_gap(&w).unwrap() >= -1e-12);
        prop_assert!(rank_one_gap(&linalg::outer(&v)).unwrap().abs() <= 1e-12 * (1.0 + v.norm_squared()));
    }

    #[test]
    fn minorant_is_below_lambda_max(prev in psd(3), x in psd(3)) {
        let m = lemma1_minorant(&prev);
        prop_assert!(m.eval(&x) <= linalg::lambda_max(&x) + 1e-10);
    }

    #[test]
    fn ball_samples_stay_in_the_ball(seed in any::<u64>(), n in 1usize..6, r in 0.0f64..2.0) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = sample_ball(&mut rng, n, r, BallSampling::Uniform);
        prop_assert!(z.norm() <= r * (1.0 + 1e-12));
        let s = sample_ball(&mut rng, n, r, BallSampling::Surface);
        prop_assert!((s.norm() - r).abs() <= 1e-12 * (1.0 + r));
    }

    #[test]
    fn child_seeds_are_deterministic(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assert_eq!(child_seed(seed, &[a, b]), child_seed(seed, &[a, b]));
        prop_assert_ne!(child_seed(seed, &[a]), child_seed(seed, &[a, b]));
    }

    #[test]
    fn sci_keeps_ten_significant_digits(v in -1e6f64..1e6) {
        let s = sci(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-10 * v.abs());
        prop_assert!(!s.contains(','));
    }

    #[test]
    fn quantiles_are_monotone(mut v in prop::collection::vec(-10.0f64..10.0, 1..40), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
        prop_assert!(quantile(&v, 0.0) == v[0] && quantile(&v, 1.0) == v[v.len() - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn channel_draws_are_reproducible_and_ordered(seed in any::<u64>(), k in 0usize..4) {
        let cfg = ScenarioConfig::table_defaults().with_k_ehr_secondary(k);
        let a = draw_channels(&cfg, seed);
        prop_assert_eq!(&a, &draw_channels(&cfg, seed));
        prop_assert!(a.matches(&cfg) && a.is_finite() && a.su_norms_sorted());
    }

    #[test]
    fn config_json_round_trips(g in 0.0f64..4.0, z in 0.0f64..0.02, r in 0.0f64..0.1) {
        let cfg = ScenarioConfig::table_defaults().with_gamma_pu(g).with_zeta_secondary(z).with_radius(r);
        prop_assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn scaling_a_design_scales_harvesting_slack(seed in any::<u64>(), t in 1.0f64..4.0) {
        // EH records are monotone in a common power scale; secrecy records are not needed here.
        let cfg = ScenarioConfig::reduced();
        let ch = draw_channels(&cfg, seed);
        let mut sol = BeamformingSolution::zeros(&cfg);
        sol.sigma_s = linalg::real_scale(&linalg::identity(cfg.n_st), 1e-3);
        sol.sigma_p[0] = linalg::real_scale(&linalg::identity(cfg.n_pt), 1e-3);
        let a = verify_solution(&sol, &ch, &cfg).unwrap();
        let b = verify_solution(&sol.scaled(t), &ch, &cfg).unwrap();
        for fam in ["C3", "C4"] {
            prop_assert!(b.min_slack(fam).unwrap() >= a.min_slack(fam).unwrap() - 1e-15);
        }
        prop_assert!((b.total_power - t * a.total_power).abs() <= 1e-15);
    }
}
