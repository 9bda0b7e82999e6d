use proptest::prelude::*;

use utep_core::evalmetrics::{proxy_a_distance, ratio_from_probability, spearman};
use utep_core::ndgrad::{Array2, RngStream, Tape};
use utep_core::nets::{grl_lambda, Architecture, MaskSource, ModelBundle};
use utep_core::pseudo::{select_negative, select_positive, PseudoLabelSet};
use utep_core::theorylab::{check_bias_bound, check_importance_identity, DiscreteInstance};
use utep_core::trainer::{sgd_step, ExperimentConfig, MetricsLog, MetricsRow};
use utep_core::uncertainty::{mc_variance, normalize_mu, population_variance, selection_weight};

fn prob_rows(rows: usize, classes: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(prop::collection::vec(0.001f64..1.0, classes), rows).prop_map(|raw| {
        let rows: Vec<Vec<f64>> = raw
            .into_iter()
            .map(|r| {
                let t: f64 = r.iter().sum();
                r.into_iter().map(|v| v / t).collect()
            })
            .collect();
        Array2::from_rows(&rows).unwrap()
    })
}

proptest! {
    #[test]
    fn pseudo_masks_are_disjoint_and_monotone(
        g in prob_rows(6, 4),
        gamma in 0.01f64..0.4,
        beta in 0.5f64..0.99,
        lift in 0.0f64..0.009,
    ) {
        let set = PseudoLabelSet::select(g.clone(), beta, gamma).unwrap();
        for (h, l) in set.positive.data().iter().zip(set.negative.data()) {
            prop_assert!(!(*h == 1.0 && *l == 1.0));
        }
        let higher = select_positive(&g, beta + lift).unwrap();
        let lower = select_negative(&g, gamma - lift).unwrap();
        for i in 0..g.data().len() {
            prop_assert!(higher.data()[i] <= set.positive.data()[i]);
            prop_assert!(lower.data()[i] <= set.negative.data()[i]);
        }
        prop_assert_eq!(PseudoLabelSet::select(g, beta, gamma).unwrap(), set);
    }

    #[test]
    fn mu_spans_zero_to_at_most_one(u in prop::collection::vec(0.0f64..0.25, 1..40)) {
        let mu = normalize_mu(&u).unwrap();
        let max_u = u.iter().copied().fold(0.0, f64::max);
        if max_u > 1e-12 {
            prop_assert_eq!(mu.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        }
        prop_assert!(mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
        for (s, m) in selection_weight(&mu).iter().zip(&mu) {
            prop_assert_eq!(*s, 1.0 - m);
        }
    }

    #[test]
    fn variance_is_nonnegative_and_symmetric(v in prop::collection::vec(0.0f64..1.0, 2..20)) {
        let var = population_variance(&v);
        prop_assert!(var >= 0.0);
        let flipped: Vec<f64> = v.iter().map(|p| 1.0 - p).collect();
        prop_assert!((population_variance(&flipped) - var).abs() < 1e-15);
    }

    #[test]
    fn ratio_is_decreasing_and_clamped(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9 && lo > 0.01);
        let (r_lo, r_hi) = (ratio_from_probability(lo, 1e9), ratio_from_probability(hi, 1e9));
        prop_assert!(r_lo > r_hi);
        prop_assert!((0.0..=100.0).contains(&ratio_from_probability(a, 100.0)));
    }

    #[test]
    fn rank_correlation_ignores_monotone_maps(v in prop::collection::vec(-5.0f64..5.0, 3..30)) {
        let mapped: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let distinct = v.iter().any(|&x| x != v[0]);
        prop_assume!(distinct);
        let r = spearman(&v, &mapped).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert!((spearman(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grl_schedule_is_monotone_in_unit_interval(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (la, lb) = (grl_lambda(a), grl_lambda(b));
        prop_assert!((0.0..1.0).contains(&la));
        if a < b {
            prop_assert!(la <= lb);
        }
    }

    #[test]
    fn plain_sgd_is_gradient_descent(theta in -5.0f64..5.0, g in -5.0f64..5.0, lr in 0.001f64..1.0) {
        let mut p = Array2::scalar(theta);
        let mut v = vec![Array2::scalar(0.0)];
        sgd_step(&mut [&mut p], &[Array2::scalar(g)], &mut v, lr, 0.0).unwrap();
        prop_assert_eq!(p.item().unwrap(), theta - lr * g);
    }

    #[test]
    fn config_echo_round_trips(
        lr in 1e-5f64..1.0,
        beta in 0.5f64..0.99,
        gamma in 0.001f64..0.49,
        passes in 2usize..50,
        seed in any::<u64>(),
        toggles in any::<[bool; 6]>(),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.lr = lr;
        cfg.beta = beta;
        cfg.gamma = gamma;
        cfg.passes = passes;
        cfg.seed = seed;
        cfg.mu_weight_source = toggles[0];
        cfg.mu_weight_target = toggles[1];
        cfg.bias_source = toggles[2];
        cfg.bias_target = toggles[3];
        cfg.use_pce = toggles[4];
        cfg.use_nce = toggles[5];
        prop_assert_eq!(ExperimentConfig::parse(&cfg.to_kv_string()).unwrap(), cfg);
    }

    #[test]
    fn metrics_csv_round_trips(vals in prop::collection::vec(-1e6f64..1e6, 11)) {
        let row = MetricsRow {
            epoch: 7,
            l_y: vals[0], l_adv: vals[1], l_bias: vals[2], l_pce: vals[3], l_nce: vals[4],
            l_total: vals[5], target_accuracy: vals[6], source_accuracy: vals[7],
            mean_u: vals[8], mean_mu: vals[9], proxy_a_distance: vals[10], wall_ms: 3,
        };
        let log = MetricsLog { rows: vec![row] };
        prop_assert_eq!(MetricsLog::from_csv(&log.to_csv()).unwrap(), log);
    }

    #[test]
    fn bias_bound_and_identity_hold(
        raw in prop::collection::vec((0.01f64..1.0, 0.0f64..1.0, 0.0f64..5.0, 0.0f64..10.0), 1..12),
    ) {
        let ts: f64 = raw.iter().map(|r| r.0).sum();
        let tt: f64 = raw.iter().map(|r| r.1).sum();
        prop_assume!(tt > 0.0);
        let inst = DiscreteInstance::new(
            raw.iter().map(|r| r.0 / ts).collect(),
            raw.iter().map(|r| r.1 / tt).collect(),
            raw.iter().map(|r| r.2).collect(),
            raw.iter().map(|r| r.3).collect(),
        ).unwrap();
        prop_assert!(check_importance_identity(&inst).gap() < 1e-12);
        let c = check_bias_bound(&inst);
        prop_assert!(c.lhs <= c.rhs + 1e-12 * c.rhs.max(1.0));
    }
}

#[test]
fn pad_stays_in_range() {
    let mut rng = RngStream::new(3, 0);
    for shift in [0.0, 0.5, 2.0, 50.0] {
        let a: Array2<f64> = rng.uniform_array(40, 3, 1.0);
        let b = rng.uniform_array::<f64>(40, 3, 1.0).map(|v| v + shift);
        let d = proxy_a_distance(&a, &b, 9).unwrap();
        assert!((0.0..=2.0).contains(&d), "shift {shift}: {d}");
    }
}

fn small_bundle(seed: u64) -> ModelBundle<f64> {
    let mut arch = Architecture::desk(2, 2);
    arch.hidden_dim = 8;
    arch.feature_dim = 4;
    arch.disc_hidden = 6;
    ModelBundle::new(arch, &mut RngStream::new(seed, 0))
}

#[test]
fn reversal_flips_feature_gradient_of_domain_loss() {
    let bundle = small_bundle(1);
    let x = Array2::from_rows(&[vec![0.3, -1.0], vec![1.2, 0.4], vec![-0.5, 0.8]]).unwrap();
    let mask = RngStream::new(2, 0).dropout_mask::<f64>(3, 6, 0.5);
    let grad = |grl: Option<f64>| {
        let mut t = Tape::new();
        let b = bundle.bind(&mut t).unwrap();
        let xv = t.leaf(x.clone()).unwrap();
        let f = bundle.features(&mut t, &b, xv).unwrap();
        let p = bundle.discriminate(&mut t, &b, f, MaskSource::Fixed(&mask), grl).unwrap();
        let lp = t.log(p).unwrap();
        let l = t.sum(lp).unwrap();
        let g = t.backward(l).unwrap();
        (g.wrt(b.feature[0].weight), g.wrt(b.discriminator[0].weight))
    };
    let (plain_f, plain_d) = grad(None);
    let lambda = 0.7;
    let (rev_f, rev_d) = grad(Some(lambda));
    for (a, b) in rev_f.data().iter().zip(plain_f.data()) {
        assert!((a + lambda * b).abs() < 1e-12);
    }
    assert_eq!(rev_d, plain_d);
}

/// Doubling the number of passes changes u by less than three estimated
/// standard errors on at least 95% of samples.
#[test]
fn mc_variance_converges_with_more_passes() {
    let bundle = small_bundle(4);
    let mut rng = RngStream::new(8, 1);
    let feats: Array2<f64> = rng.uniform_array(60, 4, 2.0);
    let k1 = 1000;
    let k2 = 4000;
    let u1 = mc_variance(&bundle, &feats, k1, &mut RngStream::new(8, 2)).unwrap();
    let u2 = mc_variance(&bundle, &feats, k2, &mut RngStream::new(8, 3)).unwrap();
    // Standard error of a sample variance from the fourth central moment.
    let outs = utep_core::uncertainty::mc_outputs(&bundle, &feats, k1, &mut RngStream::new(8, 4)).unwrap();
    let mut within = 0;
    for i in 0..feats.rows() {
        let col: Vec<f64> = outs.iter().map(|p| p[i]).collect();
        let mean = col.iter().sum::<f64>() / k1 as f64;
        let m4 = col.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / k1 as f64;
        let var = u1[i];
        let se1 = ((m4 - var * var) / k1 as f64).max(0.0).sqrt();
        let se2 = ((m4 - var * var) / k2 as f64).max(0.0).sqrt();
        let se = (se1 * se1 + se2 * se2).sqrt();
        if (u1[i] - u2[i]).abs() <= 3.0 * se + 1e-15 {
            within += 1;
        }
    }
    assert!(within as f64 >= 0.95 * feats.rows() as f64, "{within} of {}", feats.rows());
}
