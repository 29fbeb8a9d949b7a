use std::collections::BTreeSet;

use ldp_calibrate::calibrate::{
    calibrate_one, noise_model_for, posterior, predictive_pmf, zero_below_threshold, NoiseModel,
    PriorModel,
};
use ldp_calibrate::data::{flatten_single_item, parse_transactions, synthesize, SyntheticSpec};
use ldp_calibrate::eval::{
    estimation_error, heavy_hitter_report, heavy_hitters, mse_per_item, TrialSet,
};
use ldp_calibrate::protocols::{
    basic_rappor_spec, krr_spec, olh_spec, oue_spec, perturb, simulate_estimates,
    simulate_itemset_estimates, supports, Domain, ItemSetUser, ProtocolSpec,
};
use ldp_calibrate::rng::{derive_seed, stream};
use ldp_calibrate::{FrequencyTable, TableLabel};
use proptest::prelude::*;
use rand::Rng;

fn small_prior() -> impl Strategy<Value = PriorModel> {
    (0u64..200, prop::collection::vec(0.01f64..1.0, 1..30))
        .prop_map(|(k_min, w)| PriorModel::from_weights(k_min, w).unwrap())
}

fn spec_for(kind: u8, eps: f64, d: usize) -> ProtocolSpec {
    match kind % 4 {
        0 => oue_spec(eps),
        1 => basic_rappor_spec(eps),
        2 => olh_spec(eps),
        _ => krr_spec(eps, d),
    }
    .unwrap()
}

fn estimated(values: Vec<f64>) -> FrequencyTable {
    FrequencyTable::new(values, 1000, TableLabel::Estimated).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_is_normalised(prior in small_prior(), var in 0.5f64..400.0, offset in -3.0f64..3.0, pick in 0.0f64..1.0) {
        let noise = NoiseModel::new(var).unwrap();
        let f_hat = prior.k_min() as f64 + pick * (prior.k_max() - prior.k_min()) as f64 + offset * noise.sigma();
        let post = posterior(f_hat, &prior, &noise).unwrap();
        let total: f64 = post.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(post.probs().iter().all(|&p| p >= 0.0));
        let (lo, hi) = (*post.support().start() as f64, *post.support().end() as f64);
        prop_assert!(lo <= post.mean() && post.mean() <= hi);
    }

    #[test]
    fn evidence_matches_predictive_pmf(prior in small_prior(), sigma in 2.0f64..12.0, pick in 0.0f64..1.0) {
        let noise = NoiseModel::new(sigma * sigma).unwrap();
        let pred = predictive_pmf(&prior, &noise);
        let (lo, hi) = (*pred.support().start(), *pred.support().end());
        let k_hat = lo + (pick * (hi - lo) as f64).round() as i64;
        let post = posterior(k_hat as f64, &prior, &noise).unwrap();
        prop_assert!((post.evidence() - pred.prob(k_hat)).abs() <= 1e-9,
            "evidence {} vs predictive {}", post.evidence(), pred.prob(k_hat));
    }

    #[test]
    fn calibration_is_monotone_in_the_estimate(prior in small_prior(), var in 0.5f64..200.0) {
        let noise = NoiseModel::new(var).unwrap();
        let lo = prior.k_min() as f64 - 3.0 * noise.sigma();
        let hi = prior.k_max() as f64 + 3.0 * noise.sigma();
        let mut last = f64::NEG_INFINITY;
        for s in 0..=200 {
            let f_hat = lo + (hi - lo) * s as f64 / 200.0;
            let c = calibrate_one(f_hat, &prior, &noise).unwrap();
            prop_assert!(c >= last - 1e-9, "calibrate({f_hat}) = {c} < {last}");
            last = c;
        }
    }

    #[test]
    fn heavy_hitter_sets_shrink(values in prop::collection::vec(-50.0f64..500.0, 1..60), mut ts in prop::collection::vec(-100.0f64..600.0, 2..10)) {
        let table = estimated(values);
        ts.sort_by(f64::total_cmp);
        for w in ts.windows(2) {
            prop_assert!(heavy_hitters(&table, w[1]).is_subset(&heavy_hitters(&table, w[0])));
        }
    }

    #[test]
    fn precision_recall_f_in_unit_interval(
        truth in prop::collection::vec(0u64..100, 1..40),
        noise in prop::collection::vec(-60.0f64..60.0, 40),
        t in -10.0f64..110.0,
    ) {
        let n = truth.iter().sum::<u64>().max(1);
        let f = FrequencyTable::from_counts(&truth, n).unwrap();
        let est = FrequencyTable::new(
            truth.iter().zip(&noise).map(|(&k, e)| k as f64 + e).collect(),
            n,
            TableLabel::Estimated,
        ).unwrap();
        let r = heavy_hitter_report(&f, &est, t);
        let truth_set: BTreeSet<usize> = heavy_hitters(&f, t);
        prop_assert_eq!(r.true_positives + r.false_negatives, truth_set.len());
        for v in [r.precision, r.recall, r.f_score].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let (Some(p), Some(rc), Some(fs)) = (r.precision, r.recall, r.f_score) {
            if p + rc > 0.0 {
                prop_assert!((fs - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroing_is_idempotent(values in prop::collection::vec(-200.0f64..200.0, 1..50), t in -50.0f64..150.0) {
        let once = zero_below_threshold(&estimated(values), t).unwrap();
        let twice = zero_below_threshold(&once.with_values(once.values().to_vec(), TableLabel::Estimated).unwrap(), t).unwrap();
        prop_assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn estimation_error_is_mean_of_item_mse(
        truth in prop::collection::vec(0u64..50, 1..20),
        trials in prop::collection::vec(prop::collection::vec(-30.0f64..30.0, 20), 1..6),
    ) {
        let n = truth.iter().sum::<u64>().max(1);
        let d = truth.len();
        let f = FrequencyTable::from_counts(&truth, n).unwrap();
        let tables: Vec<FrequencyTable> = trials
            .iter()
            .map(|e| FrequencyTable::new(truth.iter().zip(e).map(|(&k, x)| k as f64 + x).collect(), n, TableLabel::Estimated).unwrap())
            .collect();
        let set = TrialSet::new(f, tables).unwrap();
        // recomputed item by item, trial by trial
        let mut total = 0.0;
        for i in 0..d {
            let mut acc = 0.0;
            for e in &trials {
                acc += e[i] * e[i];
            }
            total += acc / trials.len() as f64;
        }
        let want = total / d as f64;
        prop_assert!((estimation_error(&set) - want).abs() <= 1e-9 * want.max(1.0));
        prop_assert_eq!(mse_per_item(&set).len(), d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_population_sums_to_n(d in 1usize..300, n in 1u64..100_000, alpha in 0.0f64..3.5, seed in any::<u64>()) {
        let spec = SyntheticSpec::power_law(d, Some(n), alpha, seed).unwrap();
        let pop = synthesize(&spec).unwrap();
        prop_assert_eq!(pop.truth.sum(), n as f64);
        prop_assert_eq!(pop.users.len() as u64, n);
        prop_assert_eq!(synthesize(&spec).unwrap(), pop);
    }

    #[test]
    fn support_rates_match_p_and_q(kind in 0u8..4, eps in 0.5f64..4.0, seed in any::<u64>()) {
        let d = 6;
        let spec = spec_for(kind, eps, d);
        let domain = Domain::new(d).unwrap();
        let mut rng = stream(seed);
        let samples = 100_000;
        let (mut own, mut other) = (0usize, 0usize);
        for _ in 0..samples {
            let report = perturb(&spec, &domain, 2, &mut rng).unwrap();
            own += supports(&spec, &report, 2) as usize;
            other += supports(&spec, &report, 5) as usize;
        }
        prop_assert!((own as f64 / samples as f64 - spec.p_star()).abs() <= 0.01);
        prop_assert!((other as f64 / samples as f64 - spec.q_star()).abs() <= 0.01);
    }

    #[test]
    fn estimates_are_seed_deterministic(kind in 0u8..4, eps in 0.5f64..5.0, seed in any::<u64>()) {
        let d = 30;
        let spec = spec_for(kind, eps, d);
        let users: Vec<usize> = (0..500).map(|u| u % d + 1).collect();
        let domain = Domain::new(d).unwrap();
        let a = simulate_estimates(&spec, &domain, &users, seed).unwrap();
        let b = simulate_estimates(&spec, &domain, &users, seed).unwrap();
        prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn parse_flatten_recount(lines in prop::collection::vec(prop::collection::vec(1u64..40, 0..6), 1..30)) {
        prop_assume!(lines.iter().any(|l| !l.is_empty()));
        let text: String = lines
            .iter()
            .map(|l| l.iter().map(u64::to_string).collect::<Vec<_>>().join(" ") + "\n")
            .collect();
        let ds = parse_transactions(text.as_bytes()).unwrap();
        let view = flatten_single_item(&ds).unwrap();
        for (dense, &id) in ds.original_ids().iter().enumerate() {
            let raw = lines.iter().flatten().filter(|&&x| x == id).count();
            prop_assert_eq!(view.truth.values()[dense], raw as f64);
        }
        prop_assert_eq!(ds.total_occurrences(), lines.iter().map(Vec::len).sum::<usize>() as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn estimates_sum_to_n_on_average(kind in 0u8..4, eps in 1.0f64..4.0, seed in any::<u64>()) {
        let (d, n, trials) = (20usize, 2000usize, 100u64);
        let spec = spec_for(kind, eps, d);
        let users: Vec<usize> = (0..n).map(|u| (u * u) % d + 1).collect();
        let domain = Domain::new(d).unwrap();
        let totals: Vec<f64> = (0..trials)
            .map(|t| simulate_estimates(&spec, &domain, &users, derive_seed(seed, t)).unwrap().sum())
            .collect();
        let mean = totals.iter().sum::<f64>() / trials as f64;
        let var = totals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials as f64 - 1.0);
        // k-RR totals are exactly n, so allow for rounding
        prop_assert!((mean - n as f64).abs() <= 4.0 * (var / trials as f64).sqrt() + 1e-9 * n as f64, "mean total {mean}");
    }

    #[test]
    fn padded_sets_recover_occurrence_counts(seed in any::<u64>()) {
        let (d, l, trials) = (12usize, 3usize, 300u64);
        let mut rng = stream(seed);
        let users: Vec<ItemSetUser> = (0..1500)
            .map(|_| {
                let size = rng.gen_range(0..=l);
                ItemSetUser::new(rand::seq::index::sample(&mut rng, d, size).into_iter().map(|i| i + 1), d).unwrap()
            })
            .collect();
        let mut truth = vec![0.0; d];
        for u in &users {
            for &i in u.items() {
                truth[i - 1] += 1.0;
            }
        }
        let spec = oue_spec(3.0).unwrap();
        let domain = Domain::with_dummies(d, l).unwrap();
        let mut sums = vec![0.0; d];
        let mut squares = vec![0.0; d];
        for t in 0..trials {
            let est = simulate_itemset_estimates(&spec, &domain, &users, derive_seed(seed, t)).unwrap();
            for i in 0..d {
                let e = est.values()[i] - truth[i];
                sums[i] += e;
                squares[i] += e * e;
            }
        }
        let m = trials as f64;
        let mut outside = 0;
        for i in 0..d {
            let mean = sums[i] / m;
            let sd = ((squares[i] - m * mean * mean) / (m - 1.0)).sqrt();
            if mean.abs() > 3.5 * sd / m.sqrt() {
                outside += 1;
            }
        }
        prop_assert!(outside <= 1, "{outside} items biased");
    }

    #[test]
    fn estimate_moments_add_noise_variance(seed in any::<u64>()) {
        let (d, n) = (5000usize, 100_000u64);
        let pop = synthesize(&SyntheticSpec::power_law(d, Some(n), 2.0, seed).unwrap()).unwrap();
        let spec = oue_spec(2.0).unwrap();
        let est = simulate_estimates(&spec, &Domain::new(d).unwrap(), &pop.users, derive_seed(seed, 1)).unwrap();
        let noise = noise_model_for(&spec, n, 1).unwrap();
        let moments = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
        };
        let (mf, vf) = moments(pop.truth.values());
        let (me, ve) = moments(est.values());
        prop_assert!((me - mf).abs() <= 4.0 * noise.sigma() / (d as f64).sqrt());
        prop_assert!(((ve - vf) / noise.variance() - 1.0).abs() <= 0.1, "Var f̂ - Var f = {} vs {}", ve - vf, noise.variance());
    }
}

/// Least-squares slope of log density against log frequency over
/// power-of-two bins holding at least `min_count` items.
fn log_log_slope(values: &[f64], min_count: usize) -> f64 {
    let mut bins = vec![0usize; 64];
    for &v in values {
        bins[(v as u64).ilog2() as usize] += 1;
    }
    let points: Vec<(f64, f64)> = bins
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= min_count)
        .map(|(j, &c)| {
            let (lo, width) = (2f64.powi(j as i32), 2f64.powi(j as i32));
            // geometric centre of the integer bin [lo, 2 lo)
            let centre = (lo * (2.0 * lo - 1.0)).sqrt();
            (centre.ln(), (c as f64 / width).ln())
        })
        .collect();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_power_law_has_its_slope(seed in any::<u64>()) {
        let pop = synthesize(&SyntheticSpec::power_law(10_000, None, 2.0, seed).unwrap()).unwrap();
        let slope = log_log_slope(pop.truth.values(), 20);
        prop_assert!((slope + 2.0).abs() <= 0.15, "slope {slope}");
    }
}
