use invab_core::demand::{DemandModel, ItemDemand, Noise};
use invab_core::design::{generate, inclusion_probability, DesignKind, DesignSpec};
use invab_core::estimate::{diff_in_means, ipw_estimate};
use invab_core::inventory::{scale_base_stock, simulate_horizon, ItemParams, Scenario};
use invab_core::oracle::{self, OracleMode};
use invab_core::stats::SampleSummary;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scenario with `n` items, `h` periods, Uniform noise and per-cell levels.
fn scenario_strategy(max_items: usize, max_horizon: usize) -> impl Strategy<Value = Scenario> {
    (1..=max_items, 1..=max_horizon).prop_flat_map(|(n, h)| {
        (
            prop::collection::vec((1.0..4.0f64, 0.1..0.9f64), n),
            prop::collection::vec((0.0..5.0f64, 0.5..4.0f64), n),
            prop::collection::vec(prop::collection::vec((0.0..5.0f64, 0.0..2.0f64), h), n),
            prop_oneof![Just(f64::INFINITY), 1.0..30.0f64],
            -0.3..0.3f64,
        )
            .prop_map(move |(prices, noise, cells, capacity, trend)| {
                let items = prices.iter().map(|(r, f)| ItemParams::new(*r, r * f).unwrap()).collect();
                let demand = DemandModel::new(
                    noise
                        .iter()
                        .map(|(low, width)| ItemDemand::seasonal(Noise::Uniform { low: *low, width: *width }, 0.3, 0.0))
                        .collect(),
                )
                .unwrap()
                .with_trend(trend);
                let control = cells.iter().map(|row| row.iter().map(|c| c.0).collect()).collect();
                let treatment = cells.iter().map(|row| row.iter().map(|c| c.0 + c.1).collect()).collect();
                Scenario::new(items, capacity, demand, control, treatment).unwrap()
            })
    })
}

fn column_strategy(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n)
}

proptest! {
    #[test]
    fn scaling_respects_capacity(s in prop::collection::vec(0.0..10.0f64, 1..20), capacity in 0.1..60.0f64) {
        let (scaled, k) = scale_base_stock(&s, capacity).unwrap();
        let total: f64 = scaled.iter().sum();
        prop_assert!(total <= capacity * (1.0 + 1e-12));
        prop_assert!(k > 0.0 && k <= 1.0);
        for (a, b) in scaled.iter().zip(&s) {
            prop_assert!(*a <= *b + 1e-12);
        }
        if s.iter().sum::<f64>() <= capacity {
            prop_assert_eq!(scaled, s);
        }
    }

    #[test]
    fn own_treatment_never_lowers_own_level(
        (scenario, column) in scenario_strategy(8, 3).prop_flat_map(|s| { let n = s.n_items(); (Just(s), column_strategy(n)) }),
    ) {
        for t in 0..scenario.horizon() {
            for n in 0..scenario.n_items() {
                let mut off = column.clone();
                off[n] = false;
                let mut on = column.clone();
                on[n] = true;
                let low = scenario.effective_levels(&off, t).unwrap()[n];
                let high = scenario.effective_levels(&on, t).unwrap()[n];
                prop_assert!(low <= high + 1e-12);
            }
        }
    }

    #[test]
    fn extreme_levels_match_exhaustive_search(scenario in scenario_strategy(10, 2)) {
        let n_items = scenario.n_items();
        for t in 0..scenario.horizon() {
            for n in 0..n_items {
                let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
                for mask in 0u32..(1 << n_items) {
                    let column: Vec<bool> = (0..n_items).map(|m| mask >> m & 1 == 1).collect();
                    let level = scenario.effective_levels(&column, t).unwrap()[n];
                    max = max.max(level);
                    min = min.min(level);
                }
                let (hi, lo) = scenario.extreme_levels(n, t);
                prop_assert!((hi - max).abs() <= 1e-9 * (1.0 + max.abs()));
                prop_assert!((lo - min).abs() <= 1e-9 * (1.0 + min.abs()));
            }
        }
    }

    #[test]
    fn total_profit_is_margin_times_sales(scenario in scenario_strategy(5, 6), seed in any::<u64>(), kind in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, h) = (scenario.n_items(), scenario.horizon());
        let design = DesignSpec::standard(DesignKind::ALL[kind], 0.5, h).unwrap_or(DesignSpec::new(DesignKind::PR, 0.5));
        let w = generate(&design, n, h, &mut rng).unwrap();
        let demand = scenario.demand().sample_trace(h, &mut rng);
        let trace = simulate_horizon(&scenario, &w, &demand).unwrap();
        for (i, item) in scenario.items().iter().enumerate() {
            let profit: f64 = (0..h).map(|t| trace.profit(i, t)).sum();
            let sales: f64 = trace.records.iter().map(|r| r.post_order[i].min(r.demand[i])).sum();
            prop_assert!((profit - item.margin() * sales).abs() <= 1e-9 * (1.0 + profit.abs()));
        }
    }

    #[test]
    fn ipw_is_linear_in_profits(scenario in scenario_strategy(4, 4), seed in any::<u64>(), a in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, h) = (scenario.n_items(), scenario.horizon());
        let w = generate(&DesignSpec::new(DesignKind::PR, 0.4), n, h, &mut rng).unwrap();
        let first = simulate_horizon(&scenario, &w, &scenario.demand().sample_trace(h, &mut rng)).unwrap();
        let second = simulate_horizon(&scenario, &w, &scenario.demand().sample_trace(h, &mut rng)).unwrap();
        let mut mixed = first.clone();
        for (m, s) in mixed.records.iter_mut().zip(&second.records) {
            for (x, y) in m.profit.iter_mut().zip(&s.profit) {
                *x = a * *x + y;
            }
        }
        let est = |trace| ipw_estimate(trace, &w, 0.4).unwrap().value;
        let lhs = est(&mixed);
        let rhs = a * est(&first) + est(&second);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        if let (Ok(x), Ok(y), Ok(z)) = (diff_in_means(&mixed, &w), diff_in_means(&first, &w), diff_in_means(&second, &w)) {
            prop_assert!((x.value - (a * y.value + z.value)).abs() <= 1e-9 * (1.0 + x.value.abs()));
        }
    }

    #[test]
    fn overage_matches_quadrature(
        mean in -2.0..6.0f64, spread in 0.3..3.0f64, s in -1.0..10.0f64, normal in any::<bool>(), clamp in any::<bool>(),
    ) {
        let noise = if normal { Noise::Normal { mean, std_dev: spread } } else { Noise::Uniform { low: mean, width: spread } };
        let model = DemandModel::stationary(1, noise).unwrap().with_clamp(clamp);
        // E(s - D)^+ = ∫_{-∞}^{s} F(x) dx
        let lower = mean - 12.0 * spread - 1.0;
        let steps = 20_000;
        let width = (s - lower) / steps as f64;
        let integral = if s <= lower { 0.0 } else {
            (0..steps).map(|i| {
                let x = lower + (i as f64 + 0.5) * width;
                model.cdf(0, 0, x)
            }).sum::<f64>() * width
        };
        let exact = model.expected_overage(0, 0, s);
        prop_assert!((exact - integral).abs() <= 2e-3 * (1.0 + exact), "{} vs {}", exact, integral);
    }

    #[test]
    fn quantile_inverts_cdf(mean in 0.5..6.0f64, spread in 0.3..3.0f64, q in 0.01..0.99f64, normal in any::<bool>()) {
        let noise = if normal { Noise::Normal { mean, std_dev: spread } } else { Noise::Uniform { low: mean, width: spread } };
        let model = DemandModel::stationary(1, noise).unwrap();
        let x = model.quantile(0, 0, q).unwrap();
        if x > 0.0 {
            prop_assert!((model.cdf(0, 0, x) - q).abs() <= 1e-9);
        } else {
            prop_assert!(model.cdf(0, 0, 0.0) >= q - 1e-12);
        }
    }

    #[test]
    fn generated_designs_have_their_structure(seed in any::<u64>(), kind in 0usize..4, n in 1usize..30, h in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = DesignSpec::standard(DesignKind::ALL[kind], 0.5, h).unwrap();
        let w = generate(&design, n, h, &mut rng).unwrap();
        prop_assert!(w.has_design_structure());
        prop_assert_eq!(w.total_cells(), n * h);
    }

    #[test]
    fn pairwise_terms_sum_and_order(scenario in scenario_strategy(4, 3), p in 0.1..0.9f64) {
        let pr = oracle::bias_pr(&scenario, p, OracleMode::Enumerate).unwrap();
        let ir = oracle::bias_ir(&scenario, p, OracleMode::Enumerate).unwrap();
        let sum: f64 = pr.terms.iter().map(|t| t.value).sum();
        prop_assert!((sum - pr.bias).abs() <= 1e-12);
        // the switching term is never positive: own treatment never lowers own level
        prop_assert!(pr.bias <= ir.bias + 1e-9);
    }
}

#[test]
fn treated_fraction_matches_inclusion_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, h) = (200, 15);
    for kind in DesignKind::ALL {
        let design = DesignSpec::standard(kind, 0.3, h).unwrap();
        let fractions: Vec<f64> = (0..2000)
            .map(|_| generate(&design, n, h, &mut rng).unwrap().treated_cells() as f64 / (n * h) as f64)
            .collect();
        let summary = SampleSummary::of(&fractions);
        let (fraction, target) = (summary.mean, inclusion_probability(&design));
        assert!((fraction - target).abs() <= 4.0 * summary.std_error().unwrap(), "{kind}: {fraction} vs {target}");
    }
}

#[test]
fn enumeration_agrees_with_sampled_assignments() {
    let control = vec![vec![2.0, 2.5, 3.0]; 5];
    let treatment: Vec<Vec<f64>> = control
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|s| s + 0.4 * i as f64).collect())
        .collect();
    let scenario = Scenario::new(
        vec![ItemParams::new(2.5, 1.0).unwrap(); 5],
        12.0,
        DemandModel::stationary(5, Noise::Uniform { low: 2.0, width: 3.0 }).unwrap(),
        control,
        treatment,
    )
    .unwrap();
    for kind in [DesignKind::IR, DesignKind::PR, DesignKind::SR] {
        let design = DesignSpec::standard(kind, 0.5, 3).unwrap();
        let exact = oracle::design_bias(&scenario, &design, OracleMode::Enumerate).unwrap();
        let sampled = oracle::design_bias(&scenario, &design, OracleMode::MonteCarlo { reps: 20_000, seed: 3 }).unwrap();
        let se = sampled.std_error.unwrap();
        assert!((exact.bias - sampled.bias).abs() <= 4.0 * se + 1e-12, "{kind}: {} vs {} ± {se}", exact.bias, sampled.bias);
    }
}
