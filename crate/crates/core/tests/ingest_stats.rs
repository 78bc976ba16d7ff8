use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use pinph::fixture::{size_entries, table_a1};
use pinph::ingest::{
    filter_universe, partition_periods, AssetDayPanel, AssetMetadata, DayCount, PeriodScheme,
};
use pinph::stats::{descriptive_summary, mean_difference_matrix, ols, size_group_profile, welch_t_test, Design};
use pinph::Indicator;
use proptest::prelude::*;

fn calendar(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2008, 2, 20).unwrap();
    (0..n as i64).map(|i| start + Duration::days(i)).collect()
}

fn panel_strategy() -> impl Strategy<Value = (AssetDayPanel, Vec<NaiveDate>)> {
    let asset = (prop::collection::vec((0u64..3, 0u64..3), 90), any::<bool>(), any::<bool>());
    prop::collection::vec(asset, 1..6).prop_map(|assets| {
        let days = calendar(90);
        let mut panel = AssetDayPanel::default();
        for (i, (counts, equity, has_meta)) in assets.into_iter().enumerate() {
            let ticker = format!("T{i}");
            panel.counts.insert(
                ticker.clone(),
                days.iter()
                    .zip(counts)
                    .map(|(d, (b, s))| (*d, DayCount { buys: b + 1, sells: s }))
                    .collect(),
            );
            if has_meta {
                panel.metadata.insert(
                    ticker,
                    AssetMetadata { market_cap: 1e9, mean_daily_volume: 10.0, is_equity: equity },
                );
            }
        }
        (panel, days)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtering_is_idempotent((panel, days) in panel_strategy()) {
        let once = filter_universe(&panel, &days);
        prop_assert_eq!(filter_universe(&once, &days), once);
    }

    #[test]
    fn partitions_cover_every_day((panel, days) in panel_strategy(), monthly in any::<bool>()) {
        let indicators: BTreeMap<NaiveDate, Indicator> = days
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, if i % 3 == 0 { Indicator::Down } else { Indicator::Up }))
            .collect();
        let scheme = if monthly { PeriodScheme::Monthly } else { PeriodScheme::Quarterly };
        let windows = partition_periods(&panel, &indicators, scheme);
        for (asset, asset_days) in &panel.counts {
            let total: usize = windows.iter().filter(|w| &w.asset_id == asset).map(|w| w.len()).sum();
            prop_assert_eq!(total, asset_days.len());
        }
    }

    #[test]
    fn summary_ignores_order(mut v in prop::collection::vec(-1e3..1e3f64, 1..50), rot in 0usize..50) {
        let a = descriptive_summary(&v).unwrap();
        let k = rot % v.len();
        v.rotate_left(k);
        v.reverse();
        let b = descriptive_summary(&v).unwrap();
        prop_assert_eq!((a.n, a.median, a.p10, a.p90), (b.n, b.median, b.p10, b.p90));
        prop_assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
        prop_assert!((a.std_dev - b.std_dev).abs() <= 1e-9 * a.std_dev.max(1.0));
    }

    #[test]
    fn welch_is_antisymmetric(
        a in prop::collection::vec(-10.0..10.0f64, 2..20),
        b in prop::collection::vec(-10.0..10.0f64, 2..20),
    ) {
        let ab = welch_t_test(&a, &b);
        let ba = welch_t_test(&b, &a);
        prop_assert_eq!(ab.difference, -ba.difference);
        prop_assert_eq!(ab.p_value.to_bits(), ba.p_value.to_bits());
    }

    #[test]
    fn residuals_orthogonal_to_regressors(
        cols in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 30), 3),
        y in prop::collection::vec(-100.0..100.0f64, 30),
    ) {
        let mut design = Design::with_intercept(30);
        for (i, c) in cols.iter().enumerate() {
            design = design.column(format!("x{i}"), c.clone());
        }
        let fit = match ols(&y, &design) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rn = norm(&fit.residuals);
        for c in &design.columns {
            let dot: f64 = c.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() <= 1e-10 * norm(c) * rn.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn rescaled_regressor_rescales_slope(scale in 1e-6..1e6f64) {
        let rows = table_a1();
        let y: Vec<f64> = rows.iter().map(|r| r.pin).collect();
        let x: Vec<f64> = rows.iter().map(|r| r.market_cap).collect();
        let base = ols(&y, &Design::with_intercept(45).column("cap", x.clone())).unwrap();
        let scaled = ols(&y, &Design::with_intercept(45).column("cap", x.iter().map(|v| v * scale).collect())).unwrap();
        prop_assert!((scaled.coefficients[1] * scale - base.coefficients[1]).abs() <= 1e-9 * base.coefficients[1].abs());
        prop_assert!((scaled.t_stats[1] - base.t_stats[1]).abs() <= 1e-9 * base.t_stats[1].abs());
        prop_assert!((scaled.p_values[1] - base.p_values[1]).abs() <= 1e-9);
    }
}

#[test]
fn fixture_has_forty_five_assets() {
    let rows = table_a1();
    assert_eq!(rows.len(), 45);
    assert!(rows.iter().all(|r| (0.0..1.0).contains(&r.pin) && (0.0..1.0).contains(&r.ph)));
    assert!(rows.iter().all(|r| r.market_cap > 0.0 && r.transactions > 0));
}

#[test]
fn fixture_size_and_volume_pattern() {
    let rows = table_a1();
    let pin: Vec<f64> = rows.iter().map(|r| r.pin).collect();
    let ph: Vec<f64> = rows.iter().map(|r| r.ph).collect();
    let cap = Design::with_intercept(45).column("market_cap", rows.iter().map(|r| r.market_cap).collect());
    let tx = Design::with_intercept(45).column("transactions", rows.iter().map(|r| r.transactions as f64).collect());

    let f = ols(&pin, &cap).unwrap();
    assert!(f.coefficients[1] < 0.0 && f.p_values[1] < 0.01, "{:?}", f.p_values);
    assert!(ols(&ph, &cap).unwrap().p_values[1] > 0.05);
    let f = ols(&pin, &tx).unwrap();
    assert!(f.coefficients[1] < 0.0);
    assert!(ols(&ph, &tx).unwrap().p_values[1] > 0.05);
}

#[test]
fn fixture_size_profile() {
    let profile = size_group_profile(&size_entries(), 9, 5).unwrap();
    assert_eq!(profile.groups.len(), 9);
    assert!(profile.groups.iter().all(|g| g.assets.len() == 5));
    assert!(profile.pin_fit.coefficients[1] < 0.0);
    assert!(profile.ph_fit.p_values[1] > 0.05);
}

#[test]
fn single_period_matrix_is_trivial() {
    let m = mean_difference_matrix(&[("2008-Q1".into(), vec![0.1, 0.2, 0.3])]).unwrap();
    assert_eq!(m.len(), 1);
    let c = m.get(0, 0).unwrap();
    assert_eq!((c.difference, c.p_value), (0.0, 1.0));
}
