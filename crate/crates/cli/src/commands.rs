use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::Context;
use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pinph::estimator::window_seed;
use pinph::ingest::{
    aggregate_daily, build_indicator_series, classify_trade_signs, filter_universe_with_report,
    parse_daily_counts, parse_market, parse_metadata, parse_trades, partition_periods, read_panel,
    write_daily_counts, write_market_returns, write_metadata, write_panel, write_trades,
    AssetDayPanel, AssetMetadata, DayCount, MarketSeries, Side, TradeRecord,
};
use pinph::simulator::{simulate_window, IndicatorSource, SimulationSpec};
use pinph::stats::percentile_sorted;
use pinph::{average_pin_ph, estimate, estimate_panel, EstimationResult, Indicator, ParamName};

use crate::config::{Loaded, RunConfig};
use crate::output::{fail, num, Classify, CliResult, Failure, Provenance};

pub const RESULTS_HEADER: [&str; 15] = [
    "ticker",
    "period",
    "alpha",
    "delta",
    "mu",
    "eps_b",
    "eps_s",
    "eps_bh",
    "eps_sh",
    "log_likelihood",
    "pin",
    "ph",
    "n_restarts",
    "converged",
    "boundary_flags",
];

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .or_fail(Failure::Input)
}

fn parse_with<T, E>(path: &Path, parse: impl FnOnce(BufReader<File>) -> Result<T, E>) -> CliResult<T>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let reader = open(path)?;
    parse(reader)
        .with_context(|| format!("in {}", path.display()))
        .or_fail(Failure::Input)
}

pub fn ingest(l: &Loaded, prov: &Provenance) -> CliResult<()> {
    let cfg = &l.config;
    let format = cfg.format().or_fail(Failure::Usage)?;
    let market_path = l.input_path(&cfg.input.market, "market").or_fail(Failure::Usage)?;
    let metadata_path = l.input_path(&cfg.input.metadata, "metadata").or_fail(Failure::Usage)?;

    let market = parse_with(&market_path, |r| parse_market(r, &format))?;
    if market.dates.len() < 2 {
        return fail(
            Failure::EmptyInput,
            format!("{} needs at least two market days", market_path.display()),
        );
    }
    let metadata = parse_with(&metadata_path, |r| parse_metadata(r, &format))?;

    let panel = match (&cfg.input.trades, &cfg.input.counts) {
        (Some(t), None) => {
            let path = l.resolve(t);
            let trades = parse_with(&path, |r| parse_trades(r, &format))?;
            if trades.is_empty() {
                return fail(Failure::EmptyInput, format!("{} contains no trades", path.display()));
            }
            let method = cfg.sign_method().or_fail(Failure::Usage)?;
            let signed = classify_trade_signs(&trades, method)
                .with_context(|| format!("in {}", path.display()))
                .or_fail(Failure::Input)?;
            aggregate_daily(&signed).or_fail(Failure::Input)?
        }
        (None, Some(c)) => {
            let path = l.resolve(c);
            let panel = parse_with(&path, |r| parse_daily_counts(r, &format))?;
            if panel.counts.is_empty() {
                return fail(Failure::EmptyInput, format!("{} contains no rows", path.display()));
            }
            panel
        }
        _ => return fail(Failure::Usage, "configure exactly one of input.trades and input.counts"),
    }
    .with_metadata(metadata);

    let indicators = build_indicator_series(&market);
    let (kept, report) = filter_universe_with_report(&panel, &indicators.trading_days());
    tracing::info!(
        assets_before = report.assets_before,
        assets_after = report.assets_after,
        trades_before = report.trades_before,
        trades_after = report.trades_after,
        "filtered universe"
    );
    for (asset, reason) in &report.excluded {
        tracing::info!(asset = %asset, reason = %reason, "excluded");
    }

    let out = l.out_dir();
    let summary = [
        ("assets_before", report.assets_before.to_string()),
        ("assets_after", report.assets_after.to_string()),
        ("trades_before", report.trades_before.to_string()),
        ("trades_after", report.trades_after.to_string()),
        ("trading_days", indicators.by_date.len().to_string()),
    ];
    prov.write_csv(
        &out.join("filter_report.csv"),
        &["metric", "value"],
        summary.iter().map(|(k, v)| [k.to_string(), v.clone()]),
    )
    .or_fail(Failure::Input)?;
    prov.write_csv(
        &out.join("excluded.csv"),
        &["ticker", "reason"],
        report.excluded.iter().map(|(a, r)| [a.clone(), r.to_string()]),
    )
    .or_fail(Failure::Input)?;
    prov.write(&out.join("panel.csv"), |buf| Ok(write_panel(buf, &kept, &indicators.by_date)?))
        .or_fail(Failure::Input)?;
    prov.write(&out.join("assets.csv"), |buf| Ok(write_metadata(buf, &kept.metadata)?))
        .or_fail(Failure::Input)?;

    if kept.counts.is_empty() {
        return fail(Failure::EmptyInput, "no asset survived the activity filter");
    }
    Ok(())
}

pub fn result_record(r: &EstimationResult) -> Vec<String> {
    let p = r.params.to_array();
    let mut rec = vec![r.asset_id.clone(), r.period_label.clone()];
    rec.extend(p.iter().map(|&v| num(v)));
    rec.push(num(r.log_likelihood));
    rec.push(num(r.pin));
    rec.push(num(r.ph));
    rec.push(r.n_restarts_used.to_string());
    rec.push(r.converged.to_string());
    rec.push(
        r.boundary_flags
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join(";"),
    );
    rec
}

pub fn estimate_cmd(l: &Loaded, prov: &Provenance) -> CliResult<()> {
    let cfg = &l.config;
    let format = cfg.format().or_fail(Failure::Usage)?;
    let scheme = cfg.scheme().or_fail(Failure::Usage)?;
    let config = cfg.estimator();
    config.validate().or_fail(Failure::Usage)?;

    let panel_path = l.panel_path();
    if !panel_path.exists() {
        return fail(
            Failure::Input,
            format!(
                "panel {} not found; run `pinph ingest` first or set input.panel",
                panel_path.display()
            ),
        );
    }
    let (panel, indicators) = parse_with(&panel_path, |r| read_panel(r, &format))?;
    let windows = partition_periods(&panel, &indicators, scheme);
    if windows.is_empty() {
        return fail(Failure::EmptyInput, format!("{} holds no estimable windows", panel_path.display()));
    }
    tracing::info!(windows = windows.len(), threads = rayon::current_num_threads(), "estimating");

    let results = estimate_panel(&windows, &config);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (w, r) in windows.iter().zip(results) {
        match r {
            Ok(r) => {
                tracing::debug!(asset = %r.asset_id, period = %r.period_label, pin = r.pin, ph = r.ph, "estimated");
                rows.push(result_record(&r));
            }
            Err(e) => {
                tracing::warn!(asset = %w.asset_id, period = %w.period_label, error = %e, "window failed");
                failures.push([w.asset_id.clone(), w.period_label.clone(), e.to_string()]);
            }
        }
    }
    tracing::info!(estimated = rows.len(), failed = failures.len(), "done");

    let out = l.out_dir();
    prov.write_csv(&out.join("results.csv"), &RESULTS_HEADER, &rows)
        .or_fail(Failure::Input)?;
    prov.write_csv(&out.join("estimate_failures.csv"), &["ticker", "period", "error"], &failures)
        .or_fail(Failure::Input)?;
    if rows.is_empty() {
        return fail(Failure::Numerical, "every window failed to estimate");
    }
    Ok(())
}

fn is_business_day(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// The business day before `start` followed by `n` business days from `start`.
pub fn market_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut before = start - Duration::days(1);
    while !is_business_day(before) {
        before -= Duration::days(1);
    }
    let mut days = vec![before];
    let mut d = start;
    while days.len() <= n {
        if is_business_day(d) {
            days.push(d);
        }
        d += Duration::days(1);
    }
    days
}

fn ticker_width(n: usize) -> usize {
    n.to_string().len().max(2)
}

/// Trades that reproduce the day's counts and are classified identically by the
/// tick test: each buy ticks the price up one cent, each sell down one cent.
fn synthetic_trades(asset: &str, days: &BTreeMap<NaiveDate, DayCount>) -> Vec<TradeRecord> {
    let open = NaiveTime::from_hms_opt(9, 0, 0).expect("valid time");
    let mut cents: i64 = 1_000_000;
    let mut out = Vec::new();
    for (date, c) in days {
        let sides = std::iter::repeat_n(Side::Buy, c.buys as usize)
            .chain(std::iter::repeat_n(Side::Sell, c.sells as usize));
        for (k, side) in sides.enumerate() {
            cents += if side == Side::Buy { 1 } else { -1 };
            out.push(TradeRecord {
                timestamp: date.and_time(open) + Duration::seconds(k as i64),
                asset_id: asset.to_string(),
                price: cents as f64 / 100.0,
                quantity: 1,
                side,
            });
        }
    }
    out
}

pub fn simulate(l: &Loaded, prov: &Provenance) -> CliResult<()> {
    let cfg = &l.config;
    let sim = &cfg.simulation;
    let params = sim
        .theta
        .params()
        .context("invalid simulation.theta")
        .or_fail(Failure::Usage)?;
    if sim.n_days == 0 {
        return fail(Failure::Usage, "simulation.n_days must be at least 1");
    }
    if sim.n_assets == 0 {
        return fail(Failure::Usage, "simulation.n_assets must be at least 1");
    }
    let trades_format = match sim.format.as_str() {
        "counts" => false,
        "trades" => true,
        other => return fail(Failure::Usage, format!("unknown simulation.format `{other}` (counts or trades)")),
    };

    let dates = market_calendar(sim.start, sim.n_days);
    let mut rng = ChaCha8Rng::seed_from_u64(window_seed(cfg.seed, "market", "simulate"));
    let returns: Vec<f64> = dates
        .iter()
        .map(|_| if rng.random_bool(0.5) { 0.01 } else { -0.01 })
        .collect();
    let market = MarketSeries::from_returns(dates.clone(), returns).or_fail(Failure::Input)?;
    let indicators: Vec<Indicator> = market.indicators[..sim.n_days].to_vec();
    let trading = &dates[1..];

    let width = ticker_width(sim.n_assets);
    let mut panel = AssetDayPanel::default();
    for i in 0..sim.n_assets {
        let ticker = format!("S{:0width$}", i + 1);
        let spec = SimulationSpec {
            params,
            indicators: IndicatorSource::Explicit(indicators.clone()),
            n_days: sim.n_days,
            seed: window_seed(cfg.seed, &ticker, "simulate"),
        };
        let window = simulate_window(&spec, ticker.clone(), "simulate").or_fail(Failure::Usage)?;
        let days: BTreeMap<NaiveDate, DayCount> = trading
            .iter()
            .zip(&window.days)
            .map(|(d, c)| (*d, DayCount { buys: c.buys, sells: c.sells }))
            .collect();
        let volume = window.days.iter().map(|c| (c.buys + c.sells) as f64).sum::<f64>() / sim.n_days as f64;
        panel.metadata.insert(
            ticker.clone(),
            AssetMetadata {
                market_cap: 1e9 * (i + 1) as f64,
                mean_daily_volume: volume,
                is_equity: true,
            },
        );
        panel.counts.insert(ticker, days);
    }

    let out = l.out_dir();
    prov.write(&out.join("market.csv"), |buf| Ok(write_market_returns(buf, &market)?))
        .or_fail(Failure::Input)?;
    prov.write(&out.join("metadata.csv"), |buf| Ok(write_metadata(buf, &panel.metadata)?))
        .or_fail(Failure::Input)?;
    let mut run = RunConfig {
        out: ".".into(),
        ..cfg.clone()
    };
    run.input.market = Some("market.csv".into());
    run.input.metadata = Some("metadata.csv".into());
    run.input.panel = None;
    run.input.results = None;
    run.input.delimiter = ',';
    if trades_format {
        let trades: Vec<TradeRecord> = panel
            .counts
            .iter()
            .flat_map(|(a, days)| synthetic_trades(a, days))
            .collect();
        prov.write(&out.join("trades.csv"), |buf| Ok(write_trades(buf, &trades)?))
            .or_fail(Failure::Input)?;
        run.input.trades = Some("trades.csv".into());
        run.input.counts = None;
    } else {
        prov.write(&out.join("counts.csv"), |buf| Ok(write_daily_counts(buf, &panel)?))
            .or_fail(Failure::Input)?;
        run.input.counts = Some("counts.csv".into());
        run.input.trades = None;
    }
    let text = toml::to_string(&run).context("serializing run.toml").or_fail(Failure::Input)?;
    prov.write(&out.join("run.toml"), |buf| Ok(buf.write_all(text.as_bytes())?))
        .or_fail(Failure::Input)?;
    tracing::info!(assets = sim.n_assets, days = sim.n_days, "simulated panel");
    Ok(())
}

pub const RECOVERY_QUANTITIES: [&str; 9] = ["alpha", "delta", "mu", "eps_b", "eps_s", "eps_bh", "eps_sh", "pin", "ph"];

pub fn recover(l: &Loaded, prov: &Provenance) -> CliResult<()> {
    let cfg = &l.config;
    let rec = &cfg.recover;
    let truth = rec
        .theta
        .params()
        .context("invalid recover.theta")
        .or_fail(Failure::Usage)?;
    if rec.replications == 0 || rec.n_days == 0 {
        return fail(Failure::Usage, "recover.replications and recover.n_days must be at least 1");
    }
    let config = cfg.estimator();
    config.validate().or_fail(Failure::Usage)?;

    let mut header: Vec<String> = vec!["replication".into(), "seed".into()];
    for q in RECOVERY_QUANTITIES {
        header.push(format!("{q}_true"));
        header.push(format!("{q}_est"));
    }
    header.push("log_likelihood".into());
    header.push("converged".into());

    let mut rows = Vec::new();
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); RECOVERY_QUANTITIES.len()];
    for k in 0..rec.replications {
        let seed = window_seed(cfg.seed, "recover", &k.to_string());
        let spec = SimulationSpec {
            params: truth,
            indicators: IndicatorSource::RandomSigns,
            n_days: rec.n_days,
            seed,
        };
        let window = simulate_window(&spec, format!("R{k}"), "recover").or_fail(Failure::Usage)?;
        let fit = estimate(&window, &config)
            .with_context(|| format!("replication {k}"))
            .or_fail(Failure::Numerical)?;
        let (pin, ph) = average_pin_ph(&truth, &window.indicators()).or_fail(Failure::Numerical)?;
        let mut pairs: Vec<(f64, f64)> = ParamName::ALL
            .iter()
            .map(|&n| (truth.get(n), fit.params.get(n)))
            .collect();
        pairs.push((pin, fit.pin));
        pairs.push((ph, fit.ph));

        let mut row = vec![k.to_string(), seed.to_string()];
        for (i, (t, e)) in pairs.iter().enumerate() {
            row.push(num(*t));
            row.push(num(*e));
            errors[i].push((e - t).abs());
        }
        row.push(num(fit.log_likelihood));
        row.push(fit.converged.to_string());
        tracing::info!(replication = k, pin_err = (fit.pin - pin).abs(), ph_err = (fit.ph - ph).abs(), "replication");
        rows.push(row);
    }

    let summary: Vec<[String; 3]> = RECOVERY_QUANTITIES
        .iter()
        .zip(errors.iter_mut())
        .map(|(q, e)| {
            e.sort_by(f64::total_cmp);
            [q.to_string(), num(percentile_sorted(e, 50.0)), num(percentile_sorted(e, 90.0))]
        })
        .collect();

    let out = l.out_dir();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    prov.write_csv(&out.join("recovery.csv"), &header, &rows)
        .or_fail(Failure::Input)?;
    prov.write_csv(
        &out.join("recovery_summary.csv"),
        &["quantity", "median_abs_error", "p90_abs_error"],
        &summary,
    )
    .or_fail(Failure::Input)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pinph::ingest::SignMethod;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn calendar_skips_weekends_and_adds_presample_day() {
        let days = market_calendar(d("2008-01-07"), 3);
        assert_eq!(days, vec![d("2008-01-04"), d("2008-01-07"), d("2008-01-08"), d("2008-01-09")]);
        let days = market_calendar(d("2008-01-02"), 252);
        assert_eq!(days.len(), 253);
        assert_eq!(days[0], d("2008-01-01"));
        assert!(days.iter().all(|&x| is_business_day(x)));
    }

    #[test]
    fn synthetic_trades_survive_the_tick_test() {
        let mut days = BTreeMap::new();
        days.insert(d("2008-01-02"), DayCount { buys: 3, sells: 5 });
        days.insert(d("2008-01-03"), DayCount { buys: 7, sells: 1 });
        let trades = synthetic_trades("X", &days);
        let ticked = classify_trade_signs(&trades, SignMethod::TickTest).unwrap();
        assert_eq!(ticked, trades);
        assert_eq!(aggregate_daily(&ticked).unwrap().counts["X"], days);
    }
}
