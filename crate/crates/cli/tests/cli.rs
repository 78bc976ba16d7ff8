use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pinph::fixture::table_a1;

fn pinph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinph"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = pinph(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

const FAST: &str = "[estimator]\nn_draws = 300\nn_refine = 3\nmax_iterations = 100\n";

fn write_market(dir: &Path, days: &[&str]) {
    let mut s = String::from("date,return\n");
    for (i, d) in days.iter().enumerate() {
        s.push_str(&format!("{d},{}\n", if i % 2 == 0 { 0.01 } else { -0.01 }));
    }
    fs::write(dir.join("market.csv"), s).unwrap();
}

#[test]
fn ingest_drops_asset_missing_sells() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_market(d, &["2008-01-02", "2008-01-03", "2008-01-04"]);
    fs::write(
        d.join("counts.csv"),
        "date,ticker,buys,sells\n\
         2008-01-03,AAA,5,4\n2008-01-04,AAA,6,2\n\
         2008-01-03,BBB,5,4\n2008-01-04,BBB,6,0\n\
         2008-01-03,CCC,1,1\n2008-01-04,CCC,2,3\n",
    )
    .unwrap();
    fs::write(
        d.join("meta.csv"),
        "ticker,market_cap,mean_daily_volume,is_equity\nAAA,1e9,10,true\nBBB,2e9,10,true\nCCC,3e9,10,true\n",
    )
    .unwrap();
    fs::write(
        d.join("run.toml"),
        "out = \"out\"\n[input]\ncounts = \"counts.csv\"\nmarket = \"market.csv\"\nmetadata = \"meta.csv\"\n",
    )
    .unwrap();
    ok(d, &["ingest", "--config", "run.toml"]);
    let report = data_lines(&d.join("out/filter_report.csv"));
    assert!(report.contains(&"assets_before,3".to_string()));
    assert!(report.contains(&"assets_after,2".to_string()));
    let excluded = data_lines(&d.join("out/excluded.csv"));
    assert_eq!(excluded[1], "BBB,no buy and sell on 2008-01-04");
    // First market day has no indicator and is not in the panel.
    let panel = data_lines(&d.join("out/panel.csv"));
    assert_eq!(panel.len(), 1 + 4);
    assert!(panel.iter().all(|l| !l.contains("2008-01-02")));
}

#[test]
fn empty_and_malformed_inputs_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_market(d, &["2008-01-02", "2008-01-03"]);
    fs::write(d.join("meta.csv"), "ticker,market_cap,mean_daily_volume,is_equity\n").unwrap();
    fs::write(d.join("empty.csv"), "timestamp,ticker,price,quantity,side\n").unwrap();
    fs::write(d.join("bad.csv"), "timestamp,ticker,price,quantity,side\n2008-01-03T10:00:00,AAA,-1,5,B\n").unwrap();
    let cfg = |trades: &str| {
        format!("[input]\ntrades = \"{trades}\"\nmarket = \"market.csv\"\nmetadata = \"meta.csv\"\n")
    };
    fs::write(d.join("empty.toml"), cfg("empty.csv")).unwrap();
    fs::write(d.join("bad.toml"), cfg("bad.csv")).unwrap();
    fs::write(d.join("missing.toml"), cfg("nope.csv")).unwrap();
    assert_eq!(pinph(d, &["ingest", "--config", "empty.toml"]).status.code(), Some(5));
    let bad = pinph(d, &["ingest", "--config", "bad.toml"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
    assert_eq!(pinph(d, &["ingest", "--config", "missing.toml"]).status.code(), Some(3));
    assert_eq!(pinph(d, &["ingest", "--bogus"]).status.code(), Some(2));
    assert_eq!(pinph(d, &["ingest", "--scheme", "weekly"]).status.code(), Some(2));
}

#[test]
fn simulate_ingest_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sim.toml"),
        format!("out = \"sim\"\nseed = 4\n[simulation]\nn_assets = 2\nn_days = 40\n{FAST}"),
    )
    .unwrap();
    ok(d, &["simulate", "--config", "sim.toml"]);
    let first = fs::read(d.join("sim/counts.csv")).unwrap();
    ok(d, &["simulate", "--config", "sim.toml"]);
    assert_eq!(fs::read(d.join("sim/counts.csv")).unwrap(), first);

    ok(d, &["ingest", "--config", "sim/run.toml"]);
    let report = data_lines(&d.join("sim/filter_report.csv"));
    assert!(report.contains(&"assets_after,2".to_string()), "{report:?}");
    assert_eq!(data_lines(&d.join("sim/excluded.csv")).len(), 1);

    // 40 business days from 2008-01-02 stay inside the first quarter.
    ok(d, &["estimate", "--config", "sim/run.toml"]);
    let results = fs::read(d.join("sim/results.csv")).unwrap();
    let rows = data_lines(&d.join("sim/results.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("ticker,period,alpha,delta,mu,eps_b,eps_s,eps_bh,eps_sh,log_likelihood,pin,ph"));
    assert!(rows[1].starts_with("S01,2008-Q1,"));
    ok(d, &["estimate", "--config", "sim/run.toml"]);
    assert_eq!(fs::read(d.join("sim/results.csv")).unwrap(), results);
    let text = String::from_utf8(results).unwrap();
    assert!(text.starts_with("# pinph "));
    assert!(text.contains("# seed 4\n"));

    ok(d, &["report", "--config", "sim/run.toml"]);
    let matrix = data_lines(&d.join("sim/table2_pin_differences.csv"));
    assert_eq!(matrix, vec!["row_period,col_period,difference,p_value,star", "2008-Q1,2008-Q1,0,1,"]);
}

#[test]
fn trades_format_round_trips_under_tick_test() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sim.toml"),
        "out = \"sim\"\n[simulation]\nn_assets = 2\nn_days = 10\nformat = \"trades\"\n[simulation.theta]\nmu = 30.0\neps_b = 40.0\neps_s = 50.0\neps_bh = 5.0\neps_sh = 5.0\n",
    )
    .unwrap();
    ok(d, &["simulate", "--config", "sim.toml"]);
    ok(d, &["ingest", "--config", "sim/run.toml", "--out", "presigned"]);
    let run = fs::read_to_string(d.join("sim/run.toml")).unwrap().replace("presigned", "tick");
    fs::write(d.join("sim/tick.toml"), run).unwrap();
    ok(d, &["ingest", "--config", "sim/tick.toml", "--out", "ticked"]);
    let a = data_lines(&d.join("presigned/panel.csv"));
    assert_eq!(a.len(), 1 + 2 * 10);
    assert_eq!(a, data_lines(&d.join("ticked/panel.csv")));
}

#[test]
fn missing_panel_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pinph(dir.path(), &["estimate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pinph ingest"));
}

#[test]
fn simulate_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("zero.toml"), "[simulation]\nn_days = 0\n").unwrap();
    fs::write(d.join("alpha.toml"), "[simulation.theta]\nalpha = 1.5\n").unwrap();
    assert_eq!(pinph(d, &["simulate", "--config", "zero.toml"]).status.code(), Some(2));
    let out = pinph(d, &["simulate", "--config", "alpha.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn single_replication_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("rec.toml"),
        format!("[recover]\nreplications = 1\nn_days = 30\n{FAST}"),
    )
    .unwrap();
    ok(d, &["recover", "--config", "rec.toml", "--out", "rec"]);
    assert_eq!(data_lines(&d.join("rec/recovery.csv")).len(), 2);
    let summary = data_lines(&d.join("rec/recovery_summary.csv"));
    assert_eq!(summary.len(), 1 + 9);
    assert!(summary[8].starts_with("pin,"));
}

fn write_fixture_inputs(d: &Path) {
    let rows = table_a1();
    let mut results = String::from("ticker,period,pin,ph\n");
    let mut meta = String::from("ticker,market_cap,mean_daily_volume,is_equity\n");
    for r in &rows {
        results.push_str(&format!("{},2008,{},{}\n", r.ticker, r.pin, r.ph));
        meta.push_str(&format!("{},{},{},true\n", r.ticker, r.market_cap, r.transactions as f64 / 250.0));
    }
    results.push_str("NOMETA,2008,0.1,0.1\n");
    fs::write(d.join("results.csv"), results).unwrap();
    fs::write(d.join("meta.csv"), meta).unwrap();
    fs::write(
        d.join("report.toml"),
        "out = \"rep\"\n[input]\nresults = \"results.csv\"\nmetadata = \"meta.csv\"\n",
    )
    .unwrap();
}

#[test]
fn fixture_report_reproduces_size_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_fixture_inputs(d);
    ok(d, &["report", "--config", "report.toml"]);
    let t4 = data_lines(&d.join("rep/table4_market_cap.csv"));
    let pin_cap: Vec<&str> = t4[2].split(',').collect();
    assert_eq!(&pin_cap[..2], ["pin", "market_cap"]);
    assert!(pin_cap[2].starts_with('-'));
    assert_eq!(pin_cap[6], "**");
    let ph_cap: Vec<&str> = t4[4].split(',').collect();
    assert_eq!(&ph_cap[..2], ["ph", "market_cap"]);
    assert_eq!(ph_cap[6], "");

    let join = data_lines(&d.join("rep/join_failures.csv"));
    assert_eq!(join, vec!["ticker,period,reason", "NOMETA,2008,no metadata"]);
    assert_eq!(data_lines(&d.join("rep/figure1_size_groups.csv")).len(), 10);
    let svg = fs::read_to_string(d.join("rep/figure1_size_groups.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(json["n_assets"], 45);
    assert!(json["size_groups"]["pin_fit"]["coefficients"][1].as_f64().unwrap() < 0.0);
}

#[test]
fn monthly_report_has_twelve_periods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut results = String::from("ticker,period,pin,ph\n");
    let mut meta = String::from("ticker,market_cap,mean_daily_volume,is_equity\n");
    for (a, ticker) in ["AAA", "BBB", "CCC"].iter().enumerate() {
        meta.push_str(&format!("{ticker},{},{},true\n", 1e9 * (a + 1) as f64, [100, 180, 130][a]));
        for m in 1..=12 {
            let pin = 0.1 + 0.01 * ((a * 7 + m * 3) % 5) as f64;
            let ph = 0.05 + 0.005 * ((a * 5 + m) % 4) as f64;
            results.push_str(&format!("{ticker},2008-{m:02},{pin},{ph}\n"));
        }
    }
    fs::write(d.join("results.csv"), results).unwrap();
    fs::write(d.join("meta.csv"), meta).unwrap();
    fs::write(
        d.join("report.toml"),
        "out = \"rep\"\n[input]\nresults = \"results.csv\"\nmetadata = \"meta.csv\"\n[report]\nn_groups = 3\n",
    )
    .unwrap();
    ok(d, &["report", "--config", "report.toml", "--scheme", "monthly"]);
    let t7 = data_lines(&d.join("rep/table7_summary.csv"));
    let periods: std::collections::BTreeSet<&str> =
        t7[1..].iter().map(|l| l.split(',').next().unwrap()).filter(|p| *p != "all").collect();
    assert_eq!(periods.len(), 12);
    // Upper triangle including the diagonal.
    assert_eq!(data_lines(&d.join("rep/table3_ph_differences.csv")).len(), 1 + 12 * 13 / 2);
    let t6 = data_lines(&d.join("rep/table6_panel.csv"));
    assert!(t6.iter().any(|l| l.starts_with("ph,q4,")));
}
