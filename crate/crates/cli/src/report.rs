//! Summary tables, mean-difference matrices, size/volume regressions and the
//! size-group profile, computed from a results file joined with asset metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Value};

use pinph::ingest::{parse_metadata, quarter_of_label, PeriodScheme};
use pinph::stats::{
    descriptive_summary, mean_difference_matrix, ols, size_group_profile, Design, MeanDiffMatrix, OlsFit,
    PanelRow, SizeEntry, SizeProfile, Star,
};
use pinph::StatsError;

use crate::config::Loaded;
use crate::output::{fail, num, write_svg, Classify, CliResult, Failure, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub ticker: String,
    pub period: String,
    pub pin: f64,
    pub ph: f64,
}

/// Reads `ticker`, `period`, `pin` and `ph` by header name; other columns are ignored.
pub fn read_results(path: &Path) -> CliResult<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .or_fail(Failure::Input)?;
    let headers = reader.headers().or_fail(Failure::Input)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no `{name}` column", path.display()))
            .or_fail(Failure::Input)
    };
    let (ti, pi, pin_i, ph_i) = (col("ticker")?, col("period")?, col("pin")?, col("ph")?);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.or_fail(Failure::Input)?;
        let get = |j: usize| rec.get(j).unwrap_or("");
        let parse = |j: usize, name: &str| {
            get(j)
                .parse::<f64>()
                .with_context(|| format!("{} record {}: bad {name} `{}`", path.display(), i + 1, get(j)))
                .or_fail(Failure::Input)
        };
        rows.push(ResultRow {
            ticker: get(ti).to_string(),
            period: get(pi).to_string(),
            pin: parse(pin_i, "pin")?,
            ph: parse(ph_i, "ph")?,
        });
    }
    Ok(rows)
}

fn star(p: f64) -> String {
    if p.is_nan() {
        String::new()
    } else {
        Star::from_p(p).to_string()
    }
}

const COEF_HEADER: [&str; 9] = [
    "measure",
    "term",
    "coefficient",
    "std_error",
    "t_stat",
    "p_value",
    "star",
    "r_squared",
    "n",
];

fn coef_rows(measure: &str, fit: &OlsFit) -> Vec<Vec<String>> {
    (0..fit.names.len())
        .map(|i| {
            vec![
                measure.to_string(),
                fit.names[i].clone(),
                num(fit.coefficients[i]),
                num(fit.std_errors[i]),
                num(fit.t_stats[i]),
                num(fit.p_values[i]),
                star(fit.p_values[i]),
                num(fit.r_squared),
                fit.n.to_string(),
            ]
        })
        .collect()
}

fn matrix_rows(m: &MeanDiffMatrix) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..m.len() {
        for j in i..m.len() {
            if let Some(c) = m.get(i, j) {
                rows.push(vec![
                    m.labels[i].clone(),
                    m.labels[j].clone(),
                    num(c.difference),
                    num(c.p_value),
                    c.star.to_string(),
                ]);
            }
        }
    }
    rows
}

/// Per-asset means over periods, in ticker order.
fn asset_means(rows: &[PanelRow]) -> Vec<PanelRow> {
    let mut by: BTreeMap<&str, Vec<&PanelRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.asset_id.as_str()).or_default().push(r);
    }
    by.into_iter()
        .map(|(a, rs)| {
            let n = rs.len() as f64;
            PanelRow {
                asset_id: a.to_string(),
                period_label: "all".into(),
                pin: rs.iter().map(|r| r.pin).sum::<f64>() / n,
                ph: rs.iter().map(|r| r.ph).sum::<f64>() / n,
                market_cap: rs[0].market_cap,
                volume: rs[0].volume,
                q4_dummy: 0,
            }
        })
        .collect()
}

fn regress_on(assets: &[PanelRow], name: &str, x: impl Fn(&PanelRow) -> f64) -> Result<(OlsFit, OlsFit), StatsError> {
    let design = Design::with_intercept(assets.len()).column(name, assets.iter().map(x).collect());
    let pin = ols(&assets.iter().map(|r| r.pin).collect::<Vec<_>>(), &design)?;
    let ph = ols(&assets.iter().map(|r| r.ph).collect::<Vec<_>>(), &design)?;
    Ok((pin, ph))
}

fn panel_regression(rows: &[PanelRow]) -> Result<OlsFit, StatsError> {
    let mut design = Design::with_intercept(rows.len())
        .column("market_cap", rows.iter().map(|r| r.market_cap).collect())
        .column("volume", rows.iter().map(|r| r.volume).collect());
    let q4: Vec<f64> = rows.iter().map(|r| r.q4_dummy as f64).collect();
    if q4.iter().any(|&v| v != q4[0]) {
        design = design.column("q4", q4);
    } else {
        tracing::warn!("fourth-quarter dummy is constant; dropped from the panel regression");
    }
    design = design.column("pin", rows.iter().map(|r| r.pin).collect());
    ols(&rows.iter().map(|r| r.ph).collect::<Vec<_>>(), &design)
}

pub fn figure_svg(profile: &SizeProfile) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 50.0);
    let n = profile.groups.len() as f64;
    let ymax = profile
        .groups
        .iter()
        .flat_map(|g| [g.mean_pin, g.mean_ph, g.fitted_pin, g.fitted_ph])
        .fold(0.0f64, f64::max)
        * 1.1;
    let ymax = if ymax > 0.0 { ymax } else { 1.0 };
    let x = |rank: f64| left + (rank - 0.5) / n * (w - left - right);
    let y = |v: f64| top + (1.0 - v.max(0.0) / ymax) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, h - bottom);
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            y(v) + 4.0,
            v
        );
    }
    for g in &profile.groups {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x(g.rank as f64),
            h - bottom + 16.0,
            g.rank
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">size group (1 = smallest market cap)</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    let series: [(&str, &str, Vec<(f64, f64)>); 2] = [
        ("PIN", "#1f77b4", profile.groups.iter().map(|g| (g.mean_pin, g.fitted_pin)).collect()),
        ("PH", "#d62728", profile.groups.iter().map(|g| (g.mean_ph, g.fitted_ph)).collect()),
    ];
    for (k, (label, color, points)) in series.iter().enumerate() {
        if let (Some(first), Some(last)) = (points.first(), points.last()) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                x(1.0),
                y(first.1),
                x(n),
                y(last.1)
            );
        }
        for (g, (mean, _)) in points.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/>"#,
                x((g + 1) as f64),
                y(*mean)
            );
        }
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{:.1}">{label}</text>"#,
            w - right - 60.0,
            ly,
            w - right - 50.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Size-group layout: `group_size` 0 spreads the assets evenly over
/// `n_groups`, with at least one asset per group.
fn group_layout(n_assets: usize, n_groups: usize, group_size: usize) -> (usize, usize) {
    if group_size > 0 {
        (n_groups, group_size)
    } else if n_groups == 0 {
        (0, 0)
    } else {
        (n_groups, (n_assets / n_groups).max(1))
    }
}

pub fn report(l: &Loaded, prov: &Provenance) -> CliResult<()> {
    let cfg = &l.config;
    let scheme = cfg.scheme().or_fail(Failure::Usage)?;
    let format = cfg.format().or_fail(Failure::Usage)?;
    let results_path = l.results_path();
    let metadata_path = l.metadata_path();
    let results = read_results(&results_path)?;
    if results.is_empty() {
        return fail(Failure::EmptyInput, format!("{} has no result rows", results_path.display()));
    }
    let file = std::fs::File::open(&metadata_path)
        .with_context(|| format!("cannot open {}", metadata_path.display()))
        .or_fail(Failure::Input)?;
    let metadata = parse_metadata(std::io::BufReader::new(file), &format)
        .with_context(|| format!("in {}", metadata_path.display()))
        .or_fail(Failure::Input)?;

    let mut rows = Vec::new();
    let mut join_failures = Vec::new();
    for r in results {
        match metadata.get(&r.ticker) {
            Some(m) => rows.push(PanelRow {
                q4_dummy: u8::from(quarter_of_label(&r.period) == Some(4)),
                asset_id: r.ticker,
                period_label: r.period,
                pin: r.pin,
                ph: r.ph,
                market_cap: m.market_cap,
                volume: m.mean_daily_volume,
            }),
            None => {
                tracing::warn!(ticker = %r.ticker, period = %r.period, "no metadata for result row");
                join_failures.push([r.ticker, r.period, "no metadata".to_string()]);
            }
        }
    }
    let out = l.out_dir();
    prov.write_csv(&out.join("join_failures.csv"), &["ticker", "period", "reason"], &join_failures)
        .or_fail(Failure::Input)?;
    if rows.is_empty() {
        return fail(Failure::EmptyInput, "no result row could be joined with metadata");
    }

    let mut periods: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        let e = periods.entry(r.period_label.clone()).or_default();
        e.0.push(r.pin);
        e.1.push(r.ph);
    }
    let mut skipped: Vec<String> = Vec::new();

    // Per-period summaries.
    let table = match scheme {
        PeriodScheme::Quarterly => "table1",
        PeriodScheme::Monthly => "table7",
    };
    let all_pin: Vec<f64> = rows.iter().map(|r| r.pin).collect();
    let all_ph: Vec<f64> = rows.iter().map(|r| r.ph).collect();
    let mut summary_rows = Vec::new();
    let mut summary_json = Vec::new();
    for (label, pin, ph) in periods
        .iter()
        .map(|(l, (a, b))| (l.as_str(), a, b))
        .chain(std::iter::once(("all", &all_pin, &all_ph)))
    {
        for (measure, values) in [("pin", pin), ("ph", ph)] {
            let s = descriptive_summary(values).or_fail(Failure::Numerical)?;
            summary_rows.push(vec![
                label.to_string(),
                measure.to_string(),
                s.n.to_string(),
                num(s.mean),
                num(s.median),
                num(s.std_dev),
                num(s.p10),
                num(s.p90),
            ]);
            summary_json.push(json!({"period": label, "measure": measure, "summary": s}));
        }
    }
    prov.write_csv(
        &out.join(format!("{table}_summary.csv")),
        &["period", "measure", "n", "mean", "median", "std_dev", "p10", "p90"],
        &summary_rows,
    )
    .or_fail(Failure::Input)?;

    // Mean-difference matrices.
    let mut matrices = serde_json::Map::new();
    for (name, measure, pick) in [
        ("table2_pin_differences", "pin", 0usize),
        ("table3_ph_differences", "ph", 1),
    ] {
        let groups: Vec<(String, Vec<f64>)> = periods
            .iter()
            .map(|(l, v)| (l.clone(), if pick == 0 { v.0.clone() } else { v.1.clone() }))
            .collect();
        match mean_difference_matrix(&groups) {
            Ok(m) => {
                prov.write_csv(
                    &out.join(format!("{name}.csv")),
                    &["row_period", "col_period", "difference", "p_value", "star"],
                    matrix_rows(&m),
                )
                .or_fail(Failure::Input)?;
                matrices.insert(measure.into(), serde_json::to_value(&m).or_fail(Failure::Input)?);
            }
            Err(e) => {
                tracing::warn!(table = name, error = %e, "skipped");
                skipped.push(format!("{name}: {e}"));
            }
        }
    }

    // Cross-sectional regressions on per-asset means.
    let assets = asset_means(&rows);
    let mut cross = serde_json::Map::new();
    for (name, term, x) in [
        ("table4_market_cap", "market_cap", (|r: &PanelRow| r.market_cap) as fn(&PanelRow) -> f64),
        ("table5_volume", "volume", |r: &PanelRow| r.volume),
    ] {
        match regress_on(&assets, term, x) {
            Ok((pin, ph)) => {
                let mut table_rows = coef_rows("pin", &pin);
                table_rows.extend(coef_rows("ph", &ph));
                prov.write_csv(&out.join(format!("{name}.csv")), &COEF_HEADER, &table_rows)
                    .or_fail(Failure::Input)?;
                cross.insert(term.into(), json!({"pin": pin, "ph": ph}));
            }
            Err(e) => {
                tracing::warn!(table = name, error = %e, "skipped");
                skipped.push(format!("{name}: {e}"));
            }
        }
    }

    let panel_fit = match panel_regression(&rows) {
        Ok(fit) => {
            prov.write_csv(&out.join("table6_panel.csv"), &COEF_HEADER, coef_rows("ph", &fit))
                .or_fail(Failure::Input)?;
            Some(fit)
        }
        Err(e) => {
            tracing::warn!(table = "table6_panel", error = %e, "skipped");
            skipped.push(format!("table6_panel: {e}"));
            None
        }
    };

    // Size-group profile.
    let entries: Vec<SizeEntry> = assets
        .iter()
        .map(|r| SizeEntry {
            asset_id: r.asset_id.clone(),
            market_cap: r.market_cap,
            pin: r.pin,
            ph: r.ph,
        })
        .collect();
    let (n_groups, group_size) = group_layout(entries.len(), cfg.report.n_groups, cfg.report.group_size);
    let profile = match size_group_profile(&entries, n_groups, group_size) {
        Ok(p) => {
            let fig_rows = p.groups.iter().map(|g| {
                vec![
                    g.rank.to_string(),
                    g.assets.join(";"),
                    num(g.mean_pin),
                    num(g.mean_ph),
                    num(g.fitted_pin),
                    num(g.fitted_ph),
                ]
            });
            prov.write_csv(
                &out.join("figure1_size_groups.csv"),
                &["rank", "assets", "mean_pin", "mean_ph", "fitted_pin", "fitted_ph"],
                fig_rows,
            )
            .or_fail(Failure::Input)?;
            write_svg(prov, &out.join("figure1_size_groups.svg"), &figure_svg(&p)).or_fail(Failure::Input)?;
            Some(p)
        }
        Err(e) => {
            tracing::warn!(table = "figure1", error = %e, "skipped");
            skipped.push(format!("figure1: {e}"));
            None
        }
    };

    let doc: Value = json!({
        "version": crate::output::VERSION,
        "config_sha256": prov.config_hash,
        "seed": prov.seed,
        "scheme": cfg.scheme,
        "periods": periods.keys().collect::<Vec<_>>(),
        "n_rows": rows.len(),
        "n_assets": assets.len(),
        "summary": summary_json,
        "mean_differences": matrices,
        "cross_section": cross,
        "panel": panel_fit,
        "size_groups": profile,
        "join_failures": join_failures.len(),
        "skipped": skipped,
    });
    let text = serde_json::to_string_pretty(&doc).or_fail(Failure::Input)?;
    let path = out.join("report.json");
    std::fs::write(&path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .or_fail(Failure::Input)?;
    tracing::info!(path = %path.display(), "wrote");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_defaults_to_even_split() {
        assert_eq!(group_layout(45, 9, 0), (9, 5));
        assert_eq!(group_layout(47, 9, 0), (9, 5));
        assert_eq!(group_layout(45, 3, 4), (3, 4));
        assert_eq!(group_layout(45, 0, 0), (0, 0));
        assert_eq!(group_layout(4, 9, 0), (9, 1));
    }

    #[test]
    fn star_is_blank_for_missing_p() {
        assert_eq!(star(f64::NAN), "");
        assert_eq!(star(0.001), "**");
        assert_eq!(star(0.03), "*");
    }
}
