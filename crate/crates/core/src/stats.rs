//! Cross-sectional and time-series statistics over estimated PIN/PH panels.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::StatsError;

/// One asset-period observation for the statistics layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub asset_id: String,
    pub period_label: String,
    pub pin: f64,
    pub ph: f64,
    pub market_cap: f64,
    pub volume: f64,
    /// 1 for fourth-quarter periods, else 0.
    pub q4_dummy: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Percentile of sorted data by linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with `n - 1` in the denominator; 0 for a single value.
fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Mean, median, sample standard deviation and 10th/90th percentiles.
pub fn descriptive_summary(values: &[f64]) -> Result<Summary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n: values.len(),
        mean: mean(&sorted),
        median: percentile_sorted(&sorted, 0.5),
        std_dev: variance(&sorted).sqrt(),
        p10: percentile_sorted(&sorted, 0.1),
        p90: percentile_sorted(&sorted, 0.9),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Star {
    None,
    /// Significant at 5%.
    One,
    /// Significant at 1%.
    Two,
}

impl Star {
    pub fn from_p(p: f64) -> Star {
        if p < 0.01 {
            Star::Two
        } else if p < 0.05 {
            Star::One
        } else {
            Star::None
        }
    }
}

impl fmt::Display for Star {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Star::None => "",
            Star::One => "*",
            Star::Two => "**",
        })
    }
}

/// Two-sided p-value of a t statistic. A zero statistic with zero standard
/// error (no difference, no spread) is reported as p = 1.
fn two_sided_p(estimate: f64, std_err: f64, df: f64) -> (f64, f64) {
    if std_err == 0.0 {
        return if estimate == 0.0 { (0.0, 1.0) } else { (estimate.signum() * f64::INFINITY, 0.0) };
    }
    let t = estimate / std_err;
    if !(df > 0.0) || !t.is_finite() {
        return (t, f64::NAN);
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (t, (2.0 * dist.sf(t.abs())).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    /// `mean(b) - mean(a)`.
    pub difference: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance two-sample t-test of `mean(b) - mean(a)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchTest {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let difference = mean(b) - mean(a);
    let se = (va + vb).sqrt();
    let df = if va + vb > 0.0 {
        (va + vb).powi(2) / (va.powi(2) / (na - 1.0) + vb.powi(2) / (nb - 1.0))
    } else {
        na + nb - 2.0
    };
    let (t_stat, p_value) = two_sided_p(difference, se, df);
    WelchTest {
        difference,
        t_stat,
        df,
        p_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDiff {
    pub difference: f64,
    pub p_value: f64,
    pub star: Star,
}

/// Upper-triangular table of group mean differences; cell `(i, j)` with
/// `i < j` holds `mean(group j) - mean(group i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDiffMatrix {
    pub labels: Vec<String>,
    cells: Vec<Vec<Option<MeanDiff>>>,
}

impl MeanDiffMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `None` below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Option<MeanDiff> {
        self.cells[i][j]
    }
}

pub fn mean_difference_matrix(groups: &[(String, Vec<f64>)]) -> Result<MeanDiffMatrix, StatsError> {
    if groups.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some((label, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(StatsError::SmallGroup(label.clone()));
    }
    let k = groups.len();
    let mut cells = vec![vec![None; k]; k];
    for i in 0..k {
        cells[i][i] = Some(MeanDiff {
            difference: 0.0,
            p_value: 1.0,
            star: Star::None,
        });
        for j in i + 1..k {
            let w = welch_t_test(&groups[i].1, &groups[j].1);
            cells[i][j] = Some(MeanDiff {
                difference: w.difference,
                p_value: w.p_value,
                star: Star::from_p(w.p_value),
            });
        }
    }
    Ok(MeanDiffMatrix {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        cells,
    })
}

/// Named regressor columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    /// A design holding only an intercept column of length `n`.
    pub fn with_intercept(n: usize) -> Self {
        Design {
            names: vec!["constant".into()],
            columns: vec![vec![1.0; n]],
        }
    }

    pub fn column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.names.push(name.into());
        self.columns.push(values);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided, Student's t with `df` degrees of freedom. NaN when `df == 0`.
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n: usize,
    pub df: usize,
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.p_values[i])
    }
}

/// Relative size of an R diagonal entry below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares with classical standard errors.
///
/// An all-ones column is treated as the intercept: the remaining columns and
/// the response are centered before a QR solve on unit-norm columns, so
/// regressors on very different scales (market caps in the trillions next to
/// a dummy) stay well conditioned. `n == k` yields an exact fit with NaN
/// inference columns.
pub fn ols(response: &[f64], design: &Design) -> Result<OlsFit, StatsError> {
    let n = response.len();
    let k = design.columns.len();
    if design.names.len() != k {
        return Err(StatsError::Dimension(format!("{} names for {k} columns", design.names.len())));
    }
    if k == 0 {
        return Err(StatsError::Dimension("no regressors".into()));
    }
    if let Some((name, col)) = design.names.iter().zip(&design.columns).find(|(_, c)| c.len() != n) {
        return Err(StatsError::Dimension(format!("column `{name}` has {} rows, response has {n}", col.len())));
    }
    if n < k {
        return Err(StatsError::TooFewObservations { n, k });
    }

    let intercept = design.columns.iter().position(|c| c.iter().all(|&v| v == 1.0));
    let slopes: Vec<usize> = (0..k).filter(|&j| Some(j) != intercept).collect();

    let constant_response = response.iter().all(|&v| v == response[0]);
    let y_mean = if constant_response { response[0] } else { mean(response) };
    let center = |v: &[f64]| -> (f64, Vec<f64>) {
        match intercept {
            Some(_) => {
                let m = mean(v);
                (m, v.iter().map(|x| x - m).collect())
            }
            None => (0.0, v.to_vec()),
        }
    };
    let y_work: Vec<f64> = match (intercept, constant_response) {
        (Some(_), true) => vec![0.0; n],
        (Some(_), false) => response.iter().map(|y| y - y_mean).collect(),
        (None, _) => response.to_vec(),
    };

    let m = slopes.len();
    let mut x_means = Vec::with_capacity(m);
    let mut scales = Vec::with_capacity(m);
    let mut z = DMatrix::<f64>::zeros(n, m);
    let mut collinear = Vec::new();
    for (c, &j) in slopes.iter().enumerate() {
        let (mu, col) = center(&design.columns[j]);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            collinear.push(design.names[j].clone());
        }
        for (r, v) in col.iter().enumerate() {
            z[(r, c)] = if norm > 0.0 { v / norm } else { 0.0 };
        }
        x_means.push(mu);
        scales.push(norm);
    }
    if !collinear.is_empty() {
        if let Some(i) = intercept {
            collinear.insert(0, design.names[i].clone());
        }
        return Err(StatsError::RankDeficient(collinear));
    }

    let mut gamma = DVector::<f64>::zeros(m);
    let mut r_inv = DMatrix::<f64>::zeros(m, m);
    if m > 0 {
        let qr = z.clone().qr();
        let r = qr.r();
        let bad: Vec<String> = (0..m)
            .filter(|&c| r[(c, c)].abs() < RANK_TOL)
            .map(|c| design.names[slopes[c]].clone())
            .collect();
        if !bad.is_empty() {
            return Err(StatsError::RankDeficient(bad));
        }
        let qty = qr.q().transpose() * DVector::from_column_slice(&y_work);
        gamma = r.solve_upper_triangular(&qty).expect("non-singular R");
        r_inv = r
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .expect("non-singular R");
    }

    let mut coefficients = vec![0.0; k];
    for (c, &j) in slopes.iter().enumerate() {
        coefficients[j] = gamma[c] / scales[c];
    }
    if let Some(i) = intercept {
        coefficients[i] = y_mean
            - slopes
                .iter()
                .enumerate()
                .map(|(c, &j)| coefficients[j] * x_means[c])
                .sum::<f64>();
    }

    let fitted_work = &z * &gamma;
    let rss: f64 = y_work.iter().zip(fitted_work.iter()).map(|(y, f)| (y - f).powi(2)).sum();
    let residuals: Vec<f64> = (0..n)
        .map(|r| {
            response[r]
                - design
                    .columns
                    .iter()
                    .zip(&coefficients)
                    .map(|(col, b)| col[r] * b)
                    .sum::<f64>()
        })
        .collect();
    let tss: f64 = y_work.iter().map(|v| v * v).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };

    let df = n - k;
    let sigma2 = if df > 0 { rss / df as f64 } else { f64::NAN };
    // Covariance of the scaled slopes: sigma² R⁻¹ R⁻ᵀ.
    let cov_scaled = &r_inv * r_inv.transpose();
    let mut std_errors = vec![0.0; k];
    for (c, &j) in slopes.iter().enumerate() {
        std_errors[j] = (sigma2 * cov_scaled[(c, c)]).sqrt() / scales[c];
    }
    if let Some(i) = intercept {
        // Var(b0) = sigma²/n + x̄ᵀ Cov(β) x̄
        let xs = DVector::from_iterator(m, x_means.iter().zip(&scales).map(|(mu, s)| mu / s));
        let quad = (xs.transpose() * &cov_scaled * &xs)[(0, 0)];
        std_errors[i] = (sigma2 * (1.0 / n as f64 + quad)).sqrt();
    }

    let mut t_stats = vec![f64::NAN; k];
    let mut p_values = vec![f64::NAN; k];
    if df > 0 {
        for j in 0..k {
            let (t, p) = two_sided_p(coefficients[j], std_errors[j], df as f64);
            t_stats[j] = t;
            p_values[j] = p;
        }
    } else {
        std_errors.iter_mut().for_each(|s| *s = f64::NAN);
    }

    Ok(OlsFit {
        names: design.names.clone(),
        coefficients,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        n,
        df,
        residuals,
    })
}

/// An asset's size and fitted measures for the size-group profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEntry {
    pub asset_id: String,
    pub market_cap: f64,
    pub pin: f64,
    pub ph: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeGroup {
    /// 1 for the smallest firms.
    pub rank: usize,
    pub assets: Vec<String>,
    pub mean_pin: f64,
    pub mean_ph: f64,
    pub fitted_pin: f64,
    pub fitted_ph: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeProfile {
    pub groups: Vec<SizeGroup>,
    /// Group-mean PIN regressed on group rank.
    pub pin_fit: OlsFit,
    pub ph_fit: OlsFit,
}

/// Sorts assets by market capitalization (ascending), cuts them into
/// `n_groups` consecutive groups of `group_size` and fits a line through each
/// measure's group means against group rank. Assets beyond
/// `n_groups × group_size` (the largest) are left out.
pub fn size_group_profile(entries: &[SizeEntry], n_groups: usize, group_size: usize) -> Result<SizeProfile, StatsError> {
    let required = n_groups * group_size;
    if n_groups == 0 || group_size == 0 || entries.len() < required {
        return Err(StatsError::InsufficientAssets {
            required: required.max(1),
            available: entries.len(),
        });
    }
    let mut sorted: Vec<&SizeEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.market_cap.total_cmp(&b.market_cap).then_with(|| a.asset_id.cmp(&b.asset_id)));

    let mut groups: Vec<SizeGroup> = sorted[..required]
        .chunks(group_size)
        .enumerate()
        .map(|(g, chunk)| SizeGroup {
            rank: g + 1,
            assets: chunk.iter().map(|e| e.asset_id.clone()).collect(),
            mean_pin: chunk.iter().map(|e| e.pin).sum::<f64>() / group_size as f64,
            mean_ph: chunk.iter().map(|e| e.ph).sum::<f64>() / group_size as f64,
            fitted_pin: f64::NAN,
            fitted_ph: f64::NAN,
        })
        .collect();

    let ranks: Vec<f64> = groups.iter().map(|g| g.rank as f64).collect();
    let design = Design::with_intercept(n_groups).column("rank", ranks.clone());
    let pin_fit = ols(&groups.iter().map(|g| g.mean_pin).collect::<Vec<_>>(), &design)?;
    let ph_fit = ols(&groups.iter().map(|g| g.mean_ph).collect::<Vec<_>>(), &design)?;
    for (g, r) in groups.iter_mut().zip(&ranks) {
        g.fitted_pin = pin_fit.coefficients[0] + pin_fit.coefficients[1] * r;
        g.fitted_ph = ph_fit.coefficients[0] + ph_fit.coefficients[1] * r;
    }
    Ok(SizeProfile { groups, pin_fit, ph_fit })
}
