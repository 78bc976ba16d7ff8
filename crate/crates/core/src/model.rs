//! Domain types, the three-class Poisson-mixture likelihood and the PIN/PH measures.
//!
//! Every day is one of three latent regimes:
//!
//! ```text
//! no event      (1 - α)     B ~ Pois(λb)        S ~ Pois(λs)
//! bad news      α δ         B ~ Pois(λb)        S ~ Pois(λs + μ)
//! good news     α (1 - δ)   B ~ Pois(λb + μ)    S ~ Pois(λs)
//! ```
//!
//! with `λb = εb + εbH·max(0, -I)` and `λs = εs + εsH·max(0, I)`, where `I` is the
//! sign of the previous day's market return. All arithmetic is carried out in
//! log space; counts in the thousands are routine.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::ModelError;

/// Sign of the previous trading day's market return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Indicator {
    /// Previous return was negative (`I = -1`): contrarian buyers are active.
    Down,
    /// Previous return was non-negative (`I = +1`): contrarian sellers are active.
    Up,
}

impl Indicator {
    /// `r >= 0` maps to [`Indicator::Up`], including `r == 0`.
    pub fn from_return(r: f64) -> Self {
        if r >= 0.0 {
            Indicator::Up
        } else {
            Indicator::Down
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Indicator::Up => 1,
            Indicator::Down => -1,
        }
    }
}

impl TryFrom<i64> for Indicator {
    type Error = ModelError;

    fn try_from(v: i64) -> Result<Self, ModelError> {
        match v {
            1 => Ok(Indicator::Up),
            -1 => Ok(Indicator::Down),
            other => Err(ModelError::InvalidIndicator(other.to_string())),
        }
    }
}

impl TryFrom<f64> for Indicator {
    type Error = ModelError;

    fn try_from(v: f64) -> Result<Self, ModelError> {
        if v == 1.0 {
            Ok(Indicator::Up)
        } else if v == -1.0 {
            Ok(Indicator::Down)
        } else {
            Err(ModelError::InvalidIndicator(v.to_string()))
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

/// Names of the seven model parameters, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamName {
    Alpha,
    Delta,
    Mu,
    EpsB,
    EpsS,
    EpsBh,
    EpsSh,
}

impl ParamName {
    pub const ALL: [ParamName; 7] = [
        ParamName::Alpha,
        ParamName::Delta,
        ParamName::Mu,
        ParamName::EpsB,
        ParamName::EpsS,
        ParamName::EpsBh,
        ParamName::EpsSh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Alpha => "alpha",
            ParamName::Delta => "delta",
            ParamName::Mu => "mu",
            ParamName::EpsB => "eps_b",
            ParamName::EpsS => "eps_s",
            ParamName::EpsBh => "eps_bh",
            ParamName::EpsSh => "eps_sh",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The model parameters θ = (α, δ, μ, εb, εs, εbH, εsH).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    /// Probability of an information event on a given day.
    pub alpha: f64,
    /// Probability that an information event is bad news.
    pub delta: f64,
    /// Informed order arrival rate (trades/day).
    pub mu: f64,
    /// Uninformed buy rate.
    pub eps_b: f64,
    /// Uninformed sell rate.
    pub eps_s: f64,
    /// Heuristic (contrarian) buy rate, active after a down market day.
    pub eps_bh: f64,
    /// Heuristic (contrarian) sell rate, active after an up market day.
    pub eps_sh: f64,
}

impl ParameterSet {
    pub fn new(
        alpha: f64,
        delta: f64,
        mu: f64,
        eps_b: f64,
        eps_s: f64,
        eps_bh: f64,
        eps_sh: f64,
    ) -> Result<Self, ModelError> {
        let p = ParameterSet {
            alpha,
            delta,
            mu,
            eps_b,
            eps_s,
            eps_bh,
            eps_sh,
        };
        p.validate()?;
        Ok(p)
    }

    /// The classical model without heuristic traders.
    pub fn classical(alpha: f64, delta: f64, mu: f64, eps_b: f64, eps_s: f64) -> Result<Self, ModelError> {
        Self::new(alpha, delta, mu, eps_b, eps_s, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for name in [ParamName::Alpha, ParamName::Delta] {
            let v = self.get(name);
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("{v} is not a probability in [0, 1]"),
                });
            }
        }
        for name in [
            ParamName::Mu,
            ParamName::EpsB,
            ParamName::EpsS,
            ParamName::EpsBh,
            ParamName::EpsSh,
        ] {
            let v = self.get(name);
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("{v} is not a finite non-negative rate"),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> f64 {
        self.to_array()[name.index()]
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let mut a = self.to_array();
        a[name.index()] = value;
        *self = Self::from_array(a);
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.alpha,
            self.delta,
            self.mu,
            self.eps_b,
            self.eps_s,
            self.eps_bh,
            self.eps_sh,
        ]
    }

    /// Builds a parameter set without validation.
    pub fn from_array(a: [f64; 7]) -> Self {
        ParameterSet {
            alpha: a[0],
            delta: a[1],
            mu: a[2],
            eps_b: a[3],
            eps_s: a[4],
            eps_bh: a[5],
            eps_sh: a[6],
        }
    }
}

/// One trading day: buy count, sell count and the prior-day market indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DailyCounts {
    pub buys: u64,
    pub sells: u64,
    pub indicator: Indicator,
}

impl DailyCounts {
    pub fn new(buys: u64, sells: u64, indicator: Indicator) -> Self {
        DailyCounts {
            buys,
            sells,
            indicator,
        }
    }
}

/// An asset's ordered daily counts for one estimation period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationWindow {
    pub asset_id: String,
    pub period_label: String,
    pub days: Vec<DailyCounts>,
}

impl EstimationWindow {
    pub fn new(
        asset_id: impl Into<String>,
        period_label: impl Into<String>,
        days: Vec<DailyCounts>,
    ) -> Result<Self, ModelError> {
        if days.is_empty() {
            return Err(ModelError::EmptyWindow);
        }
        Ok(EstimationWindow {
            asset_id: asset_id.into(),
            period_label: period_label.into(),
            days,
        })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn indicators(&self) -> Vec<Indicator> {
        self.days.iter().map(|d| d.indicator).collect()
    }

    /// True when every day has at least one buy and one sell.
    pub fn is_fully_active(&self) -> bool {
        self.days.iter().all(|d| d.buys >= 1 && d.sells >= 1)
    }
}

/// Fitted parameters and derived measures for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub asset_id: String,
    pub period_label: String,
    pub params: ParameterSet,
    pub log_likelihood: f64,
    pub pin: f64,
    pub ph: f64,
    /// Number of local searches run from Monte-Carlo starting points.
    pub n_restarts_used: usize,
    pub converged: bool,
    /// Parameters that ended on (or are unidentified because of) a box boundary.
    pub boundary_flags: BTreeSet<ParamName>,
}

/// Active heuristic `(buy, sell)` rates for a day with the given prior-day indicator.
///
/// Exactly one side is ever active: buyers after a down day, sellers after an up day.
pub fn heuristic_rates(params: &ParameterSet, indicator: Indicator) -> (f64, f64) {
    match indicator {
        Indicator::Down => (params.eps_bh, 0.0),
        Indicator::Up => (0.0, params.eps_sh),
    }
}

/// Per-indicator quantities that do not depend on the day's counts.
#[derive(Debug, Clone, Copy)]
struct RegimeTerms {
    /// Log mixture weight plus the `-rate` parts of both Poisson kernels, per branch.
    offset: [f64; 3],
    ln_buy: f64,
    ln_buy_mu: f64,
    ln_sell: f64,
    ln_sell_mu: f64,
}

impl RegimeTerms {
    fn new(p: &ParameterSet, indicator: Indicator) -> Self {
        let (hb, hs) = heuristic_rates(p, indicator);
        let lb = p.eps_b + hb;
        let ls = p.eps_s + hs;
        let w_none = (1.0 - p.alpha).ln();
        let w_bad = (p.alpha * p.delta).ln();
        let w_good = (p.alpha * (1.0 - p.delta)).ln();
        RegimeTerms {
            offset: [
                w_none - lb - ls,
                w_bad - lb - (ls + p.mu),
                w_good - (lb + p.mu) - ls,
            ],
            ln_buy: lb.ln(),
            ln_buy_mu: (lb + p.mu).ln(),
            ln_sell: ls.ln(),
            ln_sell_mu: (ls + p.mu).ln(),
        }
    }

    /// Log of the mixture density without the `-ln B! - ln S!` constant.
    /// Returns negative infinity when every branch is impossible.
    #[inline]
    fn kernel(&self, buys: f64, sells: f64) -> f64 {
        let b_lo = xlny(buys, self.ln_buy);
        let b_hi = xlny(buys, self.ln_buy_mu);
        let s_lo = xlny(sells, self.ln_sell);
        let s_hi = xlny(sells, self.ln_sell_mu);
        log_sum_exp3(
            self.offset[0] + b_lo + s_lo,
            self.offset[1] + b_lo + s_hi,
            self.offset[2] + b_hi + s_lo,
        )
    }
}

/// `k · ln(rate)` with the convention `0 · ln 0 = 0`.
#[inline]
fn xlny(k: f64, ln_rate: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * ln_rate
    }
}

/// Branches at negative infinity (zero weight or impossible count) drop out.
#[inline]
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

fn ln_count_factorials(day: &DailyCounts) -> f64 {
    ln_factorial(day.buys) + ln_factorial(day.sells)
}

/// Natural log of the single-day likelihood.
///
/// Returns `f64::NEG_INFINITY` when the day is impossible under `params` (for
/// example `B > 0` while every branch has a zero buy rate); see
/// [`is_degenerate`].
pub fn daily_log_likelihood(params: &ParameterSet, day: &DailyCounts) -> Result<f64, ModelError> {
    params.validate()?;
    let terms = RegimeTerms::new(params, day.indicator);
    Ok(terms.kernel(day.buys as f64, day.sells as f64) - ln_count_factorials(day))
}

/// A log-likelihood of negative infinity marks a parameter set that assigns zero
/// probability to the observed data.
pub fn is_degenerate(log_likelihood: f64) -> bool {
    log_likelihood == f64::NEG_INFINITY
}

/// Sum of daily log-likelihoods over a window.
///
/// Days are summed in a canonical order so the result is bit-identical under
/// any permutation of the window.
pub fn window_log_likelihood(params: &ParameterSet, window: &EstimationWindow) -> Result<f64, ModelError> {
    params.validate()?;
    Ok(WindowLikelihood::new(window)?.eval(params))
}

/// A window prepared for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct WindowLikelihood {
    /// (buys, sells, ln B! + ln S!) of down-indicator days, canonically sorted.
    down: Vec<(f64, f64, f64)>,
    up: Vec<(f64, f64, f64)>,
}

impl WindowLikelihood {
    pub fn new(window: &EstimationWindow) -> Result<Self, ModelError> {
        if window.days.is_empty() {
            return Err(ModelError::EmptyWindow);
        }
        let mut days = window.days.clone();
        days.sort_by_key(|d| (d.indicator, d.buys, d.sells));
        let (down, up): (Vec<_>, Vec<_>) = days.iter().partition(|d| d.indicator == Indicator::Down);
        let prep = |v: Vec<&DailyCounts>| {
            v.iter()
                .map(|d| (d.buys as f64, d.sells as f64, ln_count_factorials(d)))
                .collect()
        };
        Ok(WindowLikelihood {
            down: prep(down),
            up: prep(up),
        })
    }

    pub fn n_days(&self) -> usize {
        self.down.len() + self.up.len()
    }

    /// Window log-likelihood without parameter validation.
    pub fn eval(&self, params: &ParameterSet) -> f64 {
        let mut total = 0.0;
        for (days, ind) in [(&self.down, Indicator::Down), (&self.up, Indicator::Up)] {
            if days.is_empty() {
                continue;
            }
            let terms = RegimeTerms::new(params, ind);
            for &(b, s, ln_fact) in days {
                total += terms.kernel(b, s) - ln_fact;
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

fn daily_shares(params: &ParameterSet, indicator: Indicator) -> Result<(f64, f64), ModelError> {
    params.validate()?;
    let (hb, hs) = heuristic_rates(params, indicator);
    let heuristic = hb + hs;
    let informed = params.alpha * params.mu;
    let denom = informed + params.eps_b + params.eps_s + heuristic;
    if denom <= 0.0 {
        return Err(ModelError::InvalidParameters(
            "all arrival rates are zero; PIN and PH are undefined".into(),
        ));
    }
    Ok((informed / denom, heuristic / denom))
}

/// Daily PIN: `αμ / (αμ + εb + εs + h)` with `h` the active heuristic rate.
pub fn daily_pin(params: &ParameterSet, indicator: Indicator) -> Result<f64, ModelError> {
    daily_shares(params, indicator).map(|(pin, _)| pin)
}

/// Daily PH: `h / (αμ + εb + εs + h)`.
pub fn daily_ph(params: &ParameterSet, indicator: Indicator) -> Result<f64, ModelError> {
    daily_shares(params, indicator).map(|(_, ph)| ph)
}

/// Window PIN and PH as arithmetic means of the daily values.
pub fn average_pin_ph(params: &ParameterSet, indicators: &[Indicator]) -> Result<(f64, f64), ModelError> {
    if indicators.is_empty() {
        return Err(ModelError::EmptyIndicators);
    }
    let mut pin = 0.0;
    let mut ph = 0.0;
    for &ind in indicators {
        let (a, b) = daily_shares(params, ind)?;
        pin += a;
        ph += b;
    }
    let n = indicators.len() as f64;
    Ok((pin / n, ph / n))
}
