//! Exact sampling from the mixture model and a brute-force likelihood oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::ModelError;
use crate::model::{heuristic_rates, DailyCounts, EstimationWindow, Indicator, ParameterSet};

/// Largest count the oracle accepts.
pub const ORACLE_MAX_COUNT: u64 = 200;

/// Where the per-day indicators of a simulated window come from.
#[derive(Debug, Clone, PartialEq)]
pub enum IndicatorSource {
    Explicit(Vec<Indicator>),
    /// Previous-day market returns; `r >= 0` maps to `+1`.
    Returns(Vec<f64>),
    /// i.i.d. signs with `P(+1) = 0.5`, drawn from the simulation seed.
    RandomSigns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub params: ParameterSet,
    pub indicators: IndicatorSource,
    pub n_days: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.params.validate()?;
        if self.n_days == 0 {
            return Err(ModelError::InvalidParameters("n_days must be at least 1".into()));
        }
        let supplied = match &self.indicators {
            IndicatorSource::Explicit(v) => Some(v.len()),
            IndicatorSource::Returns(v) => Some(v.len()),
            IndicatorSource::RandomSigns => None,
        };
        if let Some(len) = supplied {
            if len < self.n_days {
                return Err(ModelError::InvalidParameters(format!(
                    "{len} indicators supplied for {} days",
                    self.n_days
                )));
            }
        }
        Ok(())
    }

    /// The indicator sequence the window will use.
    pub fn resolve_indicators(&self) -> Vec<Indicator> {
        match &self.indicators {
            IndicatorSource::Explicit(v) => v[..self.n_days].to_vec(),
            IndicatorSource::Returns(r) => r[..self.n_days].iter().map(|&x| Indicator::from_return(x)).collect(),
            IndicatorSource::RandomSigns => random_indicators(self.n_days, self.seed ^ INDICATOR_STREAM),
        }
    }
}

const INDICATOR_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// i.i.d. fair-coin indicators.
pub fn random_indicators(n: usize, seed: u64) -> Vec<Indicator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random_bool(0.5) { Indicator::Up } else { Indicator::Down })
        .collect()
}

fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let d = Poisson::new(rate).expect("finite positive Poisson rate");
    d.sample(rng) as u64
}

/// Draws one day's counts: event with probability α, bad news with probability δ,
/// then independent Poisson buys and sells.
pub fn simulate_day<R: Rng + ?Sized>(params: &ParameterSet, indicator: Indicator, rng: &mut R) -> DailyCounts {
    let (hb, hs) = heuristic_rates(params, indicator);
    let mut buy_rate = params.eps_b + hb;
    let mut sell_rate = params.eps_s + hs;
    if rng.random::<f64>() < params.alpha {
        if rng.random::<f64>() < params.delta {
            sell_rate += params.mu;
        } else {
            buy_rate += params.mu;
        }
    }
    let buys = poisson(buy_rate, rng);
    let sells = poisson(sell_rate, rng);
    DailyCounts::new(buys, sells, indicator)
}

pub fn simulate_window(
    spec: &SimulationSpec,
    asset_id: impl Into<String>,
    period_label: impl Into<String>,
) -> Result<EstimationWindow, ModelError> {
    spec.validate()?;
    let indicators = spec.resolve_indicators();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let days = indicators
        .iter()
        .map(|&ind| simulate_day(&spec.params, ind, &mut rng))
        .collect();
    EstimationWindow::new(asset_id, period_label, days)
}

/// Poisson pmf without log-gamma: an explicit product when `e^-rate` is
/// representable, otherwise a running sum of `ln(rate / i)`.
fn poisson_pmf(k: u64, rate: f64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if rate < 700.0 {
        let mut p = (-rate).exp();
        for i in 1..=k {
            p *= rate / i as f64;
        }
        p
    } else {
        let mut lp = -rate;
        for i in 1..=k {
            lp += (rate / i as f64).ln();
        }
        lp.exp()
    }
}

/// Single-day likelihood evaluated directly as a weighted sum of three Poisson
/// pmf products, in linear space.
pub fn brute_force_day_probability(params: &ParameterSet, day: &DailyCounts) -> Result<f64, ModelError> {
    params.validate()?;
    if day.buys > ORACLE_MAX_COUNT || day.sells > ORACLE_MAX_COUNT {
        return Err(ModelError::OracleScale {
            buys: day.buys,
            sells: day.sells,
            limit: ORACLE_MAX_COUNT,
        });
    }
    let (hb, hs) = heuristic_rates(params, day.indicator);
    let lb = params.eps_b + hb;
    let ls = params.eps_s + hs;
    let (a, d, mu) = (params.alpha, params.delta, params.mu);
    let b = day.buys;
    let s = day.sells;
    let no_event = (1.0 - a) * poisson_pmf(b, lb) * poisson_pmf(s, ls);
    let bad = a * d * poisson_pmf(b, lb) * poisson_pmf(s, ls + mu);
    let good = a * (1.0 - d) * poisson_pmf(b, lb + mu) * poisson_pmf(s, ls);
    Ok(no_event + bad + good)
}
