//! Monte-Carlo multistart maximum likelihood.
//!
//! For each window, `n_draws` parameter sets are drawn uniformly from a box
//! anchored on the window's mean buy and sell counts; the `n_refine` best draws
//! are refined by a reflecting Nelder–Mead search and the overall maximizer is
//! reported. Results depend only on the master seed and the window's
//! `(asset_id, period_label)`, never on thread scheduling.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EstimateError, ModelError};
use crate::model::{
    average_pin_ph, EstimationResult, EstimationWindow, ParamName, ParameterSet, WindowLikelihood,
};
use crate::optimize::{maximize_in_unit_box, NelderMeadOptions};

/// Unit-box distance below which a parameter counts as sitting on a bound.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Final log-likelihoods this close (relative, floored at 1) are ties.
pub const TIE_TOL: f64 = 1e-10;

/// Upper bound on μ draws, as a multiple of the larger of the mean buy and sell counts.
pub const MU_CAP_MULTIPLE: f64 = 10.0;

/// Search box for one window: `εb, εbH ∈ [0, b_bar]`, `εs, εsH ∈ [0, s_bar]`,
/// `μ ∈ [0, mu_cap]`, `α, δ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub b_bar: f64,
    pub s_bar: f64,
    pub mu_cap: f64,
}

impl ParameterBounds {
    pub fn new(b_bar: f64, s_bar: f64, mu_cap: f64) -> Result<Self, ModelError> {
        for (name, v) in [("b_bar", b_bar), ("s_bar", s_bar), ("mu_cap", mu_cap)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParameters(format!(
                    "bound {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(ParameterBounds { b_bar, s_bar, mu_cap })
    }

    pub fn upper(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Alpha | ParamName::Delta => 1.0,
            ParamName::Mu => self.mu_cap,
            ParamName::EpsB | ParamName::EpsBh => self.b_bar,
            ParamName::EpsS | ParamName::EpsSh => self.s_bar,
        }
    }

    pub fn contains(&self, p: &ParameterSet) -> bool {
        ParamName::ALL
            .iter()
            .all(|&n| (0.0..=self.upper(n)).contains(&p.get(n)))
    }

    fn to_unit(&self, name: ParamName, v: f64) -> f64 {
        v / self.upper(name)
    }

    fn from_unit(&self, name: ParamName, u: f64) -> f64 {
        u * self.upper(name)
    }
}

/// Which parameters are free during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModelVariant {
    /// All seven parameters.
    #[default]
    Full,
    /// Heuristic rates pinned at zero: the classical five-parameter model.
    NoHeuristic,
}

impl ModelVariant {
    pub fn free_params(self) -> &'static [ParamName] {
        match self {
            ModelVariant::Full => &ParamName::ALL,
            ModelVariant::NoHeuristic => &ParamName::ALL[..5],
        }
    }

    fn pin(self, mut p: ParameterSet) -> ParameterSet {
        if self == ModelVariant::NoHeuristic {
            p.eps_bh = 0.0;
            p.eps_sh = 0.0;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub n_draws: usize,
    /// Top draws passed to local search; 0 reports the best raw draw.
    pub n_refine: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub master_seed: u64,
    pub variant: ModelVariant,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_draws: 10_000,
            n_refine: 50,
            max_iterations: 500,
            rel_tol: 1e-8,
            master_seed: 0,
            variant: ModelVariant::Full,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        if self.n_draws == 0 {
            return Err(EstimateError::Config("n_draws must be at least 1".into()));
        }
        if self.n_refine > self.n_draws {
            return Err(EstimateError::Config(format!(
                "n_refine ({}) exceeds n_draws ({})",
                self.n_refine, self.n_draws
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(EstimateError::Config(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        Ok(())
    }

    fn nelder_mead(&self) -> NelderMeadOptions {
        NelderMeadOptions {
            max_iterations: self.max_iterations,
            rel_tol: self.rel_tol,
            initial_step: 0.1,
        }
    }
}

/// Box anchored on the window's mean daily buys and sells.
pub fn compute_bounds(window: &EstimationWindow) -> Result<ParameterBounds, ModelError> {
    if window.days.is_empty() {
        return Err(ModelError::EmptyWindow);
    }
    let n = window.days.len() as f64;
    let b_bar = window.days.iter().map(|d| d.buys as f64).sum::<f64>() / n;
    let s_bar = window.days.iter().map(|d| d.sells as f64).sum::<f64>() / n;
    ParameterBounds::new(b_bar, s_bar, MU_CAP_MULTIPLE * b_bar.max(s_bar))
}

/// `n` independent uniform draws from the box. Draw `i` depends only on `seed`
/// and `i`, so shorter runs see a prefix of longer ones.
pub fn draw_candidates(bounds: &ParameterBounds, n: usize, seed: u64) -> Vec<ParameterSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut a = [0.0; 7];
            for name in ParamName::ALL {
                a[name.index()] = bounds.from_unit(name, rng.random::<f64>());
            }
            ParameterSet::from_array(a)
        })
        .collect()
}

/// Outcome of one local search.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub params: ParameterSet,
    pub log_likelihood: f64,
    pub converged: bool,
    /// The start had zero likelihood and was returned untouched.
    pub degenerate_start: bool,
    pub boundary_flags: BTreeSet<ParamName>,
}

/// Seed for a window, stable across platforms and panel composition.
pub fn window_seed(master_seed: u64, asset_id: &str, period_label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(asset_id.as_bytes());
    h.update([0u8]);
    h.update(period_label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub(crate) fn boundary_flags(p: &ParameterSet, bounds: &ParameterBounds, variant: ModelVariant) -> BTreeSet<ParamName> {
    let mut flags: BTreeSet<ParamName> = variant
        .free_params()
        .iter()
        .copied()
        .filter(|&n| {
            let u = bounds.to_unit(n, p.get(n));
            u <= BOUNDARY_TOL || u >= 1.0 - BOUNDARY_TOL
        })
        .collect();
    // δ carries no information when no events are estimated.
    if bounds.to_unit(ParamName::Alpha, p.alpha) <= BOUNDARY_TOL {
        flags.insert(ParamName::Delta);
    }
    flags
}

struct Objective<'a> {
    lik: &'a WindowLikelihood,
    bounds: ParameterBounds,
    variant: ModelVariant,
    template: ParameterSet,
}

impl Objective<'_> {
    fn params(&self, x: &[f64]) -> ParameterSet {
        let mut p = self.variant.pin(self.template);
        for (&name, &u) in self.variant.free_params().iter().zip(x) {
            p.set(name, self.bounds.from_unit(name, u));
        }
        p
    }

    fn unit(&self, p: &ParameterSet) -> Vec<f64> {
        self.variant
            .free_params()
            .iter()
            .map(|&n| self.bounds.to_unit(n, p.get(n)))
            .collect()
    }

    fn refine(&self, start: &ParameterSet, opts: &NelderMeadOptions) -> LocalFit {
        let start = self.variant.pin(*start);
        let start_ll = self.lik.eval(&start);
        if !start_ll.is_finite() {
            return LocalFit {
                params: start,
                log_likelihood: start_ll,
                converged: false,
                degenerate_start: true,
                boundary_flags: boundary_flags(&start, &self.bounds, self.variant),
            };
        }
        let out = maximize_in_unit_box(|x| self.lik.eval(&self.params(x)), &self.unit(&start), opts);
        let params = self.params(&out.x);
        LocalFit {
            params,
            log_likelihood: out.value,
            converged: out.converged,
            degenerate_start: false,
            boundary_flags: boundary_flags(&params, &self.bounds, self.variant),
        }
    }
}

/// Refines one starting point within `bounds`.
///
/// The returned log-likelihood is never below the start's.
pub fn local_optimize(
    start: &ParameterSet,
    window: &EstimationWindow,
    bounds: &ParameterBounds,
    config: &EstimatorConfig,
) -> Result<LocalFit, EstimateError> {
    start.validate()?;
    if !bounds.contains(start) {
        return Err(ModelError::InvalidParameters("start lies outside the search box".into()).into());
    }
    let lik = WindowLikelihood::new(window)?;
    let objective = Objective {
        lik: &lik,
        bounds: *bounds,
        variant: config.variant,
        template: *start,
    };
    Ok(objective.refine(start, &config.nelder_mead()))
}

/// Picks the winning fit: highest likelihood, with fits within [`TIE_TOL`] of
/// the maximum resolved toward smaller μ, then smaller α, then input order.
fn select_best(fits: Vec<LocalFit>) -> LocalFit {
    let top = fits
        .iter()
        .map(|f| f.log_likelihood)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied = |ll: f64| top.is_finite() && (top - ll) <= TIE_TOL * top.abs().max(1.0);
    let mut best: Option<LocalFit> = None;
    for f in fits {
        let better = match &best {
            None => true,
            Some(b) if !top.is_finite() => f.log_likelihood > b.log_likelihood,
            Some(b) => {
                tied(f.log_likelihood)
                    && (!tied(b.log_likelihood)
                        || (f.params.mu, f.params.alpha) < (b.params.mu, b.params.alpha))
            }
        };
        if better {
            best = Some(f);
        }
    }
    best.expect("at least one fit")
}

/// Fits one window.
pub fn estimate(window: &EstimationWindow, config: &EstimatorConfig) -> Result<EstimationResult, EstimateError> {
    config.validate()?;
    let lik = WindowLikelihood::new(window)?;
    let bounds = compute_bounds(window).map_err(|e| EstimateError::InvalidBounds {
        asset_id: window.asset_id.clone(),
        period_label: window.period_label.clone(),
        reason: e.to_string(),
    })?;
    let seed = window_seed(config.master_seed, &window.asset_id, &window.period_label);
    let candidates: Vec<ParameterSet> = draw_candidates(&bounds, config.n_draws, seed)
        .into_iter()
        .map(|p| config.variant.pin(p))
        .collect();

    let scores: Vec<f64> = candidates.par_iter().map(|p| lik.eval(p)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| scores[i].is_finite()).collect();
    if order.is_empty() {
        return Err(EstimateError::Degenerate {
            asset_id: window.asset_id.clone(),
            period_label: window.period_label.clone(),
            n_draws: candidates.len(),
            cause: "every draw assigns zero probability to some day (a zero rate against a positive count)".into(),
        });
    }
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));

    let objective = Objective {
        lik: &lik,
        bounds,
        variant: config.variant,
        template: candidates[order[0]],
    };
    let opts = config.nelder_mead();
    let n_refine = config.n_refine.min(order.len());
    let fits: Vec<LocalFit> = if n_refine == 0 {
        let p = candidates[order[0]];
        vec![LocalFit {
            params: p,
            log_likelihood: scores[order[0]],
            converged: false,
            degenerate_start: false,
            boundary_flags: boundary_flags(&p, &bounds, config.variant),
        }]
    } else {
        order[..n_refine]
            .par_iter()
            .map(|&i| objective.refine(&candidates[i], &opts))
            .collect()
    };
    let best = select_best(fits);

    let (pin, ph) = average_pin_ph(&best.params, &window.indicators())?;
    Ok(EstimationResult {
        asset_id: window.asset_id.clone(),
        period_label: window.period_label.clone(),
        params: best.params,
        log_likelihood: best.log_likelihood,
        pin,
        ph,
        n_restarts_used: n_refine,
        converged: best.converged,
        boundary_flags: best.boundary_flags,
    })
}

/// Fits every window independently; failures are returned in place.
pub fn estimate_panel(
    windows: &[EstimationWindow],
    config: &EstimatorConfig,
) -> Vec<Result<EstimationResult, EstimateError>> {
    windows.par_iter().map(|w| estimate(w, config)).collect()
}
