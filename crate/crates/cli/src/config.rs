//! Run configuration, read from TOML and overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use pinph::ingest::{DelimitedFormat, PeriodScheme, SignMethod};
use pinph::{EstimatorConfig, ModelVariant, ParameterSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory; relative paths resolve against the config file.
    pub out: PathBuf,
    pub scheme: String,
    pub seed: u64,
    pub input: InputConfig,
    pub estimator: EstimatorSection,
    pub simulation: SimulationSection,
    pub recover: RecoverSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("out"),
            scheme: "quarterly".into(),
            seed: 0,
            input: InputConfig::default(),
            estimator: EstimatorSection::default(),
            simulation: SimulationSection::default(),
            recover: RecoverSection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub trades: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    /// Defaults to `<out>/panel.csv`.
    pub panel: Option<PathBuf>,
    /// Defaults to `<out>/results.csv`.
    pub results: Option<PathBuf>,
    pub delimiter: char,
    /// `presigned` or `tick`.
    pub sign_method: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            trades: None,
            counts: None,
            market: None,
            metadata: None,
            panel: None,
            results: None,
            delimiter: ',',
            sign_method: "presigned".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub n_draws: usize,
    pub n_refine: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
    /// `false` pins both heuristic rates at zero.
    pub heuristic: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        EstimatorSection {
            n_draws: d.n_draws,
            n_refine: d.n_refine,
            max_iterations: d.max_iterations,
            rel_tol: d.rel_tol,
            heuristic: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theta {
    pub alpha: f64,
    pub delta: f64,
    pub mu: f64,
    pub eps_b: f64,
    pub eps_s: f64,
    pub eps_bh: f64,
    pub eps_sh: f64,
}

impl Default for Theta {
    fn default() -> Self {
        Theta {
            alpha: 0.4,
            delta: 0.5,
            mu: 300.0,
            eps_b: 400.0,
            eps_s: 500.0,
            eps_bh: 50.0,
            eps_sh: 50.0,
        }
    }
}

impl Theta {
    pub fn params(&self) -> Result<ParameterSet> {
        Ok(ParameterSet::new(
            self.alpha,
            self.delta,
            self.mu,
            self.eps_b,
            self.eps_s,
            self.eps_bh,
            self.eps_sh,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub theta: Theta,
    pub n_assets: usize,
    pub n_days: usize,
    /// First trading day; one earlier business day is added for the first indicator.
    pub start: NaiveDate,
    /// `counts` or `trades`.
    pub format: String,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            theta: Theta::default(),
            n_assets: 45,
            n_days: 252,
            start: NaiveDate::from_ymd_opt(2008, 1, 2).expect("valid date"),
            format: "counts".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverSection {
    pub theta: Theta,
    pub replications: usize,
    pub n_days: usize,
}

impl Default for RecoverSection {
    fn default() -> Self {
        RecoverSection {
            theta: Theta::default(),
            replications: 20,
            n_days: 252,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub n_groups: usize,
    /// 0 splits the assets evenly across `n_groups`.
    pub group_size: usize,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { n_groups: 9, group_size: 0 }
    }
}

/// A parsed config plus the directory its relative paths hang off.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    /// Set when `--out` was given; already relative to the working directory.
    pub out_override: Option<PathBuf>,
}

impl Loaded {
    pub fn read(path: Option<&Path>) -> Result<Loaded> {
        let Some(path) = path else {
            return Ok(Loaded {
                config: RunConfig::default(),
                base: PathBuf::from("."),
                out_override: None,
            });
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded {
            config,
            base,
            out_override: None,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        match &self.out_override {
            Some(o) => o.clone(),
            None => self.resolve(&self.config.out),
        }
    }

    pub fn input_path(&self, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        match configured {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("no {what} file configured (set input.{what} in the config)"),
        }
    }

    pub fn panel_path(&self) -> PathBuf {
        match &self.config.input.panel {
            Some(p) => self.resolve(p),
            None => self.out_dir().join("panel.csv"),
        }
    }

    pub fn results_path(&self) -> PathBuf {
        match &self.config.input.results {
            Some(p) => self.resolve(p),
            None => self.out_dir().join("results.csv"),
        }
    }

    pub fn metadata_path(&self) -> PathBuf {
        match &self.config.input.metadata {
            Some(p) => self.resolve(p),
            None => self.out_dir().join("assets.csv"),
        }
    }
}

impl RunConfig {
    pub fn scheme(&self) -> Result<PeriodScheme> {
        self.scheme.parse().map_err(anyhow::Error::msg)
    }

    pub fn format(&self) -> Result<DelimitedFormat> {
        let c = self.input.delimiter;
        if !c.is_ascii() || c == '"' || c == '#' || c == '\n' {
            bail!("unsupported delimiter {c:?}");
        }
        Ok(DelimitedFormat { delimiter: c as u8 })
    }

    pub fn sign_method(&self) -> Result<SignMethod> {
        match self.input.sign_method.to_ascii_lowercase().as_str() {
            "presigned" => Ok(SignMethod::PreSigned),
            "tick" => Ok(SignMethod::TickTest),
            other => bail!("unknown sign_method `{other}` (expected presigned or tick)"),
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        let e = &self.estimator;
        EstimatorConfig {
            n_draws: e.n_draws,
            n_refine: e.n_refine,
            max_iterations: e.max_iterations,
            rel_tol: e.rel_tol,
            master_seed: self.seed,
            variant: if e.heuristic {
                ModelVariant::Full
            } else {
                ModelVariant::NoHeuristic
            },
        }
    }

    /// Hex SHA-256 of the configuration with the output directory blanked, so
    /// relocating outputs does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.estimator(), EstimatorConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sead = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[estimator]\nn_drawz = 3").is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: PathBuf::from("elsewhere"),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.input.counts = Some("counts.csv".into());
        c.simulation.theta.eps_bh = 0.0;
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
