use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::MAX_ORACLE_N;
use crate::rates::LambdaSpec;

/// Largest sample size accepted by any mode; rate tables grow as `n²`.
pub const MAX_N: usize = 10_000;
/// Largest sample size for exact-rational moment tables.
pub const MAX_EXACT_N: usize = 60;
pub const MAX_J: usize = 12;
pub const MAX_K: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Rates,
    Simulate,
    Moments,
    Asymptotics,
    Compare,
    Convergence,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Rates => "rates",
            Mode::Simulate => "simulate",
            Mode::Moments => "moments",
            Mode::Asymptotics => "asymptotics",
            Mode::Compare => "compare",
            Mode::Convergence => "convergence",
        }
    }
}

/// One sample size or a ladder of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSizes {
    One(usize),
    Many(Vec<usize>),
}

impl SampleSizes {
    pub fn values(&self) -> Vec<usize> {
        match self {
            SampleSizes::One(n) => vec![*n],
            SampleSizes::Many(v) => v.clone(),
        }
    }

    pub fn max(&self) -> usize {
        self.values().into_iter().max().unwrap_or(0)
    }
}

impl FromStr for SampleSizes {
    type Err = Error;

    /// `"20"` or a comma-separated ladder `"10,100,1000"`.
    fn from_str(s: &str) -> Result<Self> {
        let parsed: std::result::Result<Vec<usize>, _> = s.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match parsed {
            Ok(v) if v.len() == 1 => Ok(SampleSizes::One(v[0])),
            Ok(v) => Ok(SampleSizes::Many(v)),
            Err(e) => Err(Error::config("n", format!("cannot parse `{s}`: {e}"))),
        }
    }
}

/// Everything one run needs. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default = "default_measure")]
    pub measure: LambdaSpec,
    #[serde(default = "default_n")]
    pub n: SampleSizes,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub rho: f64,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    /// Simulate mode: single-leaf samplers instead of full genealogies.
    #[serde(default)]
    pub fast: bool,
    /// Moments mode: also run the brute-force oracle (n ≤ 7).
    #[serde(default)]
    pub oracle: bool,
    /// Moments mode: exact rational arithmetic.
    #[serde(default)]
    pub exact: bool,
    /// Report the Bolthausen-Sznitman Beta law next to the mixture formula.
    #[serde(default)]
    pub beta_compare: bool,
    /// Additive band on the frequency scale for limit comparisons at finite n.
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_measure() -> LambdaSpec {
    LambdaSpec::Kingman
}
fn default_n() -> SampleSizes {
    SampleSizes::One(10)
}
fn default_theta() -> f64 {
    2.0
}
fn default_replicates() -> u64 {
    1000
}
fn default_seed() -> u64 {
    1
}
fn default_j_max() -> usize {
    2
}
fn default_k_max() -> usize {
    2
}
fn default_slack() -> f64 {
    0.01
}
fn default_out() -> PathBuf {
    PathBuf::from("obsclade-out")
}

impl ExperimentConfig {
    /// Defaults for every field except the mode.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            measure: default_measure(),
            n: default_n(),
            theta: default_theta(),
            replicates: default_replicates(),
            seed: default_seed(),
            j_max: default_j_max(),
            k_max: default_k_max(),
            rho: 0.0,
            threads: 0,
            fast: false,
            oracle: false,
            exact: false,
            beta_compare: false,
            slack: default_slack(),
            out: default_out(),
        }
    }

    /// Parses and validates a JSON config. Syntax errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| {
            let field = if e.is_data() { "config" } else { "json" };
            Error::config(field, format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.n.values()
    }

    pub fn validate(&self) -> Result<()> {
        self.measure.validate().map_err(|e| Error::config("measure", e.to_string()))?;
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::config("theta", format!("must be a positive finite number, got {}", self.theta)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho", format!("must be a finite number >= 0, got {}", self.rho)));
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(Error::config("slack", format!("must be a finite number >= 0, got {}", self.slack)));
        }
        if self.replicates < 1 {
            return Err(Error::config("replicates", "must be >= 1"));
        }
        if !(1..=MAX_J).contains(&self.j_max) {
            return Err(Error::config("j_max", format!("must lie in 1..={MAX_J}, got {}", self.j_max)));
        }
        if !(1..=MAX_K).contains(&self.k_max) {
            return Err(Error::config("k_max", format!("must lie in 1..={MAX_K}, got {}", self.k_max)));
        }
        let sizes = self.sizes();
        if sizes.is_empty() {
            return Err(Error::config("n", "needs at least one sample size"));
        }
        if let Some(&bad) = sizes.iter().find(|&&n| !(2..=MAX_N).contains(&n)) {
            return Err(Error::config("n", format!("every sample size must lie in 2..={MAX_N}, got {bad}")));
        }
        if self.oracle {
            if self.mode != Mode::Moments {
                return Err(Error::config("oracle", "only available in moments mode"));
            }
            if self.n.max() > MAX_ORACLE_N {
                return Err(Error::config("oracle", format!("needs n <= {MAX_ORACLE_N}, got {}", self.n.max())));
            }
        }
        if self.exact {
            if self.mode != Mode::Moments {
                return Err(Error::config("exact", "only available in moments mode"));
            }
            if self.n.max() > MAX_EXACT_N {
                return Err(Error::config("exact", format!("needs n <= {MAX_EXACT_N}, got {}", self.n.max())));
            }
            if matches!(self.measure, LambdaSpec::CustomDensity(_)) {
                return Err(Error::config("exact", "custom densities have no exact rates"));
            }
        }
        if self.rho > 0.0 {
            match self.mode {
                Mode::Moments | Mode::Compare => {
                    return Err(Error::config("rho", "finite-n exact moments assume constant size (rho = 0)"));
                }
                Mode::Asymptotics | Mode::Convergence if !self.measure.is_kingman() => {
                    return Err(Error::config("rho", "growth limits are available for Kingman's coalescent only"));
                }
                Mode::Simulate if self.fast => {
                    return Err(Error::config("rho", "the fast X sampler has no growth; use full simulation"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Parses a measure from either its JSON object or a shorthand:
/// `kingman`, `uniform`, `bsc`, `dirac:P`, `beta:A,B`, `beta-alpha:ALPHA`.
pub fn parse_measure(text: &str) -> Result<LambdaSpec> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| Error::config("measure", e.to_string()));
    }
    let (name, args) = text.split_once(':').unwrap_or((text, ""));
    let numbers = || -> Result<Vec<f64>> {
        args.split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| Error::config("measure", format!("bad number `{a}`: {e}"))))
            .collect()
    };
    let wrap = |r: Result<LambdaSpec>| r.map_err(|e| Error::config("measure", e.to_string()));
    match (name.to_ascii_lowercase().as_str(), args.is_empty()) {
        ("kingman", true) => Ok(LambdaSpec::Kingman),
        ("uniform" | "bsc", true) => Ok(LambdaSpec::Uniform),
        ("dirac", false) => match numbers()?.as_slice() {
            [p] => wrap(LambdaSpec::dirac(*p)),
            _ => Err(Error::config("measure", "dirac takes one parameter, e.g. dirac:0.5")),
        },
        ("beta", false) => match numbers()?.as_slice() {
            [a, b] => wrap(LambdaSpec::beta(*a, *b)),
            _ => Err(Error::config("measure", "beta takes two shapes, e.g. beta:0.5,1.5")),
        },
        ("beta-alpha", false) => match numbers()?.as_slice() {
            [alpha] => wrap(LambdaSpec::beta_alpha(*alpha)),
            _ => Err(Error::config("measure", "beta-alpha takes one parameter, e.g. beta-alpha:1.5")),
        },
        _ => Err(Error::config(
            "measure",
            format!("cannot parse `{text}`; use a JSON object or kingman, uniform, dirac:P, beta:A,B, beta-alpha:ALPHA"),
        )),
    }
}
