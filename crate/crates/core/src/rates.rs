//! Λ measures and the merger rates of the Λ-coalescent.
//!
//! With `b` blocks, any given `k` of them merge at rate
//! `λ_{b,k} = ∫ x^{k-2} (1-x)^{b-k} Λ(dx)` and the next merger happens at rate
//! `λ_b = Σ_k C(b,k) λ_{b,k}`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::scalar::{binomial, CompensatedSum, Scalar};

/// Absolutely continuous Λ given by a density on (0,1).
#[derive(Clone)]
pub struct CustomDensity {
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    total_mass: f64,
    mu_minus1: Option<f64>,
}

impl CustomDensity {
    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Caller-supplied `∫ x⁻¹ Λ(dx)` (use `f64::INFINITY` for no dust), bypassing the
    /// numerical divergence test.
    pub fn with_mu_minus1(mut self, mu_minus1: f64) -> Self {
        self.mu_minus1 = Some(mu_minus1);
        self
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("total_mass", &self.total_mass)
            .field("mu_minus1", &self.mu_minus1)
            .finish_non_exhaustive()
    }
}

/// The finite measure Λ on [0,1].
#[derive(Debug, Clone)]
pub enum LambdaSpec {
    /// Point mass at 0.
    Kingman,
    /// Point mass at `p ∈ (0,1]`.
    Dirac { p: f64 },
    /// `scale` times the Beta(shape1, shape2) probability distribution.
    Beta { shape1: f64, shape2: f64, scale: f64 },
    /// Lebesgue measure on [0,1] (Bolthausen-Sznitman).
    Uniform,
    CustomDensity(CustomDensity),
}

impl LambdaSpec {
    pub fn dirac(p: f64) -> Result<Self> {
        let spec = LambdaSpec::Dirac { p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn beta(shape1: f64, shape2: f64) -> Result<Self> {
        Self::scaled_beta(shape1, shape2, 1.0)
    }

    pub fn scaled_beta(shape1: f64, shape2: f64, scale: f64) -> Result<Self> {
        let spec = LambdaSpec::Beta { shape1, shape2, scale };
        spec.validate()?;
        Ok(spec)
    }

    /// The Beta(2-α, α) family, α ∈ (0,2).
    pub fn beta_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::pre(format!("beta alpha must lie in (0,2), got {alpha}")));
        }
        Self::beta(2.0 - alpha, alpha)
    }

    /// A custom density; `total_mass` is checked against its quadrature.
    pub fn custom<F>(density: F, total_mass: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let spec = LambdaSpec::CustomDensity(CustomDensity {
            density: Arc::new(density),
            total_mass,
            mu_minus1: None,
        });
        spec.validate()?;
        if let LambdaSpec::CustomDensity(c) = &spec {
            let tol = Tolerance { rel: 1e-10, ..Tolerance::default() };
            let mass = quadrature::integrate(|x| c.density(x), 0.0, 1.0, tol)
                .map_err(|e| Error::Quadrature(format!("total mass of custom density: {e}")))?
                .value;
            if ((mass - total_mass) / total_mass).abs() > 1e-6 {
                return Err(Error::pre(format!(
                    "custom density integrates to {mass}, declared total mass {total_mass}"
                )));
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaSpec::Kingman | LambdaSpec::Uniform => Ok(()),
            LambdaSpec::Dirac { p } => {
                if *p > 0.0 && *p <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::pre(format!("dirac p must lie in (0,1], got {p}")))
                }
            }
            LambdaSpec::Beta { shape1, shape2, scale } => {
                let ok = |v: f64| v > 0.0 && v.is_finite();
                if ok(*shape1) && ok(*shape2) && ok(*scale) {
                    Ok(())
                } else {
                    Err(Error::pre(format!(
                        "beta shapes and scale must be positive and finite, got ({shape1}, {shape2}, {scale})"
                    )))
                }
            }
            LambdaSpec::CustomDensity(c) => {
                if c.total_mass > 0.0 && c.total_mass.is_finite() {
                    Ok(())
                } else {
                    Err(Error::pre(format!("custom total mass must be positive and finite, got {}", c.total_mass)))
                }
            }
        }
    }

    /// Λ([0,1]), which equals λ_{2,2}.
    pub fn total_mass(&self) -> f64 {
        match self {
            LambdaSpec::Kingman | LambdaSpec::Uniform | LambdaSpec::Dirac { .. } => 1.0,
            LambdaSpec::Beta { scale, .. } => *scale,
            LambdaSpec::CustomDensity(c) => c.total_mass,
        }
    }

    pub fn is_kingman(&self) -> bool {
        matches!(self, LambdaSpec::Kingman)
    }

    /// Re-expresses a density-backed measure as a [`LambdaSpec::CustomDensity`], so
    /// its rates go through quadrature. Kingman and Dirac have no density.
    pub fn as_density(&self) -> Option<LambdaSpec> {
        match self {
            LambdaSpec::Uniform => Some(LambdaSpec::CustomDensity(CustomDensity {
                density: Arc::new(|_| 1.0),
                total_mass: 1.0,
                mu_minus1: Some(f64::INFINITY),
            })),
            LambdaSpec::Beta { shape1, shape2, scale } => {
                let (a, b, s) = (*shape1, *shape2, *scale);
                let norm = s / ln_beta(a, b).exp();
                Some(LambdaSpec::CustomDensity(CustomDensity {
                    density: Arc::new(move |x| norm * x.powf(a - 1.0) * (1.0 - x).powf(b - 1.0)),
                    total_mass: s,
                    mu_minus1: None,
                }))
            }
            LambdaSpec::CustomDensity(_) => Some(self.clone()),
            LambdaSpec::Kingman | LambdaSpec::Dirac { .. } => None,
        }
    }

    pub fn classify(&self) -> Result<MeasureClass> {
        let (mu_minus1, mass_at_one) = match self {
            LambdaSpec::Kingman | LambdaSpec::Uniform => (f64::INFINITY, 0.0),
            LambdaSpec::Dirac { p } => (1.0 / p, if *p == 1.0 { 1.0 } else { 0.0 }),
            LambdaSpec::Beta { shape1, shape2, scale } => {
                let mu = if *shape1 > 1.0 {
                    // B(a-1,b)/B(a,b) = (a+b-1)/(a-1)
                    scale * (shape1 + shape2 - 1.0) / (shape1 - 1.0)
                } else {
                    f64::INFINITY
                };
                (mu, 0.0)
            }
            LambdaSpec::CustomDensity(c) => (c.mu_minus1.map_or_else(|| custom_mu_minus1(c), Ok)?, 0.0),
        };
        Ok(MeasureClass {
            mu_minus1,
            has_dust: mu_minus1.is_finite(),
            stays_infinite: mass_at_one == 0.0,
            mass_at_one,
        })
    }

    /// `(λ_{b,k}, ln λ_{b,k})` in closed form; `None` for custom densities.
    fn closed_form_rate(&self, b: usize, k: usize) -> Option<(f64, f64)> {
        match self {
            LambdaSpec::Kingman => Some(if k == 2 { (1.0, 0.0) } else { (0.0, f64::NEG_INFINITY) }),
            LambdaSpec::Dirac { p } => {
                let ln = xlogy((k - 2) as f64, *p) + xlogy((b - k) as f64, 1.0 - p);
                let direct = p.powi((k - 2) as i32) * (1.0 - p).powi((b - k) as i32);
                Some((if direct > 0.0 { direct } else { ln.exp() }, ln))
            }
            LambdaSpec::Uniform => {
                let ln = beta_rate_ln(1.0, 1.0, 1.0, b, k);
                Some((ln.exp(), ln))
            }
            LambdaSpec::Beta { shape1, shape2, scale } => {
                let ln = beta_rate_ln(*shape1, *shape2, *scale, b, k);
                Some((ln.exp(), ln))
            }
            LambdaSpec::CustomDensity(_) => None,
        }
    }

    fn label(&self) -> String {
        match self {
            LambdaSpec::Kingman => "kingman".into(),
            LambdaSpec::Dirac { p } => format!("dirac(p={p})"),
            LambdaSpec::Uniform => "uniform".into(),
            LambdaSpec::Beta { shape1, shape2, scale } if *scale == 1.0 => format!("beta({shape1},{shape2})"),
            LambdaSpec::Beta { shape1, shape2, scale } => format!("{scale}*beta({shape1},{shape2})"),
            LambdaSpec::CustomDensity(_) => "custom".into(),
        }
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Dust and absorption classification of Λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureClass {
    /// `∫ x⁻¹ Λ(dx)`, possibly infinite.
    pub mu_minus1: f64,
    pub has_dust: bool,
    /// Λ({1}) = 0.
    pub stays_infinite: bool,
    pub mass_at_one: f64,
}

/// `x·ln(y)` with `0·ln(0) = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn beta_rate_ln(a: f64, b_shape: f64, scale: f64, b: usize, k: usize) -> f64 {
    scale.ln() + ln_beta(a + (k - 2) as f64, b_shape + (b - k) as f64) - ln_beta(a, b_shape)
}

fn quadrature_rate(c: &CustomDensity, b: usize, k: usize) -> Result<f64> {
    let (pk, pb) = ((k - 2) as i32, (b - k) as i32);
    let tol = Tolerance { rel: 1e-10, abs: 1e-300, max_evals: 1_000_000 };
    quadrature::integrate(|x| x.powi(pk) * (1.0 - x).powi(pb) * c.density(x), 0.0, 1.0, tol)
        .map(|e| e.value.max(0.0))
        .map_err(|e| Error::RateIntegration { b, k, reason: e.to_string() })
}

/// Decides whether `∫ x⁻¹ f(x) dx` converges by comparing successive decades
/// (in steps of 10⁻²) of the integral near 0.
fn custom_mu_minus1(c: &CustomDensity) -> Result<f64> {
    const PIECES: i32 = 8;
    let tol = Tolerance { rel: 1e-10, abs: 1e-300, max_evals: 200_000 };
    let mut pieces = Vec::with_capacity(PIECES as usize);
    for m in 0..PIECES {
        let hi = 10f64.powi(-2 * m);
        let lo = 10f64.powi(-2 * (m + 1));
        let piece = quadrature::integrate(|x| c.density(x) / x, lo, hi, tol)
            .map_err(|e| Error::Quadrature(format!("mu_minus1 piece {m}: {e}")))?
            .value;
        pieces.push(piece);
    }
    let head: f64 = pieces.iter().sum();
    let last = pieces[pieces.len() - 1];
    let prev = pieces[pieces.len() - 2];
    if last <= 0.0 {
        return Ok(head);
    }
    let ratio = if prev > 0.0 { last / prev } else { f64::INFINITY };
    if ratio >= 0.98 {
        Ok(f64::INFINITY)
    } else if ratio <= 0.9 {
        Ok(head + last * ratio / (1.0 - ratio))
    } else {
        Err(Error::DustInconclusive { ratio })
    }
}

fn check_bk(b: usize, k: usize) -> Result<()> {
    if b >= 2 && (2..=b).contains(&k) {
        Ok(())
    } else {
        Err(Error::pre(format!("rate index requires 2 <= k <= b, got b={b}, k={k}")))
    }
}

/// Rate at which a given `k`-tuple out of `b` blocks merges.
pub fn lambda_bk(spec: &LambdaSpec, b: usize, k: usize) -> Result<f64> {
    check_bk(b, k)?;
    match spec {
        LambdaSpec::CustomDensity(c) => quadrature_rate(c, b, k),
        _ => Ok(spec.closed_form_rate(b, k).expect("closed form").0),
    }
}

/// Total merger rate with `b` blocks.
pub fn total_rate(spec: &LambdaSpec, b: usize) -> Result<f64> {
    if b < 2 {
        return Err(Error::pre(format!("total rate needs b >= 2, got {b}")));
    }
    let mut acc = CompensatedSum::<f64>::new();
    for k in 2..=b {
        let ln_c = ln_binomial(b, k);
        let term = match spec {
            LambdaSpec::CustomDensity(c) => quadrature_rate(c, b, k)?.ln() + ln_c,
            _ => spec.closed_form_rate(b, k).expect("closed form").1 + ln_c,
        };
        acc.add(term.exp());
    }
    Ok(acc.value())
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Rates `λ_{b,k}`, totals `λ_b` and jump-size probabilities
/// `C(b,k) λ_{b,k} / λ_b` for all `2 ≤ k ≤ b ≤ n_max`, built once.
#[derive(Debug, Clone)]
pub struct RateTable<T> {
    spec: LambdaSpec,
    n_max: usize,
    rates: Vec<T>,
    jumps: Vec<T>,
    totals: Vec<T>,
}

#[inline]
fn row_offset(b: usize) -> usize {
    (b - 2) * (b - 1) / 2
}

impl<T: Scalar> RateTable<T> {
    pub fn spec(&self) -> &LambdaSpec {
        &self.spec
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `λ_{b,k}`.
    #[inline]
    pub fn rate(&self, b: usize, k: usize) -> &T {
        debug_assert!(2 <= k && k <= b && b <= self.n_max);
        &self.rates[row_offset(b) + k - 2]
    }

    /// `λ_b`.
    #[inline]
    pub fn total(&self, b: usize) -> &T {
        &self.totals[b - 2]
    }

    /// Probability that the next merger from `b` blocks involves exactly `k` of them.
    #[inline]
    pub fn jump_probability(&self, b: usize, k: usize) -> &T {
        &self.jumps[row_offset(b) + k - 2]
    }

    /// Jump-size probabilities for `k = 2..=b`.
    #[inline]
    pub fn jump_row(&self, b: usize) -> &[T] {
        let off = row_offset(b);
        &self.jumps[off..off + b - 1]
    }

    fn check_n_max(n_max: usize) -> Result<()> {
        if n_max < 2 {
            return Err(Error::pre(format!("rate table needs n_max >= 2, got {n_max}")));
        }
        Ok(())
    }

    /// Builds the table with products of Pochhammer symbols evaluated in `T`.
    /// Exact for rational `T` and rational parameters. Intended for small `n_max`
    /// with floating `T`, since the intermediate products overflow.
    pub fn exact(spec: &LambdaSpec, n_max: usize) -> Result<Self> {
        Self::check_n_max(n_max)?;
        spec.validate()?;
        let pochhammer = |a: T| -> Vec<T> {
            let mut out = Vec::with_capacity(n_max);
            let mut acc = T::one();
            out.push(acc.clone());
            for m in 0..n_max {
                acc = acc * (a.clone() + T::from_count(m as u64));
                out.push(acc.clone());
            }
            out
        };
        let rate_fn: Box<dyn Fn(usize, usize) -> T> = match spec {
            LambdaSpec::Kingman => Box::new(|_, k| if k == 2 { T::one() } else { T::zero() }),
            LambdaSpec::Dirac { p } => {
                let p = T::from_real(*p);
                let q = T::one() - p.clone();
                Box::new(move |b, k| p.powu((k - 2) as u32) * q.powu((b - k) as u32))
            }
            LambdaSpec::Uniform | LambdaSpec::Beta { .. } => {
                let (a1, a2, scale) = match spec {
                    LambdaSpec::Beta { shape1, shape2, scale } => {
                        (T::from_real(*shape1), T::from_real(*shape2), T::from_real(*scale))
                    }
                    _ => (T::one(), T::one(), T::one()),
                };
                let p1 = pochhammer(a1.clone());
                let p2 = pochhammer(a2.clone());
                let p12 = pochhammer(a1 + a2);
                Box::new(move |b, k| scale.clone() * p1[k - 2].clone() * p2[b - k].clone() / p12[b - 2].clone())
            }
            LambdaSpec::CustomDensity(_) => {
                return Err(Error::pre("exact rate tables need a closed-form measure"));
            }
        };
        let mut rates = Vec::with_capacity(row_offset(n_max + 1));
        let mut jumps = Vec::with_capacity(row_offset(n_max + 1));
        let mut totals = Vec::with_capacity(n_max - 1);
        for b in 2..=n_max {
            let row: Vec<T> = (2..=b).map(|k| rate_fn(b, k)).collect();
            let weighted: Vec<T> = row
                .iter()
                .enumerate()
                .map(|(i, r)| binomial::<T>(b as u64, (i + 2) as u64) * r.clone())
                .collect();
            let total = weighted.iter().cloned().collect::<CompensatedSum<T>>().value();
            jumps.extend(weighted.into_iter().map(|w| w / total.clone()));
            rates.extend(row);
            totals.push(total);
        }
        Ok(Self { spec: spec.clone(), n_max, rates, jumps, totals })
    }
}

impl RateTable<f64> {
    /// Builds the table in double precision. Closed forms go through log-Gamma so
    /// that `n_max` can reach 10⁴ and beyond; custom densities use quadrature.
    pub fn new(spec: &LambdaSpec, n_max: usize) -> Result<Self> {
        Self::check_n_max(n_max)?;
        spec.validate()?;
        let ln_fact: Vec<f64> = (0..=n_max).map(|i| ln_gamma(i as f64 + 1.0)).collect();
        let size = row_offset(n_max + 1);
        let mut rates = Vec::with_capacity(size);
        let mut jumps = Vec::with_capacity(size);
        let mut totals = Vec::with_capacity(n_max - 1);
        let mut ln_terms = Vec::with_capacity(n_max);
        for b in 2..=n_max {
            ln_terms.clear();
            for k in 2..=b {
                let (rate, ln_rate) = match spec {
                    LambdaSpec::CustomDensity(c) => {
                        let r = quadrature_rate(c, b, k)?;
                        (r, r.ln())
                    }
                    _ => spec.closed_form_rate(b, k).expect("closed form"),
                };
                rates.push(rate);
                ln_terms.push(ln_fact[b] - ln_fact[k] - ln_fact[b - k] + ln_rate);
            }
            let peak = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scaled: CompensatedSum<f64> = ln_terms.iter().map(|&l| (l - peak).exp()).collect();
            let ln_total = peak + scaled.value().ln();
            totals.push(ln_total.exp());
            jumps.extend(ln_terms.iter().map(|&l| (l - ln_total).exp()));
        }
        Ok(Self { spec: spec.clone(), n_max, rates, jumps, totals })
    }
}

// JSON form used by experiment configs.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureJson {
    measure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
}

impl TryFrom<MeasureJson> for LambdaSpec {
    type Error = Error;

    fn try_from(j: MeasureJson) -> Result<Self> {
        let unexpected = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::config(name, format!("not allowed for measure `{}`", j.measure)))
            } else {
                Ok(())
            }
        };
        match j.measure.as_str() {
            "kingman" | "uniform" => {
                unexpected("p", j.p.is_some())?;
                unexpected("alpha", j.alpha.is_some())?;
                unexpected("shape1", j.shape1.is_some())?;
                unexpected("shape2", j.shape2.is_some())?;
                unexpected("scale", j.scale.is_some())?;
                Ok(if j.measure == "kingman" { LambdaSpec::Kingman } else { LambdaSpec::Uniform })
            }
            "dirac" => {
                unexpected("alpha", j.alpha.is_some())?;
                unexpected("shape1", j.shape1.is_some())?;
                unexpected("shape2", j.shape2.is_some())?;
                unexpected("scale", j.scale.is_some())?;
                let p = j.p.ok_or_else(|| Error::config("p", "required for measure `dirac`"))?;
                LambdaSpec::dirac(p).map_err(|e| Error::config("p", e.to_string()))
            }
            "beta" => {
                unexpected("p", j.p.is_some())?;
                let scale = j.scale.unwrap_or(1.0);
                let (a, b) = match (j.alpha, j.shape1, j.shape2) {
                    (Some(alpha), None, None) => {
                        if !(alpha > 0.0 && alpha < 2.0) {
                            return Err(Error::config("alpha", format!("must lie in (0,2), got {alpha}")));
                        }
                        (2.0 - alpha, alpha)
                    }
                    (None, Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::config(
                            "alpha",
                            "measure `beta` needs either `alpha` or both `shape1` and `shape2`",
                        ))
                    }
                };
                LambdaSpec::scaled_beta(a, b, scale).map_err(|e| Error::config("shape1", e.to_string()))
            }
            other => Err(Error::config(
                "measure",
                format!("unknown measure `{other}` (expected kingman, dirac, beta or uniform)"),
            )),
        }
    }
}

impl Serialize for LambdaSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut j = MeasureJson { measure: String::new(), p: None, alpha: None, shape1: None, shape2: None, scale: None };
        match self {
            LambdaSpec::Kingman => j.measure = "kingman".into(),
            LambdaSpec::Uniform => j.measure = "uniform".into(),
            LambdaSpec::Dirac { p } => {
                j.measure = "dirac".into();
                j.p = Some(*p);
            }
            LambdaSpec::Beta { shape1, shape2, scale } => {
                j.measure = "beta".into();
                j.shape1 = Some(*shape1);
                j.shape2 = Some(*shape2);
                if *scale != 1.0 {
                    j.scale = Some(*scale);
                }
            }
            LambdaSpec::CustomDensity(_) => {
                return Err(serde::ser::Error::custom("custom densities cannot be serialized"));
            }
        }
        j.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LambdaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let j = MeasureJson::deserialize(deserializer)?;
        LambdaSpec::try_from(j).map_err(serde::de::Error::custom)
    }
}

impl PartialEq for LambdaSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (LambdaSpec::Kingman, LambdaSpec::Kingman) | (LambdaSpec::Uniform, LambdaSpec::Uniform) => true,
            (LambdaSpec::Dirac { p: a }, LambdaSpec::Dirac { p: b }) => a == b,
            (
                LambdaSpec::Beta { shape1: a1, shape2: a2, scale: s },
                LambdaSpec::Beta { shape1: b1, shape2: b2, scale: t },
            ) => a1 == b1 && a2 == b2 && s == t,
            (LambdaSpec::CustomDensity(a), LambdaSpec::CustomDensity(b)) => Arc::ptr_eq(&a.density, &b.density),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(lambda_bk(&LambdaSpec::Kingman, 5, 2).unwrap(), 1.0);
        assert_eq!(lambda_bk(&LambdaSpec::Kingman, 5, 3).unwrap(), 0.0);
        assert!(close(lambda_bk(&LambdaSpec::Uniform, 4, 2).unwrap(), 1.0 / 3.0, 1e-14));
        assert_eq!(lambda_bk(&LambdaSpec::dirac(0.5).unwrap(), 4, 3).unwrap(), 0.25);
        assert_eq!(total_rate(&LambdaSpec::Kingman, 4).unwrap(), 6.0);
        assert!(close(total_rate(&LambdaSpec::Uniform, 3).unwrap(), 2.0, 1e-14));
        assert!(close(total_rate(&LambdaSpec::dirac(1.0).unwrap(), 5).unwrap(), 1.0, 1e-14));
    }

    #[test]
    fn uniform_rate_matches_quadrature_oracle() {
        // ∫ x^0 (1-x)^2 dx = 1/3
        let est = quadrature::integrate(|x| (1.0 - x).powi(2), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!(close(est.value, lambda_bk(&LambdaSpec::Uniform, 4, 2).unwrap(), 1e-13));
    }

    #[test]
    fn dirac_one_total_rate_is_flat() {
        // The one measure whose total rate does not grow with b.
        let t = RateTable::new(&LambdaSpec::dirac(1.0).unwrap(), 30).unwrap();
        assert!((2..=30).all(|b| *t.total(b) == 1.0));
    }

    #[test]
    fn dirac_one_only_full_merger() {
        let d = LambdaSpec::dirac(1.0).unwrap();
        for b in 2..8 {
            for k in 2..=b {
                let want = if k == b { 1.0 } else { 0.0 };
                assert_eq!(lambda_bk(&d, b, k).unwrap(), want);
            }
        }
    }

    #[test]
    fn bad_indices_and_params_are_rejected() {
        assert!(matches!(lambda_bk(&LambdaSpec::Uniform, 3, 4), Err(Error::Precondition(_))));
        assert!(matches!(lambda_bk(&LambdaSpec::Uniform, 3, 1), Err(Error::Precondition(_))));
        assert!(LambdaSpec::dirac(0.0).is_err());
        assert!(LambdaSpec::dirac(1.5).is_err());
        assert!(LambdaSpec::beta(0.0, 1.0).is_err());
        assert!(LambdaSpec::custom(|_| 1.0, 2.0).is_err());
        assert!(RateTable::new(&LambdaSpec::Kingman, 1).is_err());
    }

    #[test]
    fn classification_examples() {
        let c = LambdaSpec::dirac(0.5).unwrap().classify().unwrap();
        assert_eq!(c.mu_minus1, 2.0);
        assert!(c.has_dust && c.stays_infinite);
        let c = LambdaSpec::Uniform.classify().unwrap();
        assert!(c.mu_minus1.is_infinite() && !c.has_dust);
        assert!(!LambdaSpec::beta_alpha(1.5).unwrap().classify().unwrap().has_dust);
        assert!(!LambdaSpec::Kingman.classify().unwrap().has_dust);
        let c = LambdaSpec::dirac(1.0).unwrap().classify().unwrap();
        assert!(c.has_dust && !c.stays_infinite && c.mass_at_one == 1.0);
        // Beta(3,2): (a+b-1)/(a-1) = 2
        let c = LambdaSpec::beta(3.0, 2.0).unwrap().classify().unwrap();
        assert!(close(c.mu_minus1, 2.0, 1e-14));
    }

    #[test]
    fn custom_density_dust_detection() {
        let uniform = LambdaSpec::Uniform.as_density().unwrap();
        let uniform = match uniform {
            LambdaSpec::CustomDensity(c) => LambdaSpec::CustomDensity(CustomDensity { mu_minus1: None, ..c }),
            _ => unreachable!(),
        };
        assert!(uniform.classify().unwrap().mu_minus1.is_infinite());

        // Beta(3,2) density: 12 x^2 (1-x), μ₋₁ = 2.
        let dusty = LambdaSpec::custom(|x| 12.0 * x * x * (1.0 - x), 1.0).unwrap();
        let c = dusty.classify().unwrap();
        assert!(c.has_dust && close(c.mu_minus1, 2.0, 1e-8), "{c:?}");

        // x^{0.02} near zero sits between the two thresholds.
        let borderline = LambdaSpec::custom(|x| 1.02 * x.powf(0.02), 1.0).unwrap();
        assert!(matches!(borderline.classify(), Err(Error::DustInconclusive { .. })));
        let manual = match borderline {
            LambdaSpec::CustomDensity(c) => LambdaSpec::CustomDensity(c.with_mu_minus1(51.0)),
            _ => unreachable!(),
        };
        assert_eq!(manual.classify().unwrap().mu_minus1, 51.0);
    }

    #[test]
    fn log_gamma_table_matches_exact_pochhammer_table() {
        for spec in [LambdaSpec::Uniform, LambdaSpec::beta(0.5, 1.5).unwrap(), LambdaSpec::dirac(0.3).unwrap()] {
            let fast = RateTable::new(&spec, 40).unwrap();
            let exact = RateTable::<BigRational>::exact(&spec, 40).unwrap();
            for b in 2..=40 {
                assert!(close(*fast.total(b), exact.total(b).to_real(), 1e-12), "{spec} b={b}");
                for k in 2..=b {
                    assert!(close(*fast.rate(b, k), exact.rate(b, k).to_real(), 1e-12));
                    let (f, e) = (*fast.jump_probability(b, k), exact.jump_probability(b, k).to_real());
                    assert!(close(f, e, 1e-12), "{spec} b={b} k={k}: {f:e} vs {e:e}");
                }
            }
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        for spec in [LambdaSpec::Uniform, LambdaSpec::beta(0.5, 1.5).unwrap(), LambdaSpec::beta(2.5, 0.7).unwrap()] {
            let dens = spec.as_density().unwrap();
            for b in 2..=20 {
                for k in 2..=b {
                    let q = lambda_bk(&dens, b, k).unwrap();
                    let c = lambda_bk(&spec, b, k).unwrap();
                    assert!(close(q, c, 1e-8), "{spec} b={b} k={k}: {q} vs {c}");
                }
            }
        }
    }

    #[test]
    fn large_table_is_finite_and_normalized() {
        let t = RateTable::new(&LambdaSpec::Uniform, 3000).unwrap();
        assert!(close(*t.total(3000), 2999.0, 1e-10));
        let s: f64 = t.jump_row(3000).iter().sum();
        assert!(close(s, 1.0, 1e-12));
    }

    #[test]
    fn json_forms() {
        let s: LambdaSpec = serde_json::from_str(r#"{"measure":"beta","alpha":1.5}"#).unwrap();
        assert_eq!(s, LambdaSpec::beta(0.5, 1.5).unwrap());
        let s: LambdaSpec = serde_json::from_str(r#"{"measure":"dirac","p":0.5}"#).unwrap();
        assert_eq!(s, LambdaSpec::dirac(0.5).unwrap());
        assert!(serde_json::from_str::<LambdaSpec>(r#"{"measure":"kingman","p":0.5}"#).is_err());
        assert!(serde_json::from_str::<LambdaSpec>(r#"{"measure":"uniform","extra":1}"#).is_err());
        assert!(serde_json::from_str::<LambdaSpec>(r#"{"measure":"dirac","p":2}"#).is_err());
        assert!(serde_json::from_str::<LambdaSpec>(r#"{"measure":"xi"}"#).is_err());
    }

    fn closed_form_specs() -> impl Strategy<Value = LambdaSpec> {
        prop_oneof![
            Just(LambdaSpec::Kingman),
            Just(LambdaSpec::Uniform),
            (0.01f64..0.95).prop_map(|p| LambdaSpec::dirac(p).unwrap()),
            (0.05f64..5.0, 0.05f64..5.0).prop_map(|(a, b)| LambdaSpec::beta(a, b).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn consistency_identity_and_monotone_totals(spec in closed_form_specs()) {
            let t = RateTable::new(&spec, 60).unwrap();
            // Dirac totals saturate at float resolution once (1-p)^b is negligible.
            let strict_up_to = if matches!(spec, LambdaSpec::Dirac { .. }) { 8 } else { 60 };
            for b in 2..60 {
                prop_assert!(*t.total(b + 1) >= t.total(b) * (1.0 - 1e-12));
                if b < strict_up_to {
                    prop_assert!(t.total(b + 1) > t.total(b), "b={}", b);
                }
                for k in 2..=b {
                    let lhs = *t.rate(b, k);
                    let rhs = t.rate(b + 1, k) + t.rate(b + 1, k + 1);
                    prop_assert!(close(lhs, rhs, 1e-10), "b={} k={} {} vs {}", b, k, lhs, rhs);
                }
            }
        }

        #[test]
        fn json_round_trip(spec in closed_form_specs()) {
            let text = serde_json::to_string(&spec).unwrap();
            let back: LambdaSpec = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, spec);
        }
    }
}
