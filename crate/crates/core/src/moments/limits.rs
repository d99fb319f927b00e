//! Large-sample limits of `O_n / n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::rates::{LambdaSpec, RateTable};
use crate::scalar::{CompensatedSum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    Explicit,
    PhaseType,
    DustSeries,
    BetaLimit,
    GrowthQuadrature,
}

impl LimitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitMethod::Explicit => "explicit",
            LimitMethod::PhaseType => "phase_type",
            LimitMethod::DustSeries => "dust_series",
            LimitMethod::BetaLimit => "beta_limit",
            LimitMethod::GrowthQuadrature => "growth_quadrature",
        }
    }
}

/// One limit moment `E(S^k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitMomentResult<T> {
    pub k: usize,
    pub value: T,
    pub method: LimitMethod,
    /// `(λ_r, a_{k+1,r})` for `r = 2..=k+1`, when the mixture was used.
    pub a_coefficients: Option<Vec<(T, T)>>,
}

fn collision_threshold<T: Scalar>() -> T {
    if T::EXACT {
        T::zero()
    } else {
        T::from_real(1e-9)
    }
}

/// Writes the absorption time of the block-counting chain started from `k+1`
/// blocks as a mixture of exponentials, `P(τ > t) = Σ_r a_{k+1,r} e^{-λ_r t}`,
/// and returns `(λ_r, a_{k+1,r})` for `r = 2..=k+1`.
///
/// The generator on `{2, …, k+1}` is triangular with diagonal `-λ_b`, so
/// `a_{b,r} = Σ_{b'<b} q(b→b') a_{b',r} / (λ_b - λ_r)` for `r < b` and the
/// diagonal coefficient closes `Σ_r a_{b,r} = 1`.
pub fn absorption_mixture<T: Scalar>(k: usize, rates: &RateTable<T>) -> Result<Vec<(T, T)>> {
    if k < 1 {
        return Err(Error::pre("absorption mixture needs k >= 1"));
    }
    let top = k + 1;
    if rates.n_max() < top {
        return Err(Error::pre(format!("rate table covers b <= {}, need {top}", rates.n_max())));
    }
    let lam = |b: usize| rates.total(b).clone();
    let scale = (2..=top).map(lam).fold(T::zero(), |m, v| if v > m { v } else { m });
    let threshold = collision_threshold::<T>() * scale;
    for r in 2..=top {
        for s in r + 1..=top {
            if (lam(r) - lam(s)).abs() <= threshold {
                return Err(Error::DegenerateSpectrum { r, s });
            }
        }
    }
    // coeff[b][r] for 2 <= r <= b <= top
    let mut coeff: Vec<Vec<T>> = vec![Vec::new(); top + 1];
    for b in 2..=top {
        let mut row = vec![T::zero(); b + 1];
        let mut off_diag = CompensatedSum::new();
        for r in 2..b {
            let mut acc = CompensatedSum::new();
            // b -> b' = b - m + 1 through an m-merger; b' = 1 is absorbing.
            for target in r..b {
                let m = b - target + 1;
                let q = rates.jump_probability(b, m).clone() * lam(b);
                acc.add(q * coeff[target][r].clone());
            }
            row[r] = acc.value() / (lam(b) - lam(r));
            off_diag.add(row[r].clone());
        }
        row[b] = T::one() - off_diag.value();
        coeff[b] = row;
    }
    Ok((2..=top).map(|r| (lam(r), coeff[top][r].clone())).collect())
}

/// `E(e^{-s τ})` for the absorption time `τ` of the chain started from `b0` blocks,
/// by first-step analysis. Needs no spectral decomposition.
pub fn absorption_laplace<T: Scalar>(b0: usize, s: &T, rates: &RateTable<T>) -> Result<T> {
    if b0 < 1 || rates.n_max() < b0 {
        return Err(Error::pre(format!("laplace transform needs 1 <= b0 <= n_max, got {b0}")));
    }
    let mut phi = vec![T::one(); b0 + 1];
    for b in 2..=b0 {
        let lam = rates.total(b).clone();
        let mut acc = CompensatedSum::new();
        for m in 2..=b {
            acc.add(rates.jump_probability(b, m).clone() * phi[b - m + 1].clone());
        }
        phi[b] = lam.clone() / (lam + s.clone()) * acc.value();
    }
    Ok(phi[b0].clone())
}

fn require_no_dust(spec: &LambdaSpec) -> Result<()> {
    let class = spec.classify()?;
    if class.has_dust {
        return Err(Error::WrongRegime(format!(
            "{spec} has dust (mu_-1 = {}); the mixture formula needs a coalescent without dust",
            class.mu_minus1
        )));
    }
    Ok(())
}

fn agree<T: Scalar>(a: &T, b: &T, tol: f64) -> bool {
    if T::EXACT {
        a == b
    } else {
        (a.clone() - b.clone()).abs() <= T::from_real(tol)
    }
}

/// `E(S^k) = 1 - Σ_r a_{k+1,r} (θ/2)/(λ_r + θ/2)` for coalescents without dust.
///
/// For `k ≤ 2` the result is checked against the explicit first two moments and
/// for every `k` against the Laplace transform of the absorption time.
pub fn limit_moment_nodust<T: Scalar>(k: usize, theta: &T, rates: &RateTable<T>) -> Result<LimitMomentResult<T>> {
    if *theta <= T::zero() {
        return Err(Error::pre("theta must be positive"));
    }
    require_no_dust(rates.spec())?;
    let half = theta.clone() / T::from_count(2);
    let mixture = absorption_mixture(k, rates)?;
    let mut acc = CompensatedSum::new();
    for (lam, a) in &mixture {
        acc.add(a.clone() * half.clone() / (lam.clone() + half.clone()));
    }
    let value = T::one() - acc.value();

    let laplace = absorption_laplace(k + 1, &half, rates)?;
    if !agree(&value, &laplace, 1e-10) {
        return Err(Error::Structural(format!(
            "mixture route {value} and Laplace route {laplace} disagree for k={k}"
        )));
    }
    let explicit = match k {
        1 => {
            let l2 = rates.total(2).clone();
            Some(l2.clone() / (l2 + half.clone()))
        }
        2 => {
            let (l2, l3) = (rates.total(2).clone(), rates.total(3).clone());
            let three_halves = T::from_count(3) / T::from_count(2);
            let one_half = T::one() / T::from_count(2);
            Some(
                T::one() - three_halves * half.clone() / (l2 + half.clone())
                    + one_half * half.clone() / (l3 + half.clone()),
            )
        }
        _ => None,
    };
    if let Some(e) = &explicit {
        if !agree(&value, e, 1e-12) {
            return Err(Error::Structural(format!("mixture value {value} differs from explicit {e} for k={k}")));
        }
    }
    Ok(LimitMomentResult {
        k,
        value,
        method: if explicit.is_some() { LimitMethod::Explicit } else { LimitMethod::PhaseType },
        a_coefficients: Some(mixture),
    })
}

/// Laplace-transform route to the same quantity as [`limit_moment_nodust`].
pub fn limit_moment_laplace<T: Scalar>(k: usize, theta: &T, rates: &RateTable<T>) -> Result<T> {
    require_no_dust(rates.spec())?;
    absorption_laplace(k + 1, &(theta.clone() / T::from_count(2)), rates)
}

/// Beta law `Beta(1/(1+θ/2), (θ/2)/(1+θ/2))` proposed for the Bolthausen-Sznitman
/// limit. Kept as a comparison target: its second moment differs from the mixture
/// formula (3/8 against 5/12 at θ = 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaLimit {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaLimit {
    pub fn moment(&self, k: usize) -> f64 {
        (0..k).map(|m| (self.alpha + m as f64) / (self.alpha + self.beta + m as f64)).product()
    }

    pub fn moment_result(&self, k: usize) -> LimitMomentResult<f64> {
        LimitMomentResult { k, value: self.moment(k), method: LimitMethod::BetaLimit, a_coefficients: None }
    }
}

pub fn bsc_limit_beta(theta: f64) -> Result<BetaLimit> {
    if !(theta > 0.0) {
        return Err(Error::pre("theta must be positive"));
    }
    let half = theta / 2.0;
    Ok(BetaLimit { alpha: 1.0 / (1.0 + half), beta: half / (1.0 + half) })
}

fn dust_parameters(theta: f64, spec: &LambdaSpec) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::pre("theta must be positive"));
    }
    let class = spec.classify()?;
    if !class.has_dust {
        return Err(Error::WrongRegime(format!("{spec} has no dust")));
    }
    if !class.stays_infinite {
        return Err(Error::WrongRegime(format!("{spec} has an atom at 1 and does not stay infinite")));
    }
    Ok((class.mu_minus1, spec.total_mass()))
}

/// `E(S)` for coalescents with dust that stay infinite.
///
/// Leaf 1's asymptotic frequency jumps at rate `μ₋₁`, with
/// `E(f₁[k]) = 1 - (1 - Λ([0,1])/μ₋₁)^k` after `k` jumps, and the clock lands
/// after jump `K`, geometric on {1,2,…} with success probability `(θ/2)/(μ₋₁+θ/2)`.
/// The series `Σ_k E(f₁[k]) P(K = k)` is summed directly and checked against
/// its closed form `1 - (θ/(2μ₋₁)) a'/(1-a')`, `a' = (1-Λ/μ₋₁) μ₋₁/(θ/2+μ₋₁)`.
pub fn limit_mean_dust(theta: f64, spec: &LambdaSpec) -> Result<LimitMomentResult<f64>> {
    let (mu, mass) = dust_parameters(theta, spec)?;
    let half = theta / 2.0;
    let keep = 1.0 - mass / mu;
    let stay = mu / (mu + half);
    let success = half / (mu + half);
    let mut series = CompensatedSum::<f64>::new();
    let mut stay_pow = 1.0; // stay^{k-1}
    let mut keep_pow = keep; // keep^k
    let mut k = 1u64;
    while stay_pow > 1e-18 {
        series.add((1.0 - keep_pow) * stay_pow * success);
        stay_pow *= stay;
        keep_pow *= keep;
        k += 1;
        if k > 100_000_000 {
            return Err(Error::pre(format!("dust series did not converge (theta = {theta} too small)")));
        }
    }
    // The omitted tail is below stay^K < 1e-18.
    let value = series.value();
    let a_prime = keep * stay;
    let closed = 1.0 - theta / (2.0 * mu) * a_prime / (1.0 - a_prime);
    if (value - closed).abs() > 1e-12 {
        return Err(Error::Structural(format!("dust series {value} disagrees with closed form {closed}")));
    }
    Ok(LimitMomentResult { k: 1, value, method: LimitMethod::DustSeries, a_coefficients: None })
}

/// The closed form with the constant `a = (1-Λ/μ₋₁)·(θ/2)/(θ/2+μ₋₁)`, which does
/// not match the series it is meant to sum. Exposed for errata reporting only.
pub fn dust_mean_misprinted(theta: f64, spec: &LambdaSpec) -> Result<f64> {
    let (mu, mass) = dust_parameters(theta, spec)?;
    let half = theta / 2.0;
    let a = (1.0 - mass / mu) * half / (half + mu);
    Ok(1.0 - theta / (2.0 * mu) * a / (1.0 - a))
}

/// `E(S^k)` for Kingman's coalescent under exponential growth at rate `ρ > 0`:
///
/// `1 - (θ/2) Σ_r a_{k+1,r} ∫₀^∞ (1+ρt)^{-θ/(2ρ)-1} e^{-C(r,2) t} dt`.
pub fn limit_moments_growth(k: usize, theta: f64, rho: f64, rates: &RateTable<f64>) -> Result<LimitMomentResult<f64>> {
    if !rates.spec().is_kingman() {
        return Err(Error::UnsupportedGrowthMeasure(rates.spec().to_string()));
    }
    if !(theta > 0.0) || !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::pre(format!("growth moments need theta > 0 and rho > 0, got ({theta}, {rho})")));
    }
    let half = theta / 2.0;
    let mixture = absorption_mixture(k, rates)?;
    let exponent = half / rho + 1.0;
    let tol = Tolerance { rel: 1e-12, abs: 1e-12, max_evals: 1_000_000 };
    let mut acc = CompensatedSum::<f64>::new();
    for (lam, a) in &mixture {
        let integral = quadrature::integrate_semi_infinite(|t| (-exponent * (rho * t).ln_1p() - lam * t).exp(), tol)
            .map_err(|e| Error::Quadrature(format!("growth integral for lambda={lam}: {e}")))?;
        acc.add(a * integral.value);
    }
    Ok(LimitMomentResult {
        k,
        value: 1.0 - half * acc.value(),
        method: LimitMethod::GrowthQuadrature,
        a_coefficients: Some(mixture),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn mixture_coefficients() {
        let bsc = RateTable::<BigRational>::exact(&LambdaSpec::Uniform, 6).unwrap();
        assert_eq!(absorption_mixture(1, &bsc).unwrap(), vec![(q(1, 1), q(1, 1))]);
        assert_eq!(absorption_mixture(2, &bsc).unwrap(), vec![(q(1, 1), q(3, 2)), (q(2, 1), q(-1, 2))]);
        for spec in [LambdaSpec::Kingman, LambdaSpec::Uniform, LambdaSpec::beta(0.5, 1.5).unwrap()] {
            let rates = RateTable::<BigRational>::exact(&spec, 8).unwrap();
            for k in 1..=7 {
                let total: BigRational = absorption_mixture(k, &rates).unwrap().into_iter().map(|(_, a)| a).sum();
                assert_eq!(total, q(1, 1));
            }
        }
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let star = RateTable::new(&LambdaSpec::dirac(1.0).unwrap(), 5).unwrap();
        assert!(matches!(absorption_mixture(2, &star), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn bsc_limit_moments_are_exact() {
        let bsc = RateTable::<BigRational>::exact(&LambdaSpec::Uniform, 6).unwrap();
        let theta = q(2, 1);
        assert_eq!(limit_moment_nodust(1, &theta, &bsc).unwrap().value, q(1, 2));
        let second = limit_moment_nodust(2, &theta, &bsc).unwrap();
        assert_eq!(second.value, q(5, 12));
        assert_eq!(second.method, LimitMethod::Explicit);
        assert_eq!(limit_moment_laplace(2, &theta, &bsc).unwrap(), q(5, 12));
        assert_eq!(limit_moment_nodust(4, &theta, &bsc).unwrap().method, LimitMethod::PhaseType);
    }

    #[test]
    fn limit_moments_are_decreasing_and_in_unit_interval() {
        for spec in [LambdaSpec::Kingman, LambdaSpec::Uniform, LambdaSpec::beta_alpha(1.5).unwrap()] {
            let rates = RateTable::new(&spec, 12).unwrap();
            let mut prev = 1.0;
            for k in 1..=10 {
                let v = limit_moment_nodust(k, &1.3, &rates).unwrap().value;
                assert!(v > 0.0 && v < prev, "{spec} k={k} {v}");
                prev = v;
            }
        }
        let rates = RateTable::new(&LambdaSpec::Uniform, 4).unwrap();
        assert!(limit_moment_nodust(1, &1e9, &rates).unwrap().value < 1e-8);
        assert!(1.0 - limit_moment_nodust(3, &1e-9, &rates).unwrap().value < 1e-8);
    }

    #[test]
    fn dust_specs_are_wrong_regime() {
        let rates = RateTable::new(&LambdaSpec::dirac(0.5).unwrap(), 5).unwrap();
        assert!(matches!(limit_moment_nodust(1, &2.0, &rates), Err(Error::WrongRegime(_))));
        assert!(matches!(limit_mean_dust(2.0, &LambdaSpec::Uniform), Err(Error::WrongRegime(_))));
        assert!(matches!(limit_mean_dust(2.0, &LambdaSpec::dirac(1.0).unwrap()), Err(Error::WrongRegime(_))));
    }

    #[test]
    fn beta_comparison_target() {
        let b = bsc_limit_beta(2.0).unwrap();
        assert_eq!((b.alpha, b.beta), (0.5, 0.5));
        assert_eq!(b.moment(1), 0.5);
        assert!((b.moment(2) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn dust_mean() {
        // Σ_k (1 - 2^{-k}) (2/3)^{k-1} (1/3) = 1 - (1/3)(1/2)/(1 - 1/3) = 3/4
        let mut oracle = 0.0;
        for k in 1..=1000 {
            oracle += (1.0 - 0.5f64.powi(k)) * (2.0f64 / 3.0).powi(k - 1) / 3.0;
        }
        let dirac = LambdaSpec::dirac(0.5).unwrap();
        let v = limit_mean_dust(2.0, &dirac).unwrap().value;
        assert!((v - 0.75).abs() < 1e-14 && (v - oracle).abs() < 1e-14);
        assert!((dust_mean_misprinted(2.0, &dirac).unwrap() - 0.75).abs() > 0.05);
        assert!(limit_mean_dust(1e-3, &dirac).unwrap().value > 0.999);
        let almost_star = LambdaSpec::dirac(1.0 - 1e-12).unwrap();
        assert!((limit_mean_dust(2.0, &almost_star).unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn growth_moments() {
        let rates = RateTable::new(&LambdaSpec::Kingman, 6).unwrap();
        let flat = limit_moment_nodust(1, &2.0, &rates).unwrap().value;
        let near_flat = limit_moments_growth(1, 2.0, 1e-6, &rates).unwrap().value;
        assert!((flat - near_flat).abs() < 1e-4 && (flat - 0.5).abs() < 1e-15);
        for k in 1..=4 {
            let flat = limit_moment_nodust(k, &2.0, &rates).unwrap().value;
            let near = limit_moments_growth(k, 2.0, 1e-6, &rates).unwrap().value;
            assert!((flat - near).abs() < 1e-4);
        }
        let grown = limit_moments_growth(1, 2.0, 1.0, &rates).unwrap().value;
        assert!(grown > 0.0 && grown < 1.0);
        let bsc = RateTable::new(&LambdaSpec::Uniform, 6).unwrap();
        assert!(matches!(limit_moments_growth(1, 2.0, 1.0, &bsc), Err(Error::UnsupportedGrowthMeasure(_))));
        assert!(limit_moments_growth(1, 2.0, 0.0, &rates).is_err());
    }
}
