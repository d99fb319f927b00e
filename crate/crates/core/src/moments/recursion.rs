use crate::error::{Error, Result};
use crate::rates::{LambdaSpec, RateTable};
use crate::scalar::{binomial, CompensatedSum, Scalar};

/// `(a_{i,j,k}, b_{i,j,k})` with `a_{i,j,k} = C(j,i)(k-1)^{j-i}`,
/// `a_{-1,j,k} = 0` and `b_{i,j,k} = a_{i-1,j,k} - a_{i,j,k}`.
pub fn merge_coefficients<T: Scalar>(i: u32, j: u32, k: u32) -> Result<(T, T)> {
    if i > j || k < 2 {
        return Err(Error::pre(format!("merge coefficients need 0 <= i <= j and k >= 2, got ({i},{j},{k})")));
    }
    let a = |i: u32| binomial::<T>(j as u64, i as u64) * T::from_count((k - 1) as u64).powu(j - i);
    let current = a(i);
    let previous = if i == 0 { T::zero() } else { a(i - 1) };
    Ok((current.clone(), previous - current))
}

/// Exact moments `E(X_m^i)` and `E(O_m^j)` for all `m ≤ n_max` and exponents up
/// to `j_max`. Exponent 0 is stored and equals 1.
#[derive(Debug, Clone)]
pub struct MomentTable<T> {
    n_max: usize,
    j_max: usize,
    theta: T,
    spec: LambdaSpec,
    x: Vec<Vec<T>>,
    o: Vec<Vec<T>>,
}

impl<T: Scalar> MomentTable<T> {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn theta(&self) -> &T {
        &self.theta
    }

    pub fn spec(&self) -> &LambdaSpec {
        &self.spec
    }

    /// `E(X_m^i)`, `1 ≤ m ≤ n_max`.
    pub fn x(&self, m: usize, i: usize) -> &T {
        &self.x[m][i]
    }

    /// `E(O_m^j)`, `2 ≤ m ≤ n_max`. Panics if the O part was not computed.
    pub fn o(&self, m: usize, j: usize) -> &T {
        assert!(self.has_o(), "O moments not computed");
        &self.o[m][j]
    }

    pub fn has_o(&self) -> bool {
        !self.o.is_empty()
    }

    /// Checks bounds, Jensen's inequality and monotonicity in the exponent; returns
    /// a description of every violation.
    pub fn check_invariants(&self) -> Vec<String> {
        let slack = |v: &T| -> T {
            if T::EXACT {
                T::zero()
            } else {
                T::from_real(1e-12) * (T::one() + v.abs())
            }
        };
        let mut out = Vec::new();
        let mut check = |ok: bool, what: String| {
            if !ok {
                out.push(what);
            }
        };
        for m in 1..=self.n_max {
            let mt = T::from_count(m as u64);
            let x1 = self.x(m, 1).clone();
            check(x1.clone() + slack(&x1) >= T::one() && x1 <= mt.clone() + slack(&x1), format!("1 <= E(X_{m}) <= {m}"));
            if self.j_max >= 2 {
                let x2 = self.x(m, 2).clone();
                check(x2.clone() + slack(&x2) >= x1.clone() * x1.clone(), format!("Jensen for X_{m}"));
            }
            for j in 2..=self.j_max {
                let (hi, lo) = (self.x(m, j).clone(), self.x(m, j - 1).clone());
                check(hi.clone() + slack(&hi) >= lo, format!("E(X_{m}^{j}) >= E(X_{m}^{})", j - 1));
            }
            if m < 2 || !self.has_o() {
                continue;
            }
            let o1 = self.o(m, 1).clone();
            check(
                o1.clone() + slack(&o1) >= T::from_count(2) && o1.clone() <= mt.clone() + slack(&o1),
                format!("2 <= E(O_{m}) <= {m}"),
            );
            if self.j_max >= 2 {
                let o2 = self.o(m, 2).clone();
                let gap = o2.clone() - o1.clone() * o1.clone();
                let ok = if m >= 3 { gap > -slack(&o2) } else { gap.clone() + slack(&o2) >= T::zero() };
                check(ok, format!("Jensen for O_{m}"));
            }
            for j in 2..=self.j_max {
                let (hi, lo) = (self.o(m, j).clone(), self.o(m, j - 1).clone());
                check(hi.clone() + slack(&hi) >= lo, format!("E(O_{m}^{j}) >= E(O_{m}^{})", j - 1));
            }
        }
        out
    }
}

fn check_args<T: Scalar>(n_max: usize, j_max: usize, theta: &T, rates: &RateTable<T>) -> Result<()> {
    if n_max < 2 || j_max < 1 {
        return Err(Error::pre(format!("moment tables need n_max >= 2 and j_max >= 1, got ({n_max}, {j_max})")));
    }
    if rates.n_max() < n_max {
        return Err(Error::pre(format!("rate table covers n <= {}, need {n_max}", rates.n_max())));
    }
    if *theta <= T::zero() {
        return Err(Error::pre("theta must be positive"));
    }
    Ok(())
}

/// `C(j, i)` for all `i ≤ j ≤ j_max`.
fn binomial_rows<T: Scalar>(j_max: usize) -> Vec<Vec<T>> {
    (0..=j_max).map(|j| (0..=j).map(|i| binomial::<T>(j as u64, i as u64)).collect()).collect()
}

/// `(k-1)^e` for `e ≤ j_max`.
fn powers<T: Scalar>(k: usize, j_max: usize) -> Vec<T> {
    let base = T::from_count((k - 1) as u64);
    let mut out = Vec::with_capacity(j_max + 1);
    let mut acc = T::one();
    for _ in 0..=j_max {
        out.push(acc.clone());
        acc = acc * base.clone();
    }
    out
}

/// Which first-step expansion of `X_n` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XRecursion {
    /// Conditions on whether leaf 1 takes part in the first merger:
    ///
    /// `E(X_n^j) = p + (1-p) (1/n) Σ_k w_{n,k} Σ_{i=0}^j (k·a_{i,j,k} + b_{i,j,k} + m·1{i=j}) E(X_m^i)`
    Conditioned,
    /// Treats the merged block as a uniform pick among the `m` reduced blocks,
    /// independent of leaf 1:
    ///
    /// `E(X_n^j) = p + (1-p) Σ_k w_{n,k} E[X_m^j + Σ_{i=1}^j a_{i-1,j,k} X_m^i / m]`
    ///
    /// Leaf 1 actually sits in the merged block with probability `k/n`, not
    /// `1/m`, so this form is biased for `n ≥ 3`. Kept for reporting.
    UniformPick,
}

/// Moments of `X_m`, the size of leaf 1's block when an Exp(θ/2) clock started
/// at time 0 rings, by first-step analysis on the first merger, with
/// `m = n-k+1`, `p = (θ/2)/(θ/2+λ_n)` and `w_{n,k} = C(n,k)λ_{n,k}/λ_n`.
pub fn moments_x<T: Scalar>(n_max: usize, j_max: usize, theta: &T, rates: &RateTable<T>) -> Result<MomentTable<T>> {
    moments_x_with(XRecursion::Conditioned, n_max, j_max, theta, rates)
}

pub fn moments_x_with<T: Scalar>(
    form: XRecursion,
    n_max: usize,
    j_max: usize,
    theta: &T,
    rates: &RateTable<T>,
) -> Result<MomentTable<T>> {
    check_args(n_max, j_max, theta, rates)?;
    let half = theta.clone() / T::from_count(2);
    let binom = binomial_rows::<T>(j_max);
    let mut x: Vec<Vec<T>> = Vec::with_capacity(n_max + 1);
    x.push(vec![T::zero(); j_max + 1]);
    x.push(vec![T::one(); j_max + 1]);
    for n in 2..=n_max {
        let total = rates.total(n).clone();
        let p = half.clone() / (half.clone() + total.clone());
        let nt = T::from_count(n as u64);
        let mut sums: Vec<CompensatedSum<T>> = (0..=j_max).map(|_| CompensatedSum::new()).collect();
        for k in 2..=n {
            let w = rates.jump_probability(n, k);
            if w.is_zero() {
                continue;
            }
            let m = n - k + 1;
            let prev = &x[m];
            let pw = powers::<T>(k, j_max);
            let mt = T::from_count(m as u64);
            let kt = T::from_count(k as u64);
            for j in 1..=j_max {
                let a = |i: usize| binom[j][i].clone() * pw[j - i].clone();
                let term = match form {
                    XRecursion::Conditioned => {
                        let mut inner = CompensatedSum::new();
                        for i in 0..=j {
                            let b = if i == 0 { -a(0) } else { a(i - 1) - a(i) };
                            let coeff = kt.clone() * a(i) + b + if i == j { mt.clone() } else { T::zero() };
                            inner.add(coeff * prev[i].clone());
                        }
                        inner.value() / nt.clone()
                    }
                    XRecursion::UniformPick => {
                        let mut inner = CompensatedSum::new();
                        for i in 1..=j {
                            inner.add(a(i - 1) * prev[i].clone());
                        }
                        prev[j].clone() + inner.value() / mt.clone()
                    }
                };
                sums[j].add(w.clone() * term);
            }
        }
        let mut row = vec![T::one(); j_max + 1];
        for j in 1..=j_max {
            row[j] = p.clone() + (T::one() - p.clone()) * sums[j].value();
        }
        x.push(row);
    }
    Ok(MomentTable { n_max, j_max, theta: theta.clone(), spec: rates.spec().clone(), x, o: Vec::new() })
}

/// Fills the O part of a table whose X part is complete:
///
/// `E(O_n^j) = Σ_k w_{n,k} [ (k/n) Σ_{i=0}^j a_{i,j,k} E(X_m^i)
///            + 1{k<n} (1/n) Σ_{i=0}^j (m·1{i=j} + b_{i,j,k}) E(O_m^i) ]`
///
/// The first term is leaf 1 joining the first merger (probability `k/n` given a
/// `k`-merger); the second is the merged block landing in one of the other `m-1`
/// blocks, and it vanishes for `k = n`.
pub fn moments_o<T: Scalar>(table: &mut MomentTable<T>, rates: &RateTable<T>) -> Result<()> {
    let (n_max, j_max) = (table.n_max, table.j_max);
    check_args(n_max, j_max, &table.theta, rates)?;
    let binom = binomial_rows::<T>(j_max);
    let mut o: Vec<Vec<T>> = vec![vec![T::zero(); j_max + 1]; 2];
    for n in 2..=n_max {
        let nt = T::from_count(n as u64);
        let mut sums: Vec<CompensatedSum<T>> = (0..=j_max).map(|_| CompensatedSum::new()).collect();
        for k in 2..=n {
            let w = rates.jump_probability(n, k);
            if w.is_zero() {
                continue;
            }
            let m = n - k + 1;
            let pw = powers::<T>(k, j_max);
            let kt = T::from_count(k as u64);
            let mt = T::from_count(m as u64);
            for j in 1..=j_max {
                let a = |i: usize| binom[j][i].clone() * pw[j - i].clone();
                let mut joined = CompensatedSum::new();
                for i in 0..=j {
                    joined.add(a(i) * table.x[m][i].clone());
                }
                let mut term = kt.clone() * joined.value();
                if k < n {
                    let mut apart = CompensatedSum::new();
                    for i in 0..=j {
                        let b = if i == 0 { -a(0) } else { a(i - 1) - a(i) };
                        let coeff = if i == j { mt.clone() + b } else { b };
                        let moment = if i == 0 { T::one() } else { o[m][i].clone() };
                        apart.add(coeff * moment);
                    }
                    term = term + apart.value();
                }
                sums[j].add(w.clone() * term);
            }
        }
        let mut row = vec![T::one(); j_max + 1];
        for j in 1..=j_max {
            row[j] = sums[j].value() / nt.clone();
        }
        o.push(row);
    }
    table.o = o;
    Ok(())
}

/// Both parts at once.
pub fn moment_table<T: Scalar>(n_max: usize, j_max: usize, theta: &T, rates: &RateTable<T>) -> Result<MomentTable<T>> {
    moment_table_with(XRecursion::Conditioned, n_max, j_max, theta, rates)
}

pub fn moment_table_with<T: Scalar>(
    form: XRecursion,
    n_max: usize,
    j_max: usize,
    theta: &T,
    rates: &RateTable<T>,
) -> Result<MomentTable<T>> {
    let mut table = moments_x_with(form, n_max, j_max, theta, rates)?;
    moments_o(&mut table, rates)?;
    Ok(table)
}

/// First two moments of `X_n` and `O_n` for Kingman's coalescent from the
/// specialised two-term recursions; independent of [`moment_table`]. The X
/// lines follow `form`; the O lines are the same for both.
///
/// Conditioned: `E(X_n) = p + (1-p)(1 + (n+1)E(X_{n-1}))/n` and
/// `E(X_n²) = p + (1-p)(1 + 3E(X_{n-1}) + (n+2)E(X_{n-1}²))/n`.
///
/// Uniform pick: `E(X_n) = p + (1-p)(n/(n-1))E(X_{n-1})` and
/// `E(X_n²) = p + (1-p)((n+1)/(n-1)E(X_{n-1}²) + E(X_{n-1})/(n-1))`.
pub fn kingman_moments<T: Scalar>(form: XRecursion, n_max: usize, theta: &T) -> Result<MomentTable<T>> {
    if n_max < 2 {
        return Err(Error::pre(format!("n_max must be >= 2, got {n_max}")));
    }
    if *theta <= T::zero() {
        return Err(Error::pre("theta must be positive"));
    }
    let half = theta.clone() / T::from_count(2);
    let one = T::one;
    let c = |v: u64| T::from_count(v);
    let mut x = vec![vec![T::zero(); 3], vec![one(); 3]];
    for n in 2..=n_max {
        let pairs = c((n * (n - 1) / 2) as u64);
        let p = half.clone() / (half.clone() + pairs);
        let nm1 = c(n as u64 - 1);
        let (x1, x2) = (x[n - 1][1].clone(), x[n - 1][2].clone());
        let nt = c(n as u64);
        let (ex, ex2) = match form {
            XRecursion::Conditioned => (
                p.clone() + (one() - p.clone()) * (one() + c(n as u64 + 1) * x1.clone()) / nt.clone(),
                p.clone() + (one() - p) * (one() + c(3) * x1 + c(n as u64 + 2) * x2) / nt,
            ),
            XRecursion::UniformPick => (
                p.clone() + (one() - p.clone()) * nt / nm1.clone() * x1.clone(),
                p.clone() + (one() - p) * (c(n as u64 + 1) / nm1.clone() * x2 + x1 / nm1),
            ),
        };
        x.push(vec![one(), ex, ex2]);
    }
    let mut o = vec![vec![T::zero(); 3], vec![T::zero(); 3], vec![one(), c(2), c(4)]];
    for n in 3..=n_max {
        let nt = c(n as u64);
        let (x1, x2) = (x[n - 1][1].clone(), x[n - 1][2].clone());
        let (o1, o2) = (o[n - 1][1].clone(), o[n - 1][2].clone());
        let eo = c(2) / nt.clone() * (one() + x1.clone()) - one() / nt.clone() + (nt.clone() - one()) / nt.clone() * o1.clone();
        let eo2 = c(2) / nt.clone() * (one() + c(2) * x1 + x2) - one() / nt.clone() - o1 / nt + o2;
        o.push(vec![one(), eo, eo2]);
    }
    Ok(MomentTable { n_max, j_max: 2, theta: theta.clone(), spec: LambdaSpec::Kingman, x, o })
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
    fn coefficient_examples() {
        assert_eq!(merge_coefficients::<f64>(0, 1, 2).unwrap(), (1.0, -1.0));
        assert_eq!(merge_coefficients::<f64>(1, 2, 3).unwrap(), (4.0, 0.0));
        for j in 0..6 {
            for k in 2..9 {
                assert_eq!(merge_coefficients::<f64>(j, j, k).unwrap().0, 1.0);
                let row: f64 = (0..=j).map(|i| merge_coefficients::<f64>(i, j, k).unwrap().0).sum();
                assert_eq!(row, (k as f64).powi(j as i32));
            }
        }
        assert!(merge_coefficients::<f64>(3, 2, 2).is_err());
        assert!(merge_coefficients::<f64>(0, 2, 1).is_err());
    }

    #[test]
    fn small_exact_anchors() {
        let theta = q(2, 1);
        for spec in [LambdaSpec::Kingman, LambdaSpec::Uniform, LambdaSpec::dirac(0.5).unwrap()] {
            let rates = RateTable::<BigRational>::exact(&spec, 6).unwrap();
            let t = moment_table(6, 3, &theta, &rates).unwrap();
            assert_eq!(*t.x(2, 1), q(3, 2));
            assert_eq!(*t.x(2, 2), q(5, 2));
            for j in 1..=3 {
                assert_eq!(*t.x(1, j), q(1, 1));
                assert_eq!(*t.o(2, j), q(1 << j, 1));
            }
            assert!(t.check_invariants().is_empty(), "{spec}: {:?}", t.check_invariants());
        }
        let rates = RateTable::<BigRational>::exact(&LambdaSpec::Kingman, 3).unwrap();
        let t = moment_table(3, 1, &theta, &rates).unwrap();
        assert_eq!(*t.o(3, 1), q(8, 3));
    }

    #[test]
    fn kingman_recursions_agree_exactly() {
        let rates = RateTable::<BigRational>::exact(&LambdaSpec::Kingman, 25).unwrap();
        for form in [XRecursion::Conditioned, XRecursion::UniformPick] {
            for theta in [q(1, 2), q(2, 1), q(10, 1)] {
                let general = moment_table_with(form, 25, 2, &theta, &rates).unwrap();
                let special = kingman_moments(form, 25, &theta).unwrap();
                for m in 2..=25 {
                    for j in 1..=2 {
                        assert_eq!(general.x(m, j), special.x(m, j), "{form:?} m={m} j={j}");
                        assert_eq!(general.o(m, j), special.o(m, j), "{form:?} m={m} j={j}");
                    }
                }
            }
        }
    }

    #[test]
    fn kingman_mean_block_size_at_theta_two() {
        // With θ = 2 the conditioned recursion solves to E(X_n) = (n+1)/2.
        let rates = RateTable::<BigRational>::exact(&LambdaSpec::Kingman, 30).unwrap();
        let t = moments_x(30, 1, &q(2, 1), &rates).unwrap();
        for n in 1..=30 {
            assert_eq!(*t.x(n, 1), q(n as i64 + 1, 2));
        }
    }

    #[test]
    fn uniform_pick_form_departs_from_first_principles() {
        // Kingman, θ = 2, n = 3 by hand: X = 1 w.p. 1/4, 3 w.p. 3/8, and with
        // w.p. 3/8 the size after one merger (2 w.p. 2/3, else 1). Mean 2.
        let rates = RateTable::<BigRational>::exact(&LambdaSpec::Kingman, 3).unwrap();
        let good = moments_x(3, 1, &q(2, 1), &rates).unwrap();
        let printed = moments_x_with(XRecursion::UniformPick, 3, 1, &q(2, 1), &rates).unwrap();
        assert_eq!(*good.x(3, 1), q(2, 1));
        assert_eq!(*printed.x(3, 1), q(31, 16));
    }

    #[test]
    fn conditioned_form_matches_oracle() {
        for spec in [LambdaSpec::Kingman, LambdaSpec::Uniform, LambdaSpec::dirac(0.5).unwrap(), LambdaSpec::beta(0.5, 1.5).unwrap()] {
            let rates = RateTable::<BigRational>::exact(&spec, 6).unwrap();
            let theta = q(1, 2);
            let t = moment_table(6, 3, &theta, &rates).unwrap();
            for n in 2..=6 {
                let o = crate::oracle::exact_moments_dp(n, 3, &theta, &rates).unwrap();
                for j in 1..=3 {
                    assert_eq!(*t.x(n, j), o.x[j], "{spec} n={n} j={j}");
                    assert_eq!(*t.o(n, j), o.o[j], "{spec} n={n} j={j}");
                }
            }
        }
    }

    #[test]
    fn float_and_exact_agree() {
        let spec = LambdaSpec::beta(0.5, 1.5).unwrap();
        let exact = moment_table(20, 3, &q(1, 2), &RateTable::<BigRational>::exact(&spec, 20).unwrap()).unwrap();
        let float = moment_table(20, 3, &0.5, &RateTable::new(&spec, 20).unwrap()).unwrap();
        let single = moment_table(20, 3, &0.5f32, &RateTable::<f32>::exact(&spec, 20).unwrap()).unwrap();
        for m in 2..=20 {
            for j in 1..=3 {
                let e = exact.o(m, j).to_real();
                assert!((float.o(m, j) - e).abs() <= 1e-12 * e, "m={m} j={j}");
                assert!(((*single.o(m, j) as f64) - e).abs() <= 1e-4 * e);
            }
        }
    }

    #[test]
    fn theta_limits() {
        let rates = RateTable::new(&LambdaSpec::Uniform, 8).unwrap();
        let frozen = moment_table(8, 2, &1e-9, &rates).unwrap();
        let fast = moment_table(8, 2, &1e9, &rates).unwrap();
        for m in 2..=8 {
            assert!((frozen.o(m, 1) - m as f64).abs() < 1e-6);
            assert!((frozen.x(m, 2) - (m * m) as f64).abs() < 1e-6);
            assert!((fast.x(m, 1) - 1.0).abs() < 1e-6);
        }
        assert!((fast.o(2, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let rates = RateTable::new(&LambdaSpec::Kingman, 5).unwrap();
        assert!(moment_table(6, 1, &1.0, &rates).is_err());
        assert!(moment_table(5, 0, &1.0, &rates).is_err());
        assert!(moment_table(1, 1, &1.0, &rates).is_err());
        assert!(moment_table(5, 1, &0.0, &rates).is_err());
    }
}
