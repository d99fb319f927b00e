//! Brute-force exact moments for small samples.
//!
//! The state is the multiset of block sizes, the size of leaf 1's block and
//! whether the mutation clock is running. Mergers are enumerated subset type by
//! subset type, and the first-step equations are solved as one dense linear
//! system. Nothing here shares code with the recursions in [`crate::moments`].

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::rates::RateTable;
use crate::scalar::{binomial, Scalar};

pub const MAX_ORACLE_N: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// Leaf 1 has not merged yet and the clock is not started (used for `O_n`).
    PreMerge,
    ClockRunning,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MarkedConfiguration {
    /// All block sizes, ascending; includes the marked block.
    pub sizes: Vec<u32>,
    pub one_block_size: u32,
    pub phase: Phase,
}

impl MarkedConfiguration {
    fn start(n: usize, phase: Phase) -> Self {
        Self { sizes: vec![1; n], one_block_size: 1, phase }
    }

    fn blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Unmarked block sizes as `(size, count)`.
    fn unmarked(&self) -> Vec<(u32, u32)> {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for &s in &self.sizes {
            *counts.entry(s).or_default() += 1;
        }
        *counts.get_mut(&self.one_block_size).expect("marked block present") -= 1;
        counts.into_iter().filter(|&(_, c)| c > 0).collect()
    }
}

/// Every way of picking `take` unmarked blocks, as a per-size count vector with
/// the number of concrete subsets of that type.
fn sub_multisets(groups: &[(u32, u32)], take: u32) -> Vec<(Vec<u32>, u64)> {
    fn go(groups: &[(u32, u32)], take: u32, at: usize, picked: &mut Vec<u32>, mult: u64, out: &mut Vec<(Vec<u32>, u64)>) {
        if at == groups.len() {
            if take == 0 {
                out.push((picked.clone(), mult));
            }
            return;
        }
        let (_, count) = groups[at];
        for c in 0..=count.min(take) {
            picked.push(c);
            let ways: u64 = binomial::<f64>(count as u64, c as u64) as u64;
            go(groups, take - c, at + 1, picked, mult * ways, out);
            picked.pop();
        }
    }
    let mut out = Vec::new();
    go(groups, take, 0, &mut Vec::new(), 1, &mut out);
    out
}

/// Successor configurations with the number of concrete merger subsets leading
/// there and the merger size `k`.
fn transitions(cfg: &MarkedConfiguration) -> Vec<(usize, u64, MarkedConfiguration)> {
    let b = cfg.blocks();
    let groups = cfg.unmarked();
    let mut out = Vec::new();
    for k in 2..=b {
        // With the marked block.
        for (picked, mult) in sub_multisets(&groups, (k - 1) as u32) {
            let mut rest = Vec::with_capacity(b);
            let mut joined = cfg.one_block_size;
            for (&(size, count), &c) in groups.iter().zip(&picked) {
                joined += size * c;
                rest.extend(std::iter::repeat_n(size, (count - c) as usize));
            }
            rest.push(joined);
            rest.sort_unstable();
            out.push((k, mult, MarkedConfiguration { sizes: rest, one_block_size: joined, phase: Phase::ClockRunning }));
        }
        // Without it.
        if k < b {
            for (picked, mult) in sub_multisets(&groups, k as u32) {
                let mut rest = Vec::with_capacity(b);
                let mut merged = 0;
                for (&(size, count), &c) in groups.iter().zip(&picked) {
                    merged += size * c;
                    rest.extend(std::iter::repeat_n(size, (count - c) as usize));
                }
                rest.push(merged);
                rest.push(cfg.one_block_size);
                rest.sort_unstable();
                out.push((k, mult, MarkedConfiguration { sizes: rest, one_block_size: cfg.one_block_size, phase: cfg.phase }));
            }
        }
    }
    out
}

fn check_n(n: usize) -> Result<()> {
    if n > MAX_ORACLE_N {
        return Err(Error::StateSpaceTooLarge(n));
    }
    if n < 2 {
        return Err(Error::pre(format!("oracle needs n >= 2, got {n}")));
    }
    Ok(())
}

/// All configurations reachable from the two all-singleton starts, sorted.
pub fn enumerate_states(n: usize) -> Result<Vec<MarkedConfiguration>> {
    check_n(n)?;
    let mut seen: HashMap<MarkedConfiguration, ()> = HashMap::new();
    let mut queue = VecDeque::new();
    for phase in [Phase::PreMerge, Phase::ClockRunning] {
        let s = MarkedConfiguration::start(n, phase);
        seen.insert(s.clone(), ());
        queue.push_back(s);
    }
    while let Some(cfg) = queue.pop_front() {
        for (_, _, next) in transitions(&cfg) {
            if seen.insert(next.clone(), ()).is_none() {
                queue.push_back(next);
            }
        }
    }
    let mut states: Vec<_> = seen.into_keys().collect();
    states.sort();
    Ok(states)
}

/// Exact `E(X_n^j)` and `E(O_n^j)` for `j = 0..=j_max` (index 0 is 1).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMoments<T> {
    pub x: Vec<T>,
    pub o: Vec<T>,
}

/// Solves `A X = B` in place by Gaussian elimination with partial pivoting.
fn solve_dense<T: Scalar>(mut a: Vec<Vec<T>>, mut rhs: Vec<Vec<T>>) -> Result<Vec<Vec<T>>> {
    let size = a.len();
    for col in 0..size {
        let pivot = (col..size)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).expect("comparable"))
            .expect("non-empty");
        if a[pivot][col].is_zero() {
            return Err(Error::SingularSystem);
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..size {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / a[col][col].clone();
            for c in col..size {
                let delta = factor.clone() * a[col][c].clone();
                a[row][c] = a[row][c].clone() - delta;
            }
            for c in 0..rhs[row].len() {
                let delta = factor.clone() * rhs[col][c].clone();
                rhs[row][c] = rhs[row][c].clone() - delta;
            }
        }
    }
    for row in (0..size).rev() {
        for c in 0..rhs[row].len() {
            let mut acc = rhs[row][c].clone();
            for k in row + 1..size {
                acc = acc - a[row][k].clone() * rhs[k][c].clone();
            }
            rhs[row][c] = acc / a[row][row].clone();
        }
    }
    Ok(rhs)
}

/// First-step analysis over [`enumerate_states`].
///
/// While the clock runs it competes (rate θ/2) with every concrete merger
/// (rate `λ_{b,k}` each); when it rings the current size of leaf 1's block is
/// read. Before leaf 1's first merger the clock is inert.
pub fn exact_moments_dp<T: Scalar>(n: usize, j_max: usize, theta: &T, rates: &RateTable<T>) -> Result<OracleMoments<T>> {
    check_n(n)?;
    if rates.n_max() < n {
        return Err(Error::pre(format!("rate table covers n <= {}, need {n}", rates.n_max())));
    }
    if *theta <= T::zero() {
        return Err(Error::pre("theta must be positive"));
    }
    let states = enumerate_states(n)?;
    let index: HashMap<&MarkedConfiguration, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let half = theta.clone() / T::from_count(2);
    let size = states.len();
    let mut a = vec![vec![T::zero(); size]; size];
    let mut rhs = vec![vec![T::zero(); j_max + 1]; size];
    for (row, cfg) in states.iter().enumerate() {
        let b = cfg.blocks();
        let moves = transitions(cfg);
        let mut out_rate = T::zero();
        for (k, mult, next) in &moves {
            let r = rates.rate(b, *k).clone() * T::from_count(*mult);
            out_rate = out_rate + r.clone();
            let col = index[next];
            a[row][col] = a[row][col].clone() - r;
        }
        let clock = if cfg.phase == Phase::ClockRunning { half.clone() } else { T::zero() };
        a[row][row] = a[row][row].clone() + out_rate + clock.clone();
        let s = T::from_count(cfg.one_block_size as u64);
        for j in 0..=j_max {
            rhs[row][j] = clock.clone() * s.powu(j as u32);
        }
    }
    let solution = solve_dense(a, rhs)?;
    let pre = index[&MarkedConfiguration::start(n, Phase::PreMerge)];
    let run = index[&MarkedConfiguration::start(n, Phase::ClockRunning)];
    Ok(OracleMoments { x: solution[run].clone(), o: solution[pre].clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::LambdaSpec;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn state_counts() {
        let two = enumerate_states(2).unwrap();
        assert_eq!(two.len(), 3);
        assert!(two.contains(&MarkedConfiguration { sizes: vec![2], one_block_size: 2, phase: Phase::ClockRunning }));
        let three = enumerate_states(3).unwrap();
        let has = |one| three.iter().any(|s| s.sizes == vec![1, 2] && s.one_block_size == one);
        assert!(has(1) && has(2));
        for n in 2..=7 {
            assert!(enumerate_states(n).unwrap().iter().all(|s| s.sizes.iter().sum::<u32>() == n as u32));
        }
        assert!(matches!(enumerate_states(8), Err(Error::StateSpaceTooLarge(8))));
    }

    #[test]
    fn hand_anchors() {
        let theta = q(2, 1);
        for spec in [LambdaSpec::Kingman, LambdaSpec::Uniform, LambdaSpec::beta(0.5, 1.5).unwrap()] {
            let rates = RateTable::<BigRational>::exact(&spec, 3).unwrap();
            let two = exact_moments_dp(2, 3, &theta, &rates).unwrap();
            assert_eq!(two.o, vec![q(1, 1), q(2, 1), q(4, 1), q(8, 1)]);
            assert_eq!(two.x[1], q(3, 2));
        }
        // Kingman n=3: O_3 = 2 + 1{O_3 = 3}, P(O_3 = 3) = 1/3 + (2/3)(1/2).
        let rates = RateTable::<BigRational>::exact(&LambdaSpec::Kingman, 3).unwrap();
        let three = exact_moments_dp(3, 2, &theta, &rates).unwrap();
        assert_eq!(three.o[1], q(8, 3));
        assert_eq!(three.o[2], q(4, 1) * q(1, 3) + q(9, 1) * q(2, 3));
    }

    /// Unlumped oracle over labeled set partitions, solved by memoized recursion.
    mod labeled {
        use super::*;

        type Partition = Vec<Vec<u8>>;

        fn canonical(mut p: Partition) -> Partition {
            for b in &mut p {
                b.sort_unstable();
            }
            p.sort();
            p
        }

        fn subsets(b: usize, k: usize) -> Vec<Vec<usize>> {
            let mut out = Vec::new();
            for mask in 0u32..(1 << b) {
                if mask.count_ones() as usize == k {
                    out.push((0..b).filter(|i| mask & (1 << i) != 0).collect());
                }
            }
            out
        }

        fn value(
            p: &Partition,
            running: bool,
            j: u32,
            half: &BigRational,
            rates: &RateTable<BigRational>,
            memo: &mut HashMap<(Partition, bool), BigRational>,
        ) -> BigRational {
            if let Some(v) = memo.get(&(p.clone(), running)) {
                return v.clone();
            }
            let b = p.len();
            let one = p.iter().position(|blk| blk.contains(&0)).unwrap();
            let size = BigRational::from_integer(BigInt::from(p[one].len()));
            let clock = if running { half.clone() } else { q(0, 1) };
            let mut num = clock.clone() * size.powu(j);
            let mut den = clock;
            for k in 2..=b {
                for sub in subsets(b, k) {
                    let r = rates.rate(b, k).clone();
                    let mut merged: Vec<u8> = Vec::new();
                    let mut rest = Vec::new();
                    for (i, blk) in p.iter().enumerate() {
                        if sub.contains(&i) {
                            merged.extend(blk);
                        } else {
                            rest.push(blk.clone());
                        }
                    }
                    let joins = sub.contains(&one);
                    rest.push(merged);
                    let next = canonical(rest);
                    let v = value(&next, running || joins, j, half, rates, memo);
                    num = num + r.clone() * v;
                    den = den + r;
                }
            }
            let v = num / den;
            memo.insert((p.clone(), running), v.clone());
            v
        }

        pub fn moments(n: usize, j: u32, theta: &BigRational, rates: &RateTable<BigRational>) -> (BigRational, BigRational) {
            let half = theta / q(2, 1);
            let start: Partition = (0..n as u8).map(|i| vec![i]).collect();
            let mut memo = HashMap::new();
            let x = value(&start, true, j, &half, rates, &mut memo);
            let o = value(&start, false, j, &half, rates, &mut memo);
            (x, o)
        }
    }

    #[test]
    fn lumping_matches_labeled_partitions() {
        let theta = q(1, 2);
        for spec in [LambdaSpec::Kingman, LambdaSpec::Uniform, LambdaSpec::dirac(0.5).unwrap(), LambdaSpec::beta(0.5, 1.5).unwrap()] {
            let rates = RateTable::<BigRational>::exact(&spec, 4).unwrap();
            for n in 2..=4 {
                let lumped = exact_moments_dp(n, 3, &theta, &rates).unwrap();
                for j in 1..=3u32 {
                    let (x, o) = labeled::moments(n, j, &theta, &rates);
                    assert_eq!(lumped.x[j as usize], x, "{spec} n={n} j={j}");
                    assert_eq!(lumped.o[j as usize], o, "{spec} n={n} j={j}");
                }
            }
        }
    }

    #[test]
    fn theta_extremes() {
        let rates = RateTable::new(&LambdaSpec::Uniform, 5).unwrap();
        let frozen = exact_moments_dp(5, 2, &1e-9, &rates).unwrap();
        assert!((frozen.o[1] - 5.0).abs() < 1e-6 && (frozen.o[2] - 25.0).abs() < 1e-5);
        let fast = exact_moments_dp(2, 2, &1e9, &rates).unwrap();
        assert!((fast.o[1] - 2.0).abs() < 1e-12);
    }
}
