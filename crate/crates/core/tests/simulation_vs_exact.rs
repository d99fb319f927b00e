//! Cross-checks between the simulators and the exact engines.

use std::collections::BTreeMap;

use obsclade::moments::{limit_moments_growth, moment_table};
use obsclade::report::{judge, Estimate, Tally, Verdict};
use obsclade::sim::{run_replicates, sample_o1, sample_x, simulate_genealogy, simulate_replicate, ReplicateSeed};
use obsclade::{LambdaSpec, Rates};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SEED: u64 = 5_150_921;

/// p-value of Pearson's homogeneity test on a table of counts (rows = samples).
fn homogeneity_p_value(table: &[Vec<u64>]) -> f64 {
    let cols = table[0].len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols).map(|c| table.iter().map(|r| r[c]).sum::<u64>() as f64).collect();
    let total: f64 = row_sums.iter().sum();
    let mut stat = 0.0;
    let mut used_cols = 0;
    for c in 0..cols {
        if col_sums[c] == 0.0 {
            continue;
        }
        used_cols += 1;
        for (r, row) in table.iter().enumerate() {
            let expected = row_sums[r] * col_sums[c] / total;
            stat += (row[c] as f64 - expected).powi(2) / expected;
        }
    }
    let df = ((table.len() - 1) * (used_cols - 1)) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn fast_sampler_matches_full_pipeline() {
    let n = 4;
    let rates = Rates::new(&LambdaSpec::Kingman, n).unwrap();
    let reps = 100_000u64;
    let mut fast = vec![0u64; n + 1];
    let mut full = vec![0u64; n + 1];
    for r in 0..reps {
        fast[sample_o1(n, &rates, 1.0, ReplicateSeed::new(SEED, r), 0.0).unwrap() as usize] += 1;
        // A different master seed keeps the two samples independent.
        let stats = simulate_replicate(n, &rates, 1.0, ReplicateSeed::new(SEED + 1, r), 0.0).unwrap();
        full[stats.observable[0] as usize] += 1;
    }
    let p = homogeneity_p_value(&[fast[2..].to_vec(), full[2..].to_vec()]);
    assert!(p > 0.001, "p = {p}, fast {fast:?}, full {full:?}");
}

#[test]
fn leaves_are_exchangeable() {
    // Leaf (r mod 5) + 1 of replicate r, so the five samples are independent.
    let n = 5;
    let rates = Rates::new(&LambdaSpec::beta(0.7, 1.3).unwrap(), n).unwrap();
    let mut table = vec![vec![0u64; n - 1]; n];
    for r in 0..100_000u64 {
        let leaf = (r % n as u64) as usize;
        let stats = simulate_replicate(n, &rates, 1.5, ReplicateSeed::new(SEED, r), 0.0).unwrap();
        table[leaf][stats.observable[leaf] as usize - 2] += 1;
    }
    let p = homogeneity_p_value(&table);
    assert!(p > 0.001, "p = {p}, table {table:?}");
}

#[test]
fn monte_carlo_means_match_recursions() {
    let n = 9;
    let theta = 1.3;
    let reps = 60_000u64;
    let specs = [
        LambdaSpec::Kingman,
        LambdaSpec::Uniform,
        LambdaSpec::dirac(0.5).unwrap(),
        LambdaSpec::beta(0.5, 1.5).unwrap(),
    ];
    let mut failures = BTreeMap::new();
    for spec in specs {
        let rates = Rates::new(&spec, n).unwrap();
        let table = moment_table(n, 2, &theta, &rates).unwrap();
        let draws = run_replicates(reps, 0, |r| {
            let seed = ReplicateSeed::new(SEED, r);
            Ok((sample_o1(n, &rates, theta, seed, 0.0)? as f64, sample_x(n, &rates, theta, seed)? as f64))
        })
        .unwrap();
        for j in 1..=2 {
            let o: Tally = draws.iter().map(|d| d.0.powi(j as i32)).collect();
            let x: Tally = draws.iter().map(|d| d.1.powi(j as i32)).collect();
            for (name, exact, tally) in [("O", *table.o(n, j), o), ("X", *table.x(n, j), x)] {
                let row = judge(format!("{spec} E[{name}^{j}]"), exact, &Estimate::from(&tally), 0.0);
                if row.verdict == Verdict::Fail {
                    failures.insert(row.id.clone(), (row.exact, row.estimate, row.z));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn full_pipeline_mean_matches_recursion() {
    let n = 12;
    let rates = Rates::new(&LambdaSpec::beta_alpha(1.5).unwrap(), n).unwrap();
    let exact = *moment_table(n, 1, &2.0, &rates).unwrap().o(n, 1);
    let per_rep = run_replicates(20_000, 0, |r| {
        let stats = simulate_replicate(n, &rates, 2.0, ReplicateSeed::new(SEED, r), 0.0)?;
        Ok(stats.observable[0] as f64)
    })
    .unwrap();
    let tally: Tally = per_rep.into_iter().collect();
    let row = judge("O", exact, &Estimate::from(&tally), 0.0);
    assert_eq!(row.verdict, Verdict::Pass, "{row:?}");
}

#[test]
fn two_leaf_clock_mean() {
    let rates = Rates::new(&LambdaSpec::Kingman, 2).unwrap();
    for theta in [0.4, 2.0, 7.0] {
        let tally: Tally = run_replicates(1_000_000, 0, |r| {
            Ok(sample_x(2, &rates, theta, ReplicateSeed::new(SEED, r))? as f64)
        })
        .unwrap()
        .into_iter()
        .collect();
        let half = theta / 2.0;
        let row = judge("X2", (half + 2.0) / (half + 1.0), &Estimate::from(&tally), 0.0);
        assert_eq!(row.verdict, Verdict::Pass, "{row:?}");
    }
}

#[test]
fn kingman_event_counts_and_bounded_dirac_counts() {
    let kingman = Rates::new(&LambdaSpec::Kingman, 30).unwrap();
    let dirac = Rates::new(&LambdaSpec::dirac(0.3).unwrap(), 30).unwrap();
    for r in 0..2000 {
        let n = 2 + (r % 29) as usize;
        let seed = ReplicateSeed::new(SEED, r);
        assert_eq!(simulate_genealogy(n, &kingman, seed, 0.0).unwrap().jump_count(), n - 1);
        let log = simulate_genealogy(n, &dirac, seed, 0.0).unwrap();
        let binary = log.events().iter().all(|e| e.merged.len() == 2);
        assert!(log.jump_count() <= n - 1);
        assert_eq!(log.jump_count() == n - 1, binary);
    }
}

#[test]
fn growth_limit_matches_growth_simulator() {
    let n = 5000;
    let (theta, rho) = (2.0, 1.0);
    let rates = Rates::new(&LambdaSpec::Kingman, n).unwrap();
    let limit = limit_moments_growth(1, theta, rho, &rates).unwrap().value;
    let per_rep = run_replicates(400, 0, |r| {
        let stats = simulate_replicate(n, &rates, theta, ReplicateSeed::new(SEED, r), rho)?;
        Ok(stats.observable.iter().map(|&o| o as f64).sum::<f64>() / (n * n) as f64)
    })
    .unwrap();
    let tally: Tally = per_rep.into_iter().collect();
    let row = judge("growth", limit, &Estimate::from(&tally), 0.01);
    assert_eq!(row.verdict, Verdict::Pass, "{row:?}");
    // Growth compresses the genealogy in real time, so fewer mutations land
    // before each merger and clades are larger than the constant-size 1/2.
    assert!(limit > 0.5 && limit < 1.0, "{limit}");
}
