use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::compare::{compare, Adjudication, ComparisonReport, Estimate, Tally};
use super::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::moments::{
    bsc_limit_beta, dust_mean_misprinted, limit_mean_dust, limit_moment_nodust, limit_moments_growth, moment_table,
    moment_table_with, LimitMomentResult, MomentTable, XRecursion,
};
use crate::oracle::exact_moments_dp;
use crate::rates::{LambdaSpec, RateTable};
use crate::scalar::Scalar;
use crate::sim::{run_replicates, sample_o1, sample_x, simulate_replicate, ReplicateSeed};

/// Replicates simulated per parallel batch before their rows are written.
const BATCH: u64 = 1024;

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// 0 on success, 2 when a comparison row failed.
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub report: Option<ComparisonReport>,
    /// Human-readable summary for the terminal.
    pub summary: String,
}

/// Formats a float so that it parses back to the same value; exponent notation
/// only for very small or very large magnitudes.
pub fn fmt_real(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Renders rows as CSV text.
pub fn csv_text<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    write_atomic_with(dir, name, |w| Ok(w.write_all(contents)?))
}

fn write_atomic_with<F>(dir: &Path, name: &str, fill: F) -> Result<PathBuf>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush()?;
    }
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
    Ok(target)
}

fn is_bsc(spec: &LambdaSpec) -> bool {
    match spec {
        LambdaSpec::Uniform => true,
        LambdaSpec::Beta { shape1, shape2, scale } => *shape1 == 1.0 && *shape2 == 1.0 && *scale == 1.0,
        _ => false,
    }
}

fn context(what: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } | Error::Io(_) => e,
        other => Error::Structural(format!("{what}: {other}")),
    }
}

/// Runs one experiment and writes its artifacts into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut outcome = match config.mode {
        Mode::Rates => run_rates(config),
        Mode::Simulate => run_simulate(config),
        Mode::Moments => run_moments(config),
        Mode::Asymptotics => run_asymptotics(config),
        Mode::Compare => run_compare(config),
        Mode::Convergence => run_convergence(config),
    }?;
    let meta = Metadata {
        tool: "obsclade",
        version: env!("CARGO_PKG_VERSION"),
        created_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config,
        files: outcome.files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
        exit_code: outcome.exit_code,
    };
    let path = write_atomic(&config.out, "metadata.json", serde_json::to_string_pretty(&meta)?.as_bytes())?;
    outcome.files.push(path);
    Ok(outcome)
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    created_unix_seconds: u64,
    config: &'a ExperimentConfig,
    files: Vec<String>,
    exit_code: i32,
}

// ---- rates ----

/// `b,k,lambda_bk,lambda_b` for `2 ≤ k ≤ b ≤ n_max`.
pub fn rates_csv(rates: &RateTable<f64>) -> Result<String> {
    let rows = (2..=rates.n_max()).flat_map(|b| {
        (2..=b).map(move |k| {
            [b.to_string(), k.to_string(), fmt_real(*rates.rate(b, k)), fmt_real(*rates.total(b))]
        })
    });
    csv_text(&["b", "k", "lambda_bk", "lambda_b"], rows)
}

fn run_rates(config: &ExperimentConfig) -> Result<RunOutcome> {
    let rates = RateTable::new(&config.measure, config.n.max()).map_err(|e| context("rate table", e))?;
    let text = rates_csv(&rates)?;
    let path = write_atomic(&config.out, "rates.csv", text.as_bytes())?;
    Ok(RunOutcome { exit_code: 0, files: vec![path], report: None, summary: text })
}

// ---- simulate ----

fn run_simulate(config: &ExperimentConfig) -> Result<RunOutcome> {
    let rates = RateTable::new(&config.measure, config.n.max()).map_err(|e| context("rate table", e))?;
    let mut files = Vec::new();
    let mut summary = String::new();
    for n in config.sizes() {
        let name = format!("simulate_n{n}.csv");
        let mut tally = Tally::new();
        let path = write_atomic_with(&config.out, &name, |out| {
            let mut w = csv::Writer::from_writer(out);
            if config.fast {
                w.write_record(["replicate", "O1", "X"])?;
            } else {
                w.write_record(["replicate", "leaf", "E", "M", "O"])?;
            }
            let mut start = 0;
            while start < config.replicates {
                let count = BATCH.min(config.replicates - start);
                if config.fast {
                    let batch = run_replicates(count, config.threads, |r| {
                        let seed = ReplicateSeed::new(config.seed, start + r);
                        Ok((sample_o1(n, &rates, config.theta, seed, 0.0)?, sample_x(n, &rates, config.theta, seed)?))
                    })?;
                    for (r, (o, x)) in batch.into_iter().enumerate() {
                        tally.add(o as f64 / n as f64);
                        w.write_record([(start + r as u64).to_string(), o.to_string(), x.to_string()])?;
                    }
                } else {
                    let batch = run_replicates(count, config.threads, |r| {
                        simulate_replicate(n, &rates, config.theta, ReplicateSeed::new(config.seed, start + r), config.rho)
                    })?;
                    for (r, stats) in batch.into_iter().enumerate() {
                        let rep = (start + r as u64).to_string();
                        for leaf in 0..n {
                            tally.add(stats.observable[leaf] as f64 / n as f64);
                            w.write_record([
                                rep.clone(),
                                (leaf + 1).to_string(),
                                fmt_real(stats.external[leaf]),
                                stats.minimal[leaf].to_string(),
                                stats.observable[leaf].to_string(),
                            ])?;
                        }
                    }
                }
                start += count;
            }
            w.flush()?;
            Ok(())
        })?;
        summary.push_str(&format!("n={n}: mean O/n = {} over {} values\n", fmt_real(tally.mean()), tally.count()));
        files.push(path);
    }
    Ok(RunOutcome { exit_code: 0, files, report: None, summary })
}

// ---- moments ----

/// `m,exponent,EX,EO` for `1 ≤ m ≤ n_max`; `EO` is blank at `m = 1`.
pub fn moments_csv<T: Scalar>(table: &MomentTable<T>, show: impl Fn(&T) -> String) -> Result<String> {
    let mut rows = Vec::new();
    for m in 1..=table.n_max() {
        for j in 1..=table.j_max() {
            let eo = if m >= 2 { show(table.o(m, j)) } else { String::new() };
            rows.push([m.to_string(), j.to_string(), show(table.x(m, j)), eo]);
        }
    }
    csv_text(&["m", "exponent", "EX", "EO"], rows)
}

/// Recursion next to the oracle for `2 ≤ m ≤ n_max`.
pub fn oracle_csv<T: Scalar>(table: &MomentTable<T>, rates: &RateTable<T>, show: impl Fn(&T) -> String) -> Result<String> {
    let mut rows = Vec::new();
    for m in 2..=table.n_max() {
        let oracle = exact_moments_dp(m, table.j_max(), table.theta(), rates)?;
        for j in 1..=table.j_max() {
            rows.push([
                m.to_string(),
                j.to_string(),
                show(table.x(m, j)),
                show(&oracle.x[j]),
                show(table.o(m, j)),
                show(&oracle.o[j]),
            ]);
        }
    }
    csv_text(&["m", "exponent", "EX", "EX_oracle", "EO", "EO_oracle"], rows)
}

fn moment_errata<T: Scalar>(table: &MomentTable<T>, rates: &RateTable<T>) -> Result<Vec<String>> {
    let n = table.n_max();
    let uniform = moment_table_with(XRecursion::UniformPick, n, 1, table.theta(), rates)?;
    Ok(vec![
        format!(
            "E(X_n^j) is expanded by conditioning on whether leaf 1 joins the first merger (probability k/n for a \
             k-merger). Treating the merged block as a uniform pick among the n-k+1 remaining blocks instead gives \
             E(X_{n}) = {} against {} here; the conditioned form agrees with the brute-force oracle.",
            uniform.x(n, 1).to_real(),
            table.x(n, 1).to_real()
        ),
        "E(O_n^j): mergers that miss leaf 1 are weighted by C(n-1,k), the number of k-subsets avoiding leaf 1. \
         Using C(n-1,k-1) for that term divides by zero at k = n and breaks E(O_2^j) = 2^j."
            .to_string(),
    ])
}

fn run_moments(config: &ExperimentConfig) -> Result<RunOutcome> {
    let n = config.n.max();
    let mut files = Vec::new();
    let (text, oracle, errata) = if config.exact {
        let rates = RateTable::<crate::Rational>::exact(&config.measure, n).map_err(|e| context("exact rates", e))?;
        let theta = crate::Rational::from_real(config.theta);
        let table = moment_table(n, config.j_max, &theta, &rates).map_err(|e| context("moment recursion", e))?;
        let show = |v: &crate::Rational| v.to_string();
        let oracle = if config.oracle { Some(oracle_csv(&table, &rates, show)?) } else { None };
        (moments_csv(&table, show)?, oracle, moment_errata(&table, &rates)?)
    } else {
        let rates = RateTable::new(&config.measure, n).map_err(|e| context("rate table", e))?;
        let table = moment_table(n, config.j_max, &config.theta, &rates).map_err(|e| context("moment recursion", e))?;
        let show = |v: &f64| fmt_real(*v);
        let oracle = if config.oracle { Some(oracle_csv(&table, &rates, show)?) } else { None };
        (moments_csv(&table, show)?, oracle, moment_errata(&table, &rates)?)
    };
    files.push(write_atomic(&config.out, "moments.csv", text.as_bytes())?);
    let mut summary = format!("wrote E(X_m^j), E(O_m^j) for m <= {n}, j <= {}\n", config.j_max);
    if let Some(o) = oracle {
        files.push(write_atomic(&config.out, "oracle.csv", o.as_bytes())?);
        summary.push_str(&o);
    }
    files.push(write_atomic(&config.out, "errata.txt", (errata.join("\n\n") + "\n").as_bytes())?);
    Ok(RunOutcome { exit_code: 0, files, report: None, summary })
}

// ---- limits ----

/// Limit moments `E(S^k)` for the configured measure, `k ≤ k_max`, and notes on
/// formulas that disagree with the ones used.
pub fn limit_targets(config: &ExperimentConfig) -> Result<(Vec<LimitMomentResult<f64>>, Vec<String>)> {
    let mut notes = Vec::new();
    let k_max = config.k_max;
    if config.rho > 0.0 {
        let rates = RateTable::new(&config.measure, k_max + 1)?;
        let values = (1..=k_max)
            .map(|k| limit_moments_growth(k, config.theta, config.rho, &rates))
            .collect::<Result<Vec<_>>>()?;
        return Ok((values, notes));
    }
    let class = config.measure.classify()?;
    if class.has_dust {
        let mean = limit_mean_dust(config.theta, &config.measure)?;
        let printed = dust_mean_misprinted(config.theta, &config.measure)?;
        notes.push(format!(
            "Dust-regime mean: the series sum_k E(f_1[k]) P(K = k) gives {}; its closed form with \
             a' = (1 - Lambda/mu_-1) mu_-1/(theta/2 + mu_-1) agrees. The constant \
             a = (1 - Lambda/mu_-1)(theta/2)/(theta/2 + mu_-1) would give {}.",
            fmt_real(mean.value),
            fmt_real(printed)
        ));
        if k_max > 1 {
            notes.push("Only the first limit moment is available in the dust regime.".to_string());
        }
        return Ok((vec![mean], notes));
    }
    let rates = RateTable::new(&config.measure, k_max + 1)?;
    let values = (1..=k_max).map(|k| limit_moment_nodust(k, &config.theta, &rates)).collect::<Result<Vec<_>>>()?;
    if config.beta_compare && is_bsc(&config.measure) {
        let beta = bsc_limit_beta(config.theta)?;
        let mut line = format!(
            "Bolthausen-Sznitman limit: Beta({}, {}) has moments",
            fmt_real(beta.alpha),
            fmt_real(beta.beta)
        );
        for v in &values {
            line.push_str(&format!(" E(S^{})={}", v.k, fmt_real(beta.moment(v.k))));
        }
        line.push_str(
            "; the absorption-mixture values above differ from the second moment on. The mixture is reported; \
             the Beta values are for comparison only.",
        );
        notes.push(line);
    } else if config.beta_compare {
        notes.push(format!("Beta comparison applies to the Bolthausen-Sznitman coalescent only, not {}.", config.measure));
    }
    Ok((values, notes))
}

/// `k,value,method`.
pub fn asymptotics_csv(values: &[LimitMomentResult<f64>]) -> Result<String> {
    csv_text(
        &["k", "value", "method"],
        values.iter().map(|v| [v.k.to_string(), fmt_real(v.value), v.method.as_str().to_string()]),
    )
}

fn run_asymptotics(config: &ExperimentConfig) -> Result<RunOutcome> {
    let (values, notes) = limit_targets(config).map_err(|e| context("limit moments", e))?;
    let text = asymptotics_csv(&values)?;
    let mut files = vec![write_atomic(&config.out, "asymptotics.csv", text.as_bytes())?];
    let mut summary = text;
    if !notes.is_empty() {
        let body = notes.join("\n\n") + "\n";
        files.push(write_atomic(&config.out, "errata.txt", body.as_bytes())?);
        summary.push('\n');
        summary.push_str(&body);
    }
    Ok(RunOutcome { exit_code: 0, files, report: None, summary })
}

// ---- compare ----

/// Monte Carlo moments of `O_n(1)` and `X_n` from the single-leaf samplers,
/// keyed like [`exact_moment_ids`].
pub fn sampled_moments(config: &ExperimentConfig, n: usize, rates: &RateTable<f64>) -> Result<BTreeMap<String, Estimate>> {
    let draws = run_replicates(config.replicates, config.threads, |r| {
        let seed = ReplicateSeed::new(config.seed, r);
        Ok((sample_o1(n, rates, config.theta, seed, 0.0)?, sample_x(n, rates, config.theta, seed)?))
    })?;
    let mut out = BTreeMap::new();
    for j in 1..=config.j_max {
        let o: Tally = draws.iter().map(|&(o, _)| (o as f64).powi(j as i32)).collect();
        let x: Tally = draws.iter().map(|&(_, x)| (x as f64).powi(j as i32)).collect();
        out.insert(moment_id("O", n, j), Estimate::from(&o));
        out.insert(moment_id("X", n, j), Estimate::from(&x));
    }
    Ok(out)
}

pub fn moment_id(stat: &str, n: usize, j: usize) -> String {
    format!("E[{stat}^{j}] n={n}")
}

pub fn exact_moment_ids(table: &MomentTable<f64>, n: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for j in 1..=table.j_max() {
        out.insert(moment_id("O", n, j), *table.o(n, j));
        out.insert(moment_id("X", n, j), *table.x(n, j));
    }
    out
}

/// `id,n,exact,estimate,stderr,replicates,z,slack,verdict`.
pub fn report_csv(report: &ComparisonReport) -> Result<String> {
    csv_text(
        &["id", "exact", "estimate", "stderr", "replicates", "z", "slack", "verdict"],
        report.rows.iter().map(|r| {
            [
                r.id.clone(),
                fmt_real(r.exact),
                fmt_real(r.estimate),
                fmt_real(r.stderr),
                r.replicates.to_string(),
                r.z.map(fmt_real).unwrap_or_default(),
                fmt_real(r.slack),
                r.verdict.as_str().to_string(),
            ]
        }),
    )
}

fn summarize(report: &ComparisonReport) -> String {
    let mut s = String::new();
    for r in &report.rows {
        s.push_str(&format!(
            "{:<28} exact {:<22} estimate {:<22} se {:<12} {}\n",
            r.id,
            fmt_real(r.exact),
            fmt_real(r.estimate),
            format!("{:.3e}", r.stderr),
            r.verdict.as_str()
        ));
    }
    for a in &report.adjudications {
        s.push_str(&format!(
            "{}: estimate {} selects {}\n",
            a.id,
            fmt_real(a.estimate),
            a.selected.as_deref().unwrap_or("no unique target")
        ));
    }
    s.push_str(&format!("{} of {} rows failed\n", report.failures(), report.rows.len()));
    s
}

fn finish_report(config: &ExperimentConfig, report: ComparisonReport, name: &str) -> Result<RunOutcome> {
    let files = vec![
        write_atomic(&config.out, &format!("{name}.csv"), report_csv(&report)?.as_bytes())?,
        write_atomic(&config.out, "report.json", report.to_json()?.as_bytes())?,
    ];
    Ok(RunOutcome { exit_code: report.exit_code(), files, summary: summarize(&report), report: Some(report) })
}

fn new_report(config: &ExperimentConfig) -> ComparisonReport {
    ComparisonReport { measure: config.measure.to_string(), theta: config.theta, seed: config.seed, ..Default::default() }
}

/// Exact finite-n moments against the single-leaf samplers.
pub fn compare_report(config: &ExperimentConfig) -> Result<ComparisonReport> {
    let n_max = config.n.max();
    let rates = RateTable::new(&config.measure, n_max).map_err(|e| context("rate table", e))?;
    let table = moment_table(n_max, config.j_max, &config.theta, &rates).map_err(|e| context("moment recursion", e))?;
    let mut report = new_report(config);
    for n in config.sizes() {
        let mc = sampled_moments(config, n, &rates)?;
        report.rows.extend(compare(&exact_moment_ids(&table, n), &mc, 0.0)?);
    }
    report.errata = moment_errata(&table, &rates)?;
    Ok(report)
}

fn run_compare(config: &ExperimentConfig) -> Result<RunOutcome> {
    finish_report(config, compare_report(config)?, "compare")
}

// ---- convergence ----

pub fn frequency_id(n: usize, k: usize) -> String {
    format!("E[(O/n)^{k}] n={n}")
}

/// Per-replicate averages over leaves of `(O_n(i)/n)^k`, `k ≤ k_max`, from
/// full genealogies, tallied in replicate order.
pub fn frequency_moments(config: &ExperimentConfig, n: usize, k_max: usize, rates: &RateTable<f64>) -> Result<Vec<Tally>> {
    let per_rep = run_replicates(config.replicates, config.threads, |r| {
        let stats = simulate_replicate(n, rates, config.theta, ReplicateSeed::new(config.seed, r), config.rho)?;
        let mut sums = vec![0.0; k_max];
        for &o in &stats.observable {
            let f = o as f64 / n as f64;
            let mut p = 1.0;
            for s in sums.iter_mut() {
                p *= f;
                *s += p;
            }
        }
        Ok(sums.into_iter().map(|s| s / n as f64).collect::<Vec<f64>>())
    })?;
    let mut tallies = vec![Tally::new(); k_max];
    for values in &per_rep {
        for (t, &v) in tallies.iter_mut().zip(values) {
            t.add(v);
        }
    }
    Ok(tallies)
}

/// Limit moments against full-pipeline frequencies along the `n` ladder.
pub fn convergence_report(config: &ExperimentConfig) -> Result<(ComparisonReport, String)> {
    let (limits, notes) = limit_targets(config).map_err(|e| context("limit moments", e))?;
    let rates = RateTable::new(&config.measure, config.n.max()).map_err(|e| context("rate table", e))?;
    let beta = (config.beta_compare && is_bsc(&config.measure) && config.rho == 0.0)
        .then(|| bsc_limit_beta(config.theta))
        .transpose()?;
    let mut report = new_report(config);
    report.errata = notes;
    let mut long = Vec::new();
    for n in config.sizes() {
        let tallies = frequency_moments(config, n, limits.len(), &rates)?;
        let mut exact = BTreeMap::new();
        let mut mc = BTreeMap::new();
        for (limit, tally) in limits.iter().zip(&tallies) {
            let id = frequency_id(n, limit.k);
            exact.insert(id.clone(), limit.value);
            mc.insert(id, Estimate::from(tally));
            long.push([
                n.to_string(),
                limit.k.to_string(),
                fmt_real(limit.value),
                limit.method.as_str().to_string(),
                fmt_real(tally.mean()),
                fmt_real(tally.stderr()),
                tally.count().to_string(),
            ]);
        }
        report.rows.extend(compare(&exact, &mc, config.slack)?);
        if let (Some(beta), Some(second)) = (beta, limits.iter().position(|l| l.k == 2)) {
            report.adjudications.push(Adjudication::new(
                frequency_id(n, 2),
                &Estimate::from(&tallies[second]),
                config.slack,
                &[("mixture", limits[second].value), ("beta", beta.moment(2))],
            ));
        }
    }
    let table = csv_text(&["n", "k", "limit", "method", "estimate", "stderr", "replicates"], long)?;
    Ok((report, table))
}

fn run_convergence(config: &ExperimentConfig) -> Result<RunOutcome> {
    let (report, table) = convergence_report(config)?;
    let mut outcome = finish_report(config, report, "convergence_verdicts")?;
    outcome.files.push(write_atomic(&config.out, "convergence.csv", table.as_bytes())?);
    Ok(outcome)
}
