use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Band width in standard errors.
pub const Z_THRESHOLD: f64 = 4.0;

/// Running mean and variance (Welford). Adding values in a fixed order gives
/// bit-identical results regardless of how they were produced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Tally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 with fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Tally {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut t = Tally::new();
        for x in iter {
            t.add(x);
        }
        t
    }
}

/// A Monte Carlo summary of one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: u64,
}

impl From<&Tally> for Estimate {
    fn from(t: &Tally) -> Self {
        Estimate { mean: t.mean(), stderr: t.stderr(), replicates: t.count() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub id: String,
    pub exact: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: u64,
    /// `None` when the standard error is zero.
    pub z: Option<f64>,
    pub slack: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `|estimate - exact| ≤ 4·stderr + slack`.
pub fn judge(id: impl Into<String>, exact: f64, estimate: &Estimate, slack: f64) -> ComparisonRow {
    let diff = estimate.mean - exact;
    let band = Z_THRESHOLD * estimate.stderr + slack;
    let within = diff.abs() <= band;
    let (z, note) = if estimate.stderr > 0.0 {
        (Some(diff / estimate.stderr), None)
    } else if diff == 0.0 {
        (Some(0.0), None)
    } else {
        (None, (!within).then(|| "degenerate variance".to_string()))
    };
    ComparisonRow {
        id: id.into(),
        exact,
        estimate: estimate.mean,
        stderr: estimate.stderr,
        replicates: estimate.replicates,
        z,
        slack,
        verdict: if within { Verdict::Pass } else { Verdict::Fail },
        note,
    }
}

/// Pairs exact values with estimates by statistic id. Every id must occur on
/// both sides.
pub fn compare(exact: &BTreeMap<String, f64>, mc: &BTreeMap<String, Estimate>, slack: f64) -> Result<Vec<ComparisonRow>> {
    if let Some(id) = exact.keys().find(|id| !mc.contains_key(*id)) {
        return Err(Error::Structural(format!("no Monte Carlo estimate for `{id}`")));
    }
    if let Some(id) = mc.keys().find(|id| !exact.contains_key(*id)) {
        return Err(Error::Structural(format!("no exact value for `{id}`")));
    }
    Ok(exact.iter().map(|(id, &value)| judge(id.clone(), value, &mc[id], slack)).collect())
}

/// One estimate held against several candidate values; resolved when exactly
/// one candidate lies inside the band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adjudication {
    pub id: String,
    pub estimate: f64,
    pub stderr: f64,
    pub slack: f64,
    pub candidates: Vec<AdjudicationTarget>,
    pub selected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjudicationTarget {
    pub label: String,
    pub value: f64,
    pub z: Option<f64>,
    pub within: bool,
}

impl Adjudication {
    pub fn new(id: impl Into<String>, estimate: &Estimate, slack: f64, candidates: &[(&str, f64)]) -> Self {
        let candidates: Vec<AdjudicationTarget> = candidates
            .iter()
            .map(|&(label, value)| {
                let row = judge(label, value, estimate, slack);
                AdjudicationTarget { label: label.to_string(), value, z: row.z, within: row.verdict == Verdict::Pass }
            })
            .collect();
        let inside: Vec<&AdjudicationTarget> = candidates.iter().filter(|c| c.within).collect();
        let selected = (inside.len() == 1).then(|| inside[0].label.clone());
        Adjudication { id: id.into(), estimate: estimate.mean, stderr: estimate.stderr, slack, candidates, selected }
    }

    pub fn resolved(&self) -> bool {
        self.selected.is_some()
    }
}

/// Rows, adjudications and errata notes of one run. Serialization is
/// deterministic: no timestamps, rows in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub measure: String,
    pub theta: f64,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
    pub adjudications: Vec<Adjudication>,
    pub errata: Vec<String>,
}

impl ComparisonReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict == Verdict::Fail).count()
    }

    /// 0 when every row passes, 2 otherwise. Adjudications are informational.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            2
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn row(&self, id: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}
