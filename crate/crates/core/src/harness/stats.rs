//! Difference statistics between traces, or between a trace and a known
//! solution.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::step_control::SimulationTrace;
use crate::system::DaeState;

/// Maximum, mean and population variance of absolute differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ErrorStats {
    pub max_diff: f64,
    pub avg_diff: f64,
    pub var_diff: f64,
}

impl ErrorStats {
    pub fn from_diffs<I: IntoIterator<Item = f64>>(diffs: I) -> Self {
        let diffs: Vec<f64> = diffs.into_iter().map(f64::abs).collect();
        if diffs.is_empty() {
            return Self::default();
        }
        let n = diffs.len() as f64;
        let max_diff = diffs.iter().copied().fold(0.0, f64::max);
        let avg_diff = diffs.iter().sum::<f64>() / n;
        let var_diff = diffs.iter().map(|d| (d - avg_diff).powi(2)).sum::<f64>() / n;
        Self {
            max_diff,
            avg_diff,
            var_diff,
        }
    }
}

/// Compares `value(state)` against `exact(t)` at every record, the initial
/// one included.
pub fn error_stats_vs_exact<E, V>(trace: &SimulationTrace, exact: E, value: V) -> ErrorStats
where
    E: Fn(f64) -> f64,
    V: Fn(&DaeState) -> f64,
{
    ErrorStats::from_diffs(trace.records.iter().map(|r| value(&r.state) - exact(r.state.t)))
}

/// Time-sampled variable values, the common ground for in-memory traces and
/// traces read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// One row per time, one column per name.
    pub rows: Vec<Vec<f64>>,
}

impl From<&SimulationTrace> for Samples {
    fn from(trace: &SimulationTrace) -> Self {
        Self {
            names: trace.variable_names.clone(),
            times: trace.times().collect(),
            rows: trace.records.iter().map(|r| r.state.values().collect()).collect(),
        }
    }
}

impl Samples {
    /// Value of column `col` at `t`, using the cursor `hint` to keep
    /// sequential lookups linear overall.
    ///
    /// Event times appear twice (pre- and post-event); `occurrence` selects
    /// among equal time stamps, so interpolation never bridges a jump. Between
    /// records the post-event side is used as the left end.
    fn interpolate(&self, col: usize, t: f64, occurrence: usize, hint: &mut usize) -> f64 {
        let last = self.times.len() - 1;
        while *hint < last && self.times[*hint] < t {
            *hint += 1;
        }
        let i = *hint;
        if self.times[i] == t {
            let mut j = i;
            for _ in 0..occurrence {
                if j < last && self.times[j + 1] == t {
                    j += 1;
                }
            }
            return self.rows[j][col];
        }
        if self.times[i] < t || i == 0 {
            return self.rows[i][col];
        }
        // times[i - 1] < t < times[i]: the last record at the earlier stamp
        // and the first at the later one
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.rows[i - 1][col] + w * (self.rows[i][col] - self.rows[i - 1][col])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedStats {
    pub name: String,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// How the candidate was mapped onto the reference grid.
    pub sampling: String,
    pub per_variable: Vec<NamedStats>,
    /// Pooled over all variables sharing a name prefix (`delta`, `V`, ...).
    pub per_class: Vec<NamedStats>,
}

impl Comparison {
    pub fn class(&self, name: &str) -> Option<&ErrorStats> {
        self.per_class.iter().find(|c| c.name == name).map(|c| &c.stats)
    }

    pub fn variable(&self, name: &str) -> Option<&ErrorStats> {
        self.per_variable.iter().find(|c| c.name == name).map(|c| &c.stats)
    }
}

/// Variable class: the part of the name before the first `_`.
pub fn variable_class(name: &str) -> &str {
    name.split('_').next().unwrap_or(name)
}

/// Tolerance on matching trace start and end times.
const RANGE_TOL: f64 = 1e-9;

/// Interpolates `candidate` linearly onto the reference time grid and
/// collects absolute differences per variable and per variable class.
/// `variables` restricts the comparison to the named columns.
pub fn compare_samples(
    reference: &Samples,
    candidate: &Samples,
    variables: Option<&[String]>,
) -> Result<Comparison, HarnessError> {
    let (Some(&r0), Some(&r1), Some(&c0), Some(&c1)) = (
        reference.times.first(),
        reference.times.last(),
        candidate.times.first(),
        candidate.times.last(),
    ) else {
        return Err(HarnessError::Usage("cannot compare empty traces".into()));
    };
    if (r0 - c0).abs() > RANGE_TOL || (r1 - c1).abs() > RANGE_TOL {
        return Err(HarnessError::MismatchedRange {
            ref_start: r0,
            ref_end: r1,
            cand_start: c0,
            cand_end: c1,
        });
    }

    let mut columns = Vec::new();
    for (ri, name) in reference.names.iter().enumerate() {
        if variables.is_some_and(|sel| !sel.iter().any(|s| s == name)) {
            continue;
        }
        let ci = candidate
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| HarnessError::Usage(format!("candidate has no variable `{name}`")))?;
        columns.push((name.clone(), ri, ci));
    }

    let mut per_variable = Vec::with_capacity(columns.len());
    let mut pooled: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, ri, ci) in &columns {
        let mut hint = 0;
        let diffs: Vec<f64> = reference
            .times
            .iter()
            .zip(&reference.rows)
            .enumerate()
            .map(|(k, (&t, row))| {
                let occurrence = reference.times[..k].iter().rev().take_while(|&&p| p == t).count();
                (row[*ri] - candidate.interpolate(*ci, t, occurrence, &mut hint)).abs()
            })
            .collect();
        let class = variable_class(name);
        match pooled.iter_mut().find(|(c, _)| c == class) {
            Some((_, all)) => all.extend_from_slice(&diffs),
            None => pooled.push((class.to_string(), diffs.clone())),
        }
        per_variable.push(NamedStats {
            name: name.clone(),
            stats: ErrorStats::from_diffs(diffs),
        });
    }

    Ok(Comparison {
        sampling: "candidate linearly interpolated onto the reference time grid".into(),
        per_variable,
        per_class: pooled
            .into_iter()
            .map(|(name, diffs)| NamedStats {
                name,
                stats: ErrorStats::from_diffs(diffs),
            })
            .collect(),
    })
}

pub fn compare_traces(
    reference: &SimulationTrace,
    candidate: &SimulationTrace,
    variables: Option<&[String]>,
) -> Result<Comparison, HarnessError> {
    compare_samples(&Samples::from(reference), &Samples::from(candidate), variables)
}
