use std::fmt::Write as _;
use std::io;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{key_values, RunSettings};
use super::stats::{compare_traces, Comparison, NamedStats};
use super::{number, run};
use crate::error::{ConfigError, HarnessError};
use crate::models::FaultSpec;
use crate::step_control::{Method, SimulationTrace};

/// A set of scenarios: every method on every fault case, compared against a
/// reference method run on the same case.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub base: RunSettings,
    pub methods: Vec<Method>,
    pub reference: Method,
    /// One case per entry; `None` runs the unfaulted system.
    pub faults: Vec<Option<FaultSpec>>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            base: RunSettings::default(),
            methods: Method::ALL.to_vec(),
            reference: Method::Fitm,
            faults: vec![None],
        }
    }
}

impl BenchSpec {
    /// Run keys plus `methods = a,b,...`, `reference = m` and
    /// `faults = bus,start,duration; ...`.
    pub fn from_config_str(text: &str) -> Result<Self, ConfigError> {
        let mut spec = Self::default();
        let mut faults_given = false;
        for (line, key, value) in key_values(text)? {
            let wrap = |e: ConfigError| ConfigError::Parse {
                line,
                message: e.to_string(),
            };
            match key.as_str() {
                "methods" => {
                    spec.methods = value
                        .split(',')
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(wrap)?;
                }
                "reference" => spec.reference = value.parse().map_err(wrap)?,
                "faults" => {
                    faults_given = true;
                    spec.faults = value
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| match s {
                            "none" => Ok(None),
                            s => s.parse().map(Some),
                        })
                        .collect::<Result<_, _>>()
                        .map_err(wrap)?;
                }
                _ => {
                    if !spec.base.set(&key, &value).map_err(wrap)? {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("unknown key `{key}`"),
                        });
                    }
                }
            }
        }
        if !faults_given {
            spec.faults = vec![spec.base.fault];
        }
        if spec.methods.is_empty() || spec.faults.is_empty() {
            return Err(ConfigError::Invalid("bench needs at least one method and one case".into()));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub id: String,
    pub fault: Option<String>,
    pub method: Method,
    pub accepted_steps: usize,
    pub newton_iterations: usize,
    /// `(reference_steps - steps) / reference_steps`.
    pub step_improvement: f64,
    pub iteration_improvement: f64,
    pub wall_time_s: f64,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: String,
    pub max_of_case_averages: f64,
    pub mean_of_case_maxima: f64,
    pub max_of_case_maxima: f64,
    pub max_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub cases: usize,
    pub accepted_steps: usize,
    pub newton_iterations: usize,
    pub avg_step_improvement: f64,
    pub avg_iteration_improvement: f64,
    pub wall_time_s: f64,
    pub classes: Vec<ClassSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub system: String,
    pub reference: Method,
    pub sampling: String,
    pub efficiency_note: String,
    pub methods: Vec<MethodSummary>,
    pub cases: Vec<CaseReport>,
}

struct Job {
    case: usize,
    method: Method,
}

fn timed_run(settings: &RunSettings) -> Result<(SimulationTrace, f64), HarnessError> {
    let start = Instant::now();
    let trace = run(settings)?;
    Ok((trace, start.elapsed().as_secs_f64()))
}

fn fault_label(f: &Option<FaultSpec>) -> Option<String> {
    f.map(|f| format!("bus {} at {} s for {} s", f.bus, f.start, f.duration))
}

/// Runs every (case, method) scenario, in parallel, and aggregates the
/// results. Output order depends only on the spec.
pub fn bench(spec: &BenchSpec) -> Result<BenchReport, HarnessError> {
    let settings_for = |case: usize, method: Method| RunSettings {
        method,
        fault: spec.faults[case],
        out: None,
        ..spec.base.clone()
    };

    let references: Vec<(SimulationTrace, f64)> = (0..spec.faults.len())
        .into_par_iter()
        .map(|case| timed_run(&settings_for(case, spec.reference)))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<Job> = (0..spec.faults.len())
        .flat_map(|case| spec.methods.iter().map(move |&method| Job { case, method }))
        .collect();

    let mut cases: Vec<CaseReport> = jobs
        .par_iter()
        .map(|job| -> Result<CaseReport, HarnessError> {
            let (reference, ref_time) = &references[job.case];
            let (trace, wall) = if job.method == spec.reference {
                (reference.clone(), *ref_time)
            } else {
                timed_run(&settings_for(job.case, job.method))?
            };
            let comparison = compare_traces(reference, &trace, None)?;
            let improvement = |r: usize, m: usize| {
                if r == 0 {
                    0.0
                } else {
                    (r as f64 - m as f64) / r as f64
                }
            };
            Ok(CaseReport {
                id: format!("case{:03}/{}", job.case, job.method),
                fault: fault_label(&spec.faults[job.case]),
                method: job.method,
                accepted_steps: trace.accepted_steps,
                newton_iterations: trace.total_newton_iterations,
                step_improvement: improvement(reference.accepted_steps, trace.accepted_steps),
                iteration_improvement: improvement(
                    reference.total_newton_iterations,
                    trace.total_newton_iterations,
                ),
                wall_time_s: wall,
                comparison,
            })
        })
        .collect::<Result<_, _>>()?;
    cases.sort_by(|a, b| a.id.cmp(&b.id));

    let methods = spec
        .methods
        .iter()
        .map(|&method| summarise(method, &cases))
        .collect();

    Ok(BenchReport {
        system: spec.base.system.to_string(),
        reference: spec.reference,
        sampling: "candidate linearly interpolated onto the reference time grid".into(),
        efficiency_note: "improvement = (reference - method) / reference, from accepted steps and \
                          Newton iterations; wall time is informational"
            .into(),
        methods,
        cases,
    })
}

fn summarise(method: Method, cases: &[CaseReport]) -> MethodSummary {
    let mine: Vec<&CaseReport> = cases.iter().filter(|c| c.method == method).collect();
    let n = mine.len().max(1) as f64;
    let mut classes: Vec<ClassSummary> = Vec::new();
    for case in &mine {
        for NamedStats { name, stats } in &case.comparison.per_class {
            let entry = match classes.iter_mut().position(|c| &c.class == name) {
                Some(i) => &mut classes[i],
                None => {
                    classes.push(ClassSummary {
                        class: name.clone(),
                        max_of_case_averages: 0.0,
                        mean_of_case_maxima: 0.0,
                        max_of_case_maxima: 0.0,
                        max_variance: 0.0,
                    });
                    classes.last_mut().unwrap()
                }
            };
            entry.max_of_case_averages = entry.max_of_case_averages.max(stats.avg_diff);
            entry.mean_of_case_maxima += stats.max_diff / n;
            entry.max_of_case_maxima = entry.max_of_case_maxima.max(stats.max_diff);
            entry.max_variance = entry.max_variance.max(stats.var_diff);
        }
    }
    MethodSummary {
        method,
        cases: mine.len(),
        accepted_steps: mine.iter().map(|c| c.accepted_steps).sum(),
        newton_iterations: mine.iter().map(|c| c.newton_iterations).sum(),
        avg_step_improvement: mine.iter().map(|c| c.step_improvement).sum::<f64>() / n,
        avg_iteration_improvement: mine.iter().map(|c| c.iteration_improvement).sum::<f64>() / n,
        wall_time_s: mine.iter().map(|c| c.wall_time_s).sum(),
        classes,
    }
}

impl BenchReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Pretty JSON. Without `timing`, the `wall_time_s` fields are dropped so
    /// that repeated runs of the same spec serialise identically.
    pub fn to_json(&self, timing: bool) -> Result<String, HarnessError> {
        let mut value = serde_json::to_value(self)?;
        if !timing {
            strip_key(&mut value, "wall_time_s");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// One row per (case, variable class) with the case's efficiency figures
    /// repeated on each row.
    pub fn write_cases_csv<W: io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "id",
            "method",
            "fault",
            "accepted_steps",
            "newton_iterations",
            "step_improvement",
            "iteration_improvement",
            "class",
            "max_diff",
            "avg_diff",
            "var_diff",
        ])?;
        for case in &self.cases {
            for class in &case.comparison.per_class {
                w.write_record([
                    case.id.clone(),
                    case.method.to_string(),
                    case.fault.clone().unwrap_or_default(),
                    case.accepted_steps.to_string(),
                    case.newton_iterations.to_string(),
                    number(case.step_improvement),
                    number(case.iteration_improvement),
                    class.name.clone(),
                    number(class.stats.max_diff),
                    number(class.stats.avg_diff),
                    number(class.stats.var_diff),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text summary table.
    pub fn to_table(&self) -> String {
        let classes: Vec<&str> = self
            .methods
            .first()
            .map(|m| m.classes.iter().map(|c| c.class.as_str()).collect())
            .unwrap_or_default();
        let mut header = vec![
            "method".to_string(),
            "cases".into(),
            "steps".into(),
            "newton".into(),
            "step_impr".into(),
            "iter_impr".into(),
        ];
        header.extend(classes.iter().map(|c| format!("max_avg({c})")));
        header.extend(classes.iter().map(|c| format!("avg_max({c})")));

        let mut rows = vec![header];
        for m in &self.methods {
            let mut row = vec![
                m.method.to_string(),
                m.cases.to_string(),
                m.accepted_steps.to_string(),
                m.newton_iterations.to_string(),
                format!("{:.2}%", 100.0 * m.avg_step_improvement),
                format!("{:.2}%", 100.0 * m.avg_iteration_improvement),
            ];
            let class = |name: &str| m.classes.iter().find(|c| c.class == name);
            row.extend(classes.iter().map(|c| {
                class(c).map_or("-".into(), |s| format!("{:.4e}", s.max_of_case_averages))
            }));
            row.extend(classes.iter().map(|c| {
                class(c).map_or("-".into(), |s| format!("{:.4e}", s.mean_of_case_maxima))
            }));
            rows.push(row);
        }

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("reference: {} on {}\n", self.reference, self.system);
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    if i == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

fn strip_key(value: &mut serde_json::Value, key: &str) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove(key);
            map.values_mut().for_each(|v| strip_key(v, key));
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(|v| strip_key(v, key)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SystemSpec;

    #[test]
    fn parses_bench_file() {
        let text = "system = swing:wscc9\nmethods = fitm, pcm\nreference = fitm\nfaults = 7,1.0,0.1; 5,1.0,0.05\nt_end = 3\n";
        let spec = BenchSpec::from_config_str(text).unwrap();
        assert_eq!(spec.methods, vec![Method::Fitm, Method::Pcm]);
        assert_eq!(spec.faults.len(), 2);
        assert_eq!(spec.base.t_end, 3.0);
        assert_eq!(spec.base.system, SystemSpec::Swing("wscc9".into()));
        assert!(BenchSpec::from_config_str("methods = fitm, euler\n").is_err());
        assert!(BenchSpec::from_config_str("colour = red\n").is_err());
    }

    #[test]
    fn self_reference_has_zero_improvement_and_difference() {
        let spec = BenchSpec {
            methods: vec![Method::Fitm],
            ..BenchSpec::default()
        };
        let report = bench(&spec).unwrap();
        let s = report.summary(Method::Fitm).unwrap();
        assert_eq!(s.avg_step_improvement, 0.0);
        assert_eq!(s.avg_iteration_improvement, 0.0);
        for c in &s.classes {
            assert_eq!(c.max_of_case_maxima, 0.0);
        }
        assert!(report.to_table().contains("fitm"));
    }

    #[test]
    fn zero_dynamics_pcm_uses_far_fewer_steps() {
        let spec = BenchSpec {
            base: RunSettings {
                system: SystemSpec::Linear(0.0),
                ..RunSettings::default()
            },
            methods: vec![Method::Pcm],
            ..BenchSpec::default()
        };
        let report = bench(&spec).unwrap();
        let s = report.summary(Method::Pcm).unwrap();
        assert!(s.avg_step_improvement >= 0.8, "{}", s.avg_step_improvement);
    }

    #[test]
    fn analytic_pcm_needs_fewer_newton_iterations() {
        let spec = BenchSpec {
            methods: vec![Method::Pcm],
            ..BenchSpec::default()
        };
        let report = bench(&spec).unwrap();
        let pcm = &report.cases[0];
        assert!(pcm.iteration_improvement > 0.0, "{}", pcm.iteration_improvement);
    }

    #[test]
    fn json_without_timing_and_case_csv() {
        let spec = BenchSpec {
            methods: vec![Method::Fitm, Method::Pcm],
            ..BenchSpec::default()
        };
        let report = bench(&spec).unwrap();
        assert!(report.to_json(true).unwrap().contains("wall_time_s"));
        let quiet = report.to_json(false).unwrap();
        assert!(!quiet.contains("wall_time_s"));
        assert!(quiet.contains("\"max_of_case_averages\""));

        let mut buf = Vec::new();
        report.write_cases_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("id,method,fault,accepted_steps"));
        // analytic system: one class `x`, two methods
        assert_eq!(lines.count(), 2);
        assert!(text.contains("case000/pcm,pcm,,"));
    }
}
