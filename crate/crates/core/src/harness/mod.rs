//! Experiment engine behind the command-line tool: scenario runs with CSV
//! output, trace comparison, multi-method benches and stability scans.

mod bench;
mod config;
mod scan;
mod stats;

use std::fs;
use std::io::{Read, Write};
use std::ops::ControlFlow;
use std::path::Path;

pub use bench::{bench, BenchReport, BenchSpec, CaseReport, ClassSummary, MethodSummary};
pub use config::{RunSettings, SystemSpec};
pub use scan::{stability_scan, write_scan_csv, ScanRow, Verdict};
pub use stats::{
    compare_samples, compare_traces, error_stats_vs_exact, variable_class, Comparison, ErrorStats,
    NamedStats, Samples,
};

use crate::error::HarnessError;
use crate::models::{analytic_system, linear_system, swing_system, BuiltinModel, Fixture};
use crate::step_control::{integrate_observed, SimulationTrace};
use crate::system::DaeSystem;

/// Loads a bundled fixture by name, or a fixture file by path.
pub fn load_fixture(name: &str) -> Result<Fixture, HarnessError> {
    match Fixture::builtin(name) {
        Ok(fx) => Ok(fx),
        Err(_) if Path::new(name).exists() => Ok(fs::read_to_string(name)?.parse()?),
        Err(e) => Err(e.into()),
    }
}

pub fn build_system(settings: &RunSettings) -> Result<DaeSystem<BuiltinModel>, HarnessError> {
    Ok(match &settings.system {
        SystemSpec::Analytic => {
            reject_fault(settings)?;
            analytic_system().into()
        }
        SystemSpec::Linear(lambda) => {
            reject_fault(settings)?;
            linear_system(*lambda).into()
        }
        SystemSpec::Swing(name) => swing_system(&load_fixture(name)?, settings.fault)?.into(),
    })
}

fn reject_fault(settings: &RunSettings) -> Result<(), HarnessError> {
    match settings.fault {
        Some(_) => Err(HarnessError::Usage(format!(
            "faults are only supported on swing systems, not {}",
            settings.system
        ))),
        None => Ok(()),
    }
}

/// Runs one scenario; writes the CSV trace when `settings.out` is set.
pub fn run(settings: &RunSettings) -> Result<SimulationTrace, HarnessError> {
    let system = build_system(settings)?;
    let trace = integrate_observed(
        settings.method,
        &system,
        settings.t_end,
        settings.initial_step(),
        &settings.controller,
        &settings.newton,
        |_| ControlFlow::Continue(()),
    )?;
    if let Some(path) = &settings.out {
        write_trace_csv(&trace, fs::File::create(path)?)?;
    }
    Ok(trace)
}

/// Shortest round-trip text for a float, switching to exponent notation for
/// very small or large magnitudes.
pub(crate) fn number(v: f64) -> String {
    format!("{v:?}")
}

/// Columns: `t, h, newton_iters, g_max`, then one per variable. `g_max` is
/// empty where no estimate exists.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "h".into(), "newton_iters".into(), "g_max".into()];
    header.extend(trace.variable_names.iter().cloned());
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![
            number(r.state.t),
            number(r.state.h),
            r.newton_iterations.to_string(),
            r.g_max.map(number).unwrap_or_default(),
        ];
        row.extend(r.state.values().map(number));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the variable columns of a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv<R: Read>(input: R) -> Result<Samples, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 4 || &header[0] != "t" {
        return Err(HarnessError::Usage("not a trace CSV (missing `t` column)".into()));
    }
    let names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Usage(format!("bad number `{s}` in trace CSV")))
        };
        times.push(parse(&record[0])?);
        rows.push(record.iter().skip(4).map(parse).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(Samples { names, times, rows })
}
