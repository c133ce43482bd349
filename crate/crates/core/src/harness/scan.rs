use std::io::Write;
use std::ops::ControlFlow;

use serde::Serialize;

use super::number;
use crate::error::HarnessError;
use crate::models::linear_system;
use crate::newton::NewtonSettings;
use crate::step_control::{integrate_observed, Method};
use crate::system::ControllerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Divergent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub h: f64,
    pub h_lambda: f64,
    pub steps: usize,
    pub max_abs: f64,
    pub final_abs: f64,
    pub verdict: Verdict,
}

/// Growth factor used as a bound in the verdict.
pub const BOUNDED_FACTOR: f64 = 1.01;
/// Runs stop early once `|x|` exceeds this multiple of `|x0|`.
const BLOWUP_FACTOR: f64 = 1e6;

/// Fixed-step two-step Adams-Moulton on `x' = lambda x`, `x(0) = 1`, for every
/// `(lambda, h)` pair. A run is bounded iff `max|x| <= 1.01 |x0|`.
pub fn stability_scan(
    lambdas: &[f64],
    hs: &[f64],
    steps: usize,
    settings: &NewtonSettings,
) -> Result<Vec<ScanRow>, HarnessError> {
    if steps < 100 {
        return Err(HarnessError::Usage(format!("stability scan needs at least 100 steps, got {steps}")));
    }
    let mut rows = Vec::with_capacity(lambdas.len() * hs.len());
    for &lambda in lambdas {
        if !(lambda < 0.0) {
            return Err(HarnessError::Usage(format!("lambda must be negative, got {lambda}")));
        }
        for &h in hs {
            let system = linear_system(lambda);
            let x0 = system.initial.x[0].abs();
            let trace = integrate_observed(
                Method::Fam2,
                &system,
                h * steps as f64,
                h,
                &ControllerConfig::default(),
                settings,
                |report| {
                    if report.record.state.x[0].abs() > BLOWUP_FACTOR * x0 {
                        ControlFlow::Break(())
                    } else {
                        ControlFlow::Continue(())
                    }
                },
            )?;
            let max_abs = trace.records.iter().map(|r| r.state.x[0].abs()).fold(0.0, f64::max);
            rows.push(ScanRow {
                lambda,
                h,
                h_lambda: h * lambda,
                steps: trace.accepted_steps,
                max_abs,
                final_abs: trace.last().state.x[0].abs(),
                verdict: if max_abs <= BOUNDED_FACTOR * x0 {
                    Verdict::Bounded
                } else {
                    Verdict::Divergent
                },
            });
        }
    }
    Ok(rows)
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "h", "h_lambda", "steps", "max_abs", "final_abs", "verdict"])?;
    for r in rows {
        w.write_record([
            number(r.lambda),
            number(r.h),
            number(r.h_lambda),
            r.steps.to_string(),
            number(r.max_abs),
            number(r.final_abs),
            match r.verdict {
                Verdict::Bounded => "bounded".into(),
                Verdict::Divergent => "divergent".into(),
            },
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_and_exterior_of_the_interval() {
        let rows = stability_scan(&[-590.0, -650.0], &[0.01], 2000, &NewtonSettings::default()).unwrap();
        assert_eq!(rows[0].verdict, Verdict::Bounded);
        assert_eq!(rows[0].steps, 2000);
        assert_eq!(rows[1].verdict, Verdict::Divergent);
        assert!(rows[1].max_abs > 10.0);
    }

    #[test]
    fn well_resolved_decay_matches_exponential() {
        let (lambda, h, steps) = (-10.0, 0.01, 200);
        let rows = stability_scan(&[lambda], &[h], steps, &NewtonSettings::default()).unwrap();
        assert_eq!(rows[0].verdict, Verdict::Bounded);
        let exact = (lambda * h * steps as f64).exp();
        assert!((rows[0].final_abs - exact).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let s = NewtonSettings::default();
        assert!(stability_scan(&[-1.0], &[0.1], 10, &s).is_err());
        assert!(stability_scan(&[1.0], &[0.1], 100, &s).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = stability_scan(&[-10.0], &[0.01], 100, &NewtonSettings::default()).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,h,h_lambda,steps,max_abs,final_abs,verdict\n-10.0,0.01,-0.1,100,1.0,"));
        assert!(text.trim_end().ends_with("bounded"));
    }
}
