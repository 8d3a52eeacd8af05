//! Result of one experiment variant and the checks shared by all runners.

use std::collections::BTreeMap;

use geofb_core::rates::{loglog_slope, predict_worst_case};
use geofb_core::solver::{check_fb_estimates, check_fejer, check_monotonicity, check_worst_case, run_fb, CheckReport};
use geofb_core::{CompositeProblem, Error, GeometryCertificate, Result, SolveConfig, Trace};
use serde::Serialize;
use serde_json::{json, Value};

use crate::certify::{descent_verdict, DescentPrediction, DescentVerdict};

/// Iterates are recorded for the Fejer check up to this many stored scalars.
pub const FEJER_BUDGET: usize = 20_000_000;

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// Grid point label such as `p_4`; `None` for single runs.
    pub variant: Option<String>,
    pub trace: Option<Trace>,
    pub envelope: Option<Vec<f64>>,
    pub prediction: Option<DescentPrediction>,
    pub checks: Vec<CheckReport>,
    pub metrics: BTreeMap<String, Value>,
    /// Additional text artifacts, `(file name, contents)`.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Earliest failing iteration over all checks, with the check's name.
    pub fn first_violation(&self) -> Option<(String, Option<usize>)> {
        let failed: Vec<&CheckReport> = self.checks.iter().filter(|c| !c.pass).collect();
        let indexed = failed.iter().filter_map(|c| c.first_violation.map(|n| (n, c))).min_by_key(|(n, _)| *n);
        match indexed {
            Some((n, c)) => Some((c.name.clone(), Some(n))),
            None => failed.first().map(|c| (c.name.clone(), None)),
        }
    }

    pub fn metric<S: Serialize>(&mut self, key: &str, v: S) {
        self.metrics.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn report(&self, name: &str, seed: u64) -> Value {
        let fv = self.first_violation().map(|(check, n)| json!({ "check": check, "n": n }));
        json!({
            "name": name,
            "variant": self.variant,
            "seed": seed,
            "pass": self.pass(),
            "first_violation": fv,
            "checks": self.checks,
            "metrics": self.metrics,
            "prediction": self.prediction,
        })
    }
}

pub fn check(name: &str, pass: bool, first_violation: Option<usize>, detail: Option<String>) -> CheckReport {
    CheckReport { name: name.into(), pass, first_violation, detail }
}

pub fn verdict_check(v: &DescentVerdict) -> CheckReport {
    check("rate_certificate", v.pass, v.first_violation, v.kind.clone())
}

/// `|measured - expected| <= tol`.
pub fn band_check(name: &str, measured: Option<f64>, expected: f64, tol: f64) -> CheckReport {
    match measured {
        Some(m) if (m - expected).abs() <= tol => check(name, true, None, None),
        Some(m) => check(name, false, None, Some(format!("{m} not within {tol} of {expected}"))),
        None => check(name, false, None, Some("not measurable".into())),
    }
}

/// Lower-order test: `series_n n^order` stays within a factor 2 of its
/// maximum over the second half of the run, so `series_n >= C n^(-order)`.
pub fn order_floor_check(name: &str, series: &[f64], order: f64) -> CheckReport {
    let n_last = series.len().saturating_sub(1);
    if n_last < 4 {
        return check(name, false, None, Some("trace too short".into()));
    }
    let scaled: Vec<(usize, f64)> = (n_last / 2..=n_last).map(|n| (n, series[n] * (n as f64).powf(order))).collect();
    let max = scaled.iter().map(|s| s.1).fold(0.0, f64::max);
    let (n_min, min) = scaled.iter().copied().fold((0, f64::INFINITY), |a, s| if s.1 < a.1 { s } else { a });
    if min > 0.0 && min >= 0.5 * max {
        check(name, true, None, Some(format!("C between {min:.6e} and {max:.6e}")))
    } else {
        check(name, false, Some(n_min), Some(format!("series n^order drops to {min:.3e} from {max:.3e}")))
    }
}

/// Per-iteration inequalities: descent estimates, monotonicity, Fejer
/// monotonicity when iterates were kept, and the worst-case value bound.
pub fn fb_trace_checks(problem: &CompositeProblem, cfg: &SolveConfig, trace: &Trace) -> Result<Vec<CheckReport>> {
    let mut out = vec![check_fb_estimates(trace, problem, cfg)?, check_monotonicity(trace)];
    if trace.iterates.is_some() {
        if let Some(xbar) = problem.argmin().representative() {
            match check_fejer(trace, xbar, problem) {
                Ok(r) => out.push(r),
                Err(Error::Precondition(m)) => out.push(check("fejer", true, None, Some(format!("skipped: {m}")))),
                Err(e) => return Err(e),
            }
        }
    }
    out.extend(check_worst_case(trace));
    Ok(out)
}

pub fn solve_config(problem: &CompositeProblem, lambda: f64, iters: usize) -> SolveConfig {
    let cfg = SolveConfig::new(lambda, iters);
    let every = (problem.dim() * iters).div_ceil(FEJER_BUDGET).max(1);
    cfg.record_iterates(every)
}

/// Runs forward-backward and applies the shared checks, plus the rate
/// certificate when one is supplied.
pub fn run_fb_case(
    problem: &CompositeProblem,
    cfg: &SolveConfig,
    x0: &[f64],
    cert: Option<&GeometryCertificate>,
) -> Result<Outcome> {
    let trace = run_fb(problem, cfg, x0)?;
    let mut out = Outcome { checks: fb_trace_checks(problem, cfg, &trace)?, ..Default::default() };
    finish_with_certificate(&mut out, &trace, cfg.lambda, problem.lipschitz(), cert)?;
    out.trace = Some(trace);
    Ok(out)
}

/// Adds the rate certificate (or the worst-case envelope) and its metrics.
pub fn finish_with_certificate(
    out: &mut Outcome,
    trace: &Trace,
    lambda: f64,
    lipschitz: f64,
    cert: Option<&GeometryCertificate>,
) -> Result<()> {
    let n_last = trace.last_index();
    out.metric("lambda", lambda);
    out.metric("lipschitz", lipschitz);
    out.metric("iterations", n_last);
    match cert {
        Some(c) => {
            let pred = DescentPrediction::for_fb(lambda, lipschitz, c, trace.gap[0])?;
            let v = descent_verdict(trace, &pred)?;
            out.checks.push(verdict_check(&v));
            out.envelope = Some(v.prediction.envelopes(n_last));
            out.metric("certificate", c);
            out.metric("regime", v.prediction.regime);
            out.metric("kappa", v.kappa);
            out.metric("measured_slope", v.rate.measured_slope);
            out.metric("measured_qfactor", v.rate.measured_qfactor);
            out.metric("rate_prediction", &v.prediction);
            out.metric("checkpoints", &v.rate.checkpoints);
            out.prediction = Some(pred);
        }
        None => {
            if let Some(d) = &trace.dist {
                let pred = predict_worst_case(lambda, lipschitz, d[0], trace.gap[0])?;
                out.envelope = Some(pred.envelopes(n_last));
                out.metric("regime", pred.regime);
            }
            out.metric("measured_slope", loglog_slope(&trace.gap, 0.5).ok().map(|s| s.slope));
        }
    }
    Ok(())
}

/// Runs `f` on every item on its own thread; results keep the input order.
pub fn par_map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| f(it))).collect();
        handles.into_iter().map(|h| h.join().expect("experiment thread panicked")).collect()
    })
}
