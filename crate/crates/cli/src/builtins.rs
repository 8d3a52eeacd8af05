//! Named reproductions. Each takes a JSON parameter object (overridable with
//! `--set`) and a seed, and returns one outcome per grid point.

use geofb_core::funcs::{make_quadratic, ProblemSpec, ProxFn, SmoothFn};
use geofb_core::geometry::{exact_cert_counterexample, exact_cert_l1, exact_cert_norm_pow, exact_cert_strongly_convex};
use geofb_core::invprob::{
    landweber_instance, landweber_rate_experiment, sparse_problem, sparse_recovery_experiment, LandweberSpec, SigmaFamily,
    SparseSpec, StepChoice,
};
use geofb_core::linops::{sym_eigen, DenseOperator};
use geofb_core::rates::{loglog_slope, superlinear_bounds_check};
use geofb_core::solver::CheckReport;
use geofb_core::{CompositeProblem, Error, Result, SolveConfig, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::outcome::{band_check, check, fb_trace_checks, finish_with_certificate, order_floor_check, par_map, run_fb_case, solve_config, Outcome};
use crate::table;

pub struct Builtin {
    pub name: &'static str,
    pub summary: &'static str,
    pub defaults: fn() -> Value,
    pub run: fn(&Value, u64) -> Result<Vec<Outcome>>,
}

pub fn builtins() -> &'static [Builtin] {
    &[
        Builtin {
            name: "norm_pow_p",
            summary: "proximal algorithm on ||x||^p, p in {1, 1.5, 2, 4, 6}",
            defaults: || json!({ "p": null, "iters": null }),
            run: run_norm_pow,
        },
        Builtin {
            name: "strongly_convex_quadratic",
            summary: "gradient descent at 1/L on diag(1, 0.1), Q-linear",
            defaults: || json!({ "diag": [1.0, 0.1], "b": [1.0, 1.0], "x0": [0.0, 0.0], "iters": 150 }),
            run: run_quadratic,
        },
        Builtin {
            name: "lasso_small",
            summary: "ISTA on a 3x4 lasso, worst-case rate",
            defaults: || json!({ "alpha": 0.1, "iters": 2000 }),
            run: run_lasso,
        },
        Builtin {
            name: "landweber_source",
            summary: "Landweber from a source set, sigma_k = k^-1, mu in {0.25, 0.5, 1}",
            defaults: || json!({ "mu": null, "q": 1.0, "rho": null, "N": 2000, "delta": 1.0, "iters": 10000, "record_every": 100 }),
            run: run_landweber,
        },
        Builtin {
            name: "counterexample_neg_alpha",
            summary: "gradient descent on x^-alpha without minimizer, alpha in {0.5, 1, 2}",
            defaults: || json!({ "alpha": null, "iters": 100000 }),
            run: run_counterexample,
        },
        Builtin {
            name: "sparse_recovery",
            summary: "ISTA on a 10x16 Gaussian instance, support identification",
            defaults: || json!({ "rows": 10, "cols": 16, "s": 3, "alpha": 0.01, "iters": 5000, "noise": 0.0 }),
            run: run_sparse,
        },
        Builtin {
            name: "figure1_table",
            summary: "regime table with envelope formulas and instances",
            defaults: || json!({}),
            run: run_table,
        },
    ]
}

pub fn find(name: &str) -> Option<&'static Builtin> {
    builtins().iter().find(|b| b.name == name)
}

fn params<P: DeserializeOwned>(v: &Value) -> Result<P> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("parameters: {e}")))
}

fn grid_or(single: Option<f64>, grid: &[f64]) -> Vec<f64> {
    single.map(|v| vec![v]).unwrap_or_else(|| grid.to_vec())
}

fn label(key: &str, v: f64) -> String {
    format!("{key}_{v}")
}

fn problem(g: ProxFn<f64>, h: SmoothFn<f64>) -> Result<CompositeProblem> {
    CompositeProblem::from_spec(ProblemSpec { g, h })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NormPowParams {
    p: Option<f64>,
    iters: Option<usize>,
}

fn run_norm_pow(v: &Value, _seed: u64) -> Result<Vec<Outcome>> {
    let pr: NormPowParams = params(v)?;
    let grid = grid_or(pr.p, &[1.0, 1.5, 2.0, 4.0, 6.0]);
    par_map(&grid, |&p| norm_pow_case(p, pr.iters).map(|mut o| {
        o.variant = Some(label("p", p));
        o
    }))
    .into_iter()
    .collect()
}

/// `p = 1` is the l1 norm on R^2 from `(1, -0.3)` at step 1/4; other `p` use
/// `|x|^p` on R from 1 at step 1.
pub fn norm_pow_case(p: f64, iters: Option<usize>) -> Result<Outcome> {
    if p == 1.0 {
        let prob = problem(ProxFn::L1 { alpha: 1.0 }, SmoothFn::Zero { dim: 2 })?;
        let cfg = SolveConfig::new(0.25, iters.unwrap_or(10)).record_iterates(1);
        let cert = exact_cert_l1(1.0)?.1;
        let mut o = run_fb_case(&prob, &cfg, &[1.0, -0.3], Some(&cert))?;
        let t = o.trace.as_ref().unwrap();
        let zero_at = t.gap.iter().position(|g| *g <= 1e-13);
        let bound = o.metrics["rate_prediction"]["finite_bound_n"].as_u64().map(|b| b as usize);
        let ok = matches!((zero_at, bound), (Some(z), Some(b)) if z <= b);
        o.checks.push(check("finite_termination", ok, None, Some(format!("terminated at {zero_at:?}, bound {bound:?}"))));
        o.metric("termination_index", zero_at);
        o.metric("finite_bound_n", bound);
        return Ok(o);
    }
    if !(p > 1.0) {
        return Err(Error::Config(format!("p must be >= 1, got {p}")));
    }
    let prob = problem(ProxFn::NormPow { p, weight: 1.0 }, SmoothFn::Zero { dim: 1 })?;
    let default_iters = if p < 2.0 {
        12
    } else if p == 2.0 {
        60
    } else {
        100_000
    };
    let cfg = SolveConfig::new(1.0, iters.unwrap_or(default_iters)).record_iterates(1);
    let certs = exact_cert_norm_pow(p, 1.0)?;
    let mut o = run_fb_case(&prob, &cfg, &[1.0], Some(&certs[2]))?;
    let t = o.trace.clone().unwrap();
    if p < 2.0 {
        let r = superlinear_bounds_check(&t, p, certs[1].constant, certs[0].constant, 1.0)?;
        o.checks.push(check("superlinear_bounds", r.pass, r.first_violation, r.kind.clone()));
        let target = 1.0 / (p - 1.0);
        o.checks.push(band_check("superlinear_order", r.order_estimates.last().copied(), target, 0.1));
        o.metric("order_estimates", &r.order_estimates);
        o.metric("expected_order", target);
    } else if p > 2.0 {
        let d = t.dist.as_ref().ok_or_else(|| Error::MissingData("distance".into()))?;
        let gap_slope = o.metrics.get("measured_slope").and_then(Value::as_f64);
        let dist_slope = loglog_slope(d, 0.5).ok().map(|s| s.slope);
        o.checks.push(band_check("gap_slope", gap_slope, -p / (p - 2.0), 0.2));
        o.checks.push(band_check("dist_slope", dist_slope, -1.0 / (p - 2.0), 0.1));
        o.checks.push(order_floor_check("dist_lower_order", d, 1.0 / (p - 2.0)));
        o.metric("dist_slope", dist_slope);
        o.metric("expected_gap_slope", -p / (p - 2.0));
        o.metric("expected_dist_slope", -1.0 / (p - 2.0));
    }
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadParams {
    diag: Vec<f64>,
    b: Vec<f64>,
    x0: Vec<f64>,
    iters: usize,
}

/// `1 - k <= sqrt((1 - k)/(1 + k)) <= 1/sqrt(1 + k)` on `k = 0.01..0.99`.
pub fn classical_factor_comparison() -> CheckReport {
    let bad = (1..100).map(|i| i as f64 / 100.0).find(|&k| {
        let mid = ((1.0 - k) / (1.0 + k)).sqrt();
        !(1.0 - k <= mid && mid <= 1.0 / (1.0 + k).sqrt())
    });
    check("classical_factor_comparison", bad.is_none(), None, bad.map(|k| format!("fails at kappa={k}")))
}

fn run_quadratic(v: &Value, _seed: u64) -> Result<Vec<Outcome>> {
    let pr: QuadParams = params(v)?;
    let q = SymMatrix::diagonal(&pr.diag);
    let eig = sym_eigen(&q).values;
    let (gamma, l) = (eig[0], *eig.last().unwrap());
    if !(gamma > 0.0) {
        return Err(Error::Config("diag must be positive".into()));
    }
    let prob = make_quadratic(q, pr.b)?;
    let cert = exact_cert_strongly_convex(gamma)?.1;
    let cfg = SolveConfig::new(1.0 / l, pr.iters).record_iterates(1);
    let mut o = run_fb_case(&prob, &cfg, &pr.x0, Some(&cert))?;
    let kappa = o.metrics["kappa"].as_f64().unwrap_or(f64::NAN);
    let bound = 1.0 / (1.0 + kappa) + 1e-10;
    let q_meas = o.metrics.get("measured_qfactor").and_then(Value::as_f64);
    let ok = q_meas.is_some_and(|q| q <= bound);
    o.checks.push(check("tail_qfactor", ok, None, Some(format!("{q_meas:?} vs 1/(1+kappa) = {}", 1.0 / (1.0 + kappa)))));
    o.checks.push(classical_factor_comparison());
    o.metric("gamma_over_l", gamma / l);
    Ok(vec![o])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LassoParams {
    alpha: f64,
    iters: usize,
}

pub fn lasso_small_problem(alpha: f64) -> Result<CompositeProblem> {
    let a = DenseOperator::new(3, 4, vec![1.0, 0.2, -0.3, 0.5, 0.1, 1.2, 0.4, -0.2, -0.4, 0.3, 0.9, 0.6])?;
    problem(ProxFn::L1 { alpha }, SmoothFn::LeastSquares { a: a.into(), y: vec![1.0, -0.7, 0.4] })
}

fn run_lasso(v: &Value, _seed: u64) -> Result<Vec<Outcome>> {
    let pr: LassoParams = params(v)?;
    let prob = lasso_small_problem(pr.alpha)?;
    let cfg = solve_config(&prob, 1.0 / prob.lipschitz(), pr.iters);
    let mut o = run_fb_case(&prob, &cfg, &[0.0; 4], None)?;
    let sizes = o.trace.as_ref().and_then(|t| t.support_sizes());
    o.metric("final_support_size", sizes.and_then(|s| s.last().copied()));
    Ok(vec![o])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LandweberParams {
    mu: Option<f64>,
    q: f64,
    rho: Option<f64>,
    #[serde(rename = "N")]
    n: usize,
    delta: f64,
    iters: usize,
    record_every: Option<usize>,
    #[serde(default)]
    lambda: Option<f64>,
}

fn run_landweber(v: &Value, seed: u64) -> Result<Vec<Outcome>> {
    let pr: LandweberParams = params(v)?;
    let family = match pr.rho {
        Some(rho) => SigmaFamily::Geo { rho },
        None => SigmaFamily::Poly { q: pr.q },
    };
    let grid = grid_or(pr.mu, &[0.25, 0.5, 1.0]);
    par_map(&grid, |&mu| {
        let spec = LandweberSpec {
            family: family.clone(),
            n: pr.n,
            mu,
            delta: pr.delta,
            lambda: pr.lambda.map(StepChoice::Fixed).unwrap_or_else(StepChoice::auto),
            iters: pr.iters,
            seed,
            record_every: pr.record_every,
        };
        landweber_case(&spec).map(|mut o| {
            o.variant = Some(label("mu", mu));
            o
        })
    })
    .into_iter()
    .collect()
}

pub fn landweber_case(spec: &LandweberSpec<f64>) -> Result<Outcome> {
    let r = landweber_rate_experiment(spec)?;
    let (dp, _) = landweber_instance(spec)?;
    let prob = dp.problem()?;
    let mut cfg = SolveConfig::new(r.lambda, spec.iters);
    if let Some(k) = spec.record_every {
        cfg = cfg.record_iterates(k);
    }
    let mut o = Outcome { checks: fb_trace_checks(&prob, &cfg, &r.trace)?, ..Default::default() };
    finish_with_certificate(&mut o, &r.trace, r.lambda, prob.lipschitz(), r.certificate.as_ref())?;
    o.checks.extend(r.loja_inline.clone());
    let mu = spec.mu;
    if mu > 0.0 {
        o.checks.push(band_check("gap_slope", Some(r.gap_slope.slope), r.expected_gap_slope, 0.15));
        o.checks.push(band_check("dist_slope", r.dist_slope.as_ref().map(|s| s.slope), -mu, 0.15));
    }
    o.metric("gap_slope_window", &r.gap_slope);
    o.metric("dist_slope_window", &r.dist_slope);
    o.metric("expected_gap_slope", r.expected_gap_slope);
    o.metric("truncation_limited", r.truncation_limited);
    o.metric("fit_end", r.fit_end);
    o.metric("x0_delta_min", r.x0_delta_min);
    o.metric("mu", mu);
    o.trace = Some(r.trace);
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CounterParams {
    alpha: Option<f64>,
    iters: usize,
}

fn run_counterexample(v: &Value, _seed: u64) -> Result<Vec<Outcome>> {
    let pr: CounterParams = params(v)?;
    let grid = grid_or(pr.alpha, &[0.5, 1.0, 2.0]);
    par_map(&grid, |&alpha| {
        counterexample_case(alpha, pr.iters).map(|mut o| {
            o.variant = Some(label("alpha", alpha));
            o
        })
    })
    .into_iter()
    .collect()
}

/// Gradient descent at `1/L` on `x^-alpha` from `x0 = 1`.
pub fn counterexample_case(alpha: f64, iters: usize) -> Result<Outcome> {
    let prob = problem(ProxFn::Zero, SmoothFn::ScalarPowerTail { alpha })?;
    let cert = exact_cert_counterexample(alpha)?;
    let cfg = SolveConfig::new(1.0 / prob.lipschitz(), iters);
    let mut o = run_fb_case(&prob, &cfg, &[1.0], Some(&cert))?;
    let order = alpha / (2.0 + alpha);
    let slope = o.metrics.get("measured_slope").and_then(Value::as_f64);
    o.checks.push(band_check("gap_slope", slope, -order, 0.1));
    let gap = o.trace.as_ref().unwrap().gap.clone();
    o.checks.push(order_floor_check("gap_lower_order", &gap, order));
    o.metric("expected_gap_slope", -order);
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SparseParams {
    rows: usize,
    cols: usize,
    s: usize,
    alpha: f64,
    iters: usize,
    noise: f64,
}

/// Gaussian `A / sqrt(rows)` and an `s`-sparse signal with entries of size
/// at least 1/2, both from `seed`.
pub fn sparse_instance(rows: usize, cols: usize, s: usize, seed: u64) -> Result<(DenseOperator<f64>, Vec<f64>)> {
    if s == 0 || s > cols || rows == 0 {
        return Err(Error::Config("need 0 < s <= cols and rows > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (rows as f64).sqrt();
    let entries: Vec<f64> = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal) / scale).collect();
    let a = DenseOperator::new(rows, cols, entries)?;
    let support = rand::seq::index::sample(&mut rng, cols, s).into_vec();
    let mut x = vec![0.0; cols];
    for k in support {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x[k] = sign * rng.random_range(0.5..1.5);
    }
    Ok((a, x))
}

fn run_sparse(v: &Value, seed: u64) -> Result<Vec<Outcome>> {
    let pr: SparseParams = params(v)?;
    let (a, xtrue) = sparse_instance(pr.rows, pr.cols, pr.s, seed)?;
    let spec = SparseSpec {
        a,
        xtrue,
        alpha: pr.alpha,
        lambda: StepChoice::auto(),
        iters: pr.iters,
        noise: pr.noise,
        seed,
        record_every: Some(1),
    };
    Ok(vec![sparse_case(&spec)?])
}

pub fn sparse_case(spec: &SparseSpec<f64>) -> Result<Outcome> {
    let prob = sparse_problem(spec)?;
    let rep = match sparse_recovery_experiment(spec) {
        Ok(r) => r,
        Err(Error::NotDetected(m)) => {
            let mut o = Outcome::default();
            o.checks.push(check("support_identification", false, None, Some(m)));
            return Ok(o);
        }
        Err(e) => return Err(e),
    };
    let mut cfg = SolveConfig::new(rep.lambda, spec.iters);
    if let Some(k) = spec.record_every {
        cfg = cfg.record_iterates(k);
    }
    let mut o = Outcome { checks: fb_trace_checks(&prob, &cfg, &rep.trace)?, ..Default::default() };
    finish_with_certificate(&mut o, &rep.trace, rep.lambda, prob.lipschitz(), None)?;
    o.checks.push(check("support_identification", true, None, Some(format!("n0 = {}", rep.identification_index))));
    o.checks.push(check(
        "support_matches_reference",
        rep.support_matches_reference,
        None,
        Some(format!("{:?} vs {:?}", rep.support, rep.reference_support)),
    ));
    o.checks.push(rep.q_check.clone());
    let bound = 1.0 / (1.0 + rep.kappa);
    let ok = rep.gap_qfactor.is_none_or(|q| q <= bound + 1e-10);
    o.checks.push(check("tail_qfactor", ok, None, Some(format!("{:?} vs {bound}", rep.gap_qfactor))));
    o.metric("identification_index", rep.identification_index);
    o.metric("support", &rep.support);
    o.metric("reference_support", &rep.reference_support);
    o.metric("gamma_i", rep.gamma_i);
    o.metric("gamma_s", rep.gamma_s);
    o.metric("epsilon_i", rep.epsilon_i);
    o.metric("kappa", rep.kappa);
    o.metric("gap_qfactor", rep.gap_qfactor);
    o.metric("dist_qfactor", rep.dist_qfactor);
    o.trace = Some(rep.trace);
    Ok(o)
}

fn run_table(v: &Value, _seed: u64) -> Result<Vec<Outcome>> {
    let _: std::collections::BTreeMap<String, Value> = params(v)?;
    let rows = table::rows();
    let mut o = Outcome::default();
    let mapped = rows.iter().all(|r| find(r.experiment).is_some());
    o.checks.push(check("rows_map_to_builtins", mapped, None, None));
    o.metric("rows", &rows);
    o.files.push(("table.md".into(), table::render(&rows)));
    Ok(vec![o])
}
