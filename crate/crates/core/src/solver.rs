//! Forward-backward iterations with fully instrumented traces, and checks
//! of the per-iteration inequalities every such trace must satisfy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::{make_least_squares, CompositeProblem, ProxFn};
use crate::geometry::{DomainDesc, InvarianceAttestation, SampleContext};
use crate::sampling::DomainSampler;
use crate::linops::Operator;
use crate::rates::worst_case_constant;
use crate::scalar::Scalar;
use crate::vecops::{check_len, dist, norm, norm_inf, sub};

/// Additive slack, scaled by `1 + magnitude`, for the per-iteration inequalities.
pub const INEQ_TOL: f64 = 1e-10;
/// Additive slack, scaled by `1 + distance`, for the Fejer check.
pub const FEJER_TOL: f64 = 1e-12;
/// Coordinate `i` is active when `|x_i| > SUPPORT_REL_TOL * max(1, ||x||_inf)`.
pub const SUPPORT_REL_TOL: f64 = 1e-12;
/// A reference point counts as a minimizer when its minimal subgradient is this small.
pub const MINIMIZER_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SolveConfig<T: Scalar> {
    pub lambda: T,
    pub max_iters: usize,
    /// Stop once `||x_{n+1} - x_n|| < step_tol`.
    pub step_tol: T,
    pub record_iterates: bool,
    pub record_every: usize,
}

impl<T: Scalar> SolveConfig<T> {
    pub fn new(lambda: T, max_iters: usize) -> Self {
        Self { lambda, max_iters, step_tol: T::zero(), record_iterates: false, record_every: 1 }
    }

    pub fn step_tol(mut self, tol: T) -> Self {
        self.step_tol = tol;
        self
    }

    pub fn record_iterates(mut self, every: usize) -> Self {
        self.record_iterates = true;
        self.record_every = every.max(1);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct TraceMeta<T: Scalar> {
    pub lambda: T,
    pub lipschitz: T,
    pub problem_hash: String,
    pub seed: Option<u64>,
}

/// Per-iteration record of a run, indexed by `n = 0..=N`. `step[0]` is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct Trace<T: Scalar> {
    pub gap: Vec<T>,
    pub step: Vec<T>,
    pub resid: Vec<T>,
    pub dist: Option<Vec<T>>,
    pub support: Option<Vec<Vec<usize>>>,
    pub iterates: Option<Vec<(usize, Vec<T>)>>,
    pub last_iterate: Vec<T>,
    pub meta: TraceMeta<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn len(&self) -> usize {
        self.gap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gap.is_empty()
    }

    /// Index of the final record.
    pub fn last_index(&self) -> usize {
        self.gap.len().saturating_sub(1)
    }

    pub fn support_sizes(&self) -> Option<Vec<usize>> {
        self.support.as_ref().map(|s| s.iter().map(Vec::len).collect())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = Some(seed);
        self
    }
}

/// Active coordinates of `x`.
pub fn support_of<T: Scalar>(x: &[T]) -> Vec<usize> {
    let thr = T::tol(SUPPORT_REL_TOL) * norm_inf(x).max(T::one());
    x.iter().enumerate().filter(|(_, v)| v.abs() > thr).map(|(i, _)| i).collect()
}

/// Orbit of the FB map from `x0`.
pub fn run_fb<T: Scalar>(problem: &CompositeProblem<T>, cfg: &SolveConfig<T>, x0: &[T]) -> Result<Trace<T>> {
    run_fb_observe(problem, cfg, x0, |_, _| Ok(()))
}

/// [`run_fb`] with a callback on every iterate `(n, x_n)`.
pub fn run_fb_observe<T: Scalar, F>(
    problem: &CompositeProblem<T>,
    cfg: &SolveConfig<T>,
    x0: &[T],
    mut observe: F,
) -> Result<Trace<T>>
where
    F: FnMut(usize, &[T]) -> Result<()>,
{
    problem.check_step(cfg.lambda)?;
    check_len(problem.dim(), x0.len())?;
    if !problem.g().in_domain(x0) {
        return Err(Error::Domain("x0 outside dom g".into()));
    }
    if cfg.record_every == 0 {
        return Err(Error::Config("record_every must be positive".into()));
    }
    let track_dist = problem.argmin().dist_available();
    let track_support = matches!(problem.g(), ProxFn::L1 { .. });
    let cap = cfg.max_iters.min(1 << 20) + 1;
    let mut trace = Trace {
        gap: Vec::with_capacity(cap),
        step: Vec::with_capacity(cap),
        resid: Vec::with_capacity(cap),
        dist: track_dist.then(|| Vec::with_capacity(cap)),
        support: track_support.then(Vec::new),
        iterates: cfg.record_iterates.then(Vec::new),
        last_iterate: x0.to_vec(),
        meta: TraceMeta {
            lambda: cfg.lambda,
            lipschitz: problem.lipschitz(),
            problem_hash: problem.spec_hash(),
            seed: None,
        },
    };
    let mut record = |n: usize, x: &[T], step: T, last: bool, trace: &mut Trace<T>| -> Result<()> {
        trace.gap.push(problem.gap(x)?);
        trace.step.push(step);
        trace.resid.push(problem.min_norm_subgrad(x)?);
        if let Some(d) = trace.dist.as_mut() {
            d.push(problem.dist_to_argmin(x).expect("distance oracle available"));
        }
        if let Some(s) = trace.support.as_mut() {
            s.push(support_of(x));
        }
        if let Some(it) = trace.iterates.as_mut() {
            if n % cfg.record_every == 0 || last {
                it.push((n, x.to_vec()));
            }
        }
        observe(n, x)
    };
    let mut x = x0.to_vec();
    record(0, &x, T::zero(), cfg.max_iters == 0, &mut trace)?;
    for n in 0..cfg.max_iters {
        let next = problem.fb_map(cfg.lambda, &x)?;
        let step = dist(&next, &x);
        x = next;
        let stop = step < cfg.step_tol;
        record(n + 1, &x, step, stop || n + 1 == cfg.max_iters, &mut trace)?;
        if stop {
            break;
        }
    }
    trace.last_iterate = x;
    Ok(trace)
}

/// Gradient descent on `(1/2)||Ax - y||^2`.
pub fn run_landweber<T: Scalar>(a: Operator<T>, y: Vec<T>, cfg: &SolveConfig<T>, x0: &[T]) -> Result<Trace<T>> {
    let problem = make_least_squares(a, y)?;
    run_fb(&problem, cfg, x0)
}

/// Outcome of a trace check; `first_violation` is the iteration index at
/// which an inequality first fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub first_violation: Option<usize>,
    pub detail: Option<String>,
}

impl CheckReport {
    fn pass(name: &str) -> Self {
        Self { name: name.into(), pass: true, first_violation: None, detail: None }
    }

    fn fail(name: &str, n: usize, detail: String) -> Self {
        Self { name: name.into(), pass: false, first_violation: Some(n), detail: Some(detail) }
    }
}

fn slack<T: Scalar>(m: T) -> T {
    T::tol(INEQ_TOL) * (T::one() + m.abs())
}

/// Sufficient decrease `a step_{n+1}^2 <= gap_n - gap_{n+1}` with
/// `a = (2 - lambda L) / (2 lambda)`, and the subgradient sandwich
/// `resid_{n+1} <= step_{n+1} / lambda <= resid_n`.
pub fn check_fb_estimates<T: Scalar>(
    trace: &Trace<T>,
    problem: &CompositeProblem<T>,
    cfg: &SolveConfig<T>,
) -> Result<CheckReport> {
    check_descent_estimates(trace, cfg.lambda, problem.lipschitz())
}

/// [`check_fb_estimates`] with explicit `lambda` and `L`.
pub fn check_descent_estimates<T: Scalar>(trace: &Trace<T>, lambda: T, lipschitz: T) -> Result<CheckReport> {
    let n = trace.len();
    if trace.step.len() != n || trace.resid.len() != n {
        return Err(Error::MissingData("trace needs gap, step and resid arrays of equal length".into()));
    }
    let name = "fb_estimates";
    let a = (T::lit(2.0) - lambda * lipschitz) / (lambda + lambda);
    for k in 0..n.saturating_sub(1) {
        let (g0, g1, s1) = (trace.gap[k], trace.gap[k + 1], trace.step[k + 1]);
        if a * s1 * s1 > g0 - g1 + slack(g0) {
            return Ok(CheckReport::fail(name, k + 1, format!("sufficient decrease: a*step^2={} > gap drop {}", a * s1 * s1, g0 - g1)));
        }
        let ratio = s1 / lambda;
        if trace.resid[k + 1] > ratio + slack(ratio) {
            return Ok(CheckReport::fail(name, k + 1, format!("resid {} > step/lambda {}", trace.resid[k + 1], ratio)));
        }
        if ratio > trace.resid[k] + slack(trace.resid[k]) {
            return Ok(CheckReport::fail(name, k + 1, format!("step/lambda {} > previous resid {}", ratio, trace.resid[k])));
        }
    }
    Ok(CheckReport::pass(name))
}

fn first_increase<T: Scalar>(v: &[T]) -> Option<usize> {
    v.windows(2).position(|w| w[1] > w[0] + slack(w[0])).map(|k| k + 1)
}

/// Gap, residual and distance sequences are nonincreasing.
pub fn check_monotonicity<T: Scalar>(trace: &Trace<T>) -> CheckReport {
    let name = "monotonicity";
    let mut seqs: Vec<(&str, &[T])> = vec![("gap", &trace.gap), ("resid", &trace.resid)];
    if let Some(d) = &trace.dist {
        seqs.push(("dist", d));
    }
    let worst = seqs
        .into_iter()
        .filter_map(|(label, s)| first_increase(s).map(|n| (n, label)))
        .min();
    match worst {
        Some((n, label)) => CheckReport::fail(name, n, format!("{label} increased")),
        None => CheckReport::pass(name),
    }
}

/// `||x_{n+1} - xbar|| <= ||x_n - xbar||` along the recorded iterates.
pub fn check_fejer<T: Scalar>(trace: &Trace<T>, xbar: &[T], problem: &CompositeProblem<T>) -> Result<CheckReport> {
    let its = trace
        .iterates
        .as_ref()
        .ok_or_else(|| Error::MissingData("Fejer check needs recorded iterates".into()))?;
    let r = problem.min_norm_subgrad(xbar)?;
    if r > T::tol(MINIMIZER_TOL) {
        return Err(Error::Precondition(format!("reference point is not a minimizer (residual {r})")));
    }
    let name = "fejer";
    for w in its.windows(2) {
        let (d0, d1) = (dist(&w[0].1, xbar), dist(&w[1].1, xbar));
        if d1 > d0 + T::tol(FEJER_TOL) * (T::one() + d0) {
            return Ok(CheckReport::fail(name, w[1].0, format!("distance grew from {d0} to {d1}")));
        }
    }
    Ok(CheckReport::pass(name))
}

/// `gap_n <= C dist_0^2 / (2 lambda n)` for `n >= 1`. `None` when the trace
/// carries no distances.
pub fn check_worst_case<T: Scalar>(trace: &Trace<T>) -> Option<CheckReport> {
    let d = trace.dist.as_ref()?;
    let name = "worst_case";
    let c = worst_case_constant(trace.meta.lambda, trace.meta.lipschitz).ok()?;
    let d0 = d[0];
    let two = T::lit(2.0);
    for n in 1..trace.len() {
        let bound = c * d0 * d0 / (two * trace.meta.lambda * T::lit(n as f64));
        if trace.gap[n] > bound + slack(bound) {
            return Some(CheckReport::fail(name, n, format!("gap {} above bound {}", trace.gap[n], bound)));
        }
    }
    Some(CheckReport::pass(name))
}

/// Smallest `n0` after which the support never changes, or `None` when it
/// still moves during the last 10% of the run.
pub fn detect_support_identification<T: Scalar>(trace: &Trace<T>) -> Result<Option<usize>> {
    let s = trace
        .support
        .as_ref()
        .ok_or_else(|| Error::MissingData("trace has no support record".into()))?;
    let Some(last) = s.last() else {
        return Ok(None);
    };
    let n_last = s.len() - 1;
    let mut n0 = n_last;
    while n0 > 0 && s[n0 - 1] == *last {
        n0 -= 1;
    }
    let tail = n_last.div_ceil(10);
    if n0 > n_last - tail {
        return Ok(None);
    }
    Ok(Some(n0))
}

/// A point of the domain whose image left it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct InvarianceCounterexample<T: Scalar> {
    pub point: Vec<T>,
    pub image: Vec<T>,
    pub lambda: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct InvarianceReport<T: Scalar> {
    pub pass: bool,
    pub checked: usize,
    pub counterexample: Option<InvarianceCounterexample<T>>,
    pub attestation: Option<InvarianceAttestation<T>>,
}

/// Samples the domain and verifies `T_lambda x` stays inside for every
/// `lambda` in the list.
pub fn check_fb_invariance<T: Scalar>(
    domain: &DomainDesc<T>,
    problem: &CompositeProblem<T>,
    lambdas: &[T],
    samples: usize,
    seed: u64,
) -> Result<InvarianceReport<T>> {
    if lambdas.is_empty() {
        return Err(Error::Config("at least one step size is required".into()));
    }
    for &l in lambdas {
        problem.check_step(l)?;
    }
    let ctx = SampleContext::with_problem(problem);
    let mut sampler = DomainSampler::new(domain, ctx, ChaCha8Rng::seed_from_u64(seed))?;
    let mut checked = 0;
    for _ in 0..samples {
        let x = sampler.sample()?;
        for &l in lambdas {
            let image = problem.fb_map(l, &x)?;
            checked += 1;
            if !domain.contains(&ctx, &image)? {
                return Ok(InvarianceReport {
                    pass: false,
                    checked,
                    counterexample: Some(InvarianceCounterexample { point: x, image, lambda: l }),
                    attestation: None,
                });
            }
        }
    }
    Ok(InvarianceReport {
        pass: true,
        checked,
        counterexample: None,
        attestation: Some(InvarianceAttestation::new(domain.clone(), lambdas.to_vec(), samples, seed)),
    })
}

/// `||x_n - xbar||` for each recorded iterate.
pub fn iterate_distances<T: Scalar>(trace: &Trace<T>, xbar: &[T]) -> Option<Vec<(usize, T)>> {
    trace.iterates.as_ref().map(|its| its.iter().map(|(n, x)| (*n, norm(&sub(x, xbar)))).collect())
}
