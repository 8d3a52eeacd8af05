//! Linear inverse problems on diagonal operators: source sets, Landweber
//! rate experiments, and sparse recovery under restricted injectivity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::{make_lasso, make_least_squares, CompositeProblem, ProxFn, SmoothFn};
use crate::geometry::{CertKind, DomainDesc, GeometryCertificate, Provenance};
use crate::linops::{gram_norm, restricted_min_eig, spectral_power, support_min_eig, DenseOperator, DiagonalOperator, Operator, SupportSet};
use crate::rates::{
    certify_trace, kappa, linear_backward, loglog_slope, predict, predict_from_certificate, predict_worst_case,
    tail_qfactor, CertReport, RatePrediction, SlopeFit,
};
use crate::scalar::Scalar;
use crate::solver::{detect_support_identification, run_fb_observe, support_of, CheckReport, SolveConfig, Trace};
use crate::vecops::{check_len, norm, norm_sq};

/// `delta_min` above this is reported as numerically divergent.
pub const OVERFLOW_LIMIT: f64 = 1e150;
/// Slack on source-set membership along Landweber runs.
pub const SOURCE_TOL: f64 = 1e-10;
/// A mode pollutes the fit once it carries this share of the gap.
pub const TRUNCATION_SHARE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SourceSpec<T: Scalar> {
    pub mu: T,
    pub delta: T,
}

impl<T: Scalar> SourceSpec<T> {
    pub fn new(mu: T, delta: T) -> Result<Self> {
        if !(mu > T::lit(-0.5)) || !mu.is_finite() {
            return Err(Error::Domain(format!("mu={mu} must exceed -1/2")));
        }
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::Domain("delta must be positive".into()));
        }
        Ok(Self { mu, delta })
    }
}

/// `(1/2)||Ax - y||^2` with diagonal `A`; `ybar` is `y` with kernel
/// coordinates zeroed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct DiagonalInverseProblem<T: Scalar> {
    a: DiagonalOperator<T>,
    y: Vec<T>,
    ybar: Vec<T>,
}

impl<T: Scalar> DiagonalInverseProblem<T> {
    pub fn new(a: DiagonalOperator<T>, y: Vec<T>) -> Result<Self> {
        check_len(a.dim(), y.len())?;
        let ybar = a.sigmas().iter().zip(&y).map(|(s, v)| if *s > T::zero() { *v } else { T::zero() }).collect();
        Ok(Self { a, y, ybar })
    }

    /// Reads `A` and `y` off a least-squares problem with diagonal `A` and `g = 0`.
    pub fn from_problem(p: &CompositeProblem<T>) -> Result<Self> {
        match (p.g(), p.h()) {
            (ProxFn::Zero, SmoothFn::LeastSquares { a: Operator::Diagonal(d), y }) => Self::new(d.clone(), y.clone()),
            _ => Err(Error::Precondition("source sets need a diagonal least-squares problem".into())),
        }
    }

    pub fn operator(&self) -> &DiagonalOperator<T> {
        &self.a
    }

    pub fn sigmas(&self) -> &[T] {
        self.a.sigmas()
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn ybar(&self) -> &[T] {
        &self.ybar
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// `A^dagger y`.
    pub fn min_norm_solution(&self) -> Vec<T> {
        crate::linops::pinv_apply(&self.a, &self.y).expect("lengths checked")
    }

    pub fn problem(&self) -> Result<CompositeProblem<T>> {
        make_least_squares(self.a.clone().into(), self.y.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SourcePoint<T: Scalar> {
    pub x0: Vec<T>,
    pub w: Vec<T>,
    pub w_norm: T,
}

/// `x0 = A^dagger ybar + (A*A)^mu w`, coordinatewise
/// `ybar_k / sigma_k + sigma_k^(2 mu) w_k` on `sigma_k > 0`. For `mu < 0`
/// the same formula solves `A x0 = ybar + (AA*)^(mu + 1/2) w`.
pub fn construct_source_point<T: Scalar>(
    p: &DiagonalInverseProblem<T>,
    spec: &SourceSpec<T>,
    w: &[T],
) -> Result<SourcePoint<T>> {
    check_len(p.dim(), w.len())?;
    let s = p.sigmas();
    if w.iter().zip(s).any(|(wk, sk)| *sk == T::zero() && *wk != T::zero()) {
        return Err(Error::Domain("w has components in Ker A".into()));
    }
    let w_norm = norm(w);
    if w_norm > spec.delta * (T::one() + T::tol(1e-12)) {
        return Err(Error::Domain(format!("||w||={w_norm} exceeds delta={}", spec.delta)));
    }
    let two_mu = spec.mu + spec.mu;
    let x0 = s
        .iter()
        .zip(p.ybar())
        .zip(w)
        .map(|((sk, yk), wk)| if *sk > T::zero() { *yk / *sk + sk.powf(two_mu) * *wk } else { T::zero() })
        .collect();
    Ok(SourcePoint { x0, w: w.to_vec(), w_norm })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum Membership<T: Scalar> {
    /// `delta_min` is the smallest radius with `x` in the source set.
    Member { delta_min: T, overflow: bool },
    NotMember,
}

impl<T: Scalar> Membership<T> {
    pub fn delta_min(&self) -> Option<T> {
        match self {
            Membership::Member { delta_min, overflow: false } => Some(*delta_min),
            _ => None,
        }
    }
}

fn omega<T: Scalar>(x: &[T], p: &DiagonalInverseProblem<T>, mu: T) -> Result<Option<Vec<T>>> {
    check_len(p.dim(), x.len())?;
    let e = mu + mu + T::one();
    let mut out = Vec::with_capacity(x.len());
    for ((sk, xk), yk) in p.sigmas().iter().zip(x).zip(p.ybar()) {
        let r = *sk * *xk - *yk;
        if *sk > T::zero() {
            out.push(r / sk.powf(e));
        } else if r != T::zero() {
            return Ok(None);
        } else {
            out.push(T::zero());
        }
    }
    Ok(Some(out))
}

/// `omega_k = (A x - ybar)_k / sigma_k^(2 mu + 1)` and `delta_min = ||omega||`.
pub fn membership_check<T: Scalar>(x: &[T], p: &DiagonalInverseProblem<T>, mu: T) -> Result<Membership<T>> {
    let Some(w) = omega(x, p, mu)? else {
        return Ok(Membership::NotMember);
    };
    let limit = T::lit(OVERFLOW_LIMIT);
    let big = w.iter().any(|v| !v.is_finite() || v.abs() > limit);
    let d = norm(&w);
    let overflow = big || !d.is_finite() || d > limit;
    Ok(Membership::Member { delta_min: if overflow { T::infinity() } else { d }, overflow })
}

/// Lojasiewicz certificate of least squares on a source set:
/// `p = 2 + 1/mu`, `c = 2^(-(mu+1)/(2mu+1)) delta^(1/(1+2mu))`.
pub fn loja_on_source_set<T: Scalar>(spec: &SourceSpec<T>) -> Result<GeometryCertificate<T>> {
    if spec.mu == T::zero() {
        return Err(Error::Domain("mu = 0 gives no Lojasiewicz exponent".into()));
    }
    let mu = spec.mu;
    let two = T::lit(2.0);
    let d = two * mu + T::one();
    let p = two + mu.recip();
    let c = two.powf(-(mu + T::one()) / d) * spec.delta.powf(d.recip());
    GeometryCertificate::new(
        CertKind::Lojasiewicz,
        p,
        c,
        DomainDesc::SourceSet { mu, delta: spec.delta },
        Provenance::Exact,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct WitnessReport<T: Scalar> {
    pub k: usize,
    pub sigma: T,
    pub p: T,
    /// `f(v^k)^(1-1/p) / ||grad f(v^k)||`.
    pub ratio: T,
    pub c: T,
    pub sound: bool,
}

fn witness_point<T: Scalar>(sigmas: &[T], mu: T, delta: T, k: usize) -> Result<Vec<T>> {
    let s = *sigmas.get(k).ok_or_else(|| Error::Domain(format!("index {k} out of range")))?;
    if !(s > T::zero()) {
        return Err(Error::Domain("witness needs sigma_k > 0".into()));
    }
    let mut v = vec![T::zero(); sigmas.len()];
    v[k] = delta * s.powf(mu + mu);
    Ok(v)
}

/// Ratio of the two sides of the Lojasiewicz inequality at exponent `p`,
/// evaluated at `v^k = delta sigma_k^(2 mu) e_k` for `f = (1/2)||Ax||^2`.
pub fn witness_ratio<T: Scalar>(sigmas: &[T], mu: T, delta: T, k: usize, p: T) -> Result<T> {
    let v = witness_point(sigmas, mu, delta, k)?;
    let prob = make_least_squares(DiagonalOperator::new(sigmas.to_vec())?.into(), vec![T::zero(); sigmas.len()])?;
    let gap = prob.gap(&v)?;
    let r = prob.min_norm_subgrad(&v)?;
    Ok(gap.powf(T::one() - p.recip()) / r)
}

/// Witness `v^k` for the sharpness of the source-set certificate.
pub fn optimality_witness<T: Scalar>(sigmas: &[T], mu: T, delta: T, k: usize) -> Result<WitnessReport<T>> {
    if !(mu > T::zero()) {
        return Err(Error::Domain("witnesses need mu > 0".into()));
    }
    let cert = loja_on_source_set(&SourceSpec::new(mu, delta)?)?;
    let ratio = witness_ratio(sigmas, mu, delta, k, cert.p)?;
    Ok(WitnessReport {
        k,
        sigma: sigmas[k],
        p: cert.p,
        ratio,
        c: cert.constant,
        sound: ratio <= cert.constant * (T::one() + T::tol(1e-12)),
    })
}

/// First witness index whose ratio exceeds a claimed constant, if any.
pub fn refute_constant<T: Scalar>(sigmas: &[T], mu: T, delta: T, claimed: T) -> Result<Option<usize>> {
    let p = T::lit(2.0) + mu.recip();
    for k in 0..sigmas.len() {
        if sigmas[k] > T::zero() && witness_ratio(sigmas, mu, delta, k, p)? > claimed {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SourceInvarianceRun<T: Scalar> {
    pub lambda: T,
    pub delta_min: Vec<T>,
    pub pass: bool,
    pub first_violation: Option<usize>,
}

/// Landweber runs from `x0` in the source set: every iterate stays in it and
/// `||omega_n||` never grows.
pub fn source_invariance_check<T: Scalar>(
    p: &DiagonalInverseProblem<T>,
    spec: &SourceSpec<T>,
    lambdas: &[T],
    x0: &[T],
    n_steps: usize,
) -> Result<Vec<SourceInvarianceRun<T>>> {
    let tol = T::tol(SOURCE_TOL);
    let bound = spec.delta * (T::one() + tol) + tol;
    let d0 = membership_check(x0, p, spec.mu)?
        .delta_min()
        .ok_or_else(|| Error::Precondition("x0 is not in the source set".into()))?;
    if d0 > bound {
        return Err(Error::Precondition(format!("x0 has delta_min={d0} > delta={}", spec.delta)));
    }
    let prob = p.problem()?;
    let mut out = Vec::new();
    for &lambda in lambdas {
        let mut ds: Vec<T> = Vec::with_capacity(n_steps + 1);
        let mut first = None;
        let cfg = SolveConfig::new(lambda, n_steps);
        run_fb_observe(&prob, &cfg, x0, |n, x| {
            let d = membership_check(x, p, spec.mu)?.delta_min().unwrap_or(T::infinity());
            let grew = ds.last().is_some_and(|prev: &T| d > *prev * (T::one() + tol) + tol);
            if first.is_none() && (d > bound || grew) {
                first = Some(n);
            }
            ds.push(d);
            Ok(())
        })?;
        out.push(SourceInvarianceRun { lambda, delta_min: ds, pass: first.is_none(), first_violation: first });
    }
    Ok(out)
}

/// Singular value families `sigma_k`, `k = 1..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum SigmaFamily<T: Scalar> {
    /// `sigma_k = k^(-q)`.
    Poly { q: T },
    /// `sigma_k = rho^k`.
    Geo { rho: T },
}

impl<T: Scalar> SigmaFamily<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaFamily::Poly { q } if *q > T::zero() => Ok(()),
            SigmaFamily::Geo { rho } if *rho > T::zero() && *rho < T::one() => Ok(()),
            _ => Err(Error::Config(format!("invalid singular value family {self:?}"))),
        }
    }

    /// `sigma_k` for a one-based index.
    pub fn sigma(&self, k: usize) -> T {
        let kf = T::lit(k as f64);
        match self {
            SigmaFamily::Poly { q } => kf.powf(-*q),
            SigmaFamily::Geo { rho } => rho.powf(kf),
        }
    }

    pub fn sigmas(&self, n: usize) -> Vec<T> {
        (1..=n).map(|k| self.sigma(k)).collect()
    }

    /// `log(sigma_k / sigma_{k+1})`, the log-spectral spacing at mode `k`.
    pub fn log_spacing(&self, k: usize) -> T {
        match self {
            SigmaFamily::Poly { q } => *q * (T::one() + T::lit(k as f64).recip()).ln(),
            SigmaFamily::Geo { rho } => -rho.ln(),
        }
    }
}

/// Step size: `"auto"` is `1 / ||A*A||`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum StepChoice<T: Scalar> {
    Auto(AutoTag),
    Fixed(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl<T: Scalar> StepChoice<T> {
    pub fn auto() -> Self {
        StepChoice::Auto(AutoTag::Auto)
    }

    pub fn resolve(&self, lipschitz: T) -> T {
        match self {
            StepChoice::Auto(_) => {
                if lipschitz > T::zero() {
                    lipschitz.recip()
                } else {
                    T::one()
                }
            }
            StepChoice::Fixed(v) => *v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct LandweberSpec<T: Scalar> {
    #[serde(flatten)]
    pub family: SigmaFamily<T>,
    #[serde(rename = "N")]
    pub n: usize,
    pub mu: T,
    pub delta: T,
    pub lambda: StepChoice<T>,
    pub iters: usize,
    pub seed: u64,
    /// Keep every k-th iterate in the trace.
    #[serde(default)]
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct LandweberResult<T: Scalar> {
    pub trace: Trace<T>,
    pub lambda: T,
    pub prediction: RatePrediction<T>,
    pub certificate: Option<GeometryCertificate<T>>,
    pub report: CertReport<T>,
    pub gap_slope: SlopeFit<T>,
    /// Slope of `||x_n - xbar_0||`; only for `mu > 0`.
    pub dist_slope: Option<SlopeFit<T>>,
    pub expected_gap_slope: T,
    pub truncation_limited: bool,
    /// Last index used for slope fits.
    pub fit_end: usize,
    /// Inline Lojasiewicz check at every iterate (`mu != 0`).
    pub loja_inline: Option<CheckReport>,
    pub x0_delta_min: T,
}

/// Unit-free random direction with log-uniform spectral weights
/// `w_k = s_k sqrt(log(sigma_k/sigma_{k+1}))`, scaled to norm `delta`.
pub fn log_uniform_direction<T: Scalar>(family: &SigmaFamily<T>, n: usize, delta: T, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut w: Vec<T> = (1..=n)
        .map(|k| {
            let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
            sign * family.log_spacing(k).sqrt()
        })
        .collect();
    let nw = norm(&w);
    for v in &mut w {
        *v = *v * delta / nw;
    }
    w
}

/// The truncated problem and the source point `x0` of a Landweber experiment.
pub fn landweber_instance<T: Scalar>(spec: &LandweberSpec<T>) -> Result<(DiagonalInverseProblem<T>, Vec<T>)> {
    spec.family.validate()?;
    if spec.n == 0 {
        return Err(Error::Config("need N >= 1".into()));
    }
    let src = SourceSpec::new(spec.mu, spec.delta)?;
    let sig = spec.family.sigmas(spec.n);
    let a = DiagonalOperator::new(sig.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dir = log_uniform_direction(&spec.family, spec.n, spec.delta, &mut rng);
    let (y, w) = if spec.mu >= T::zero() {
        let z: Vec<T> = (0..spec.n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        (a.apply(&z)?, dir)
    } else {
        // data with a source element of norm delta; start at x0 = 0
        let e = spec.mu + spec.mu + T::one();
        let y = sig.iter().zip(&dir).map(|(s, o)| s.powf(e) * *o).collect();
        (y, dir.iter().map(|v| -*v).collect())
    };
    let dp = DiagonalInverseProblem::new(a, y)?;
    let sp = construct_source_point(&dp, &src, &w)?;
    Ok((dp, sp.x0))
}

/// Landweber on a truncated diagonal operator started in a source set,
/// certified against the predicted envelope with log-log slope fits.
pub fn landweber_rate_experiment<T: Scalar>(spec: &LandweberSpec<T>) -> Result<LandweberResult<T>> {
    if spec.iters < 10 {
        return Err(Error::Config("need at least 10 iterations".into()));
    }
    let src = SourceSpec::new(spec.mu, spec.delta)?;
    let (dp, x0) = landweber_instance(spec)?;
    let sig = dp.sigmas().to_vec();
    let x0_delta_min = membership_check(&x0, &dp, spec.mu)?.delta_min().unwrap_or(T::infinity());
    let prob = dp.problem()?;
    let lipschitz = prob.lipschitz();
    let lambda = spec.lambda.resolve(lipschitz);
    let cert = if spec.mu != T::zero() { Some(loja_on_source_set(&src)?) } else { None };

    let mut cfg = SolveConfig::new(lambda, spec.iters);
    if let Some(k) = spec.record_every {
        cfg = cfg.record_iterates(k);
    }
    let last = spec.n - 1;
    let (sl, yl) = (sig[last], dp.ybar()[last]);
    let mut tail_share: Vec<T> = Vec::with_capacity(spec.iters + 1);
    let mut loja_fail: Option<(usize, String)> = None;
    let inline_tol = T::tol(1e-9);
    let trace = run_fb_observe(&prob, &cfg, &x0, |n, x| {
        let gap = prob.gap(x)?;
        let r = sl * x[last] - yl;
        let mode = T::lit(0.5) * r * r;
        tail_share.push(if gap > T::zero() { mode / gap } else { T::zero() });
        if let (Some(c), None) = (&cert, &loja_fail) {
            let res = prob.min_norm_subgrad(x)?;
            let lhs = gap.max(T::zero()).powf(T::one() - c.p.recip());
            if res > T::zero() && lhs > c.constant * res * (T::one() + inline_tol) + T::tol(1e-300) {
                loja_fail = Some((n, format!("lhs {lhs} > c*resid {}", c.constant * res)));
            }
        }
        Ok(())
    })?;

    let r0 = trace.gap[0];
    let prediction = match &cert {
        Some(c) => predict_from_certificate(c, lambda, lipschitz, r0)?,
        None => {
            let d0 = trace.dist.as_ref().map(|d| d[0]).unwrap_or(T::zero());
            predict_worst_case(lambda, lipschitz, d0, r0)?
        }
    };
    let report = certify_trace(&trace, &prediction)?;

    let share = T::lit(TRUNCATION_SHARE);
    let polluted = tail_share.iter().position(|s| *s > share);
    let truncation_limited = polluted.is_some();
    let fit_end = polluted.map(|n| n.saturating_sub(1)).unwrap_or(trace.last_index());
    let gap_slope = loglog_slope(&trace.gap[..=fit_end], 0.5)?;
    let dist_slope = if spec.mu > T::zero() {
        trace.dist.as_ref().map(|d| loglog_slope(&d[..=fit_end], 0.5)).transpose()?
    } else {
        None
    };
    let loja_inline = cert.as_ref().map(|_| CheckReport {
        name: "lojasiewicz_inline".into(),
        pass: loja_fail.is_none(),
        first_violation: loja_fail.as_ref().map(|f| f.0),
        detail: loja_fail.map(|f| f.1),
    });
    let expected_gap_slope = -(spec.mu + spec.mu + T::one());
    Ok(LandweberResult {
        trace,
        lambda,
        prediction,
        certificate: cert,
        report,
        gap_slope,
        dist_slope,
        expected_gap_slope,
        truncation_limited,
        fit_end,
        loja_inline,
        x0_delta_min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct InterpolationReport<T: Scalar> {
    pub lhs: T,
    pub rhs: T,
    pub ok: bool,
}

/// `||(AA*)^alpha x|| <= ||(AA*)^beta x||^(alpha/beta) ||x||^(1 - alpha/beta)`.
pub fn interpolation_check<T: Scalar>(d: &DiagonalOperator<T>, x: &[T], alpha: T, beta: T) -> Result<InterpolationReport<T>> {
    if !(alpha >= T::zero() && alpha < beta) {
        return Err(Error::Domain("need 0 <= alpha < beta".into()));
    }
    check_len(d.dim(), x.len())?;
    let lhs = norm(&spectral_power(d, alpha).apply(x)?);
    let t = alpha / beta;
    let rhs = norm(&spectral_power(d, beta).apply(x)?).powf(t) * norm(x).powf(T::one() - t);
    Ok(InterpolationReport { lhs, rhs, ok: lhs <= rhs * (T::one() + T::tol(1e-12)) })
}

/// For `x` in `Ker A^perp`, the `y = (sqrt(AA*))^dagger A x` with
/// `A x = sqrt(AA*) y`; it has the same norm as `x`.
pub fn sqrt_range_preimage<T: Scalar>(d: &DiagonalOperator<T>, x: &[T]) -> Result<Vec<T>> {
    let ax = d.apply(x)?;
    let root = spectral_power(d, T::lit(0.5));
    crate::linops::pinv_apply(&root, &ax)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SparseSpec<T: Scalar> {
    pub a: DenseOperator<T>,
    pub xtrue: Vec<T>,
    pub alpha: T,
    pub lambda: StepChoice<T>,
    pub iters: usize,
    #[serde(default)]
    pub noise: T,
    pub seed: u64,
    #[serde(default)]
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SparseReport<T: Scalar> {
    pub trace: Trace<T>,
    pub lambda: T,
    pub identification_index: usize,
    pub support: Vec<usize>,
    pub reference_support: Vec<usize>,
    pub support_matches_reference: bool,
    pub gamma_i: T,
    pub gamma_s: T,
    pub epsilon_i: T,
    pub kappa: T,
    pub gap_qfactor: Option<T>,
    pub dist_qfactor: Option<T>,
    /// `gap_{n+1} <= gap_n / (1 + kappa)` for `n >= n0` above the floor.
    pub q_check: CheckReport,
}

fn floored_qfactor<T: Scalar>(series: &[T], floor: T) -> Option<T> {
    series
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .fold(None, |m, v| Some(m.map_or(v, |m: T| m.max(v))))
}

/// The lasso instance `alpha ||x||_1 + (1/2)||Ax - y||^2`, `y = A xtrue + noise`.
pub fn sparse_problem<T: Scalar>(spec: &SparseSpec<T>) -> Result<CompositeProblem<T>> {
    let a = &spec.a;
    check_len(a.cols(), spec.xtrue.len())?;
    let mut y = a.apply(&spec.xtrue)?;
    if spec.noise > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in &mut y {
            *v = *v + spec.noise * T::lit(rng.sample::<f64, _>(StandardNormal));
        }
    }
    make_lasso(a.clone().into(), y, spec.alpha)
}

/// ISTA on `alpha ||x||_1 + (1/2)||Ax - y||^2` with `y = A xtrue + noise`:
/// detects support identification and compares the tail rate with the
/// linear factor predicted from the restricted eigenvalue on that support.
pub fn sparse_recovery_experiment<T: Scalar>(spec: &SparseSpec<T>) -> Result<SparseReport<T>> {
    let a = &spec.a;
    check_len(a.cols(), spec.xtrue.len())?;
    let s = support_of(&spec.xtrue).len().max(1);
    let top = gram_norm(&Operator::Dense(a.clone())).value;
    let gamma_s = restricted_min_eig(a, s)?;
    if gamma_s <= T::tol(crate::funcs::RANK_REL_TOL) * top {
        return Err(Error::Precondition(format!("restricted eigenvalue gamma_{s} = {gamma_s} vanishes")));
    }
    let prob = sparse_problem(spec)?;
    let lipschitz = prob.lipschitz();
    let lambda = spec.lambda.resolve(lipschitz);
    let mut cfg = SolveConfig::new(lambda, spec.iters);
    if let Some(k) = spec.record_every {
        cfg = cfg.record_iterates(k);
    }
    let trace = crate::solver::run_fb(&prob, &cfg, &vec![T::zero(); a.cols()])?;
    let n0 = detect_support_identification(&trace)?
        .ok_or_else(|| Error::NotDetected(format!("support still changing after {} iterations", spec.iters)))?;
    let support = trace.support.as_ref().unwrap()[n0].clone();
    let reference_support = prob.argmin().representative().map(support_of).unwrap_or_default();
    let set = SupportSet::new(support.clone(), a.cols())?;
    let gamma_i = support_min_eig(a, &set)?;
    if !(gamma_i > T::zero()) {
        return Err(Error::Precondition("identified support has a singular Gram matrix".into()));
    }
    let epsilon_i = linear_backward(gamma_i, lambda, lipschitz)?;
    // conditioned(2, gamma_I) converts to c = sqrt(2 / gamma_I)
    let c = (T::lit(2.0) / gamma_i).sqrt();
    let k = kappa(lambda, lipschitz, c)?;

    let inf = prob.inf_value();
    let gap_floor = T::tol(1e-10) * (T::one() + inf.abs());
    let xref_norm = prob.argmin().representative().map(norm).unwrap_or(T::zero());
    let dist_floor = T::tol(1e-9) * (T::one() + xref_norm);
    let tail_gap = &trace.gap[n0..];
    let gap_qfactor = floored_qfactor(tail_gap, gap_floor);
    let dist_qfactor = trace.dist.as_ref().and_then(|d| floored_qfactor(&d[n0..], dist_floor));
    let q = (T::one() + k).recip();
    let viol = tail_gap
        .windows(2)
        .position(|w| w[0] > gap_floor && w[1] > gap_floor && w[1] > w[0] * q * (T::one() + T::tol(1e-9)));
    let q_check = CheckReport {
        name: "sparse_q_linear".into(),
        pass: viol.is_none(),
        first_violation: viol.map(|i| n0 + i + 1),
        detail: viol.map(|_| format!("gap ratio above 1/(1+kappa) = {q}")),
    };
    let support_matches_reference = support == reference_support;
    Ok(SparseReport {
        trace,
        lambda,
        identification_index: n0,
        support,
        reference_support,
        support_matches_reference,
        gamma_i,
        gamma_s,
        epsilon_i,
        kappa: k,
        gap_qfactor,
        dist_qfactor,
        q_check,
    })
}

/// Prediction used for the Q-linear tail after identification.
pub fn sparse_prediction<T: Scalar>(rep: &SparseReport<T>) -> Result<RatePrediction<T>> {
    let r0 = rep.trace.gap[rep.identification_index].max(T::zero());
    predict(T::lit(2.0), rep.kappa, r0, None, None)
}

/// `delta_min` of `A^dagger y + t e_k` as `sigma_k` shrinks: `|t| sigma_k^(-2 mu)`.
pub fn delta_min_blowup<T: Scalar>(p: &DiagonalInverseProblem<T>, mu: T, t: T) -> Result<Vec<T>> {
    let base = p.min_norm_solution();
    (0..p.dim())
        .map(|k| {
            let mut x = base.clone();
            x[k] = x[k] + t;
            Ok(membership_check(&x, p, mu)?.delta_min().unwrap_or(T::infinity()))
        })
        .collect()
}

/// Squared norm of the minimal-norm solution, which diverges with `N` when
/// the data lie outside the domain of the pseudo-inverse.
pub fn min_norm_solution_energy<T: Scalar>(p: &DiagonalInverseProblem<T>) -> T {
    norm_sq(&p.min_norm_solution())
}

/// Tail Q-factor of the gap over the last quarter of a trace.
pub fn gap_tail_qfactor<T: Scalar>(trace: &Trace<T>) -> Option<T> {
    tail_qfactor(&trace.gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn dip(s: &[f64], y: &[f64]) -> DiagonalInverseProblem<f64> {
        DiagonalInverseProblem::new(DiagonalOperator::new(s.to_vec()).unwrap(), y.to_vec()).unwrap()
    }

    #[test]
    fn construction_examples() {
        let p = dip(&[1.0, 0.5], &[1.0, 0.5]);
        let spec = SourceSpec::new(1.0, 1.0).unwrap();
        let sp = construct_source_point(&p, &spec, &[0.0, 0.1]).unwrap();
        assert_relative_eq!(sp.x0[0], 1.0);
        assert_relative_eq!(sp.x0[1], 1.025, max_relative = 1e-15);
        let zero = construct_source_point(&p, &spec, &[0.0, 0.0]).unwrap();
        assert_eq!(zero.x0, p.min_norm_solution());
        assert!(construct_source_point(&p, &spec, &[1.0, 1.0]).is_err());
        let k = dip(&[1.0, 0.0], &[1.0, 3.0]);
        assert_eq!(k.ybar(), &[1.0, 0.0]);
        assert!(construct_source_point(&k, &spec, &[0.0, 0.1]).is_err());
        assert!(SourceSpec::new(-0.5, 1.0).is_err());
    }

    #[test]
    fn membership_examples() {
        let p = dip(&[1.0, 0.5, 0.25], &[1.0, -1.0, 2.0]);
        for mu in [-0.25, 0.0, 0.5, 2.0] {
            assert_eq!(membership_check(&p.min_norm_solution(), &p, mu).unwrap().delta_min(), Some(0.0));
        }
        let spec = SourceSpec::new(0.7, 2.0).unwrap();
        let w = [0.3, -1.1, 0.4];
        let sp = construct_source_point(&p, &spec, &w).unwrap();
        let d = membership_check(&sp.x0, &p, 0.7).unwrap().delta_min().unwrap();
        assert!((d - norm(&w)).abs() < 1e-12);
        // x - A^dagger y = t e_k gives |t| sigma_k^(-2 mu)
        let b = delta_min_blowup(&p, 1.0, 0.1).unwrap();
        for (k, s) in [1.0, 0.5, 0.25_f64].iter().enumerate() {
            assert_relative_eq!(b[k], 0.1 * s.powi(-2), max_relative = 1e-12);
        }
        let tiny = dip(&[1e-80], &[0.0]);
        let m = membership_check(&[1.0], &tiny, 1.0).unwrap();
        assert!(matches!(m, Membership::Member { overflow: true, .. }));
    }

    #[test]
    fn closed_range_means_every_point_is_a_source_point() {
        let p = dip(&[2.0, 0.3, 1e-3], &[1.0, 1.0, 1.0]);
        for mu in [-0.4, 0.0, 0.5, 3.0] {
            for x in [[0.0, 0.0, 0.0], [5.0, -2.0, 7.0]] {
                assert!(membership_check(&x, &p, mu).unwrap().delta_min().unwrap().is_finite());
            }
        }
    }

    #[test]
    fn negative_mu_source_exists_where_mu_zero_degrades() {
        // y_k = sigma_k^(1/2) omega_k is not in the range scale of mu = 0
        let n = 400;
        let s: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
        let omega: Vec<f64> = (1..=n).map(|k| 1.0 / (k as f64).sqrt() / 3.0).collect();
        let y: Vec<f64> = s.iter().zip(&omega).map(|(s, o)| s.sqrt() * o).collect();
        let p = dip(&s, &y);
        let spec = SourceSpec::new(-0.25, norm(&omega) * 1.0001).unwrap();
        let neg: Vec<f64> = omega.iter().map(|v| -v).collect();
        let sp = construct_source_point(&p, &spec, &neg).unwrap();
        assert!(norm(&sp.x0) < 1e-12);
        assert!(membership_check(&sp.x0, &p, -0.25).unwrap().delta_min().unwrap() <= spec.delta);
        // the mu = 0 radius of the same point grows with the truncation
        let d = |m: usize| {
            let q = dip(&s[..m], &y[..m]);
            membership_check(&vec![0.0; m], &q, 0.0).unwrap().delta_min().unwrap()
        };
        assert!(d(400) > 1.8 * d(100));
    }

    #[test]
    fn source_certificate_constants() {
        let c = loja_on_source_set(&SourceSpec::new(0.5, 1.0).unwrap()).unwrap();
        assert_eq!(c.p, 4.0);
        assert_relative_eq!(c.constant, 2.0_f64.powf(-0.75), max_relative = 1e-15);
        let c = loja_on_source_set(&SourceSpec::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(c.p, 3.0);
        assert_relative_eq!(c.constant, 2.0_f64.powf(-2.0 / 3.0), max_relative = 1e-15);
        let c = loja_on_source_set(&SourceSpec::new(-0.25, 1.0).unwrap()).unwrap();
        assert_eq!(c.p, -2.0);
        assert_relative_eq!(c.constant, 2.0_f64.powf(-1.5), max_relative = 1e-15);
        assert!(loja_on_source_set(&SourceSpec::new(0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn witnesses_are_sharp() {
        let s: Vec<f64> = (0..=40).map(|k| 2.0_f64.powi(-k)).collect();
        for mu in [0.5, 1.0, 2.0] {
            for k in 0..=40 {
                let w = optimality_witness(&s, mu, 1.0, k).unwrap();
                assert!(w.sound);
                assert!((w.c - w.ratio).abs() < 1e-6 * w.c, "mu={mu} k={k}");
            }
            let c = loja_on_source_set(&SourceSpec::new(mu, 1.0).unwrap()).unwrap().constant;
            assert!(refute_constant(&s, mu, 1.0, c * (1.0 - 1e-6)).unwrap().is_some());
            assert!(refute_constant(&s, mu, 1.0, c * (1.0 + 1e-9)).unwrap().is_none());
            // below the optimal exponent the ratio diverges along k
            let pp = 2.0 + 1.0 / mu - 0.5;
            let r: Vec<f64> = [5, 10, 20, 40].iter().map(|&k| witness_ratio(&s, mu, 1.0, k, pp).unwrap()).collect();
            assert!(r.windows(2).all(|w| w[1] > w[0]) && r[3] > 10.0 * r[0], "{r:?}");
        }
        let w = optimality_witness(&s, 1.0, 1.0, 7).unwrap();
        assert_relative_eq!(w.ratio, 2.0_f64.powf(-2.0 / 3.0), max_relative = 1e-12);
    }

    #[test]
    fn source_set_is_invariant() {
        let n = 200;
        let s: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a * b).collect();
        let p = dip(&s, &y);
        let spec = SourceSpec::new(0.5, 1.0).unwrap();
        let zero = construct_source_point(&p, &spec, &vec![0.0; n]).unwrap();
        let runs = source_invariance_check(&p, &spec, &[1.0], &zero.x0, 100).unwrap();
        assert!(runs[0].pass && runs[0].delta_min.iter().all(|d| *d < 1e-10));
        let fam = SigmaFamily::Poly { q: 1.0 };
        let w = log_uniform_direction(&fam, n, 1.0, &mut rng);
        let sp = construct_source_point(&p, &spec, &w).unwrap();
        let runs = source_invariance_check(&p, &spec, &[0.5, 1.0, 1.99], &sp.x0, 500).unwrap();
        for r in runs {
            assert!(r.pass, "lambda={} at {:?}", r.lambda, r.first_violation);
        }
        let far: Vec<f64> = sp.x0.iter().map(|v| v + 10.0).collect();
        assert!(source_invariance_check(&p, &spec, &[1.0], &far, 5).is_err());
    }

    #[test]
    fn interpolation_cases() {
        let d = DiagonalOperator::new((1..=100).map(|k| 1.0 / k as f64).collect()).unwrap();
        let mut e = vec![0.0; 100];
        e[6] = 2.0;
        let r = interpolation_check(&d, &e, 0.3, 1.1).unwrap();
        assert_relative_eq!(r.lhs, r.rhs, max_relative = 1e-13);
        let x: Vec<f64> = (0..100).map(|k| (k as f64).sin()).collect();
        let r = interpolation_check(&d, &x, 0.0, 1.0).unwrap();
        assert_relative_eq!(r.lhs, r.rhs, max_relative = 1e-14);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
            assert!(interpolation_check(&d, &x, 0.5, 1.5).unwrap().ok);
        }
        assert!(interpolation_check(&d, &x, 1.0, 0.5).is_err());
    }

    #[test]
    fn sqrt_range_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s: Vec<f64> = (0..8).map(|k| if k == 3 { 0.0 } else { rng.random_range(0.01..2.0) }).collect();
            let d = DiagonalOperator::new(s.clone()).unwrap();
            let x: Vec<f64> = (0..8).map(|k| if s[k] > 0.0 { rng.sample(StandardNormal) } else { 0.0 }).collect();
            let y = sqrt_range_preimage(&d, &x).unwrap();
            let root = spectral_power(&d, 0.5);
            let (ax, ry) = (d.apply(&x).unwrap(), root.apply(&y).unwrap());
            for (u, v) in ax.iter().zip(&ry) {
                assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
            }
            assert_relative_eq!(norm(&x), norm(&y), max_relative = 1e-12);
        }
    }

    #[test]
    fn landweber_spec_json() {
        let j = r#"{"family":"poly","q":1.0,"N":2000,"mu":0.5,"delta":1.0,"lambda":"auto","iters":10000,"seed":7}"#;
        let s: LandweberSpec<f64> = serde_json::from_str(j).unwrap();
        assert_eq!(s.family, SigmaFamily::Poly { q: 1.0 });
        assert_eq!(s.lambda, StepChoice::auto());
        let j2 = r#"{"family":"geo","rho":0.9,"N":50,"mu":1.0,"delta":1.0,"lambda":0.5,"iters":100,"seed":1}"#;
        let s2: LandweberSpec<f64> = serde_json::from_str(j2).unwrap();
        assert_eq!(s2.lambda, StepChoice::Fixed(0.5));
        let back: LandweberSpec<f64> = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn small_landweber_experiment() {
        let spec = LandweberSpec {
            family: SigmaFamily::Poly { q: 1.0_f64 },
            n: 300,
            mu: 0.5,
            delta: 1.0,
            lambda: StepChoice::auto(),
            iters: 2000,
            seed: 1,
            record_every: None,
        };
        let r = landweber_rate_experiment(&spec).unwrap();
        assert!(r.report.pass, "{:?}", r.report);
        assert!(r.loja_inline.as_ref().unwrap().pass);
        assert!((r.x0_delta_min - 1.0).abs() < 1e-9);
        assert!((r.gap_slope.slope + 2.0).abs() < 0.2, "{:?}", r.gap_slope);
    }

    #[test]
    fn sparse_identity_and_degenerate() {
        let spec = SparseSpec {
            a: DenseOperator::identity(5),
            xtrue: vec![1.0, 0.0, -2.0, 0.0, 0.0],
            alpha: 0.01,
            lambda: StepChoice::Fixed(1.0),
            iters: 50,
            noise: 0.0,
            seed: 0,
            record_every: None,
        };
        let r = sparse_recovery_experiment(&spec).unwrap();
        assert_eq!(r.gamma_i, 1.0);
        assert_eq!(r.support, vec![0, 2]);
        assert!(r.q_check.pass);
        assert!(r.gap_qfactor.is_none_or(|q| q <= 0.5));
        let dup = DenseOperator::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let spec = SparseSpec { a: dup, xtrue: vec![1.0, 0.0, 0.5], ..spec };
        assert!(matches!(sparse_recovery_experiment(&spec), Err(Error::Precondition(_))));
    }

    proptest! {
        #[test]
        fn construct_then_measure(mu in -0.45f64..3.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..6).map(|k| if k == 5 { 0.0 } else { rng.random_range(0.05..2.0) }).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let p = dip(&s, &y);
            let mut w: Vec<f64> = (0..6).map(|k| if s[k] > 0.0 { rng.sample(StandardNormal) } else { 0.0 }).collect();
            let nw = norm(&w);
            for v in &mut w { *v /= nw; }
            let spec = SourceSpec::new(mu, 1.0).unwrap();
            let sp = construct_source_point(&p, &spec, &w).unwrap();
            let d = membership_check(&sp.x0, &p, mu).unwrap().delta_min().unwrap();
            // cancellation in sigma x0 - ybar costs about eps |ybar_k| / sigma_k^(2 mu + 1)
            let cond = s.iter().zip(&y).filter(|(a, _)| **a > 0.0).map(|(a, b)| b.abs() / a.powf(2.0 * mu + 1.0)).fold(1.0, f64::max);
            prop_assert!((d - 1.0).abs() < 1e-9 + 1e-14 * cond);
        }
    }
}
