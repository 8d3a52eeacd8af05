//! Conditioning, metric subregularity and Lojasiewicz certificates over
//! explicit domains: construction, conversion, restriction, sampled
//! estimation and validation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::CompositeProblem;
use crate::invprob::{membership_check, DiagonalInverseProblem, Membership};
use crate::linops::{
    principal_min_eig, restricted_min_eig_sym, sym_eigen, Operator, SymMatrix,
};
use crate::sampling::DomainSampler;
use crate::scalar::Scalar;
use crate::solver::support_of;
use crate::vecops::{dist, dot, norm};

pub use crate::sampling::SampleContext;

/// Relative slack applied by membership tests on closed sets.
pub const MEMBERSHIP_REL_TOL: f64 = 1e-12;
/// Samples closer than this to `argmin f` are skipped by the conditioning estimator.
pub const EST_DIST_CUTOFF: f64 = 1e-9;
/// Samples with a smaller subgradient are skipped by the Lojasiewicz estimator.
pub const EST_RESID_CUTOFF: f64 = 1e-12;
/// Additive slack for sampled soundness checks and ellipticity.
pub const SOUNDNESS_TOL: f64 = 1e-10;

/// Seeded sampler families that are not tied to a problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum CustomSampler<T: Scalar> {
    /// `{inner <= ||x - center|| <= outer}`.
    Annulus { center: Vec<T>, inner: T, outer: T },
    /// Axis-aligned box.
    Box { lo: Vec<T>, hi: Vec<T> },
}

/// A set `Omega` on which a certificate is claimed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum DomainDesc<T: Scalar> {
    WholeSpace,
    Ball { center: Vec<T>, radius: T },
    /// Closed sublevel set `{f - inf f <= r}`.
    Sublevel { r: T },
    BallAndSublevel { center: Vec<T>, radius: T, r: T },
    /// `{x : supp(x) in indices}`.
    SupportSubspace { indices: Vec<usize> },
    /// `{x : |supp(x)| <= s}`.
    #[serde(rename = "cone_s_sparse")]
    ConeSparse { s: usize },
    /// Source set of a diagonal least-squares problem.
    SourceSet { mu: T, delta: T },
    #[serde(rename = "custom_sampler")]
    Custom { sampler: CustomSampler<T> },
    /// `{x : ||df(x)||_- <= m}`.
    ResidLevel { m: T },
    /// `{x : <normal, x> <= offset}`.
    HalfSpace { normal: Vec<T>, offset: T },
    /// `{x : dist(x, argmin f) <= delta}`.
    ArgminNeighborhood { delta: T },
    Intersect { parts: Vec<DomainDesc<T>> },
}

fn closed_le<T: Scalar>(v: T, bound: T) -> bool {
    v <= bound + T::tol(MEMBERSHIP_REL_TOL) * (T::one() + bound.abs())
}

impl<T: Scalar> DomainDesc<T> {
    /// `self ∩ other`, flattening nested intersections and dropping the whole space.
    pub fn intersect(&self, other: DomainDesc<T>) -> DomainDesc<T> {
        let mut parts = Vec::new();
        for d in [self.clone(), other] {
            match d {
                DomainDesc::WholeSpace => {}
                DomainDesc::Intersect { parts: p } => parts.extend(p),
                d => parts.push(d),
            }
        }
        match parts.len() {
            0 => DomainDesc::WholeSpace,
            1 => parts.pop().unwrap(),
            _ => DomainDesc::Intersect { parts },
        }
    }

    /// Whether the set is known to be bounded from its description alone.
    pub fn bounded(&self) -> bool {
        match self {
            DomainDesc::Ball { .. } | DomainDesc::BallAndSublevel { .. } | DomainDesc::Custom { .. } => true,
            DomainDesc::Intersect { parts } => parts.iter().any(DomainDesc::bounded),
            _ => false,
        }
    }

    fn needs_problem(&self) -> bool {
        match self {
            DomainDesc::Sublevel { .. }
            | DomainDesc::BallAndSublevel { .. }
            | DomainDesc::SourceSet { .. }
            | DomainDesc::ResidLevel { .. }
            | DomainDesc::ArgminNeighborhood { .. } => true,
            DomainDesc::Intersect { parts } => parts.iter().any(DomainDesc::needs_problem),
            _ => false,
        }
    }

    /// Deterministic membership test. Closed sets get a relative slack of
    /// `MEMBERSHIP_REL_TOL`.
    pub fn contains(&self, ctx: &SampleContext<'_, T>, x: &[T]) -> Result<bool> {
        crate::vecops::check_len(ctx.dim, x.len())?;
        if self.needs_problem() && ctx.problem.is_none() {
            return Err(Error::MissingData("domain membership needs a problem".into()));
        }
        if let Some(p) = ctx.problem {
            if !p.g().in_domain(x) {
                return Ok(false);
            }
        }
        Ok(match self {
            DomainDesc::WholeSpace => true,
            DomainDesc::Ball { center, radius } => closed_le(dist(x, center), *radius),
            DomainDesc::Sublevel { r } => closed_le(ctx.problem.unwrap().gap(x)?, *r),
            DomainDesc::BallAndSublevel { center, radius, r } => {
                closed_le(dist(x, center), *radius) && closed_le(ctx.problem.unwrap().gap(x)?, *r)
            }
            DomainDesc::SupportSubspace { indices } => support_of(x).iter().all(|i| indices.contains(i)),
            DomainDesc::ConeSparse { s } => support_of(x).len() <= *s,
            DomainDesc::SourceSet { mu, delta } => {
                let dp = DiagonalInverseProblem::from_problem(ctx.problem.unwrap())?;
                match membership_check(x, &dp, *mu)? {
                    Membership::Member { delta_min, overflow } => {
                        !overflow && delta_min <= *delta * (T::one() + T::tol(SOUNDNESS_TOL)) + T::tol(SOUNDNESS_TOL)
                    }
                    Membership::NotMember => false,
                }
            }
            DomainDesc::Custom { sampler } => match sampler {
                CustomSampler::Annulus { center, inner, outer } => {
                    let d = dist(x, center);
                    closed_le(*inner, d) && closed_le(d, *outer)
                }
                CustomSampler::Box { lo, hi } => x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (l, h))| closed_le(*l, *v) && closed_le(*v, *h)),
            },
            DomainDesc::ResidLevel { m } => closed_le(ctx.problem.unwrap().min_norm_subgrad(x)?, *m),
            DomainDesc::HalfSpace { normal, offset } => closed_le(dot(normal, x), *offset),
            DomainDesc::ArgminNeighborhood { delta } => {
                let d = ctx
                    .problem
                    .unwrap()
                    .dist_to_argmin(x)
                    .ok_or_else(|| Error::MissingData("no distance oracle".into()))?;
                closed_le(d, *delta)
            }
            DomainDesc::Intersect { parts } => {
                for p in parts {
                    if !p.contains(ctx, x)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }
}

/// Draws `n` seeded samples from a domain.
pub fn sample_domain<T: Scalar>(
    domain: &DomainDesc<T>,
    ctx: SampleContext<'_, T>,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let mut s = DomainSampler::new(domain, ctx, ChaCha8Rng::seed_from_u64(seed))?;
    (0..n).map(|_| s.sample()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertKind {
    Conditioned,
    Subregular,
    Lojasiewicz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Estimated,
    Converted,
}

/// Claim that `f` has one of the three geometric properties on `domain`:
///
/// * conditioned: `(gamma/p) dist(x, argmin f)^p <= f(x) - inf f`
/// * subregular: `gamma dist(x, argmin f)^(p-1) <= ||df(x)||_-`
/// * lojasiewicz: `(f(x) - inf f)^(1-1/p) <= c ||df(x)||_-`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct GeometryCertificate<T: Scalar> {
    pub kind: CertKind,
    pub p: T,
    pub constant: T,
    pub domain: DomainDesc<T>,
    pub provenance: Provenance,
}

impl<T: Scalar> GeometryCertificate<T> {
    pub fn new(kind: CertKind, p: T, constant: T, domain: DomainDesc<T>, provenance: Provenance) -> Result<Self> {
        let c = Self { kind, p, constant, domain, provenance };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if !p.is_finite() || p == T::zero() || (p > T::zero() && p < T::one()) {
            return Err(Error::Domain(format!("exponent p={p} not in (-inf,0) u [1,inf)")));
        }
        if p < T::zero() && self.kind != CertKind::Lojasiewicz {
            return Err(Error::Domain("negative exponents only exist for lojasiewicz certificates".into()));
        }
        if !(self.constant > T::zero()) || !self.constant.is_finite() {
            return Err(Error::Domain(format!("constant {} must be positive and finite", self.constant)));
        }
        Ok(())
    }

    /// Checks the certificate is meaningful for `problem`.
    pub fn check_applicable(&self, problem: &CompositeProblem<T>) -> Result<()> {
        self.validate()?;
        if self.kind != CertKind::Lojasiewicz && problem.argmin().is_empty() {
            return Err(Error::Precondition("conditioning and subregularity need a nonempty argmin".into()));
        }
        if !problem.inf_value().is_finite() {
            return Err(Error::Precondition("inf f must be finite".into()));
        }
        Ok(())
    }

    /// Lojasiewicz constant `c` implied by this certificate (converting forward if needed).
    pub fn lojasiewicz_constant(&self) -> Result<T> {
        match self.kind {
            CertKind::Lojasiewicz => Ok(self.constant),
            CertKind::Subregular | CertKind::Conditioned => convert_forward(self)?.lojasiewicz_constant(),
        }
    }

    /// Slack of the defining inequality at `x` (nonnegative when it holds),
    /// or `None` when `x` is excluded as a near-minimizer.
    pub fn slack_at(&self, problem: &CompositeProblem<T>, x: &[T]) -> Result<Option<T>> {
        let p = self.p;
        let gap = problem.gap(x)?;
        match self.kind {
            CertKind::Conditioned => {
                let d = problem.dist_to_argmin(x).ok_or_else(|| Error::MissingData("no distance oracle".into()))?;
                Ok(Some(gap - self.constant / p * d.powf(p)))
            }
            CertKind::Subregular => {
                let d = problem.dist_to_argmin(x).ok_or_else(|| Error::MissingData("no distance oracle".into()))?;
                if d <= T::tol(EST_DIST_CUTOFF) {
                    return Ok(None);
                }
                Ok(Some(problem.min_norm_subgrad(x)? - self.constant * d.powf(p - T::one())))
            }
            CertKind::Lojasiewicz => {
                let r = problem.min_norm_subgrad(x)?;
                if r <= T::tol(EST_RESID_CUTOFF) {
                    return Ok(None);
                }
                let lhs = gap.max(T::zero()).powf(T::one() - p.recip());
                Ok(Some(self.constant * r - lhs))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SoundnessReport<T: Scalar> {
    pub pass: bool,
    pub checked: usize,
    pub skipped: usize,
    pub worst_slack: T,
    pub counterexample: Option<Vec<T>>,
}

/// Evaluates the defining inequality of `cert` on seeded samples of its domain.
pub fn sampled_soundness<T: Scalar>(
    cert: &GeometryCertificate<T>,
    problem: &CompositeProblem<T>,
    n: usize,
    seed: u64,
) -> Result<SoundnessReport<T>> {
    cert.check_applicable(problem)?;
    let xs = sample_domain(&cert.domain, SampleContext::with_problem(problem), n, seed)?;
    let mut rep = SoundnessReport { pass: true, checked: 0, skipped: 0, worst_slack: T::infinity(), counterexample: None };
    for x in xs {
        match cert.slack_at(problem, &x)? {
            None => rep.skipped += 1,
            Some(s) => {
                rep.checked += 1;
                if s < rep.worst_slack {
                    rep.worst_slack = s;
                }
                if s < -T::tol(SOUNDNESS_TOL) && rep.pass {
                    rep.pass = false;
                    rep.counterexample = Some(x);
                }
            }
        }
    }
    Ok(rep)
}

/// Conditioned `gamma` to subregular `gamma/p`, subregular `g` to
/// Lojasiewicz `g^(-1/p)`.
pub fn convert_forward<T: Scalar>(cert: &GeometryCertificate<T>) -> Result<GeometryCertificate<T>> {
    cert.validate()?;
    if cert.p < T::one() {
        return Err(Error::Domain(format!("forward conversion needs p >= 1, got {}", cert.p)));
    }
    let (kind, constant) = match cert.kind {
        CertKind::Conditioned => (CertKind::Subregular, cert.constant / cert.p),
        CertKind::Subregular => (CertKind::Lojasiewicz, cert.constant.powf(-cert.p.recip())),
        CertKind::Lojasiewicz => return Err(Error::Domain("lojasiewicz is the end of the forward chain".into())),
    };
    GeometryCertificate::new(kind, cert.p, constant, cert.domain.clone(), Provenance::Converted)
}

/// Record that a domain passed a sampled FB-invariance test. It stands in
/// for invariance under the subgradient flow, which is not checked.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct InvarianceAttestation<T: Scalar> {
    domain: DomainDesc<T>,
    lambdas: Vec<T>,
    samples: usize,
    seed: u64,
}

impl<T: Scalar> InvarianceAttestation<T> {
    pub(crate) fn new(domain: DomainDesc<T>, lambdas: Vec<T>, samples: usize, seed: u64) -> Self {
        Self { domain, lambdas, samples, seed }
    }

    pub fn domain(&self) -> &DomainDesc<T> {
        &self.domain
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Lojasiewicz `c` to conditioned `c^(-p) p^(1-p)` on an attested invariant domain.
pub fn convert_reverse_on_invariant<T: Scalar>(
    cert: &GeometryCertificate<T>,
    attestation: Option<&InvarianceAttestation<T>>,
) -> Result<GeometryCertificate<T>> {
    cert.validate()?;
    if cert.kind != CertKind::Lojasiewicz {
        return Err(Error::Domain("reverse conversion starts from a lojasiewicz certificate".into()));
    }
    if cert.p < T::one() {
        return Err(Error::Domain(format!("reverse conversion needs p >= 1, got {}", cert.p)));
    }
    let att = attestation.ok_or_else(|| Error::MissingData("invariance attestation required".into()))?;
    if att.domain != cert.domain {
        return Err(Error::Precondition("attestation was issued for a different domain".into()));
    }
    let p = cert.p;
    let gamma = cert.constant.powf(-p) * p.powf(T::one() - p);
    GeometryCertificate::new(CertKind::Conditioned, p, gamma, cert.domain.clone(), Provenance::Converted)
}

/// `(gamma/2)||x - xbar||^2 + ...` with strong convexity `gamma`: 2-conditioned
/// with `gamma` and 2-Lojasiewicz with the sharp `1/sqrt(2 gamma)`.
pub fn exact_cert_strongly_convex<T: Scalar>(gamma: T) -> Result<(GeometryCertificate<T>, GeometryCertificate<T>)> {
    if !(gamma > T::zero()) {
        return Err(Error::Domain("strong convexity modulus must be positive".into()));
    }
    let two = T::lit(2.0);
    Ok((
        GeometryCertificate::new(CertKind::Conditioned, two, gamma, DomainDesc::WholeSpace, Provenance::Exact)?,
        GeometryCertificate::new(
            CertKind::Lojasiewicz,
            two,
            (two * gamma).sqrt().recip(),
            DomainDesc::WholeSpace,
            Provenance::Exact,
        )?,
    ))
}

/// Smallest eigenvalue of `A*A` above `RANK_REL_TOL * ||A*A||`, if any.
pub fn smallest_positive_gram_eig<T: Scalar>(a: &Operator<T>) -> Option<T> {
    let top = a.gram_norm().value;
    if !(top > T::zero()) {
        return None;
    }
    let thr = T::tol(crate::funcs::RANK_REL_TOL) * top;
    let vals: Vec<T> = match a {
        Operator::Diagonal(d) => d.sigmas().iter().map(|s| *s * *s).collect(),
        Operator::Dense(d) => sym_eigen(&d.gram()).values,
    };
    vals.into_iter().filter(|v| *v > thr).fold(None, |m, v| Some(m.map_or(v, |m: T| m.min(v))))
}

/// Least squares is 2-conditioned on the whole space with the smallest
/// positive eigenvalue of `A*A`. `None` for `A = 0`.
pub fn exact_cert_least_squares<T: Scalar>(a: &Operator<T>) -> Option<GeometryCertificate<T>> {
    let gamma = smallest_positive_gram_eig(a)?;
    GeometryCertificate::new(CertKind::Conditioned, T::lit(2.0), gamma, DomainDesc::WholeSpace, Provenance::Exact).ok()
}

/// `w ||x||^p`: conditioned and subregular with `p w`, Lojasiewicz with `w^(-1/p)/p`.
pub fn exact_cert_norm_pow<T: Scalar>(p: T, weight: T) -> Result<[GeometryCertificate<T>; 3]> {
    if !(p >= T::one()) || !(weight > T::zero()) {
        return Err(Error::Domain("need p >= 1 and weight > 0".into()));
    }
    let g = p * weight;
    let c = weight.powf(-p.recip()) / p;
    Ok([
        GeometryCertificate::new(CertKind::Conditioned, p, g, DomainDesc::WholeSpace, Provenance::Exact)?,
        GeometryCertificate::new(CertKind::Subregular, p, g, DomainDesc::WholeSpace, Provenance::Exact)?,
        GeometryCertificate::new(CertKind::Lojasiewicz, p, c, DomainDesc::WholeSpace, Provenance::Exact)?,
    ])
}

/// `alpha ||x||_1`: 1-conditioned with `alpha`, 1-Lojasiewicz with `1/alpha`.
pub fn exact_cert_l1<T: Scalar>(alpha: T) -> Result<(GeometryCertificate<T>, GeometryCertificate<T>)> {
    if !(alpha > T::zero()) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    Ok((
        GeometryCertificate::new(CertKind::Conditioned, T::one(), alpha, DomainDesc::WholeSpace, Provenance::Exact)?,
        GeometryCertificate::new(CertKind::Lojasiewicz, T::one(), alpha.recip(), DomainDesc::WholeSpace, Provenance::Exact)?,
    ))
}

/// The counterexample `x^(-alpha)` on `x >= 1`: Lojasiewicz with `p = -alpha`
/// and `c = 1/alpha`, where the ratio is constant.
pub fn exact_cert_counterexample<T: Scalar>(alpha: T) -> Result<GeometryCertificate<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    let dom = DomainDesc::HalfSpace { normal: vec![-T::one()], offset: -T::one() };
    GeometryCertificate::new(CertKind::Lojasiewicz, -alpha, alpha.recip(), dom, Provenance::Exact)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundLabel {
    /// The true constant is at most this value (conditioning `gamma`).
    LowerBoundOfInf,
    /// The true constant is at least this value (Lojasiewicz `c`).
    UpperBoundOfSup,
}

/// Sampled constant. `gamma` estimates are minima over samples, so they
/// over-estimate the true infimum; `c` estimates are maxima and under-estimate
/// the supremum. `label` states which.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct Estimate<T: Scalar> {
    pub value: T,
    pub label: BoundLabel,
    pub samples: usize,
    pub used: usize,
    pub seed: u64,
    /// Every sample was excluded as a near-minimizer.
    pub all_minimizers: bool,
}

/// `p * min (f - inf f) / dist^p` over samples with `dist > 1e-9`.
pub fn estimate_conditioning<T: Scalar>(
    problem: &CompositeProblem<T>,
    p: T,
    domain: &DomainDesc<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate<T>> {
    if !(p >= T::one()) {
        return Err(Error::Domain("conditioning exponent must be >= 1".into()));
    }
    if !problem.argmin().dist_available() {
        return Err(Error::MissingData("conditioning estimate needs a distance oracle".into()));
    }
    let xs = sample_domain(domain, SampleContext::with_problem(problem), n_samples, seed)?;
    let mut best = T::infinity();
    let mut used = 0;
    for x in &xs {
        let d = problem.dist_to_argmin(x).unwrap();
        if d > T::tol(EST_DIST_CUTOFF) {
            used += 1;
            best = best.min(problem.gap(x)? / d.powf(p));
        }
    }
    Ok(Estimate {
        value: p * best,
        label: BoundLabel::LowerBoundOfInf,
        samples: xs.len(),
        used,
        seed,
        all_minimizers: used == 0,
    })
}

/// `max (f - inf f)^(1-1/p) / ||df||_-` over samples with `resid > 1e-12`.
pub fn estimate_lojasiewicz<T: Scalar>(
    problem: &CompositeProblem<T>,
    p: T,
    domain: &DomainDesc<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate<T>> {
    if p == T::zero() || (p > T::zero() && p < T::one()) || !p.is_finite() {
        return Err(Error::Domain(format!("exponent p={p} not in (-inf,0) u [1,inf)")));
    }
    let xs = sample_domain(domain, SampleContext::with_problem(problem), n_samples, seed)?;
    let e = T::one() - p.recip();
    let mut best = T::zero();
    let mut used = 0;
    for x in &xs {
        let r = problem.min_norm_subgrad(x)?;
        if r > T::tol(EST_RESID_CUTOFF) {
            used += 1;
            let gap = problem.gap(x)?.max(T::zero());
            best = best.max(gap.powf(e) / r);
        }
    }
    Ok(Estimate {
        value: best,
        label: BoundLabel::UpperBoundOfSup,
        samples: xs.len(),
        used,
        seed,
        all_minimizers: used == 0,
    })
}

/// Bound used to pass to a larger exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub enum RestrictBound<T: Scalar> {
    /// Distance to `argmin f` at most `delta`.
    Delta(T),
    /// Gap at most `r`.
    Level(T),
}

/// Certificate at exponent `p' >= p` on the domain intersected with a
/// distance ball (conditioned, subregular) or a sublevel set (Lojasiewicz).
pub fn hierarchy_restrict<T: Scalar>(
    cert: &GeometryCertificate<T>,
    p_prime: T,
    bound: RestrictBound<T>,
) -> Result<GeometryCertificate<T>> {
    cert.validate()?;
    let p = cert.p;
    if p < T::one() || p_prime < p {
        return Err(Error::Domain(format!("need p' >= p >= 1, got p={p}, p'={p_prime}")));
    }
    if p_prime == p {
        return Ok(cert.clone());
    }
    let (constant, extra) = match (cert.kind, bound) {
        (CertKind::Conditioned, RestrictBound::Delta(d)) if d > T::zero() => {
            (cert.constant * (p_prime / p) * d.powf(p - p_prime), DomainDesc::ArgminNeighborhood { delta: d })
        }
        (CertKind::Subregular, RestrictBound::Delta(d)) if d > T::zero() => {
            (cert.constant * d.powf(p - p_prime), DomainDesc::ArgminNeighborhood { delta: d })
        }
        (CertKind::Lojasiewicz, RestrictBound::Level(r)) if r > T::zero() => {
            (cert.constant * r.powf(p.recip() - p_prime.recip()), DomainDesc::Sublevel { r })
        }
        (kind, b) => {
            return Err(Error::MissingData(format!("{kind:?} restriction needs a positive matching bound, got {b:?}")))
        }
    };
    GeometryCertificate::new(cert.kind, p_prime, constant, cert.domain.intersect(extra), Provenance::Converted)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Consistency {
    Ok,
    Rejected(String),
}

/// A function with `alpha`-Holder gradient cannot be conditioned with
/// `p < alpha + 1`, and at `p = alpha + 1` needs `gamma <= L`.
pub fn validate_smoothness_consistency<T: Scalar>(
    cert: &GeometryCertificate<T>,
    alpha: T,
    l_holder: T,
) -> Result<Consistency> {
    if cert.kind != CertKind::Conditioned {
        return Err(Error::Precondition("smoothness consistency applies to conditioned certificates".into()));
    }
    let edge = alpha + T::one();
    let eq_tol = T::tol(1e-12) * edge;
    Ok(if cert.p < edge - eq_tol {
        Consistency::Rejected(format!("p={} below alpha+1={}", cert.p, edge))
    } else if (cert.p - edge).abs() <= eq_tol && cert.constant > l_holder {
        Consistency::Rejected(format!("gamma={} exceeds L={} at p=alpha+1", cert.constant, l_holder))
    } else {
        Consistency::Ok
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct EllipticityReport<T: Scalar> {
    pub ok: bool,
    /// Smallest `<Sd, d>` over unit `d` found (exact for subspace and sparse cones).
    pub min_value: T,
    pub exact: bool,
    pub counterexample: Option<Vec<T>>,
}

fn embed<T: Scalar>(n: usize, idx: &[usize], v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (i, &k) in idx.iter().enumerate() {
        out[k] = v[i];
    }
    out
}

fn principal_min_pair<T: Scalar>(s: &SymMatrix<T>, idx: &[usize]) -> (T, Vec<T>) {
    let e = sym_eigen(&s.principal(idx));
    let v = e.vectors[0].clone();
    (principal_min_eig(s, idx), embed(s.dim(), idx, &v))
}

/// Whether `<Sd, d> >= gamma ||d||^2` on the cone, up to `1e-10`.
pub fn ellipticity_check<T: Scalar>(
    s: &SymMatrix<T>,
    cone: &DomainDesc<T>,
    gamma: T,
    n_samples: usize,
    seed: u64,
) -> Result<EllipticityReport<T>> {
    let n = s.dim();
    let (min_value, dir, exact) = match cone {
        DomainDesc::SupportSubspace { indices } => {
            if indices.is_empty() {
                return Err(Error::EmptySupport);
            }
            if indices.iter().any(|&i| i >= n) {
                return Err(Error::Domain("support index out of range".into()));
            }
            let (v, d) = principal_min_pair(s, indices);
            (v, Some(d), true)
        }
        DomainDesc::ConeSparse { s: k } => {
            let (_, support) = restricted_min_eig_sym(s, *k)?;
            let (v, d) = principal_min_pair(s, &support);
            (v, Some(d), true)
        }
        DomainDesc::WholeSpace => {
            let all: Vec<usize> = (0..n).collect();
            let (v, d) = principal_min_pair(s, &all);
            (v, Some(d), true)
        }
        other => {
            let xs = sample_domain(other, SampleContext::new(n), n_samples, seed)?;
            let mut best = T::infinity();
            let mut arg = None;
            for x in xs {
                let nx = norm(&x);
                if nx > T::zero() {
                    let d: Vec<T> = x.iter().map(|v| *v / nx).collect();
                    let q = s.quad_form(&d)?;
                    if q < best {
                        best = q;
                        arg = Some(d);
                    }
                }
            }
            (best, arg, false)
        }
    };
    let ok = min_value >= gamma - T::tol(SOUNDNESS_TOL);
    Ok(EllipticityReport { ok, min_value, exact, counterexample: if ok { None } else { dir } })
}

/// Ellipticity `gamma` on a cone gives 2-conditioning with `gamma' < gamma`
/// within `delta = (gamma - gamma')/L_hess` of the minimizer. With a
/// constant Hessian (`l_hess = None`) the constant is `gamma` and `delta`
/// is infinite. Cones are taken relative to the minimizer.
pub fn conditioning_from_ellipticity<T: Scalar>(
    gamma: T,
    gamma_prime: T,
    l_hess: Option<T>,
    cone: DomainDesc<T>,
) -> Result<(GeometryCertificate<T>, T)> {
    if !(gamma > T::zero()) {
        return Err(Error::Domain("ellipticity constant must be positive".into()));
    }
    let two = T::lit(2.0);
    match l_hess {
        None => {
            let c = GeometryCertificate::new(CertKind::Conditioned, two, gamma, cone, Provenance::Converted)?;
            Ok((c, T::infinity()))
        }
        Some(l) => {
            if !(gamma_prime > T::zero()) || gamma_prime >= gamma {
                return Err(Error::Domain(format!("need 0 < gamma'={gamma_prime} < gamma={gamma}")));
            }
            if !(l > T::zero()) {
                return Err(Error::Domain("Hessian Lipschitz constant must be positive".into()));
            }
            let delta = (gamma - gamma_prime) / l;
            let dom = cone.intersect(DomainDesc::ArgminNeighborhood { delta });
            let c = GeometryCertificate::new(CertKind::Conditioned, two, gamma_prime, dom, Provenance::Converted)?;
            Ok((c, delta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{make_counterexample_neg, make_least_squares, make_norm_pow_weighted, ProblemSpec, ProxFn, SmoothFn};
    use crate::linops::{restricted_min_eig, DenseOperator, DiagonalOperator};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn diag(s: &[f64]) -> Operator<f64> {
        DiagonalOperator::new(s.to_vec()).unwrap().into()
    }

    fn l1(dim: usize) -> CompositeProblem<f64> {
        CompositeProblem::from_spec(ProblemSpec { g: ProxFn::L1 { alpha: 1.0 }, h: SmoothFn::Zero { dim } }).unwrap()
    }

    #[test]
    fn forward_and_reverse_conversions() {
        let c = GeometryCertificate::new(CertKind::Conditioned, 2.0, 2.0, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        let s = convert_forward(&c).unwrap();
        assert_eq!((s.kind, s.constant, s.provenance), (CertKind::Subregular, 1.0, Provenance::Converted));
        let l = convert_forward(&s).unwrap();
        assert_eq!((l.kind, l.constant), (CertKind::Lojasiewicz, 1.0));
        let c1 = GeometryCertificate::new(CertKind::Conditioned, 1.0, 4.0, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        assert_relative_eq!(convert_forward(&convert_forward(&c1).unwrap()).unwrap().constant, 0.25);
        assert!(convert_forward(&l).is_err());

        let att = InvarianceAttestation::new(DomainDesc::WholeSpace, vec![1.0], 10, 0);
        let back = convert_reverse_on_invariant(&l, Some(&att)).unwrap();
        assert_eq!((back.kind, back.constant), (CertKind::Conditioned, 0.5));
        let l1c = GeometryCertificate::new(CertKind::Lojasiewicz, 1.0, 1.0, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        assert_eq!(convert_reverse_on_invariant(&l1c, Some(&att)).unwrap().constant, 1.0);
        assert!(matches!(convert_reverse_on_invariant(&l, None), Err(Error::MissingData(_))));
        let other = InvarianceAttestation::new(DomainDesc::Sublevel { r: 1.0 }, vec![1.0], 10, 0);
        assert!(convert_reverse_on_invariant(&l, Some(&other)).is_err());
    }

    #[test]
    fn round_trip_never_increases_gamma() {
        let att = InvarianceAttestation::new(DomainDesc::WholeSpace, vec![1.0], 1, 0);
        let mut certs = vec![exact_cert_strongly_convex(0.5).unwrap().0, exact_cert_strongly_convex(3.0).unwrap().0];
        certs.push(exact_cert_l1(2.0).unwrap().0);
        for p in [1.0, 1.5, 2.0, 4.0] {
            certs.push(exact_cert_norm_pow(p, 0.7).unwrap()[0].clone());
        }
        for c in certs {
            let back = convert_reverse_on_invariant(&convert_forward(&convert_forward(&c).unwrap()).unwrap(), Some(&att)).unwrap();
            assert!(back.constant <= c.constant * (1.0 + 1e-12), "{c:?} -> {back:?}");
        }
    }

    #[test]
    fn certificate_validation() {
        assert!(GeometryCertificate::new(CertKind::Conditioned, -1.0, 1.0, DomainDesc::WholeSpace, Provenance::Exact).is_err());
        assert!(GeometryCertificate::new(CertKind::Lojasiewicz, 0.5, 1.0, DomainDesc::WholeSpace, Provenance::Exact).is_err());
        assert!(GeometryCertificate::new(CertKind::Lojasiewicz, -2.0, 1.0, DomainDesc::WholeSpace, Provenance::Exact).is_ok());
        assert!(GeometryCertificate::new(CertKind::Lojasiewicz, 2.0, 0.0, DomainDesc::WholeSpace, Provenance::Exact).is_err());
        let c = GeometryCertificate::new(CertKind::Conditioned, 2.0, 1.0, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        let ce = make_counterexample_neg(0.5).unwrap();
        assert!(c.check_applicable(&ce).is_err());
    }

    #[test]
    fn json_shape() {
        let (_, l) = exact_cert_strongly_convex(1.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&l).unwrap();
        assert_eq!(v["kind"], "lojasiewicz");
        assert_eq!(v["provenance"], "exact");
        assert_eq!(v["domain"]["kind"], "whole_space");
        let back: GeometryCertificate<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, l);
        let d: DomainDesc<f64> = serde_json::from_str(r#"{"kind":"cone_s_sparse","s":3}"#).unwrap();
        assert_eq!(d, DomainDesc::ConeSparse { s: 3 });
    }

    #[test]
    fn strongly_convex_constants_and_identity() {
        assert_relative_eq!(exact_cert_strongly_convex(0.5).unwrap().1.constant, 1.0);
        assert_relative_eq!(exact_cert_strongly_convex(2.0).unwrap().1.constant, 0.5);
        let gamma = 1.7;
        let c = exact_cert_strongly_convex(gamma).unwrap().1.constant;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let n2: f64 = x.iter().map(|v| v * v).sum();
            let f = 0.5 * gamma * n2;
            assert_relative_eq!(f.sqrt(), c * gamma * n2.sqrt(), max_relative = 1e-13);
        }
        assert!(exact_cert_strongly_convex(0.0).is_err());
    }

    #[test]
    fn least_squares_constants() {
        assert_eq!(exact_cert_least_squares(&diag(&[2.0, 0.0])).unwrap().constant, 4.0);
        let id: Operator<f64> = DenseOperator::identity(3).into();
        assert_relative_eq!(exact_cert_least_squares(&id).unwrap().constant, 1.0, epsilon = 1e-12);
        assert!(exact_cert_least_squares(&diag(&[0.0, 0.0])).is_none());
        // independent oracle: 2x2 Gram in closed form for a rank-one-deficient A
        let a = DenseOperator::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        // A*A = [[5,10],[10,20]] has eigenvalues 0 and 25
        assert_relative_eq!(exact_cert_least_squares(&a.into()).unwrap().constant, 25.0, max_relative = 1e-10);
    }

    #[test]
    fn conditioning_estimates() {
        let p = make_norm_pow_weighted(2.0, 1.0, 3).unwrap();
        let ball = DomainDesc::Ball { center: vec![0.0; 3], radius: 1.0 };
        let e = estimate_conditioning(&p, 2.0, &ball, 10_000, 1).unwrap();
        assert!((1.999..=2.001).contains(&e.value), "{e:?}");
        assert_eq!(e.label, BoundLabel::LowerBoundOfInf);
        let q = make_norm_pow_weighted(4.0, 1.0, 1).unwrap();
        let e = estimate_conditioning(&q, 4.0, &DomainDesc::Ball { center: vec![0.0], radius: 2.0 }, 1000, 2).unwrap();
        assert_relative_eq!(e.value, 4.0, max_relative = 1e-12);
        // annulus away from the minimizer: finite for every p
        let ann = DomainDesc::Custom { sampler: CustomSampler::Annulus { center: vec![0.0; 3], inner: 0.5, outer: 1.0 } };
        let l = l1(3);
        for pp in [1.0, 2.0, 5.0, 10.0] {
            let e = estimate_conditioning(&l, pp, &ann, 2000, 3).unwrap();
            assert!(e.value.is_finite() && e.value > 0.0, "p={pp}: {e:?}");
        }
        let all0 = estimate_conditioning(&p, 2.0_f64, &DomainDesc::Ball { center: vec![0.0; 3], radius: 0.0 }, 10, 1).unwrap();
        assert!(all0.all_minimizers && all0.value.is_infinite());
    }

    #[test]
    fn lojasiewicz_estimates() {
        let half = make_norm_pow_weighted(2.0, 0.5, 1).unwrap();
        let e = estimate_lojasiewicz(&half, 2.0, &DomainDesc::Ball { center: vec![0.0], radius: 3.0 }, 5000, 4).unwrap();
        assert_relative_eq!(e.value, 0.5_f64.sqrt(), max_relative = 1e-12);
        let e = estimate_lojasiewicz(&l1(1), 1.0, &DomainDesc::Ball { center: vec![0.0], radius: 3.0 }, 5000, 4).unwrap();
        assert_relative_eq!(e.value, 1.0);
        // counterexample on x >= 1: grid oracle of the analytic ratio
        let alpha = 0.5;
        let ce = make_counterexample_neg(alpha).unwrap();
        let cert = exact_cert_counterexample(alpha).unwrap();
        let e = estimate_lojasiewicz(&ce, -alpha, &cert.domain, 3000, 5).unwrap();
        let pp = -alpha;
        let grid_sup = (0..10_000)
            .map(|i| 1.0 + i as f64 * 1e-2)
            .map(|x: f64| x.powf(-alpha * (1.0 - 1.0 / pp)) / (alpha * x.powf(-alpha - 1.0)))
            .fold(0.0, f64::max);
        assert_relative_eq!(e.value, grid_sup, max_relative = 1e-9);
        assert_relative_eq!(e.value, cert.constant, max_relative = 1e-9);
    }

    #[test]
    fn sum_rule_fixture_is_two_conditioned() {
        // l1 plus least squares with injective A; strict complementarity at the solution
        let a = DenseOperator::from_rows(&[vec![2.0, 0.3], vec![0.1, 1.5], vec![0.4, -0.2]]).unwrap();
        let p = crate::funcs::make_lasso(a.into(), vec![1.0, 0.2, 0.3], 0.1).unwrap();
        let e = estimate_conditioning(&p, 2.0, &DomainDesc::Sublevel { r: 1.0 }, 5000, 8).unwrap();
        assert!(e.value > 1e-6, "{e:?}");
    }

    #[test]
    fn exact_certificates_are_sound() {
        let probs_certs: Vec<(CompositeProblem<f64>, Vec<GeometryCertificate<f64>>)> = vec![
            (make_norm_pow_weighted(2.0, 0.5, 2).unwrap(), {
                let (a, b) = exact_cert_strongly_convex(1.0).unwrap();
                vec![a, b]
            }),
            (l1(2), {
                let (a, b) = exact_cert_l1(1.0).unwrap();
                vec![a, b]
            }),
            (make_norm_pow_weighted(3.0, 0.8, 2).unwrap(), exact_cert_norm_pow(3.0, 0.8).unwrap().to_vec()),
            (make_norm_pow_weighted(1.5, 2.0, 2).unwrap(), exact_cert_norm_pow(1.5, 2.0).unwrap().to_vec()),
            (make_least_squares(diag(&[1.0, 0.5, 0.0]), vec![1.0, 1.0, 1.0]).unwrap(), {
                vec![exact_cert_least_squares(&diag(&[1.0, 0.5, 0.0])).unwrap()]
            }),
            (make_counterexample_neg(0.5).unwrap(), vec![exact_cert_counterexample(0.5).unwrap()]),
        ];
        for (prob, certs) in probs_certs {
            for c in certs {
                let mut all = vec![c.clone()];
                if c.p >= 1.0 && c.kind != CertKind::Lojasiewicz {
                    let s = convert_forward(&c).unwrap();
                    all.push(s.clone());
                    if s.kind != CertKind::Lojasiewicz {
                        all.push(convert_forward(&s).unwrap());
                    }
                }
                for cc in all {
                    let dom = if cc.domain == DomainDesc::WholeSpace {
                        DomainDesc::Ball { center: vec![0.0; prob.dim()], radius: 4.0 }
                    } else {
                        cc.domain.clone()
                    };
                    let probe = GeometryCertificate { domain: dom, ..cc.clone() };
                    let r = sampled_soundness(&probe, &prob, 10_000, 11).unwrap();
                    assert!(r.pass, "{cc:?}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn hierarchy() {
        let c = GeometryCertificate::new(CertKind::Conditioned, 2.0, 2.0, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        let r = hierarchy_restrict(&c, 4.0, RestrictBound::Delta(1.0)).unwrap();
        assert_eq!(r.constant, 4.0);
        assert_eq!(r.domain, DomainDesc::ArgminNeighborhood { delta: 1.0 });
        for i in 0..=1000 {
            let d = i as f64 / 1000.0;
            assert!(r.constant / 4.0 * d.powi(4) <= c.constant / 2.0 * d * d + 1e-15);
        }
        let l = GeometryCertificate::new(CertKind::Lojasiewicz, 2.0, 1.0, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        assert_eq!(hierarchy_restrict(&l, 3.0, RestrictBound::Level(1.0)).unwrap().constant, 1.0);
        assert_eq!(hierarchy_restrict(&l, 2.0, RestrictBound::Level(5.0)).unwrap(), l);
        assert!(matches!(hierarchy_restrict(&l, 3.0, RestrictBound::Delta(1.0)), Err(Error::MissingData(_))));
        assert!(hierarchy_restrict(&c, 1.5, RestrictBound::Delta(1.0)).is_err());
    }

    #[test]
    fn restricted_certificates_are_sound() {
        // ||x||^2 is 2-conditioned; its restriction to dist <= 0.8 at p' = 3 must hold there
        let prob = make_norm_pow_weighted(2.0, 1.0, 2).unwrap();
        let c = exact_cert_norm_pow(2.0, 1.0).unwrap();
        let r = hierarchy_restrict(&c[0], 3.0, RestrictBound::Delta(0.8)).unwrap();
        assert!(sampled_soundness(&r, &prob, 5000, 2).unwrap().pass);
        let s = hierarchy_restrict(&c[1], 3.0, RestrictBound::Delta(0.8)).unwrap();
        assert!(sampled_soundness(&s, &prob, 5000, 2).unwrap().pass);
        let l = hierarchy_restrict(&c[2], 3.0, RestrictBound::Level(0.5)).unwrap();
        assert!(sampled_soundness(&l, &prob, 5000, 2).unwrap().pass);
    }

    #[test]
    fn smoothness_consistency() {
        let mk = |p, g| GeometryCertificate::new(CertKind::Conditioned, p, g, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
        assert!(matches!(validate_smoothness_consistency(&mk(1.0, 1.0), 1.0, 1.0).unwrap(), Consistency::Rejected(_)));
        assert_eq!(validate_smoothness_consistency(&mk(2.0, 0.5), 1.0, 1.0).unwrap(), Consistency::Ok);
        assert!(matches!(validate_smoothness_consistency(&mk(2.0, 2.0), 1.0, 1.0).unwrap(), Consistency::Rejected(_)));
        // shipped smooth certificates
        let (sc, _) = exact_cert_strongly_convex(3.0).unwrap();
        assert_eq!(validate_smoothness_consistency(&sc, 1.0, 3.0).unwrap(), Consistency::Ok);
        let ls = exact_cert_least_squares(&diag(&[2.0, 0.5])).unwrap();
        assert_eq!(validate_smoothness_consistency(&ls, 1.0, 4.0).unwrap(), Consistency::Ok);
        let np = exact_cert_norm_pow(4.0, 1.0).unwrap();
        assert_eq!(validate_smoothness_consistency(&np[0], 1.0, 1e3).unwrap(), Consistency::Ok);
    }

    #[test]
    fn ellipticity() {
        let id = SymMatrix::<f64>::identity(3);
        for cone in [
            DomainDesc::WholeSpace,
            DomainDesc::SupportSubspace { indices: vec![0, 2] },
            DomainDesc::ConeSparse { s: 2 },
            DomainDesc::Ball { center: vec![0.0; 3], radius: 1.0 },
        ] {
            assert!(ellipticity_check(&id, &cone, 1.0, 200, 1).unwrap().ok);
        }
        let a = DenseOperator::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let r = ellipticity_check(&a.gram(), &DomainDesc::SupportSubspace { indices: vec![1] }, 0.1, 10, 1).unwrap();
        assert!(!r.ok);
        assert_eq!(r.counterexample.unwrap().iter().map(|v: &f64| v.abs()).collect::<Vec<_>>(), vec![0.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let entries: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = DenseOperator::new(5, 6, entries).unwrap();
        let g = restricted_min_eig(&a, 3).unwrap();
        let cone = DomainDesc::ConeSparse { s: 3 };
        assert!(ellipticity_check(&a.gram(), &cone, g, 0, 0).unwrap().ok);
        let r = ellipticity_check(&a.gram(), &cone, g + 1e-6, 0, 0).unwrap();
        assert!(!r.ok);
        let d = r.counterexample.unwrap();
        assert!(support_of(&d).len() <= 3);
        assert_relative_eq!(a.gram().quad_form(&d).unwrap(), g, max_relative = 1e-9);
    }

    #[test]
    fn conditioning_from_ellipticity_cases() {
        let cone = DomainDesc::SupportSubspace { indices: vec![0, 1] };
        let (c, d) = conditioning_from_ellipticity(0.7_f64, 0.7, None, cone.clone()).unwrap();
        assert_eq!((c.p, c.constant, c.domain.clone()), (2.0, 0.7, cone.clone()));
        assert!(d.is_infinite());
        let (_, d) = conditioning_from_ellipticity(1.0, 0.5, Some(1.0), DomainDesc::WholeSpace).unwrap();
        assert_eq!(d, 0.5);
        let (_, d) = conditioning_from_ellipticity(1.0, 1.0 - 1e-9, Some(1.0), DomainDesc::WholeSpace).unwrap();
        assert!(d < 1e-8);
        assert!(conditioning_from_ellipticity(1.0, 1.0, Some(1.0), DomainDesc::WholeSpace).is_err());
    }

    #[test]
    fn membership_and_bounded_flags() {
        let p = l1(2);
        let ctx = SampleContext::with_problem(&p);
        let d = DomainDesc::Ball { center: vec![0.0, 0.0], radius: 1.0 }.intersect(DomainDesc::Sublevel { r: 0.5 });
        assert!(d.bounded());
        assert!(d.contains(&ctx, &[0.2, 0.2]).unwrap());
        assert!(!d.contains(&ctx, &[0.4, 0.2]).unwrap());
        assert!(!DomainDesc::<f64>::Sublevel { r: 1.0 }.bounded());
        assert!(DomainDesc::<f64>::Sublevel { r: 1.0 }.contains(&SampleContext::new(2), &[0.0, 0.0]).is_err());
        assert!(DomainDesc::SupportSubspace { indices: vec![1] }.contains(&ctx, &[0.0, 3.0]).unwrap());
        assert!(!DomainDesc::ConeSparse { s: 1 }.contains(&ctx, &[1.0, 3.0]).unwrap());
    }

    proptest! {
        #[test]
        fn samples_are_members_and_reproducible(seed in any::<u64>(), r in 0.05f64..3.0) {
            let p = l1(3);
            let ctx = SampleContext::with_problem(&p);
            for d in [
                DomainDesc::Sublevel { r },
                DomainDesc::Ball { center: vec![1.0, 0.0, -1.0], radius: r },
                DomainDesc::ConeSparse { s: 2 },
                DomainDesc::ArgminNeighborhood { delta: r },
                DomainDesc::HalfSpace { normal: vec![1.0, 1.0, 0.0], offset: -r },
                DomainDesc::Custom { sampler: CustomSampler::Annulus { center: vec![0.0; 3], inner: r, outer: 2.0 * r } },
            ] {
                let a = sample_domain(&d, ctx, 20, seed).unwrap();
                let b = sample_domain(&d, ctx, 20, seed).unwrap();
                prop_assert_eq!(&a, &b);
                for x in &a {
                    prop_assert!(d.contains(&ctx, x).unwrap());
                }
            }
        }

        #[test]
        fn hierarchy_conditioned_bound_holds(p in 1.0f64..4.0, dp in 0.0f64..3.0, gamma in 0.1f64..5.0, delta in 0.1f64..3.0) {
            let c = GeometryCertificate::new(CertKind::Conditioned, p, gamma, DomainDesc::WholeSpace, Provenance::Exact).unwrap();
            let r = hierarchy_restrict(&c, p + dp, RestrictBound::Delta(delta)).unwrap();
            for i in 0..=100 {
                let d = delta * i as f64 / 100.0;
                prop_assert!(r.constant / r.p * d.powf(r.p) <= (gamma / p * d.powf(p)) * (1.0 + 1e-12) + 1e-300);
            }
        }
    }
}
