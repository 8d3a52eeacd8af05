//! Seeded rejection samplers for [`DomainDesc`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::funcs::CompositeProblem;
use crate::geometry::{CustomSampler, DomainDesc};
use crate::invprob::{construct_source_point, DiagonalInverseProblem, SourceSpec};
use crate::scalar::Scalar;
use crate::vecops::{from_f64, to_f64};

/// Proposals tried per accepted sample before giving up.
pub const MAX_PROPOSALS: usize = 100_000;
/// Sphere probes used when searching for a bounding ball.
const SPHERE_PROBES: usize = 256;
/// Doublings allowed before a set is declared unbounded.
const MAX_DOUBLINGS: usize = 40;

/// Ambient dimension plus the problem, for domains defined through `f`.
#[derive(Clone, Copy, Debug)]
pub struct SampleContext<'a, T: Scalar> {
    pub dim: usize,
    pub problem: Option<&'a CompositeProblem<T>>,
}

impl<'a, T: Scalar> SampleContext<'a, T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, problem: None }
    }

    pub fn with_problem(problem: &'a CompositeProblem<T>) -> Self {
        Self { dim: problem.dim(), problem: Some(problem) }
    }
}

enum Proposal<T: Scalar> {
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { center: Vec<f64> },
    Support { indices: Vec<usize> },
    Sparse { s: usize },
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Neighborhood { delta: f64 },
    Source { dp: DiagonalInverseProblem<T>, spec: SourceSpec<T> },
    /// Bounding ball still to be found.
    Bounding,
}

fn rank<T: Scalar>(d: &DomainDesc<T>) -> u8 {
    match d {
        DomainDesc::Ball { .. } | DomainDesc::BallAndSublevel { .. } | DomainDesc::Custom { .. } => 0,
        DomainDesc::ArgminNeighborhood { .. } => 1,
        DomainDesc::SourceSet { .. } => 2,
        DomainDesc::SupportSubspace { .. } | DomainDesc::ConeSparse { .. } => 3,
        DomainDesc::HalfSpace { .. } => 4,
        DomainDesc::Sublevel { .. } | DomainDesc::ResidLevel { .. } => 5,
        DomainDesc::WholeSpace => 6,
        DomainDesc::Intersect { parts } => parts.iter().map(rank).min().unwrap_or(6),
    }
}

fn driver<T: Scalar>(d: &DomainDesc<T>) -> &DomainDesc<T> {
    match d {
        DomainDesc::Intersect { parts } => parts.iter().min_by_key(|p| rank(*p)).map(driver).unwrap_or(d),
        _ => d,
    }
}

/// Rejection sampler: proposals come from the most specific part of the
/// domain and are accepted when the whole domain contains them.
pub struct DomainSampler<'a, T: Scalar> {
    domain: &'a DomainDesc<T>,
    ctx: SampleContext<'a, T>,
    rng: ChaCha8Rng,
    proposal: Proposal<T>,
}

impl<'a, T: Scalar> DomainSampler<'a, T> {
    pub fn new(domain: &'a DomainDesc<T>, ctx: SampleContext<'a, T>, rng: ChaCha8Rng) -> Result<Self> {
        let need = |what: &str| Error::MissingData(format!("{what} sampling needs a problem"));
        let proposal = match driver(domain) {
            DomainDesc::Ball { center, radius } | DomainDesc::BallAndSublevel { center, radius, .. } => {
                crate::vecops::check_len(ctx.dim, center.len())?;
                Proposal::Ball { center: to_f64(center), radius: radius.to_f64_lossy() }
            }
            DomainDesc::Custom { sampler: CustomSampler::Annulus { center, inner, outer } } => {
                crate::vecops::check_len(ctx.dim, center.len())?;
                Proposal::Annulus { center: to_f64(center), inner: inner.to_f64_lossy(), outer: outer.to_f64_lossy() }
            }
            DomainDesc::Custom { sampler: CustomSampler::Box { lo, hi } } => {
                crate::vecops::check_len(ctx.dim, lo.len())?;
                crate::vecops::check_len(ctx.dim, hi.len())?;
                Proposal::Box { lo: to_f64(lo), hi: to_f64(hi) }
            }
            DomainDesc::ArgminNeighborhood { delta } => {
                let p = ctx.problem.ok_or_else(|| need("neighborhood"))?;
                if !p.argmin().dist_available() {
                    return Err(Error::MissingData("neighborhood sampling needs an argmin oracle".into()));
                }
                Proposal::Neighborhood { delta: delta.to_f64_lossy() }
            }
            DomainDesc::SourceSet { mu, delta } => {
                let p = ctx.problem.ok_or_else(|| need("source set"))?;
                let dp = DiagonalInverseProblem::from_problem(p)?;
                Proposal::Source { dp, spec: SourceSpec::new(*mu, *delta)? }
            }
            DomainDesc::SupportSubspace { indices } => Proposal::Support { indices: indices.clone() },
            DomainDesc::ConeSparse { s } => {
                if *s == 0 || *s > ctx.dim {
                    return Err(Error::Domain(format!("sparsity {s} outside 1..={}", ctx.dim)));
                }
                Proposal::Sparse { s: *s }
            }
            DomainDesc::HalfSpace { normal, offset } => {
                crate::vecops::check_len(ctx.dim, normal.len())?;
                Proposal::HalfSpace { normal: to_f64(normal), offset: offset.to_f64_lossy() }
            }
            DomainDesc::Sublevel { .. } | DomainDesc::ResidLevel { .. } => {
                ctx.problem.ok_or_else(|| need("sublevel"))?;
                Proposal::Bounding
            }
            DomainDesc::WholeSpace | DomainDesc::Intersect { .. } => Proposal::Gaussian { center: center_of(&ctx) },
        };
        let mut s = Self { domain, ctx, rng, proposal };
        if matches!(s.proposal, Proposal::Bounding) {
            s.proposal = s.bounding_ball()?;
        }
        Ok(s)
    }

    fn gauss(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn unit(&mut self, n: usize) -> Vec<f64> {
        loop {
            let g = self.gauss(n);
            let r = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 1e-300 {
                return g.into_iter().map(|v| v / r).collect();
            }
        }
    }

    fn in_ball(&mut self, center: &[f64], radius: f64) -> Vec<f64> {
        let n = center.len();
        let u = self.unit(n);
        let rho = radius * self.rng.random::<f64>().powf(1.0 / n as f64);
        center.iter().zip(u).map(|(c, v)| c + rho * v).collect()
    }

    fn probe_sphere(&mut self, center: &[f64], radius: f64) -> Result<bool> {
        for _ in 0..SPHERE_PROBES {
            let u = self.unit(center.len());
            let x: Vec<f64> = center.iter().zip(u).map(|(c, v)| c + radius * v).collect();
            if self.domain.contains(&self.ctx, &from_f64(&x))? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Ball around the argmin (or the origin) whose boundary sphere misses the set.
    fn bounding_ball(&mut self) -> Result<Proposal<T>> {
        let center = center_of(&self.ctx);
        let mut r = 1.0;
        if self.probe_sphere(&center, r)? {
            let mut k = 0;
            while self.probe_sphere(&center, r)? {
                k += 1;
                if k > MAX_DOUBLINGS {
                    return Err(Error::Sampler("set reaches past radius 2^40; treat it as unbounded".into()));
                }
                r *= 2.0;
            }
        } else {
            while r > 1e-12 && !self.probe_sphere(&center, r / 2.0)? {
                r /= 2.0;
            }
        }
        Ok(Proposal::Ball { center, radius: r })
    }

    fn propose(&mut self) -> Result<Vec<T>> {
        let n = self.ctx.dim;
        let x = match &self.proposal {
            Proposal::Ball { center, radius } => {
                let (c, r) = (center.clone(), *radius);
                self.in_ball(&c, r)
            }
            Proposal::Annulus { center, inner, outer } => {
                let (c, a, b) = (center.clone(), *inner, *outer);
                let d = n as f64;
                let u: f64 = self.rng.random();
                let rho = (a.powf(d) + u * (b.powf(d) - a.powf(d))).powf(1.0 / d);
                let dir = self.unit(n);
                c.iter().zip(dir).map(|(c, v)| c + rho * v).collect()
            }
            Proposal::Box { lo, hi } => {
                let (lo, hi) = (lo.clone(), hi.clone());
                lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * self.rng.random::<f64>()).collect()
            }
            Proposal::Gaussian { center } => {
                let c = center.clone();
                let g = self.gauss(n);
                c.iter().zip(g).map(|(c, v)| c + v).collect()
            }
            Proposal::Support { indices } => {
                let idx = indices.clone();
                let mut x = vec![0.0; n];
                for i in idx {
                    if i >= n {
                        return Err(Error::Domain(format!("support index {i} out of range")));
                    }
                    x[i] = self.rng.sample(StandardNormal);
                }
                x
            }
            Proposal::Sparse { s } => {
                let s = *s;
                let idx = rand::seq::index::sample(&mut self.rng, n, s);
                let mut x = vec![0.0; n];
                for i in idx {
                    x[i] = self.rng.sample(StandardNormal);
                }
                x
            }
            Proposal::HalfSpace { normal, offset } => {
                let (a, b) = (normal.clone(), *offset);
                let mut x = self.gauss(n);
                let ax: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum();
                let aa: f64 = a.iter().map(|u| u * u).sum();
                if ax > b && aa > 0.0 {
                    let t = 2.0 * (ax - b) / aa;
                    for (xi, ai) in x.iter_mut().zip(&a) {
                        *xi -= t * ai;
                    }
                }
                x
            }
            Proposal::Neighborhood { delta } => {
                let d = *delta;
                let p = self.ctx.problem.expect("checked at construction");
                let g = self.gauss(n);
                let base = p.argmin().project(&from_f64::<T>(&g)).expect("checked at construction");
                self.in_ball(&to_f64(&base), d)
            }
            Proposal::Source { .. } => return self.propose_source(),
            Proposal::Bounding => unreachable!("resolved at construction"),
        };
        Ok(from_f64(&x))
    }

    fn propose_source(&mut self) -> Result<Vec<T>> {
        let Proposal::Source { dp, spec } = &self.proposal else { unreachable!() };
        let (dp, spec) = (dp.clone(), spec.clone());
        let n = self.ctx.dim;
        let active: Vec<usize> = (0..n).filter(|&k| dp.sigmas()[k] > T::zero()).collect();
        let dir = self.unit(active.len().max(1));
        let rho = spec.delta.to_f64_lossy() * self.rng.random::<f64>().powf(1.0 / active.len().max(1) as f64);
        let mut w = vec![T::zero(); n];
        for (j, &k) in active.iter().enumerate() {
            w[k] = T::lit(rho * dir[j]);
        }
        let mut x = construct_source_point(&dp, &spec, &w)?.x0;
        for k in 0..n {
            if dp.sigmas()[k] == T::zero() {
                x[k] = T::lit(self.rng.sample::<f64, _>(StandardNormal));
            }
        }
        Ok(x)
    }

    /// Next member of the domain.
    pub fn sample(&mut self) -> Result<Vec<T>> {
        for _ in 0..MAX_PROPOSALS {
            let x = self.propose()?;
            if self.domain.contains(&self.ctx, &x)? {
                return Ok(x);
            }
        }
        Err(Error::Sampler(format!("no member found in {MAX_PROPOSALS} proposals")))
    }
}

fn center_of<T: Scalar>(ctx: &SampleContext<'_, T>) -> Vec<f64> {
    ctx.problem
        .and_then(|p| p.argmin().representative().map(to_f64))
        .unwrap_or_else(|| vec![0.0; ctx.dim])
}
