//! Rate constants, predicted envelopes and certification of measured traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::check_step;
use crate::geometry::GeometryCertificate;
use crate::scalar::Scalar;
use crate::solver::{CheckReport, Trace};

/// Relative slack on envelope checks.
pub const ENVELOPE_REL_TOL: f64 = 1e-9;
/// Absolute slack on gap checks, in units of `r0`.
pub const ZERO_GAP_TOL: f64 = 1e-13;
/// Bisection tolerance (relative, in `s`) for the sublinear constant.
pub const DELTA_BISECT_TOL: f64 = 1e-12;

/// `kappa = lambda (2 - lambda L) / (2 c^2)`.
pub fn kappa<T: Scalar>(lambda: T, lipschitz: T, c: T) -> Result<T> {
    check_step(lambda, lipschitz)?;
    if !(c > T::zero()) {
        return Err(Error::Domain("lojasiewicz constant must be positive".into()));
    }
    let two = T::lit(2.0);
    Ok(lambda * (two - lambda * lipschitz) / (two * c * c))
}

/// `kappa = a / (b^2 c^2)` for a descent method with constants `a`, `b`.
pub fn kappa_general_descent<T: Scalar>(a: T, b: T, c: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero() && c > T::zero()) {
        return Err(Error::Domain("a, b and c must be positive".into()));
    }
    Ok(a / (b * b * c * c))
}

/// Descent constants of the FB method: `a = (2 - lambda L)/(2 lambda)`, `b = 1/lambda`.
pub fn descent_constants<T: Scalar>(lambda: T, lipschitz: T) -> Result<(T, T)> {
    check_step(lambda, lipschitz)?;
    let two = T::lit(2.0);
    Ok(((two - lambda * lipschitz) / (two * lambda), lambda.recip()))
}

/// Constant `C` of the `C dist_0^2 / (2 lambda n)` value bound.
pub fn worst_case_constant<T: Scalar>(lambda: T, lipschitz: T) -> Result<T> {
    check_step(lambda, lipschitz)?;
    let ll = lambda * lipschitz;
    Ok(if ll <= T::one() {
        T::one()
    } else {
        T::one() + T::lit(2.0) * (ll - T::one()) / (T::lit(2.0) - ll)
    })
}

fn check_alpha<T: Scalar>(alpha: T, kappa: T, r0: T) -> Result<()> {
    if !(alpha > T::one()) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha={alpha} must exceed 1")));
    }
    if !(kappa > T::zero()) || !(r0 > T::zero()) {
        return Err(Error::Domain("kappa and r0 must be positive".into()));
    }
    Ok(())
}

/// `kappa_tilde = min(kappa, kappa^((alpha-1)/alpha))`.
pub fn kappa_tilde<T: Scalar>(alpha: T, kappa: T) -> T {
    kappa.min(kappa.powf((alpha - T::one()) / alpha))
}

/// `delta = max_{s >= 1} min((alpha-1)/s, (1 - s^(-(alpha-1)/alpha)) / (K r0^(alpha-1)))`
/// with `K = kappa^((alpha-1)/alpha)`, at the crossing of the two terms.
///
/// The second term carries `1 / (K r0^(alpha-1))`. With the factor
/// `K r0^(alpha-1)` instead, `delta` grows with `r0` while `r_1` of the
/// equality recursion grows without bound, so the bound fails for large `r0`
/// (`alpha = 1.5, kappa = 0.5, r0 = 100`: `r_1 = 27.6` against `22.2`).
pub fn sublinear_delta<T: Scalar>(alpha: T, kappa: T, r0: T) -> Result<T> {
    check_alpha(alpha, kappa, r0)?;
    let am1 = alpha - T::one();
    let scale = (kappa.powf(am1 / alpha) * r0.powf(am1)).recip();
    let dec = |s: T| am1 / s;
    let inc = |s: T| scale * (T::one() - s.powf(-am1 / alpha));
    let val = |s: T| dec(s).min(inc(s));
    let mut lo = T::one();
    let mut hi = T::lit(2.0);
    let mut guard = 0;
    while inc(hi) < dec(hi) {
        lo = hi;
        hi = hi * T::lit(2.0);
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::Domain("no crossing found for the sublinear constant".into()));
        }
    }
    let tol = T::tol(DELTA_BISECT_TOL);
    for _ in 0..400 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        if inc(mid) < dec(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(val(lo).max(val(hi)))
}

/// `r_n <= (kappa_tilde delta n)^(-1/(alpha-1))` for sequences with
/// `r_n - r_{n+1} >= kappa r_{n+1}^alpha`.
pub fn sublinear_lemma_bound<T: Scalar>(alpha: T, kappa: T, r0: T, n: usize) -> Result<T> {
    let d = sublinear_delta(alpha, kappa, r0)?;
    let base = kappa_tilde(alpha, kappa) * d * T::lit(n as f64);
    Ok(base.powf(-(alpha - T::one()).recip()))
}

fn alpha_of<T: Scalar>(p: T) -> Result<T> {
    if p > T::lit(2.0) || p < T::zero() {
        Ok(T::lit(2.0) * (p - T::one()) / p)
    } else {
        Err(Error::Domain(format!("sublinear constants need p > 2 or p < 0, got {p}")))
    }
}

/// `C_p' = 1 / (kappa_tilde delta)` with `alpha = 2(p-1)/p`.
pub fn cprime<T: Scalar>(p: T, kappa: T, r0: T) -> Result<T> {
    let alpha = alpha_of(p)?;
    let d = sublinear_delta(alpha, kappa, r0)?;
    Ok((kappa_tilde(alpha, kappa) * d).recip())
}

/// Iterate constant `C_p`.
pub fn cp_const<T: Scalar>(p: T, lambda: T, lipschitz: T, c: T, r0: T) -> Result<T> {
    check_step(lambda, lipschitz)?;
    if !(p >= T::one()) || !(c > T::zero()) || !(r0 > T::zero()) {
        return Err(Error::Domain("need p >= 1, c > 0, r0 > 0".into()));
    }
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let m = two - lambda * lipschitz;
    Ok(if p >= two {
        two * p * c / m + (two * lambda * r0).sqrt() * m.powf(-half) * r0.powf(-p.recip())
    } else {
        two * p * c * r0.powf(p.recip()) * r0.powf(-half) / m + (two * lambda).sqrt() * m.powf(-half)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Finite,
    Superlinear,
    Qlinear,
    SublinearPos,
    SublinearNeg,
    Worstcase,
}

impl Regime {
    pub fn for_exponent<T: Scalar>(p: T) -> Result<Regime> {
        let two = T::lit(2.0);
        Ok(if p < T::zero() {
            Regime::SublinearNeg
        } else if p == T::one() {
            Regime::Finite
        } else if p > T::one() && p < two {
            Regime::Superlinear
        } else if p == two {
            Regime::Qlinear
        } else if p > two && p.is_finite() {
            Regime::SublinearPos
        } else {
            return Err(Error::Domain(format!("exponent p={p} not in (-inf,0) u [1,inf)")));
        })
    }
}

/// Predicted envelopes for one regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct RatePrediction<T: Scalar> {
    pub regime: Regime,
    pub p: T,
    pub kappa: T,
    pub r0: T,
    pub cp: Option<T>,
    pub cp_prime: Option<T>,
    pub epsilon: Option<T>,
    pub finite_bound_n: Option<usize>,
    pub superlinear_order: Option<T>,
    /// Worst-case regime only.
    pub worst_case_c: Option<T>,
    pub lambda: Option<T>,
    pub dist0: Option<T>,
}

/// Prediction from `p`, `kappa` and `r0`. `cp_prime` is computed when not given.
pub fn predict<T: Scalar>(p: T, kappa: T, r0: T, cp: Option<T>, cp_prime: Option<T>) -> Result<RatePrediction<T>> {
    let regime = Regime::for_exponent(p)?;
    if !(kappa > T::zero()) || !kappa.is_finite() {
        return Err(Error::Domain("kappa must be positive and finite".into()));
    }
    if !(r0 >= T::zero()) || !r0.is_finite() {
        return Err(Error::Domain("r0 must be finite and nonnegative".into()));
    }
    let mut out = RatePrediction {
        regime,
        p,
        kappa,
        r0,
        cp,
        cp_prime: None,
        epsilon: None,
        finite_bound_n: None,
        superlinear_order: None,
        worst_case_c: None,
        lambda: None,
        dist0: None,
    };
    match regime {
        Regime::Finite => {
            let q = (r0 / kappa).ceil().to_f64_lossy();
            out.finite_bound_n = Some(q.max(0.0) as usize);
        }
        Regime::Superlinear => out.superlinear_order = Some((p - T::one()).recip()),
        Regime::Qlinear => out.epsilon = Some((T::one() + kappa).recip()),
        Regime::SublinearPos | Regime::SublinearNeg => {
            out.cp_prime = Some(match cp_prime {
                Some(v) => v,
                None if r0 > T::zero() => cprime(p, kappa, r0)?,
                None => T::zero(),
            });
            if regime == Regime::SublinearNeg {
                out.cp = None;
            }
        }
        Regime::Worstcase => unreachable!(),
    }
    Ok(out)
}

/// Prediction for a certificate at step `lambda`; `c` is the Lojasiewicz
/// constant implied by the certificate.
pub fn predict_from_certificate<T: Scalar>(
    cert: &GeometryCertificate<T>,
    lambda: T,
    lipschitz: T,
    r0: T,
) -> Result<RatePrediction<T>> {
    let c = cert.lojasiewicz_constant()?;
    let k = kappa(lambda, lipschitz, c)?;
    let cp = if cert.p >= T::one() && r0 > T::zero() {
        Some(cp_const(cert.p, lambda, lipschitz, c, r0)?)
    } else {
        None
    };
    predict(cert.p, k, r0, cp, None)
}

/// `gap_n <= C dist_0^2 / (2 lambda n)`.
pub fn predict_worst_case<T: Scalar>(lambda: T, lipschitz: T, dist0: T, r0: T) -> Result<RatePrediction<T>> {
    let c = worst_case_constant(lambda, lipschitz)?;
    Ok(RatePrediction {
        regime: Regime::Worstcase,
        p: T::nan(),
        kappa: T::nan(),
        r0,
        cp: None,
        cp_prime: None,
        epsilon: None,
        finite_bound_n: None,
        superlinear_order: None,
        worst_case_c: Some(c),
        lambda: Some(lambda),
        dist0: Some(dist0),
    })
}

impl<T: Scalar> RatePrediction<T> {
    /// Gap envelope `e_0..=e_n`.
    pub fn envelopes(&self, n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.r0);
        for k in 1..=n {
            let e = if self.regime == Regime::Superlinear {
                let q = self.p / (T::lit(2.0) * (self.p - T::one()));
                let prev = out[k - 1];
                prev.min((prev / self.kappa).powf(q))
            } else {
                self.envelope_closed(k)
            };
            out.push(e);
        }
        out
    }

    /// Gap envelope at `n`.
    pub fn envelope(&self, n: usize) -> T {
        match self.regime {
            Regime::Superlinear => *self.envelopes(n).last().unwrap(),
            _ => {
                if n == 0 {
                    self.r0
                } else {
                    self.envelope_closed(n)
                }
            }
        }
    }

    fn envelope_closed(&self, n: usize) -> T {
        let two = T::lit(2.0);
        let kf = T::lit(n as f64);
        match self.regime {
            Regime::Finite => (self.r0 - kf * self.kappa).max(T::zero()),
            Regime::Qlinear => self.r0 / (T::one() + self.kappa).powf(kf),
            Regime::SublinearPos | Regime::SublinearNeg => {
                let e = self.p / (self.p - two);
                self.r0.min(self.cp_prime.unwrap_or(T::zero()).powf(e) * kf.powf(-e))
            }
            Regime::Worstcase => {
                let d = self.dist0.unwrap_or(T::zero());
                self.worst_case_c.unwrap_or(T::one()) * d * d / (two * self.lambda.unwrap_or(T::one()) * kf)
            }
            Regime::Superlinear => unreachable!(),
        }
    }

    /// Bounds on `||x_n - x_inf||` for `n >= 1`, from `C_p r_{n-1}^(1/max(2,p))`.
    pub fn iterate_envelopes(&self, n: usize) -> Option<Vec<T>> {
        let cp = self.cp?;
        if matches!(self.regime, Regime::SublinearNeg | Regime::Worstcase) {
            return None;
        }
        let e = self.envelopes(n);
        let ex = self.p.max(T::lit(2.0)).recip();
        let mut out = vec![T::infinity()];
        for k in 1..=n {
            out.push(cp * e[k - 1].min(self.r0).powf(ex));
        }
        Some(out)
    }
}

/// Gap value at a checkpoint next to its envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct Checkpoint<T: Scalar> {
    pub n: usize,
    pub gap: T,
    pub envelope: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct CertReport<T: Scalar> {
    pub pass: bool,
    pub first_violation: Option<usize>,
    /// Which check failed: `q_check`, `r_check`, `finite`, or `iterate`.
    pub kind: Option<String>,
    pub measured_slope: Option<T>,
    pub slope_flag: Option<String>,
    pub measured_qfactor: Option<T>,
    pub checkpoints: Vec<Checkpoint<T>>,
}

fn checkpoint_indices(n_last: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut k = 1usize;
    while k <= n_last {
        for m in [1, 2, 5] {
            if k * m <= n_last {
                out.push(k * m);
            }
        }
        k = match k.checked_mul(10) {
            Some(v) => v,
            None => break,
        };
    }
    if *out.last().unwrap() != n_last {
        out.push(n_last);
    }
    out
}

/// Largest `gap_{n+1}/gap_n` over the last quarter of the part of the trace
/// above `sqrt(eps) * gap_0`. Gaps are differences of function values, so
/// their round-off scales with `|f|`, not with the gap.
pub fn tail_qfactor<T: Scalar>(series: &[T]) -> Option<T> {
    let floor = T::epsilon().sqrt() * series.first()?.abs();
    let n = series.iter().rposition(|v| *v > floor)? + 1;
    if n < 2 {
        return None;
    }
    let start = n - (n / 4).max(1) - 1;
    series[start..n]
        .windows(2)
        .filter(|w| w[0] > T::zero() && w[1] > T::zero())
        .map(|w| w[1] / w[0])
        .fold(None, |m, v| Some(m.map_or(v, |m: T| m.max(v))))
}

/// Compares a trace against the prediction's envelopes. Q-checks test the
/// one-step ratio, R-checks the closed envelope.
pub fn certify_trace<T: Scalar>(trace: &Trace<T>, pred: &RatePrediction<T>) -> Result<CertReport<T>> {
    if trace.is_empty() {
        return Err(Error::MissingData("empty trace".into()));
    }
    let n_last = trace.last_index();
    let g = &trace.gap;
    let rel = T::tol(ENVELOPE_REL_TOL);
    let abs = T::tol(ZERO_GAP_TOL) * (T::one() + pred.r0);
    if g[0] > pred.r0 * (T::one() + rel) + abs {
        return Err(Error::Precondition(format!("trace starts at gap {} above r0 {}", g[0], pred.r0)));
    }
    let env = pred.envelopes(n_last);
    let mut fail: Option<(usize, &str)> = None;
    let note = |n: usize, kind: &'static str, fail: &mut Option<(usize, &str)>| {
        if fail.is_none_or(|(m, _)| n < m) {
            *fail = Some((n, kind));
        }
    };
    for n in 1..=n_last {
        if g[n] > env[n] * (T::one() + rel) + abs {
            note(n, "r_check", &mut fail);
            break;
        }
    }
    match pred.regime {
        Regime::Finite => {
            if let Some(nf) = pred.finite_bound_n {
                if let Some(n) = (nf..=n_last).find(|&n| g[n] > abs) {
                    note(n, "finite", &mut fail);
                }
            }
        }
        Regime::Qlinear => {
            let q = (T::one() + pred.kappa).recip();
            if let Some(n) = (0..n_last).find(|&n| g[n + 1] > g[n] * q * (T::one() + rel) + abs) {
                note(n + 1, "q_check", &mut fail);
            }
        }
        Regime::Superlinear => {
            let e = pred.p / (T::lit(2.0) * (pred.p - T::one()));
            if let Some(n) = (0..n_last)
                .find(|&n| g[n + 1] > g[n].min((g[n].max(T::zero()) / pred.kappa).powf(e)) * (T::one() + rel) + abs)
            {
                note(n + 1, "q_check", &mut fail);
            }
        }
        _ => {}
    }
    if let (Some(d), Some(it)) = (trace.dist.as_ref(), pred.iterate_envelopes(n_last)) {
        let dabs = T::tol(ZERO_GAP_TOL) * (T::one() + d[0]);
        if let Some(n) = (1..=n_last).find(|&n| d[n] > it[n] * (T::one() + rel) + dabs) {
            note(n, "iterate", &mut fail);
        }
    }
    let slope = loglog_slope(g, 0.5).ok();
    Ok(CertReport {
        pass: fail.is_none(),
        first_violation: fail.map(|f| f.0),
        kind: fail.map(|f| f.1.to_string()),
        measured_slope: slope.as_ref().map(|s| s.slope),
        slope_flag: slope.and_then(|s| s.flag),
        measured_qfactor: tail_qfactor(g),
        checkpoints: checkpoint_indices(n_last)
            .into_iter()
            .map(|n| Checkpoint { n, gap: g[n], envelope: env[n] })
            .collect(),
    })
}

/// `gamma = (2 - lambda L)(1 - eps)^2 / lambda`: Q-linear values with factor
/// `eps` give 2-conditioning with this constant.
pub fn linear_forward<T: Scalar>(epsilon: T, lambda: T, lipschitz: T) -> Result<T> {
    check_step(lambda, lipschitz)?;
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(Error::Domain(format!("epsilon={epsilon} not in (0,1)")));
    }
    let om = T::one() - epsilon;
    Ok((T::lit(2.0) - lambda * lipschitz) * om * om / lambda)
}

/// `eps = (1 + lambda gamma)^(-1/2)`, valid for `lambda <= 1/L`.
pub fn linear_backward<T: Scalar>(gamma: T, lambda: T, lipschitz: T) -> Result<T> {
    if !(lambda > T::zero()) || lambda * lipschitz > T::one() + T::tol(1e-12) {
        return Err(Error::InvalidStep {
            lambda: lambda.to_f64_lossy(),
            upper: if lipschitz > T::zero() { lipschitz.recip().to_f64_lossy() } else { f64::INFINITY },
        });
    }
    if !(gamma > T::zero()) {
        return Err(Error::Domain("gamma must be positive".into()));
    }
    Ok((T::one() + lambda * gamma).sqrt().recip())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SuperlinearReport<T: Scalar> {
    pub pass: bool,
    pub first_violation: Option<usize>,
    /// `distance` for the first inequality, `gap` for the second.
    pub kind: Option<String>,
    /// `log dist_{n+1} / log dist_n` where `0 < dist_n < 1` and both are normal floats.
    pub order_estimates: Vec<T>,
}

/// `gamma_sub dist(Tx)^(p-1) <= (2/lambda) dist(x)` and
/// `gap(Tx)^(p-1) <= (p/gamma)^2 (2/lambda)^p gap(x)` for one step.
pub fn superlinear_step_holds<T: Scalar>(
    p: T,
    gamma_sub: T,
    gamma_cond: T,
    lambda: T,
    (d0, d1): (T, T),
    (g0, g1): (T, T),
) -> (bool, bool) {
    let two = T::lit(2.0);
    let rel = T::one() + T::tol(ENVELOPE_REL_TOL);
    let eps = T::tol(1e-300);
    let i = gamma_sub * d1.powf(p - T::one()) <= two / lambda * d0 * rel + eps;
    let k = (p / gamma_cond).powi(2) * (two / lambda).powf(p);
    let ii = g1.max(T::zero()).powf(p - T::one()) <= k * g0.max(T::zero()) * rel + eps;
    (i, ii)
}

/// Both superlinear one-step inequalities along a trace with distances.
pub fn superlinear_bounds_check<T: Scalar>(
    trace: &Trace<T>,
    p: T,
    gamma_sub: T,
    gamma_cond: T,
    lambda: T,
) -> Result<SuperlinearReport<T>> {
    if !(p > T::one() && p < T::lit(2.0)) {
        return Err(Error::Domain(format!("superlinear checks need p in (1,2), got {p}")));
    }
    let d = trace.dist.as_ref().ok_or_else(|| Error::MissingData("superlinear check needs distances".into()))?;
    let g = &trace.gap;
    let mut rep = SuperlinearReport { pass: true, first_violation: None, kind: None, order_estimates: vec![] };
    for n in 0..trace.last_index() {
        let (i, ii) = superlinear_step_holds(p, gamma_sub, gamma_cond, lambda, (d[n], d[n + 1]), (g[n], g[n + 1]));
        if rep.pass && !(i && ii) {
            rep.pass = false;
            rep.first_violation = Some(n + 1);
            rep.kind = Some(if !i { "distance" } else { "gap" }.into());
        }
        if d[n] > T::zero() && d[n] < T::one() && d[n].is_normal() && d[n + 1].is_normal() {
            rep.order_estimates.push(d[n + 1].ln() / d[n].ln());
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar", serialize = "T: Scalar"))]
pub struct SlopeFit<T: Scalar> {
    pub slope: T,
    pub points: usize,
    /// `superpolynomial` when the decay outruns any power law on the window.
    pub flag: Option<String>,
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares slope of `log series_n` against `log n` over the final
/// `window_fraction` of indices `n >= 1`, skipping exact zeros.
pub fn loglog_slope<T: Scalar>(series: &[T], window_fraction: f64) -> Result<SlopeFit<T>> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config("window fraction must be in (0, 1]".into()));
    }
    let n_last = series.len().saturating_sub(1);
    let start = ((n_last as f64) * (1.0 - window_fraction)).floor().max(1.0) as usize;
    let pts: Vec<(f64, f64)> = (start..=n_last)
        .filter_map(|n| {
            let v = series[n].to_f64_lossy();
            (v > 0.0 && v.is_finite()).then(|| ((n as f64).ln(), v.ln()))
        })
        .collect();
    if pts.len() < 5 {
        return Err(Error::MissingData(format!("{} usable points, need 5", pts.len())));
    }
    let slope = ols_slope(&pts);
    let half = pts.len() / 2;
    let flag = if pts.len() >= 10 && slope < -3.0 {
        let early = ols_slope(&pts[..half]);
        let late = ols_slope(&pts[half..]);
        (late <= 1.2 * early).then(|| "superpolynomial".to_string())
    } else {
        None
    };
    Ok(SlopeFit { slope: T::lit(slope), points: pts.len(), flag })
}

/// Checks the two descent hypotheses of a general method,
/// `a step_{n+1}^2 <= gap_n - gap_{n+1}` and `resid_{n+1} <= b step_{n+1}`.
pub fn certify_general_descent<T: Scalar>(trace: &Trace<T>, a: T, b: T) -> Result<CheckReport> {
    let n = trace.len();
    if trace.step.len() != n || trace.resid.len() != n {
        return Err(Error::MissingData("trace needs gap, step and resid arrays".into()));
    }
    let tol = |m: T| T::tol(1e-10) * (T::one() + m.abs());
    for k in 0..n.saturating_sub(1) {
        let s = trace.step[k + 1];
        if a * s * s > trace.gap[k] - trace.gap[k + 1] + tol(trace.gap[k]) {
            return Ok(CheckReport {
                name: "general_descent".into(),
                pass: false,
                first_violation: Some(k + 1),
                detail: Some("sufficient decrease".into()),
            });
        }
        if trace.resid[k + 1] > b * s + tol(b * s) {
            return Ok(CheckReport {
                name: "general_descent".into(),
                pass: false,
                first_violation: Some(k + 1),
                detail: Some("relative error".into()),
            });
        }
    }
    Ok(CheckReport { name: "general_descent".into(), pass: true, first_violation: None, detail: None })
}
