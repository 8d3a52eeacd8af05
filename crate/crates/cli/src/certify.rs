//! Certification of traces from any descent method satisfying
//! `a ||x_{n+1} - x_n||^2 <= f(x_n) - f(x_{n+1})` and
//! `||df(x_{n+1})||_- <= b ||x_{n+1} - x_n||`.

use geofb_core::rates::{certify_general_descent, certify_trace, cp_const, descent_constants, kappa_general_descent, predict};
use geofb_core::solver::CheckReport;
use geofb_core::{CertReport, GeometryCertificate, RatePrediction, Result, Trace};
use serde::{Deserialize, Serialize};

/// Contents of `prediction.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentPrediction {
    pub a: f64,
    pub b: f64,
    /// Lojasiewicz constant.
    pub c: f64,
    pub p: f64,
    /// Defaults to `gap_0`.
    #[serde(default)]
    pub r0: Option<f64>,
    /// Iterate envelope constant; iterates are not checked without it.
    #[serde(default)]
    pub cp: Option<f64>,
    #[serde(default)]
    pub cp_prime: Option<f64>,
}

impl DescentPrediction {
    /// Constants of forward-backward at step `lambda`.
    pub fn for_fb(lambda: f64, lipschitz: f64, cert: &GeometryCertificate, r0: f64) -> Result<Self> {
        let (a, b) = descent_constants(lambda, lipschitz)?;
        let c = cert.lojasiewicz_constant()?;
        let cp = if cert.p >= 1.0 && r0 > 0.0 { Some(cp_const(cert.p, lambda, lipschitz, c, r0)?) } else { None };
        Ok(Self { a, b, c, p: cert.p, r0: Some(r0), cp, cp_prime: None })
    }

    pub fn kappa(&self) -> Result<f64> {
        kappa_general_descent(self.a, self.b, self.c)
    }

    pub fn rate_prediction(&self, trace: &Trace) -> Result<RatePrediction> {
        let r0 = self.r0.unwrap_or(trace.gap[0]);
        predict(self.p, self.kappa()?, r0, self.cp, self.cp_prime)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentVerdict {
    pub pass: bool,
    pub first_violation: Option<usize>,
    /// `descent` or the failing rate check.
    pub kind: Option<String>,
    pub kappa: f64,
    pub descent: CheckReport,
    pub rate: CertReport,
    pub prediction: RatePrediction,
}

/// Both descent hypotheses, then the envelopes with `kappa = a / (b^2 c^2)`.
pub fn descent_verdict(trace: &Trace, pred: &DescentPrediction) -> Result<DescentVerdict> {
    let descent = certify_general_descent(trace, pred.a, pred.b)?;
    let prediction = pred.rate_prediction(trace)?;
    let rate = certify_trace(trace, &prediction)?;
    let first = [
        descent.first_violation.map(|n| (n, "descent".to_string())),
        rate.first_violation.map(|n| (n, rate.kind.clone().unwrap_or_default())),
    ]
    .into_iter()
    .flatten()
    .min_by_key(|(n, _)| *n);
    Ok(DescentVerdict {
        pass: descent.pass && rate.pass,
        first_violation: first.as_ref().map(|f| f.0),
        kind: first.map(|f| f.1),
        kappa: prediction.kappa,
        descent,
        rate,
        prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use geofb_core::funcs::make_norm_pow;
    use geofb_core::geometry::exact_cert_norm_pow;
    use geofb_core::solver::run_fb;
    use geofb_core::SolveConfig;

    #[test]
    fn kappa_is_a_over_b2c2() {
        let d = DescentPrediction { a: 3.0, b: 2.0, c: 0.5, p: 2.0, r0: None, cp: None, cp_prime: None };
        assert_eq!(d.kappa().unwrap(), 3.0);
    }

    #[test]
    fn fb_constants_reproduce_fb_kappa() {
        let cert = &exact_cert_norm_pow(2.0, 1.0).unwrap()[2];
        let d = DescentPrediction::for_fb(0.5, 0.0, cert, 1.0).unwrap();
        let c = cert.lojasiewicz_constant().unwrap();
        assert!((d.kappa().unwrap() - 0.5 * 2.0 / (2.0 * c * c)).abs() < 1e-15);
    }

    #[test]
    fn descent_violation_is_located() {
        let p = make_norm_pow(2.0, 1).unwrap();
        let mut t = run_fb(&p, &SolveConfig::new(0.5, 20), &[1.0]).unwrap();
        let cert = &exact_cert_norm_pow(2.0, 1.0).unwrap()[2];
        let d = DescentPrediction::for_fb(0.5, 0.0, cert, t.gap[0]).unwrap();
        assert!(descent_verdict(&t, &d).unwrap().pass);
        t.step[7] *= 10.0;
        let v = descent_verdict(&t, &d).unwrap();
        assert!(!v.pass);
        assert_eq!((v.first_violation, v.kind.as_deref()), (Some(7), Some("descent")));
    }

    #[test]
    fn prediction_json_rejects_unknown_fields() {
        assert!(serde_json::from_str::<DescentPrediction>(r#"{"a":1,"b":1,"c":1,"p":2,"q":0}"#).is_err());
        let d: DescentPrediction = serde_json::from_str(r#"{"a":1,"b":1,"c":1,"p":2}"#).unwrap();
        assert!(d.r0.is_none());
    }
}
