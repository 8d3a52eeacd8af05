//! Config-driven experiments and `--set key=value` overrides.

use std::collections::BTreeSet;

use geofb_core::geometry::{
    estimate_lojasiewicz, exact_cert_counterexample, exact_cert_l1, exact_cert_least_squares, exact_cert_norm_pow,
    exact_cert_strongly_convex, CertKind, Provenance,
};
use geofb_core::invprob::StepChoice;
use geofb_core::linops::sym_min_eig;
use geofb_core::{CompositeProblem, DomainDesc, Error, GeometryCertificate, ProblemSpec, ProxFn, Result, SmoothFn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::outcome::{run_fb_case, solve_config, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Csv,
    Json,
    Svg,
}

fn all_outputs() -> BTreeSet<OutputKind> {
    [OutputKind::Csv, OutputKind::Json, OutputKind::Svg].into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub lambda: StepChoice<f64>,
    pub iters: usize,
    /// Defaults to the all-ones vector.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub step_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertSource {
    /// Closed-form certificate when the problem has one.
    #[default]
    Exact,
    /// Sampled Lojasiewicz constant on `domain`.
    Estimated { p: f64, domain: DomainDesc, samples: usize },
    Provided { certificate: GeometryCertificate },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub problem: ProblemSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub certificate: CertSource,
    #[serde(default = "all_outputs")]
    pub outputs: BTreeSet<OutputKind>,
}

/// A config file holds one spec or an array of them with distinct names.
pub fn parse_manifest(v: Value) -> Result<Vec<ExperimentSpec>> {
    let specs: Vec<ExperimentSpec> = match v {
        Value::Array(items) => items.into_iter().map(parse_one).collect::<Result<_>>()?,
        other => vec![parse_one(other)?],
    };
    let mut seen = BTreeSet::new();
    for s in &specs {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Config(format!("duplicate experiment name {:?}", s.name)));
        }
    }
    Ok(specs)
}

fn parse_one(v: Value) -> Result<ExperimentSpec> {
    let s: ExperimentSpec = serde_json::from_value(v).map_err(|e| Error::Config(format!("config: {e}")))?;
    let ok = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) && s.name != "." && s.name != "..";
    if !ok {
        return Err(Error::Config(format!("invalid experiment name {:?}", s.name)));
    }
    Ok(s)
}

/// Applies `key=value` at a dotted path. Values are parsed as JSON, falling
/// back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty path segment in {key:?}")));
        }
        let obj = cur.as_object_mut().ok_or_else(|| Error::Config(format!("{key:?}: not an object at {part:?}")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Closed-form Lojasiewicz certificate for the problem classes that have one.
pub fn exact_certificate(problem: &CompositeProblem) -> Result<Option<GeometryCertificate>> {
    Ok(match (problem.g(), problem.h()) {
        (ProxFn::NormPow { p, weight }, SmoothFn::Zero { .. }) => Some(exact_cert_norm_pow(*p, *weight)?[2].clone()),
        (ProxFn::L1 { alpha }, SmoothFn::Zero { .. }) => Some(exact_cert_l1(*alpha)?.1),
        (ProxFn::Zero, SmoothFn::ScalarPowerTail { alpha }) => Some(exact_cert_counterexample(*alpha)?),
        (ProxFn::Zero, SmoothFn::Quadratic { q, .. }) => {
            let g = sym_min_eig(q);
            if g > 0.0 {
                Some(exact_cert_strongly_convex(g)?.1)
            } else {
                None
            }
        }
        (ProxFn::Zero, SmoothFn::LeastSquares { a, .. }) => exact_cert_least_squares(a),
        _ => None,
    })
}

pub fn resolve_certificate(spec: &ExperimentSpec, problem: &CompositeProblem) -> Result<Option<GeometryCertificate>> {
    match &spec.certificate {
        CertSource::Exact => exact_certificate(problem),
        CertSource::None => Ok(None),
        CertSource::Provided { certificate } => {
            certificate.validate()?;
            Ok(Some(certificate.clone()))
        }
        CertSource::Estimated { p, domain, samples } => {
            let e = estimate_lojasiewicz(problem, *p, domain, *samples, spec.seed)?;
            if !e.value.is_finite() || !(e.value > 0.0) {
                return Err(Error::Config(format!("estimated constant {} is unusable", e.value)));
            }
            Ok(Some(GeometryCertificate::new(CertKind::Lojasiewicz, *p, e.value, domain.clone(), Provenance::Estimated)?))
        }
    }
}

pub fn run_spec(spec: &ExperimentSpec) -> Result<Outcome> {
    let problem = CompositeProblem::from_spec(spec.problem.clone())?;
    let lambda = spec.solver.lambda.resolve(problem.lipschitz());
    problem.check_step(lambda)?;
    let x0 = spec.solver.x0.clone().unwrap_or_else(|| vec![1.0; problem.dim()]);
    let mut cfg = solve_config(&problem, lambda, spec.solver.iters);
    if let Some(t) = spec.solver.step_tol {
        cfg = cfg.step_tol(t);
    }
    let cert = resolve_certificate(spec, &problem)?;
    let mut o = run_fb_case(&problem, &cfg, &x0, cert.as_ref())?;
    o.metric("problem_hash", problem.spec_hash());
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Value {
        json!({
            "name": "np4",
            "seed": 3,
            "problem": { "g": { "kind": "norm_pow", "p": 4.0, "weight": 1.0 }, "h": { "kind": "zero", "dim": 1 } },
            "solver": { "lambda": 1.0, "iters": 200 }
        })
    }

    #[test]
    fn parses_and_runs() {
        let specs = parse_manifest(sample()).unwrap();
        assert_eq!(specs[0].certificate, CertSource::Exact);
        assert_eq!(specs[0].outputs.len(), 3);
        let o = run_spec(&specs[0]).unwrap();
        assert!(o.pass(), "{:?}", o.checks);
        assert!(o.prediction.is_some());
    }

    #[test]
    fn rejects_bad_manifests() {
        let mut v = sample();
        v["bogus"] = json!(1);
        assert!(parse_manifest(v).is_err());
        let mut v = sample();
        v.as_object_mut().unwrap().remove("seed");
        assert!(parse_manifest(v).is_err());
        assert!(parse_manifest(json!([sample(), sample()])).is_err());
        let mut v = sample();
        v["name"] = json!("../x");
        assert!(parse_manifest(v).is_err());
    }

    #[test]
    fn overrides() {
        let mut v = sample();
        apply_override(&mut v, "solver.iters=7").unwrap();
        apply_override(&mut v, "name=other").unwrap();
        apply_override(&mut v, "solver.lambda=auto").unwrap();
        assert_eq!(v["solver"]["iters"], json!(7));
        assert_eq!(v["name"], json!("other"));
        assert_eq!(v["solver"]["lambda"], json!("auto"));
        assert!(apply_override(&mut v, "noequals").is_err());
        assert!(apply_override(&mut v, "name.x=1").is_err());
    }

    #[test]
    fn estimated_and_provided_certificates() {
        let mut v = sample();
        v["problem"]["g"]["p"] = json!(2.0);
        v["certificate"] = json!({ "source": "estimated", "p": 2.0, "samples": 500,
            "domain": { "kind": "ball", "center": [0.0], "radius": 2.0 } });
        let s = parse_manifest(v.clone()).unwrap().remove(0);
        let p = CompositeProblem::from_spec(s.problem.clone()).unwrap();
        let c = resolve_certificate(&s, &p).unwrap().unwrap();
        assert!((c.constant - 0.5).abs() < 1e-9, "{c:?}");
        v["certificate"] = json!({ "source": "provided", "certificate":
            { "kind": "lojasiewicz", "p": 2.0, "constant": 0.5, "domain": { "kind": "whole_space" }, "provenance": "exact" } });
        let s = parse_manifest(v).unwrap().remove(0);
        assert!(run_spec(&s).unwrap().pass());
    }
}
