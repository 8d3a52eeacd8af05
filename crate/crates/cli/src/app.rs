//! Command-line front end. Exit codes: 0 all certifications pass, 2 a
//! certification failed, 1 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use geofb_core::{Error, Result};
use serde_json::{json, Value};

use crate::artifacts::{plot_svg, to_json_pretty, trace_from_csv, trace_to_csv, write_file};
use crate::builtins::{builtins, find};
use crate::certify::{descent_verdict, DescentPrediction};
use crate::outcome::{par_map, Outcome};
use crate::spec::{apply_override, parse_manifest, run_spec, OutputKind};
use crate::table;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CERT_FAIL: i32 = 2;
pub const DEFAULT_OUT: &str = "geofb_out";

#[derive(Parser, Debug)]
#[command(name = "geofb", about = "Forward-backward experiments with convergence certificates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// List built-in experiments.
    List,
    /// Run a built-in experiment or a JSON config.
    Run {
        target: String,
        /// Output directory; defaults to $GEOFB_OUT, then ./geofb_out.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Parameter override `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Certify an external trace against a descent prediction.
    Certify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        prediction: PathBuf,
    },
    /// Print the regime table.
    Table,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = if code == EXIT_PASS { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let res = match cli.cmd {
        Cmd::List => cmd_list(stdout),
        Cmd::Table => cmd_table(stdout),
        Cmd::Run { target, out, seed, set } => {
            let out = out.or_else(|| std::env::var_os("GEOFB_OUT").map(PathBuf::from)).unwrap_or_else(|| DEFAULT_OUT.into());
            cmd_run(&target, &out, seed, &set, stdout)
        }
        Cmd::Certify { trace, prediction } => cmd_certify(&trace, &prediction, stdout),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_CONFIG
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("io: {e}"))
}

pub fn cmd_list(out: &mut dyn Write) -> Result<i32> {
    for b in builtins() {
        writeln!(out, "{:<28} {}", b.name, b.summary).map_err(io_err)?;
    }
    Ok(EXIT_PASS)
}

pub fn cmd_table(out: &mut dyn Write) -> Result<i32> {
    write!(out, "{}", table::render(&table::rows())).map_err(io_err)?;
    Ok(EXIT_PASS)
}

/// A completed experiment: name, seed, outputs requested, outcomes.
pub struct RunResult {
    pub name: String,
    pub seed: u64,
    pub outputs: Vec<OutputKind>,
    pub outcomes: Vec<Outcome>,
}

impl RunResult {
    pub fn pass(&self) -> bool {
        self.outcomes.iter().all(Outcome::pass)
    }
}

/// Runs a built-in by name, or every experiment in a JSON config file.
pub fn execute(target: &str, seed: Option<u64>, overrides: &[String]) -> Result<Vec<RunResult>> {
    let all = vec![OutputKind::Csv, OutputKind::Json, OutputKind::Svg];
    if let Some(b) = find(target) {
        let mut params = (b.defaults)();
        for o in overrides {
            apply_override(&mut params, o)?;
        }
        let seed = seed.unwrap_or(1);
        let outcomes = (b.run)(&params, seed)?;
        return Ok(vec![RunResult { name: b.name.to_string(), seed, outputs: all, outcomes }]);
    }
    let path = Path::new(target);
    if !path.is_file() {
        return Err(Error::Config(format!("{target:?} is neither a built-in experiment nor a config file")));
    }
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{target}: {e}")))?;
    let items: Vec<&mut Value> = match &mut v {
        Value::Array(items) => items.iter_mut().collect(),
        other => vec![other],
    };
    for item in items {
        for o in overrides {
            apply_override(item, o)?;
        }
        if let Some(s) = seed {
            item["seed"] = json!(s);
        }
    }
    let specs = parse_manifest(v)?;
    let results = par_map(&specs, run_spec);
    specs
        .iter()
        .zip(results)
        .map(|(s, r)| {
            let o = r?;
            Ok(RunResult { name: s.name.clone(), seed: s.seed, outputs: s.outputs.iter().copied().collect(), outcomes: vec![o] })
        })
        .collect()
}

fn write_outcome(dir: &Path, name: &str, seed: u64, outputs: &[OutputKind], o: &Outcome) -> Result<()> {
    if let Some(t) = &o.trace {
        if outputs.contains(&OutputKind::Csv) {
            write_file(&dir.join("trace.csv"), &trace_to_csv(t)?)?;
        }
        if outputs.contains(&OutputKind::Svg) {
            let title = match &o.variant {
                Some(v) => format!("{name} {v}"),
                None => name.to_string(),
            };
            write_file(&dir.join("plot.svg"), &plot_svg(&title, &t.gap, o.envelope.as_deref()))?;
        }
    }
    if outputs.contains(&OutputKind::Json) {
        write_file(&dir.join("report.json"), &to_json_pretty(&o.report(name, seed))?)?;
        if let Some(p) = &o.prediction {
            write_file(&dir.join("prediction.json"), &to_json_pretty(p)?)?;
        }
    }
    for (file, text) in &o.files {
        write_file(&dir.join(file), text)?;
    }
    Ok(())
}

/// Writes `{out}/{name}/...`; grids get one subdirectory per variant and a
/// summary `report.json`.
pub fn write_artifacts(out: &Path, r: &RunResult) -> Result<PathBuf> {
    let dir = out.join(&r.name);
    if let [o] = r.outcomes.as_slice() {
        write_outcome(&dir, &r.name, r.seed, &r.outputs, o)?;
        return Ok(dir);
    }
    let mut variants = Vec::new();
    for (i, o) in r.outcomes.iter().enumerate() {
        let sub = o.variant.clone().unwrap_or_else(|| format!("variant_{i}"));
        write_outcome(&dir.join(&sub), &r.name, r.seed, &r.outputs, o)?;
        let fv = o.first_violation().map(|(c, n)| json!({ "check": c, "n": n }));
        variants.push(json!({ "variant": sub, "pass": o.pass(), "first_violation": fv }));
    }
    if r.outputs.contains(&OutputKind::Json) {
        let summary = json!({ "name": r.name, "seed": r.seed, "pass": r.pass(), "variants": variants });
        write_file(&dir.join("report.json"), &to_json_pretty(&summary)?)?;
    }
    Ok(dir)
}

pub fn cmd_run(target: &str, out: &Path, seed: Option<u64>, overrides: &[String], stdout: &mut dyn Write) -> Result<i32> {
    let results = execute(target, seed, overrides)?;
    let mut code = EXIT_PASS;
    for r in &results {
        let dir = write_artifacts(out, r)?;
        for o in &r.outcomes {
            let label = o.variant.as_deref().unwrap_or("-");
            let status = match o.first_violation() {
                None => "pass".to_string(),
                Some((c, Some(n))) => format!("FAIL {c} at n={n}"),
                Some((c, None)) => format!("FAIL {c}"),
            };
            writeln!(stdout, "{} {label}: {status}", r.name).map_err(io_err)?;
        }
        writeln!(stdout, "artifacts in {}", dir.display()).map_err(io_err)?;
        if !r.pass() {
            code = EXIT_CERT_FAIL;
        }
    }
    Ok(code)
}

pub fn cmd_certify(trace: &Path, prediction: &Path, stdout: &mut dyn Write) -> Result<i32> {
    let text = std::fs::read_to_string(trace).map_err(io_err)?;
    let t = trace_from_csv(&text)?;
    let ptext = std::fs::read_to_string(prediction).map_err(io_err)?;
    let pred: DescentPrediction = serde_json::from_str(&ptext).map_err(|e| Error::Config(format!("prediction: {e}")))?;
    let v = descent_verdict(&t, &pred)?;
    write!(stdout, "{}", to_json_pretty(&v)?).map_err(io_err)?;
    Ok(if v.pass { EXIT_PASS } else { EXIT_CERT_FAIL })
}
