//! Subcommand bodies. Each returns an [`Outcome`]: an exit code, a JSON report
//! and the extra files it wants written.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use opscale_core::fnf::{self, FnfOutlook};
use opscale_core::matcomb::{self, NonnegPattern};
use opscale_core::numkernel::{identity, ComplexMatrix, Tolerances};
use opscale_core::posmap::{self, BlockCertificate, ChoiMap};
use opscale_core::random;
use opscale_core::scaling::{self, ScalingOptions, ScalingReport, Verdict};
use opscale_core::{Complex64, Error, FnfOutcome};
use serde_json::{json, Map, Value};

use crate::files::{self, matrix_value, CertificateFile, MapFile, MatrixFile, StateFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NO_SUPPORT: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;
pub const EXIT_CHECK_FAILED: u8 = 5;

#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub tol: Tolerances,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: u8,
    pub report: Map<String, Value>,
    pub files: Vec<(PathBuf, Value)>,
}

impl Outcome {
    fn new(code: u8, report: Value) -> Self {
        let report = match report {
            Value::Object(map) => map,
            other => Map::from_iter([("result".to_string(), other)]),
        };
        Outcome { code, report, files: Vec::new() }
    }

    pub fn validation_error(err: &anyhow::Error) -> Self {
        Outcome::new(EXIT_VALIDATION, json!({ "error": format!("{err:#}") }))
    }
}

/// Work on a single input file.
#[derive(Debug, Clone)]
pub enum Task {
    Support { total: bool, oracle: bool, zero_eps: Option<f64> },
    Scale { opts: ScalingOptions, history: Option<PathBuf> },
    Fnf { opts: ScalingOptions, out: Option<PathBuf> },
    Tilde { opts: ScalingOptions, out: Option<PathBuf>, check: bool },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Support { .. } => "support",
            Task::Scale { .. } => "scale",
            Task::Fnf { .. } => "fnf",
            Task::Tilde { .. } => "tilde",
        }
    }
}

/// Runs `task` on `input`, turning any validation error into an exit-2
/// outcome.
pub fn run_task(ctx: &Context, task: &Task, input: &Path) -> Outcome {
    let result = match task {
        Task::Support { total, oracle, zero_eps } => support(input, *total, *oracle, *zero_eps),
        Task::Scale { opts, history } => scale(ctx, input, opts, history.as_deref()),
        Task::Fnf { opts, out } => fnf_command(ctx, input, opts, out.as_deref()),
        Task::Tilde { opts, out, check } => tilde(ctx, input, opts, out.as_deref(), *check),
    };
    result.unwrap_or_else(|e| Outcome::validation_error(&e))
}

/// Input path without its `.json` extension.
pub fn stem_path(input: &Path) -> PathBuf {
    if input.extension().is_some_and(|e| e == "json") {
        input.with_extension("")
    } else {
        input.to_path_buf()
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_pattern(input: &Path, zero_eps: Option<f64>) -> Result<NonnegPattern> {
    let pattern = files::read_json::<MatrixFile>(input)?.to_pattern()?;
    Ok(match zero_eps {
        Some(eps) => pattern.with_zero_eps(eps)?,
        None => pattern,
    })
}

pub fn support(input: &Path, total: bool, oracle: bool, zero_eps: Option<f64>) -> Result<Outcome> {
    let a = read_pattern(input, zero_eps)?;
    let s = matcomb::has_support(&a);
    let mut report = json!({ "support": s.holds });
    if let Some(w) = &s.witness {
        report["witness"] = serde_json::to_value(w)?;
    }
    let mut code = EXIT_OK;
    let mut total_holds = None;
    if total {
        let ts = matcomb::has_total_support(&a);
        report["total_support"] = json!(ts.holds);
        if let (Some((i, j)), Some(w)) = (ts.failing_entry, &ts.witness) {
            let mut wv = serde_json::to_value(w)?;
            wv["entry"] = json!([i, j]);
            report["witness"] = wv;
        }
        report["zero_count_conditions"] = serde_json::to_value(matcomb::zero_fraction_sufficient(&a))?;
        total_holds = Some(ts.holds);
    }
    if oracle {
        let bs = matcomb::has_support_bruteforce(&a)?;
        let mut agrees = bs == s.holds;
        let mut o = json!({ "support": bs });
        if let Some(th) = total_holds {
            let bts = matcomb::has_total_support_bruteforce(&a)?;
            o["total_support"] = json!(bts);
            agrees &= bts == th;
        }
        o["agrees"] = json!(agrees);
        report["oracle"] = o;
        if !agrees {
            code = EXIT_CHECK_FAILED;
        }
    }
    Ok(Outcome::new(code, report))
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::ConvergedDs => EXIT_OK,
        Verdict::NoSupportNumerical => EXIT_NO_SUPPORT,
        Verdict::MaxIterInconclusive => EXIT_INCONCLUSIVE,
    }
}

/// Outcome for a scaling run that ended in an error.
fn scaling_failure(err: Error) -> Result<Outcome> {
    match err {
        Error::Precondition { marginal, min_eigenvalue } => Ok(Outcome::new(
            EXIT_VALIDATION,
            json!({
                "verdict": "precondition-failed",
                "marginal": marginal,
                "min_eigenvalue": min_eigenvalue,
                "error": format!("{marginal} is not positive definite"),
            }),
        )),
        e @ (Error::NumericalFailure { .. } | Error::InvariantViolated { .. }) => Ok(Outcome::new(
            EXIT_INCONCLUSIVE,
            json!({ "verdict": "numerical-failure", "error": e.to_string() }),
        )),
        other => Err(other.into()),
    }
}

fn scaling_summary(rep: &ScalingReport) -> Value {
    let mut v = json!({
        "verdict": rep.verdict.as_str(),
        "iterations": rep.iterations,
        "residual_a": rep.residual_a,
        "residual_b": rep.residual_b,
        "logdet_initial": rep.history.first().map(|h| h.logdet),
        "logdet_final": rep.history.last().map(|h| h.logdet),
        "logdet_growth": rep.logdet_growth(),
        "divergence_threshold": rep.divergence_threshold,
        "X_final": matrix_value(&rep.x_final),
        "Y_final": matrix_value(&rep.y_final),
    });
    if rep.verdict == Verdict::NoSupportNumerical {
        v["note"] = json!("divergence of the log-determinant is numerical evidence, not a proof");
    }
    if let Some(ds) = &rep.ds_map {
        v["ds_check"] = serde_json::to_value(posmap::is_doubly_stochastic(ds, 1e-8)).expect("plain data");
    }
    v
}

pub fn scale(ctx: &Context, input: &Path, opts: &ScalingOptions, history: Option<&Path>) -> Result<Outcome> {
    let t = files::parse_map(&files::read_text(input)?, &ctx.tol)?;
    let rep = match scaling::run(&t, &ctx.tol, opts) {
        Ok(rep) => rep,
        Err(e) => return scaling_failure(e),
    };
    let mut out = Outcome::new(verdict_code(rep.verdict), scaling_summary(&rep));
    if let Some(path) = history {
        out.files.push((path.to_path_buf(), serde_json::to_value(&rep.history)?));
        out.report.insert("history_file".into(), json!(path.display().to_string()));
    }
    Ok(out)
}

fn schmidt_value(r: &opscale_core::FnfResult) -> Value {
    let terms: Vec<Value> = r
        .schmidt
        .iter()
        .map(|t| json!({ "coefficient": t.coefficient, "C": matrix_value(&t.c), "D": matrix_value(&t.d) }))
        .collect();
    json!({ "k": r.state_fnf.k(), "m": r.state_fnf.m(), "terms": terms })
}

pub fn fnf_command(ctx: &Context, input: &Path, opts: &ScalingOptions, out: Option<&Path>) -> Result<Outcome> {
    let state = files::read_json::<StateFile>(input)?.to_state(&ctx.tol)?;
    let prefix = out.map(Path::to_path_buf).unwrap_or_else(|| stem_path(input));
    let report_path = with_suffix(&prefix, ".report.json");
    let pre = fnf::check_preconditions(&state, &ctx.tol)?;
    let mut report = json!({ "preconditions": serde_json::to_value(&pre)? });
    if !pre.passed {
        let marginal = if pre.g_positive_definite { "F_A(Id)" } else { "G_A(Id)" };
        report["verdict"] = json!("precondition-failed");
        report["error"] = json!(format!("{marginal} is not positive definite"));
        return Ok(Outcome::new(EXIT_VALIDATION, report));
    }
    let sc = fnf::sufficient_conditions(&state, &ctx.tol, opts)?;
    report["sufficient_conditions"] = serde_json::to_value(&sc)?;
    let outcome = match fnf::compute_fnf(&state, &ctx.tol, opts) {
        Ok(o) => o,
        Err(e) => {
            let mut failed = scaling_failure(e)?;
            failed.report.insert("sufficient_conditions".into(), report["sufficient_conditions"].clone());
            return Ok(failed);
        }
    };
    let mut files_out = Vec::new();
    let code = match outcome {
        FnfOutcome::Inconclusive(rep) => {
            report["verdict"] = json!(rep.verdict.as_str());
            report["scaling"] = scaling_summary(&rep);
            if sc.outlook != FnfOutlook::Undetermined {
                report["note"] = json!("a sufficient condition holds but scaling did not converge; raise --max-iter");
            }
            verdict_code(rep.verdict).max(EXIT_NO_SUPPORT)
        }
        FnfOutcome::Success(r) => {
            let v = fnf::verify_fnf(&r, &ctx.tol);
            report["verdict"] = json!("fnf");
            report["scaling"] = scaling_summary(&r.report);
            report["verification"] = serde_json::to_value(&v)?;
            report["schmidt_coefficients"] = json!(r.schmidt.iter().map(|t| t.coefficient).collect::<Vec<_>>());
            let filters = json!({ "Xp": matrix_value(&r.xp), "Yp": matrix_value(&r.yp) });
            let state_file = StateFile {
                k: r.state_fnf.k(),
                m: r.state_fnf.m(),
                matrix: MatrixFile::from_matrix(r.state_fnf.rho().as_matrix()),
            };
            files_out.push((with_suffix(&prefix, ".filters.json"), filters));
            files_out.push((with_suffix(&prefix, ".state.json"), serde_json::to_value(state_file)?));
            files_out.push((with_suffix(&prefix, ".schmidt.json"), schmidt_value(&r)));
            if v.passed {
                EXIT_OK
            } else {
                EXIT_INCONCLUSIVE
            }
        }
    };
    let names: Vec<String> =
        files_out.iter().map(|(p, _)| p.display().to_string()).chain([report_path.display().to_string()]).collect();
    report["files"] = json!(names);
    let mut out = Outcome::new(code, report);
    files_out.push((report_path, Value::Object(out.report.clone())));
    out.files = files_out;
    Ok(out)
}

fn verdict_or_failure(t: &ChoiMap, tol: &Tolerances, opts: &ScalingOptions) -> String {
    match scaling::run(t, tol, opts) {
        Ok(rep) => rep.verdict.as_str().to_string(),
        Err(Error::Precondition { .. }) => "precondition-failed".into(),
        Err(_) => "numerical-failure".into(),
    }
}

pub fn tilde(ctx: &Context, input: &Path, opts: &ScalingOptions, out: Option<&Path>, check: bool) -> Result<Outcome> {
    let t = files::parse_map(&files::read_text(input)?, &ctx.tol)?;
    let lifted = posmap::tilde_lift(&t);
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(&stem_path(input), ".tilde.json"));
    let mut report = json!({ "k": t.k(), "m": t.m(), "lifted_dim": lifted.k(), "out": path.display().to_string() });
    let mut code = EXIT_OK;
    if check {
        let direct = verdict_or_failure(&t, &ctx.tol, opts);
        let lift = verdict_or_failure(&lifted, &ctx.tol, opts);
        let agree = direct == lift;
        report["map_verdict"] = json!(direct);
        report["lift_verdict"] = json!(lift);
        report["correspondence"] = json!(agree);
        if !agree {
            code = EXIT_CHECK_FAILED;
        }
    }
    let mut outcome = Outcome::new(code, report);
    outcome.files.push((path, serde_json::to_value(MapFile::from_map(&lifted))?));
    Ok(outcome)
}

pub fn certificate(ctx: &Context, map_path: &Path, cert_path: &Path, cert_tol: f64) -> Result<Outcome> {
    let t = files::parse_map(&files::read_text(map_path)?, &ctx.tol)?;
    let cert = files::read_json::<CertificateFile>(cert_path)?.to_certificate()?;
    let mut rng = random::seeded(ctx.seed);
    let rep = posmap::verify_block_certificate(&t, &cert, cert_tol, &mut rng)?;
    let passed = rep.passed();
    let mut report = serde_json::to_value(&rep)?;
    report["passed"] = json!(passed);
    report["blocks"] = json!(cert.len());
    Ok(Outcome::new(if passed { EXIT_OK } else { EXIT_CHECK_FAILED }, report))
}

fn check(name: &str, f: impl FnOnce() -> Result<String>) -> (bool, Value) {
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(e) => (false, format!("{e:#}")),
    };
    (passed, json!({ "name": name, "passed": passed, "detail": detail }))
}

fn real_matrix(rows: usize, cols: usize, e: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |i, j| Complex64::new(e[i * cols + j], 0.0))
}

/// Runs the built-in fixtures end to end.
pub fn selftest(ctx: &Context) -> Outcome {
    let tol = ctx.tol;
    let opts = ScalingOptions::default();
    let r = real_matrix(2, 2, &[0.0, 1.0, 1.0, 1.0]);
    let mut results = Vec::new();
    results.push(check("R has support but not total support", || {
        let a = NonnegPattern::from_rows(&[&[0.0, 1.0], &[1.0, 1.0]])?;
        let t = matcomb::has_total_support(&a);
        if !matcomb::has_support(&a).holds || t.holds || t.failing_entry != Some((1, 1)) {
            bail!("unexpected verdicts");
        }
        Ok("failing entry (1, 1)".into())
    }));
    results.push(check("zero-submatrix witness", || {
        let a = NonnegPattern::from_rows(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]])?;
        let w = matcomb::has_support(&a).witness.ok_or_else(|| anyhow::anyhow!("no witness"))?;
        if w.alpha != [0, 1] || w.beta != [1, 2] || w.weight != 10 {
            bail!("witness {w:?}");
        }
        Ok("alpha {0,1}, beta {1,2}, weight 10".into())
    }));
    results.push(check("RXR scales to a doubly stochastic map", || {
        let rep = scaling::run(&ChoiMap::congruence(&r)?, &tol, &opts)?;
        let ds = rep.ds_map.ok_or_else(|| anyhow::anyhow!("verdict {}", rep.verdict.as_str()))?;
        if !posmap::is_doubly_stochastic(&ds, 1e-8).holds {
            bail!("emitted map is not doubly stochastic");
        }
        Ok(format!("{} iterations", rep.iterations))
    }));
    results.push(check("no-support fixture diverges", || {
        let t = ChoiMap::from_action(3, 3, |x| {
            let mut o = ComplexMatrix::zeros(3, 3);
            o[(0, 0)] = x[(0, 0)] + x[(1, 1)];
            o[(1, 1)] = x[(2, 2)];
            o[(2, 2)] = x[(2, 2)];
            o
        })?;
        let rep = scaling::run(&t, &tol, &opts)?;
        if rep.verdict != Verdict::NoSupportNumerical {
            bail!("verdict {}", rep.verdict.as_str());
        }
        Ok(format!("threshold crossed after {} iterations", rep.iterations))
    }));
    results.push(check("maximally mixed state is its own normal form", || {
        let s = opscale_core::BipartiteState::new(2, 2, identity(4), &tol)?;
        match fnf::compute_fnf(&s, &tol, &opts)? {
            FnfOutcome::Success(r) if r.schmidt.len() == 1 && (r.schmidt[0].coefficient - 0.5).abs() < 1e-12 => {
                Ok("single coefficient 1/2".into())
            }
            _ => bail!("unexpected normal form"),
        }
    }));
    results.push(check("square lift of the identity", || {
        let lifted = posmap::tilde_lift(&ChoiMap::identity(2));
        let d = (lifted.apply(&identity(4))? - identity(4) * Complex64::new(2.0, 0.0)).norm();
        if d > 1e-12 {
            bail!("tilde(Id) off by {d:e}");
        }
        Ok("tilde(Id_4) = 2 Id_4".into())
    }));
    results.push(check("trivial certificate on a doubly stochastic map", || {
        let t = ChoiMap::trace_to_identity(2, 3);
        let rep = posmap::verify_block_certificate(&t, &BlockCertificate::trivial(2, 3), 1e-8, &mut random::seeded(ctx.seed))?;
        if !rep.passed() {
            bail!("{rep:?}");
        }
        Ok("all four conditions pass".into())
    }));
    results.push(check("matrix file round trip", || {
        let mut rng = random::seeded(ctx.seed);
        let m = random::gaussian(&mut rng, 3, 2);
        let text = serde_json::to_string(&MatrixFile::from_matrix(&m))?;
        let back = serde_json::from_str::<MatrixFile>(&text)?.to_matrix()?;
        if back != m {
            bail!("round trip changed the matrix");
        }
        Ok("bit-exact".into())
    }));
    let all = results.iter().all(|(p, _)| *p);
    let checks: Vec<Value> = results.into_iter().map(|(_, v)| v).collect();
    Outcome::new(if all { EXIT_OK } else { EXIT_CHECK_FAILED }, json!({ "passed": all, "checks": checks }))
}
