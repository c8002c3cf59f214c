//! Command-line harness: verification suites with JSON reports and CSV trajectories.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chartfield::{
    check_dphi_dpsi, check_torsion_compat, full_torsion, torsion_components, DerivativePolicy,
    G2Field, TorsionClass, DEFAULT_OUTER_STEP,
};
use crate::deform::{
    closed_form_torsion_at, conformal_torsion, consistency_residual, nabla_v_residual, w1w7_conditions,
    ttilde1_value, vector_deform_report, RhsForm,
};
use crate::error::Error;
use crate::g2algebra::{
    bilinear_form_b, decompose_2form, decompose_3form, metric_from_phi, phi0, projector_ranks, psi0, s_tensor,
    G2Point,
};
use crate::linalg::{max_abs7, max_abs_diff7};
use crate::registry::{scalar, vector, DeformSpec, FieldSpec, WarpedSpec};
use crate::report::{all_passed, Check};
use crate::scalar::identity_mat;
use crate::tensor7::{hodge, wedge, Tensor7};
use crate::warped::{
    build_warped_field, case_data, integrate_model, model_torsion_residual, model_torsion_source, proof_scalars,
    s6_frame, theorem_case_check, trajectory_points, trajectory_rows, CaseCheckOptions, HPrimeRule, WarpedModel,
};

#[derive(Parser, Debug, Clone)]
#[command(name = "g2deform", version, about = "Numerical checks for G2-structures and their deformations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Field specification (JSON).
    #[arg(long, global = true)]
    pub field: Option<PathBuf>,
    /// Report path; a trajectory CSV is written next to it for warped runs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Central-difference step; 1e-4, or 2e-5 for `theorem-check --case 3`.
    #[arg(long = "fd-step", global = true)]
    pub fd_step: Option<f64>,
    /// Tolerance for finite-difference checks.
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Sample points per check.
    #[arg(long, global = true, default_value_t = 3)]
    pub samples: usize,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub case: Option<u8>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long = "A", global = true, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub h0: Option<f64>,
    #[arg(long, global = true)]
    pub theta0: Option<f64>,
    /// Integration interval as `start,end`.
    #[arg(long = "t-span", global = true, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    pub t_span: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub step: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub branch: Option<BranchArg>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Algebraic identities of the standard structure and its representations.
    VerifyIdentities,
    /// Torsion of a field and the identities it must satisfy.
    Torsion,
    /// Metric and torsion formulas of a conformal or vector deformation.
    Deform,
    /// Integrates a warped model, writes its trajectory and checks its torsion.
    WarpedDemo,
    /// End-to-end check of one case of the deformation theorem.
    TheoremCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyIdentities => "verify-identities",
            Command::Torsion => "torsion",
            Command::Deform => "deform",
            Command::WarpedDemo => "warped-demo",
            Command::TheoremCheck => "theorem-check",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchArg {
    Plus,
    Minus,
}

/// Everything a run depends on; serialized into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub command: Command,
    pub field: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub fd_step: f64,
    pub tol: f64,
    pub seed: u64,
    pub samples: usize,
    pub case: Option<u8>,
    pub sigma: Option<f64>,
    pub a: Option<f64>,
    pub h0: Option<f64>,
    pub theta0: Option<f64>,
    pub t_span: Option<[f64; 2]>,
    pub step: Option<f64>,
    pub branch: Option<BranchArg>,
}

impl RunSpec {
    pub fn new(command: Command) -> Self {
        RunSpec {
            command,
            field: None,
            out: None,
            fd_step: 1e-4,
            tol: 1e-4,
            seed: 0,
            samples: 3,
            case: None,
            sigma: None,
            a: None,
            h0: None,
            theta0: None,
            t_span: None,
            step: None,
            branch: None,
        }
    }
}

/// Case 3 profiles are steep enough that `∇v` needs a finer step to reach the default tolerance.
pub fn default_fd_step(command: Command, case: Option<u8>) -> f64 {
    match (command, case) {
        (Command::TheoremCheck, Some(3)) => 2e-5,
        _ => 1e-4,
    }
}

impl TryFrom<Cli> for RunSpec {
    type Error = CliError;

    fn try_from(c: Cli) -> Result<Self, CliError> {
        let t_span = match c.t_span.as_deref() {
            None => None,
            Some([a, b]) => Some([*a, *b]),
            Some(_) => return Err(CliError::Usage("--t-span takes two numbers".into())),
        };
        Ok(RunSpec {
            command: c.command,
            field: c.field,
            out: c.out,
            fd_step: c.fd_step.unwrap_or_else(|| default_fd_step(c.command, c.case)),
            tol: c.tol,
            seed: c.seed,
            samples: c.samples,
            case: c.case,
            sigma: c.sigma,
            a: c.a,
            h0: c.h0,
            theta0: c.theta0,
            t_span,
            step: c.step,
            branch: c.branch,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot read or write `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("invalid field specification: {0}")]
    Spec(Error),
    #[error("numerical failure in check `{check}`: {source}")]
    Numerical { check: String, source: Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => 1,
            _ => 2,
        }
    }
}

fn numerical(check: &str) -> impl Fn(Error) -> CliError + '_ {
    move |source| match source {
        Error::Spec(_) | Error::UnknownClosure(_) => CliError::Spec(source),
        source => CliError::Numerical {
            check: check.to_string(),
            source,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub metadata: Metadata,
    pub spec: RunSpec,
    pub checks: Vec<Check>,
    /// Conditions worth knowing that are not pass/fail, such as a truncated trajectory.
    pub notes: Vec<String>,
    pub trajectory: Option<PathBuf>,
    pub passed: bool,
}

impl Report {
    fn new(spec: &RunSpec) -> Self {
        Report {
            command: spec.command.name().to_string(),
            metadata: Metadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: spec.seed,
            },
            spec: spec.clone(),
            checks: Vec::new(),
            notes: Vec::new(),
            trajectory: None,
            passed: false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Parses arguments, runs, writes outputs and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let spec = match RunSpec::try_from(cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    run(&spec)
}

/// Executes `spec`, writes the report (to `--out` or stdout) and returns the exit code.
pub fn run(spec: &RunSpec) -> i32 {
    match execute(spec) {
        Ok(report) => {
            let text = report.to_json();
            if let Err(e) = emit(spec.out.as_deref(), &text) {
                eprintln!("{e}");
                return e.exit_code();
            }
            if !report.passed {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!("failed: {} = {:e} (tolerance {:e})", c.name, c.value, c.tolerance);
                }
                return 1;
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            if let CliError::Numerical { check, source } = &e {
                let mut report = Report::new(spec);
                report.checks.push(Check::at_most(check.clone(), f64::NAN, spec.tol));
                report.notes.push(source.to_string());
                let _ = emit(spec.out.as_deref(), &report.to_json());
            }
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs the suite and builds the report without writing it (CSV files are written).
pub fn execute(spec: &RunSpec) -> Result<Report, CliError> {
    if !(spec.tol > 0.0) || !(spec.fd_step > 0.0) {
        return Err(CliError::Usage("--tol and --fd-step must be positive".into()));
    }
    if spec.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let mut report = Report::new(spec);
    match spec.command {
        Command::VerifyIdentities => verify_identities(spec, &mut report)?,
        Command::Torsion => torsion_suite(spec, &mut report)?,
        Command::Deform => deform_suite(spec, &mut report)?,
        Command::WarpedDemo => warped_demo(spec, &mut report)?,
        Command::TheoremCheck => theorem_check(spec, &mut report)?,
    }
    report.passed = all_passed(&report.checks);
    Ok(report)
}

fn load_field_spec(spec: &RunSpec) -> Result<FieldSpec, CliError> {
    match &spec.field {
        None => Ok(FieldSpec::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            FieldSpec::from_json(&text).map_err(CliError::Spec)
        }
    }
}

fn with_step(field: G2Field<f64>, spec: &RunSpec) -> G2Field<f64> {
    field.with_policy(DerivativePolicy::Central { step: spec.fd_step })
}

fn sample_points(field: &G2Field<f64>, spec: &RunSpec) -> Vec<[f64; 7]> {
    let margin = 10.0 * spec.fd_step + 1e-3;
    field.chart().samples(spec.samples, margin)
}

/// A seeded positive 3-form near `φ₀`: `φ₀` pulled back by `1 + 0.2·noise`.
pub fn random_point(rng: &mut ChaCha8Rng) -> G2Point<f64> {
    let mut m = identity_mat::<f64>();
    for row in m.iter_mut() {
        for x in row.iter_mut() {
            *x += rng.gen_range(-0.2..0.2);
        }
    }
    let phi = phi0::<f64>().apply_all_slots(&m);
    G2Point::new(phi).expect("small perturbations of the standard form stay positive")
}

pub fn random_form(rng: &mut ChaCha8Rng, p: usize) -> Tensor7<f64> {
    Tensor7::form_from_fn(p, |_| rng.gen_range(-1.0..1.0))
}

fn verify_identities(spec: &RunSpec, report: &mut Report) -> Result<(), CliError> {
    let checks = &mut report.checks;
    let pt = G2Point::<f64>::standard();
    let id = identity_mat::<f64>();
    let g = metric_from_phi(&phi0::<f64>()).map_err(numerical("phi0.metric"))?;
    checks.push(Check::at_most("phi0.metric_is_identity", max_abs_diff7(g.g(), &id), 1e-12));
    checks.push(Check::at_most(
        "phi0.b_form_is_identity",
        max_abs_diff7(&bilinear_form_b(&phi0::<f64>()), &id),
        1e-12,
    ));
    checks.push(Check::at_most(
        "phi0.s_is_identity",
        max_abs_diff7(&s_tensor(&phi0::<f64>()), &id),
        1e-12,
    ));
    let star = hodge(pt.phi(), pt.metric()).map_err(numerical("phi0.hodge"))?;
    checks.push(Check::at_most("phi0.star_is_psi0", star.max_abs_diff(&psi0()), 1e-12));
    let back = hodge(&star, pt.metric()).map_err(numerical("phi0.hodge"))?;
    checks.push(Check::at_most("phi0.hodge_roundtrip", back.max_abs_diff(pt.phi()), 1e-12));
    let phi = pt.phi();
    let psi = pt.psi();
    let mut contraction = 0.0f64;
    for i in 0..7 {
        for j in 0..7 {
            for a in 0..7 {
                for b in 0..7 {
                    let lhs: f64 = (0..7).map(|k| phi.at3(i, j, k) * phi.at3(a, b, k)).sum();
                    let d = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
                    let rhs = d(i, a) * d(j, b) - d(i, b) * d(j, a) + psi.at4(i, j, a, b);
                    contraction = contraction.max((lhs - rhs).abs());
                }
            }
        }
    }
    checks.push(Check::at_most("phi0.contraction_identity", contraction, 1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let generic = random_point(&mut rng);
    for (label, p) in [("standard", &pt), ("generic", &generic)] {
        let (r2, r3) = projector_ranks(p, 1e-9);
        let defect = |r: usize, want: usize| (r as f64 - want as f64).abs();
        checks.push(Check::at_most(format!("projector.{label}.lambda2_7_rank_defect"), defect(r2[0], 7), 0.0));
        checks.push(Check::at_most(format!("projector.{label}.lambda2_14_rank_defect"), defect(r2[1], 14), 0.0));
        checks.push(Check::at_most(format!("projector.{label}.lambda3_1_rank_defect"), defect(r3[0], 1), 0.0));
        checks.push(Check::at_most(format!("projector.{label}.lambda3_7_rank_defect"), defect(r3[1], 7), 0.0));
        checks.push(Check::at_most(format!("projector.{label}.lambda3_27_rank_defect"), defect(r3[2], 27), 0.0));
    }

    let (mut rt2, mut rt3) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = random_point(&mut rng);
        let w = random_form(&mut rng, 2);
        rt2 = rt2.max(decompose_2form(&w, &p).reconstruct(&p).max_abs_diff(&w));
        let c = random_form(&mut rng, 3);
        rt3 = rt3.max(decompose_3form(&c, &p).reconstruct(&p).max_abs_diff(&c));
    }
    checks.push(Check::at_most("roundtrip.two_forms", rt2, 1e-10));
    checks.push(Check::at_most("roundtrip.three_forms", rt3, 1e-10));

    let (mut metric, mut det, mut inv, mut s, mut failures) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let v = [(); 7].map(|_| rng.gen_range(-1.5..1.5));
        match vector_deform_report(&pt, &v) {
            Ok(r) => {
                metric = metric.max(r.metric_agreement);
                det = det.max(r.det_agreement);
                inv = inv.max(r.inverse_agreement);
                s = s.max(r.s_agreement);
            }
            Err(_) => failures += 1.0,
        }
    }
    checks.push(Check::at_most("vector_deform.metric_closed_form", metric, 1e-10));
    checks.push(Check::at_most("vector_deform.det_ratio", det, 1e-10));
    checks.push(Check::at_most("vector_deform.inverse_closed_form", inv, 1e-10));
    checks.push(Check::at_most("vector_deform.s_tilde", s, 1e-10));
    checks.push(Check::at_most("vector_deform.positivity_failures", failures, 0.0));

    let (mut j2, mut wp, mut wm) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let q = [(); 7].map(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p = q.map(|x| x / n);
        let s6 = s6_frame(&p).map_err(numerical("s6.frame"))?;
        for e in s6.frame() {
            let jj = s6.j(&s6.j(e));
            j2 = j2.max((0..7).fold(0.0, |m, k| m.max((jj[k] + e[k]).abs())));
        }
        let om = s6.omega();
        wp = wp.max(wedge(om, s6.psi_plus()).map_err(numerical("s6.wedge"))?.max_abs());
        wm = wm.max(wedge(om, s6.psi_minus()).map_err(numerical("s6.wedge"))?.max_abs());
    }
    checks.push(Check::at_most("s6.j_squared_is_minus_identity", j2, 1e-12));
    checks.push(Check::at_most("s6.omega_wedge_psi_plus", wp, 1e-10));
    checks.push(Check::at_most("s6.omega_wedge_psi_minus", wm, 1e-10));

    let base = G2Field::flat(crate::chartfield::Chart::cube(0.5));
    let (f, h) = (scalar("exp_linear").expect("registered"), scalar("gauss_bump").expect("registered"));
    let fh = crate::chartfield::ScalarField::new({
        let (f, h) = (f.clone(), h.clone());
        move |x| f.at(x) * h.at(x)
    });
    let nested = crate::deform::conformal_deform(&base, &h, 16)
        .and_then(|b| crate::deform::conformal_deform(&b, &f, 16))
        .map_err(numerical("conformal.composition"))?;
    let direct = crate::deform::conformal_deform(&base, &fh, 16).map_err(numerical("conformal.composition"))?;
    let mut comp = 0.0f64;
    for x in base.chart().samples(16, 0.0) {
        comp = comp.max(nested.phi_at(&x).max_abs_diff(&direct.phi_at(&x)));
    }
    checks.push(Check::at_most("conformal.composition", comp, 1e-13));
    Ok(())
}

fn torsion_suite(spec: &RunSpec, report: &mut Report) -> Result<(), CliError> {
    let fs = load_field_spec(spec)?;
    let field = with_step(fs.build().map_err(numerical("field.build"))?, spec);
    let points = sample_points(&field, spec);
    let tol = spec.tol;
    let (mut recon, mut dphi, mut dpsi, mut tmax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for x in &points {
        let t = full_torsion(&field, x).map_err(numerical("torsion.full"))?;
        recon = recon.max(t.residual);
        tmax = tmax.max(max_abs7(&t.lower));
        let r = check_dphi_dpsi(&field, x).map_err(numerical("torsion.exterior_derivatives"))?;
        dphi = dphi.max(r.dphi);
        dpsi = dpsi.max(r.dpsi);
    }
    let checks = &mut report.checks;
    checks.push(Check::at_most("torsion.nabla_phi_reconstruction", recon, tol));
    checks.push(Check::at_most("torsion.dphi_identity", dphi, tol));
    checks.push(Check::at_most("torsion.dpsi_identity", dpsi, tol));
    if fs.deform.is_none() && fs.warped.is_none() {
        checks.push(Check::at_most("torsion.flat_norm", tmax, 1e-8));
    }
    if let Some(w) = &fs.warped {
        if fs.deform.is_none() {
            let m = w.model().map_err(numerical("warped.integrate"))?;
            if let Some(reason) = m.truncated() {
                report.notes.push(format!("trajectory truncated: {reason}"));
            }
            push_model_checks(&field, &m, &points, tol, &mut report.checks)?;
        }
    }
    Ok(())
}

fn push_model_checks(
    field: &G2Field<f64>,
    m: &WarpedModel<f64>,
    points: &[[f64; 7]],
    tol: f64,
    checks: &mut Vec<Check>,
) -> Result<(), CliError> {
    let mut worst = [0.0f64; 4];
    let mut compat = 0.0f64;
    for x in points {
        let r = model_torsion_residual(field, m, x).map_err(numerical("warped.model_torsion"))?;
        for i in 0..4 {
            worst[i] = worst[i].max(r[i]);
        }
        let c = check_torsion_compat(field, x, TorsionClass::W1W7, DEFAULT_OUTER_STEP)
            .map_err(numerical("warped.w1w7_condition"))?;
        compat = compat.max(c.residual);
    }
    checks.push(Check::at_most("warped.tau1_vs_model", worst[0], tol));
    checks.push(Check::at_most("warped.tau7_vs_model", worst[1], tol));
    checks.push(Check::at_most("warped.tau14", worst[2], tol));
    checks.push(Check::at_most("warped.tau27", worst[3], tol));
    checks.push(Check::at_most("warped.w1w7_condition", compat, tol));
    Ok(())
}

fn deform_suite(spec: &RunSpec, report: &mut Report) -> Result<(), CliError> {
    let fs = load_field_spec(spec)?;
    let deform = fs
        .deform
        .clone()
        .ok_or_else(|| CliError::Usage("deform needs a field with a `deform` fragment".into()))?;
    let (base, _) = fs.build_base().map_err(numerical("field.build"))?;
    let base = with_step(base, spec);
    let field = with_step(fs.build().map_err(numerical("field.build"))?, spec);
    let points = sample_points(&field, spec);
    let tol = spec.tol;
    let checks = &mut report.checks;
    match deform {
        DeformSpec::Conformal { f } => {
            let f = scalar(&f).map_err(CliError::Spec)?;
            let (mut metric, mut law, mut others) = (0.0f64, 0.0f64, 0.0f64);
            for x in &points {
                let old = full_torsion(&base, x).map_err(numerical("deform.conformal.base_torsion"))?;
                let new = full_torsion(&field, x).map_err(numerical("deform.conformal.torsion"))?;
                let y = old.x;
                let fv = f.at(&y);
                let mut want = *old.point.g();
                for row in want.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= fv * fv;
                    }
                }
                metric = metric.max(max_abs_diff7(new.point.g(), &want) / (fv * fv));
                let closed = conformal_torsion(&old.lower, fv, &f.gradient(&y, spec.fd_step), &old.point);
                law = law.max(max_abs_diff7(&closed, &new.lower));
                if fs.warped.is_none() {
                    let d = torsion_components(&new.lower, &new.point);
                    others = others
                        .max(d.tau1.abs())
                        .max(d.tau14_norm(&new.point))
                        .max(d.tau27_norm(&new.point));
                }
            }
            checks.push(Check::at_most("deform.conformal.metric_is_f2_g", metric, 1e-10));
            checks.push(Check::at_most("deform.conformal.torsion_law", law, tol));
            if fs.warped.is_none() {
                checks.push(Check::at_most("deform.conformal.only_w7_changes", others, tol));
            }
        }
        DeformSpec::Vector { v } => {
            let v = vector(&v).map_err(CliError::Spec)?;
            let (mut metric, mut det, mut inv, mut closed) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for x in &points {
                let y = base.interior(x);
                let pt = base.point_at(&y).map_err(numerical("deform.vector.base_point"))?;
                let r = vector_deform_report(&pt, &v.upper_at(&y, &pt)).map_err(numerical("deform.vector.metric"))?;
                metric = metric.max(r.metric_agreement);
                det = det.max(r.det_agreement);
                inv = inv.max(r.inverse_agreement);
                let chi = {
                    let (base, v) = (base.clone(), v.clone());
                    move |z: &[f64; 7]| match base.point_at(z) {
                        Ok(p) => crate::deform::insert_vector(&v.upper_at(z, &p), p.psi()),
                        Err(_) => Tensor7::zeros(3).scale(f64::NAN),
                    }
                };
                let cf = closed_form_torsion_at(&base, &chi, &y).map_err(numerical("deform.vector.closed_form"))?;
                let fd = full_torsion(&field, &y).map_err(numerical("deform.vector.torsion"))?;
                closed = closed.max(max_abs_diff7(&cf, &fd.lower));
            }
            checks.push(Check::at_most("deform.vector.metric_closed_form", metric, 1e-10));
            checks.push(Check::at_most("deform.vector.det_ratio", det, 1e-10));
            checks.push(Check::at_most("deform.vector.inverse_closed_form", inv, 1e-10));
            checks.push(Check::at_most("deform.vector.closed_form_torsion", closed, tol.min(5e-5)));
        }
    }
    Ok(())
}

/// Default model parameters per case: `(σ, h0, θ0, t-span, A)`.
fn case_defaults(case: Option<u8>) -> (f64, f64, f64, [f64; 2], Option<f64>) {
    match case {
        Some(1) => (1.0, 1.0, 0.8, [0.0, 0.2], None),
        Some(2) => (1.0, 1.0, 1.0, [0.0, 0.2], None),
        Some(3) => (1.0, 0.3, 1.2, [0.0, 0.05], Some(1.0)),
        _ => (1.0, 1.0, 1.0, [0.0, 1.0], None),
    }
}

fn warped_spec_from_flags(spec: &RunSpec) -> Result<WarpedSpec, CliError> {
    if let Some(path) = &spec.field {
        let fs = load_field_spec(spec)?;
        return fs
            .warped
            .ok_or_else(|| CliError::Usage(format!("{} has no `warped` fragment", path.display())));
    }
    let (sigma, h0, theta0, t_span, a) = case_defaults(spec.case);
    let hprime = match spec.case {
        None => "zero".to_string(),
        Some(c) => format!("case{c}"),
    };
    Ok(WarpedSpec {
        sigma: spec.sigma.unwrap_or(sigma),
        h0: spec.h0.unwrap_or(h0),
        theta0: spec.theta0.unwrap_or(theta0),
        hprime,
        branch: spec.branch.map(|b| match b {
            BranchArg::Plus => "plus".to_string(),
            BranchArg::Minus => "minus".to_string(),
        }),
        a: spec.a.or(a),
        t_span: spec.t_span.unwrap_or(t_span),
        step: spec.step.unwrap_or(1e-3),
    })
}

fn write_trajectory(spec: &RunSpec, m: &WarpedModel<f64>, report: &mut Report) -> Result<(), CliError> {
    let Some(out) = &spec.out else {
        return Ok(());
    };
    let path = out.with_extension("csv");
    let rows = trajectory_rows(m).map_err(numerical("trajectory"))?;
    let io = |e: &dyn std::fmt::Display| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))?;
    report.trajectory = Some(path);
    Ok(())
}

/// RK4 self-convergence ratio `|y_h − y_{h/2}| / |y_{h/2} − y_{h/4}|` at the end of the span.
fn rk4_order_ratio(w: &WarpedSpec) -> Result<f64, Error> {
    let coarse = ((w.t_span[1] - w.t_span[0]) / 8.0).min(0.05);
    let end = |step: f64| -> Result<(f64, f64), Error> {
        let m = integrate_model(w.sigma, w.h0, w.theta0, w.rule()?, w.t_span, step)?;
        if m.truncated().is_some() {
            return Err(Error::Degenerate("trajectory truncated during the order study".into()));
        }
        let (_, h, th) = m.samples().last().expect("non-empty");
        Ok((h, th))
    };
    let (a, b, c) = (end(coarse)?, end(coarse / 2.0)?, end(coarse / 4.0)?);
    let d1 = (a.0 - b.0).abs().max((a.1 - b.1).abs());
    let d2 = (b.0 - c.0).abs().max((b.1 - c.1).abs());
    Ok(d1 / d2)
}

fn warped_demo(spec: &RunSpec, report: &mut Report) -> Result<(), CliError> {
    let w = warped_spec_from_flags(spec)?;
    let m = w.model().map_err(|e| match e {
        Error::Precondition(_) | Error::NonPositiveFactor(_) | Error::Spec(_) => CliError::Usage(e.to_string()),
        e => numerical("warped.integrate")(e),
    })?;
    if let Some(reason) = m.truncated() {
        report.notes.push(format!("trajectory truncated at t = {}: {reason}", m.t_end()));
    }
    write_trajectory(spec, &m, report)?;
    let rows = trajectory_rows(&m).map_err(numerical("trajectory"))?;
    let ode = rows.iter().map(|r| r.residuals).fold(0.0, f64::max);
    report.checks.push(Check::at_most("warped.ode_residual", ode, spec.tol));
    if matches!(m.rule(), HPrimeRule::Zero) {
        let mut exact = 0.0f64;
        for (t, _, th) in m.samples() {
            let want = 2.0 * ((w.sigma * (t - w.t_span[0]) / w.h0).exp() * (w.theta0 / 2.0).tan()).atan();
            exact = exact.max((th - want).abs());
        }
        report.checks.push(Check::at_most("warped.exact_theta", exact, 1e-8));
    }
    match rk4_order_ratio(&w) {
        Ok(ratio) => report.checks.push(Check::at_most("warped.rk4_order_ratio_minus_16", (ratio - 16.0).abs(), 4.0)),
        Err(e) => report.notes.push(format!("order study skipped: {e}")),
    }
    if w.sigma != 0.0 {
        let field = with_step(build_warped_field(&m).map_err(numerical("warped.field"))?, spec);
        let points = trajectory_points(&m, spec.samples);
        push_model_checks(&field, &m, &points, spec.tol, &mut report.checks)?;
    } else {
        report.notes.push("σ = 0: τ₁ vanishes, torsion checks skipped".into());
    }
    Ok(())
}

fn theorem_check(spec: &RunSpec, report: &mut Report) -> Result<(), CliError> {
    let w = warped_spec_from_flags(spec)?;
    let rule = w.rule().map_err(CliError::Spec)?;
    let case = match (spec.case, rule.case()) {
        (Some(c), _) => c,
        (None, Some(c)) => c,
        (None, None) => return Err(CliError::Usage("theorem-check needs --case 1|2|3".into())),
    };
    let m = w.model().map_err(|e| match e {
        Error::Precondition(_) | Error::NonPositiveFactor(_) | Error::Spec(_) => CliError::Usage(e.to_string()),
        e => numerical("warped.integrate")(e),
    })?;
    if let Some(reason) = m.truncated() {
        report.notes.push(format!("trajectory truncated at t = {}: {reason}", m.t_end()));
    }
    write_trajectory(spec, &m, report)?;
    let opts = CaseCheckOptions {
        points: spec.samples,
        tol: spec.tol,
        fd_step: spec.fd_step,
        ..CaseCheckOptions::default()
    };
    let checks = theorem_case_check(case, &m, spec.a, &opts).map_err(|e| match e {
        Error::Precondition(_) => CliError::Usage(e.to_string()),
        e => numerical("theorem.case_check")(e),
    })?;
    report.checks.extend(checks);

    let ps = proof_scalars(&m, 20).map_err(numerical("theorem.proof_scalars"))?;
    report.checks.push(Check::at_most("proof.dv_residual", ps.dv_residual, spec.tol));
    report.checks.push(Check::at_most("proof.df_residual", ps.df_residual, spec.tol));
    report.checks.push(Check::at_most("proof.dm_residual", ps.dm_residual, spec.tol));

    let field = with_step(build_warped_field(&m).map_err(numerical("warped.field"))?, spec);
    let data = case_data(&m).map_err(numerical("theorem.case_data"))?;
    let v = data.v_field();
    let src = model_torsion_source(&m);
    let points = trajectory_points(&m, spec.samples);
    let (mut nv, mut cond, mut xi, mut negnv, mut negxi) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY);
    let control = crate::chartfield::VectorField::new(crate::chartfield::Slot::Lower, {
        let src = src.clone();
        let data = data.clone();
        move |x: &[f64; 7]| {
            let (_, t7) = src(x);
            let s = data.v_scale.at(x);
            [s * t7[0], 0.2, -0.1 * x[0], 0.0, 0.1, 0.0, 0.05]
        }
    });
    for x in &points {
        let (t1, t7) = src(x);
        let vs = data.v_scale.at(x);
        let tt = ttilde1_value(vs, t1, t7[0] * t7[0]).map_err(numerical("theorem.ttilde1"))?;
        let r = nabla_v_residual(&field, &v, &src, tt, x).map_err(numerical("nabla_v.residual"))?;
        nv = nv.max(max_abs7(&r));
        let q = w1w7_conditions(&field, &data, &v, x).map_err(numerical("w1w7.conditions"))?;
        cond = cond.max(q.deltau7_max).max(q.vprop_residual);
        let c = consistency_residual(&field, &v, &src, tt, x, DEFAULT_OUTER_STEP, RhsForm::Verified)
            .map_err(numerical("nabla_v.consistency"))?;
        xi = xi.max(c.max_abs());
        let rn = nabla_v_residual(&field, &control, &src, tt, x).map_err(numerical("nabla_v.negative_control"))?;
        negnv = negnv.min(max_abs7(&rn));
        let cn = consistency_residual(&field, &control, &src, tt, x, DEFAULT_OUTER_STEP, RhsForm::Verified)
            .map_err(numerical("nabla_v.consistency_negative_control"))?;
        negxi = negxi.min(cn.max_abs());
    }
    let checks = &mut report.checks;
    checks.push(Check::at_most("nabla_v.residual", nv, spec.tol));
    checks.push(Check::at_most("w1w7.conditions", cond, spec.tol));
    checks.push(Check::at_most("nabla_v.consistency", xi, 10.0 * spec.tol));
    checks.push(Check::at_least("nabla_v.negative_control", negnv, 10.0 * spec.tol));
    checks.push(Check::at_least("nabla_v.consistency_negative_control", negxi, 100.0 * spec.tol));
    Ok(())
}
