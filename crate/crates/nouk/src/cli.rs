//! Command-line front end: strict config parsing, one section per
//! subcommand, deterministic report files plus a human summary on stdout.
//!
//! Exit codes: 0 success, 2 configuration/validation, 3 numerical failure,
//! 4 failed invariant suite.

use crate::config::{Document, Section};
use crate::error::{Error, Result};
use crate::mild::{self, QuadSpec};
use crate::model::{
    DirectionSpace, EvolutionModel, SourceTerm, SpacePreset, TestFunction, TimeFn,
};
use crate::numeric::fit::geometric_grid;
use crate::propagator;
use crate::regularity::{self, SampleBox};
use crate::report::{fmt_f64, Table};
use crate::semigroup::{self, EvalParams, Method};
use nalgebra::{DMatrix, DVector};
use std::path::{Path, PathBuf};

pub const VERSION: &str = concat!("nouk ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<OutputFormat> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Validation(format!("unknown format `{other}`"))),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Resolved `[run]` settings with every default made explicit.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub seed: u64,
    pub threads: usize,
    pub samples: u64,
    pub gh_nodes: usize,
    pub format: OutputFormat,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            seed: 0,
            threads: 1,
            samples: semigroup::DEFAULT_SAMPLES,
            gh_nodes: semigroup::DEFAULT_GH_NODES,
            format: OutputFormat::Csv,
            box_lo: -3.0,
            box_hi: 3.0,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: EvolutionModel,
    pub preset: SpacePreset,
    pub space: DirectionSpace,
    pub phi: TestFunction,
    pub psi: SourceTerm,
    pub run: RunSettings,
    /// Sections left for the subcommands to consume.
    doc: Document,
}

const SUBCOMMANDS: [&str; 9] = [
    "evolve", "apply", "deriv", "mild", "fit_theta", "holder", "zygmund", "schauder", "check",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut doc = Document::parse(text)?;
        let mut model_sec = doc
            .take_section("model")
            .ok_or_else(|| Error::Validation("missing [model] section".into()))?;
        let model = EvolutionModel::from_section(&mut model_sec)?;

        let preset = match doc.take_section("space") {
            Some(mut sec) => {
                let p = SpacePreset::parse(&sec.take_required("preset")?)?;
                sec.ensure_empty()?;
                p
            }
            None => SpacePreset::Ambient,
        };
        let space = DirectionSpace::from_preset(&preset, &model)?;

        let phi = match doc.take_section("phi") {
            Some(mut sec) => {
                let f = TestFunction::from_section(&mut sec, model.dim)?;
                sec.ensure_empty()?;
                f
            }
            None => TestFunction::Constant(1.0),
        };

        let psi = match doc.take_section("psi") {
            Some(mut sec) => {
                let rho = match sec.take("rho") {
                    Some(spec) => TimeFn::parse(&spec)?,
                    None => TimeFn::Const(1.0),
                };
                let spatial = TestFunction::from_section(&mut sec, model.dim)?;
                sec.ensure_empty()?;
                SourceTerm::new(rho, spatial)
            }
            None => SourceTerm::new(TimeFn::zero(), TestFunction::Constant(0.0)),
        };

        let mut run = RunSettings::default();
        if let Some(mut sec) = doc.take_section("run") {
            if let Some(v) = sec.take_u64("seed")? {
                run.seed = v;
            }
            if let Some(v) = sec.take_usize("threads")? {
                run.threads = v.max(1);
            }
            if let Some(v) = sec.take_u64("samples")? {
                run.samples = v.max(1);
            }
            if let Some(v) = sec.take_usize("gh_nodes")? {
                run.gh_nodes = v.max(2);
            }
            if let Some(v) = sec.take("format") {
                run.format = OutputFormat::parse(&v)?;
            }
            if let Some(v) = sec.take_f64("box_lo")? {
                run.box_lo = v;
            }
            if let Some(v) = sec.take_f64("box_hi")? {
                run.box_hi = v;
            }
            sec.ensure_empty()?;
        }

        // Only known subcommand sections may remain.
        for name in doc.section_names() {
            if !SUBCOMMANDS.contains(&name.as_str()) {
                return Err(Error::Validation(format!("unknown section [{name}]")));
            }
        }
        Ok(RunConfig {
            model,
            preset,
            space,
            phi,
            psi,
            run,
            doc,
        })
    }

    pub fn sample_box(&self) -> SampleBox {
        SampleBox {
            lo: self.run.box_lo,
            hi: self.run.box_hi,
        }
    }

    pub fn eval_params(&self) -> EvalParams {
        EvalParams {
            method: None,
            n_samples: self.run.samples,
            gh_nodes: self.run.gh_nodes,
            seed: self.run.seed,
            threads: self.run.threads,
            op_id: None,
        }
    }

    fn take_cmd_section(&mut self, name: &str) -> Section {
        self.doc
            .take_section(name)
            .unwrap_or_else(|| Document::parse(&format!("[{name}]\n")).unwrap().take_section(name).unwrap())
    }

    /// Resolved-config echo: every semantic key explicit, so the echo
    /// reparses to the same run. The thread count is execution detail and
    /// deliberately left out.
    pub fn resolved_text(&self, cmd: &str, cmd_keys: &[(String, String)]) -> String {
        let mut out = String::new();
        out.push_str(&self.model.to_config_text());
        out.push_str("\n[space]\n");
        out.push_str(&format!("preset = {}\n", self.preset.to_config_string()));
        out.push_str("\n[phi]\n");
        for (k, v) in self.phi.to_config_strings() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str("\n[psi]\n");
        out.push_str(&format!("rho = {}\n", self.psi.rho.to_config_string()));
        for (k, v) in self.psi.spatial.to_config_strings() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str("\n[run]\n");
        out.push_str(&format!("seed = {}\n", self.run.seed));
        out.push_str(&format!("samples = {}\n", self.run.samples));
        out.push_str(&format!("gh_nodes = {}\n", self.run.gh_nodes));
        out.push_str(&format!("format = {}\n", self.run.format.extension()));
        out.push_str(&format!("box_lo = {}\n", self.run.box_lo));
        out.push_str(&format!("box_hi = {}\n", self.run.box_hi));
        if !cmd_keys.is_empty() {
            out.push_str(&format!("\n[{cmd}]\n"));
            for (k, v) in cmd_keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn vec_to_string(v: &DVector<f64>) -> String {
    let items: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    format!("[{}]", items.join(", "))
}

fn parse_dirs(sec: &mut Section, dim: usize) -> Result<Vec<DVector<f64>>> {
    match sec.take_matrix("dirs")? {
        None => Ok(Vec::new()),
        Some(rows) => {
            let mut dirs = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != dim {
                    return Err(Error::Validation(format!(
                        "direction has {} entries, expected {dim}",
                        row.len()
                    )));
                }
                dirs.push(DVector::from_vec(row));
            }
            Ok(dirs)
        }
    }
}

fn dirs_to_string(dirs: &[DVector<f64>]) -> String {
    let rows: Vec<String> = dirs
        .iter()
        .map(|d| d.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", rows.join("; "))
}

/// The outcome of one subcommand: report tables keyed by file stem, the
/// resolved-config echo, and a human summary.
#[derive(Debug)]
pub struct CmdOutput {
    pub tables: Vec<(String, Table)>,
    pub resolved: String,
    pub summary: String,
    /// Set when the invariant suite ran and failed (exit code 4).
    pub suite_failed: bool,
}

fn base_meta(table: &mut Table, cfg: &RunConfig, cmd: &str, resolved: &str) {
    table.set_meta("version", VERSION);
    table.set_meta("subcommand", cmd);
    table.set_meta("seed", cfg.run.seed.to_string());
    table.set_meta("resolved_config", resolved);
}

pub fn cmd_evolve(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section("evolve");
    let s = sec.take_f64_required("s")?;
    let t = sec.take_f64_required("t")?;
    let x = sec.take_vector("x")?.map(DVector::from_vec);
    sec.ensure_empty()?;
    if !(s <= t) {
        return Err(Error::Validation("require s <= t".into()));
    }
    let mut keys = vec![
        ("s".to_string(), fmt_f64(s)),
        ("t".to_string(), fmt_f64(t)),
    ];
    if let Some(xv) = &x {
        keys.push(("x".to_string(), vec_to_string(xv)));
    }
    let resolved = cfg.resolved_text("evolve", &keys);

    let u = propagator::transition(&cfg.model, s, t)?;
    let cov = propagator::covariance(&cfg.model, s, t)?;
    let mean = match &x {
        Some(xv) => Some(propagator::mean(&cfg.model, s, t, xv)?),
        None => None,
    };
    let eigs = cov.eigenvalues();
    let umat = u.matrix();
    let mut table = Table::new(&["mode", "u", "q_eigenvalue", "mean"]);
    base_meta(&mut table, cfg, "evolve", &resolved);
    table.set_meta("trace", fmt_f64(cov.trace()));
    table.set_meta("rank", cov.rank().to_string());
    table.set_meta("space", &cfg.space.label);
    table.set_meta(
        "embedding_constant",
        fmt_f64(cfg.space.embedding_constant()),
    );
    if let Some(d) = cfg.model.summability_diagnostic() {
        table.set_meta("summability_diagnostic", fmt_f64(d));
    }
    if s < t {
        let lam = propagator::lambda_operator(&cfg.model, &cfg.space, s, t)?;
        table.set_meta("lambda_norm", fmt_f64(lam.norm()));
    }
    for k in 0..cfg.model.dim {
        let urep = if cfg.model.is_diagonal() {
            fmt_f64(u.multiplier(k))
        } else {
            let row: Vec<String> = (0..cfg.model.dim).map(|j| fmt_f64(umat[(k, j)])).collect();
            row.join("; ")
        };
        table.push_row(vec![
            (k + 1).to_string(),
            urep,
            fmt_f64(eigs[k]),
            mean.as_ref().map(|m| fmt_f64(m[k])).unwrap_or_default(),
        ]);
    }
    let summary = format!(
        "evolve: s = {s}, t = {t}, trace Q = {}, rank = {}",
        fmt_f64(cov.trace()),
        cov.rank()
    );
    Ok(CmdOutput {
        tables: vec![("evolve".into(), table)],
        resolved,
        summary,
        suite_failed: false,
    })
}

fn parse_method(sec: &mut Section) -> Result<Option<Method>> {
    match sec.take("method") {
        None => Ok(None),
        Some(v) => match v.to_ascii_lowercase().as_str() {
            "auto" => Ok(None),
            "mc" => Ok(Some(Method::Mc)),
            "gauss_hermite" => Ok(Some(Method::GaussHermite)),
            "closed_form" => Ok(Some(Method::ClosedForm)),
            other => Err(Error::Validation(format!("unknown method `{other}`"))),
        },
    }
}

pub fn cmd_apply(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section("apply");
    let s = sec.take_f64_required("s")?;
    let t = sec.take_f64_required("t")?;
    let x = DVector::from_vec(
        sec.take_vector("x")?
            .unwrap_or_else(|| vec![0.0; cfg.model.dim]),
    );
    let method = parse_method(&mut sec)?;
    sec.ensure_empty()?;
    let keys = vec![
        ("s".to_string(), fmt_f64(s)),
        ("t".to_string(), fmt_f64(t)),
        ("x".to_string(), vec_to_string(&x)),
        (
            "method".to_string(),
            method.map(|m| m.as_str().to_string()).unwrap_or("auto".into()),
        ),
    ];
    let resolved = cfg.resolved_text("apply", &keys);
    let mut params = cfg.eval_params();
    params.method = method;
    let rep = semigroup::apply(&cfg.model, &cfg.phi, s, t, &x, &params)?;
    let oracle = if cfg.phi.has_closed_form_expectation() {
        let mut p = cfg.eval_params();
        p.method = Some(Method::ClosedForm);
        Some(semigroup::apply(&cfg.model, &cfg.phi, s, t, &x, &p)?.value)
    } else {
        None
    };
    let mut table = Table::new(&["value", "uncertainty", "method", "n_samples", "oracle"]);
    base_meta(&mut table, cfg, "apply", &resolved);
    table.push_row(vec![
        fmt_f64(rep.value),
        fmt_f64(rep.uncertainty),
        rep.method.as_str().into(),
        rep.n_samples.to_string(),
        oracle.map(fmt_f64).unwrap_or_default(),
    ]);
    let summary = format!(
        "apply: value = {} +- {} ({}) in {:?}",
        fmt_f64(rep.value),
        fmt_f64(rep.uncertainty),
        rep.method.as_str(),
        rep.elapsed
    );
    Ok(CmdOutput {
        tables: vec![("apply".into(), table)],
        resolved,
        summary,
        suite_failed: false,
    })
}

pub fn cmd_deriv(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section("deriv");
    let s = sec.take_f64_required("s")?;
    let t = sec.take_f64_required("t")?;
    let x = DVector::from_vec(
        sec.take_vector("x")?
            .unwrap_or_else(|| vec![0.0; cfg.model.dim]),
    );
    let dirs = parse_dirs(&mut sec, cfg.model.dim)?;
    if dirs.is_empty() {
        return Err(Error::Validation("[deriv] needs `dirs`".into()));
    }
    let k = sec.take_usize("k_transported")?.unwrap_or(0);
    let method = parse_method(&mut sec)?;
    sec.ensure_empty()?;
    let keys = vec![
        ("s".to_string(), fmt_f64(s)),
        ("t".to_string(), fmt_f64(t)),
        ("x".to_string(), vec_to_string(&x)),
        ("dirs".to_string(), dirs_to_string(&dirs)),
        ("k_transported".to_string(), k.to_string()),
        (
            "method".to_string(),
            method.map(|m| m.as_str().to_string()).unwrap_or("auto".into()),
        ),
    ];
    let resolved = cfg.resolved_text("deriv", &keys);
    let mut params = cfg.eval_params();
    params.method = method;
    let rep = semigroup::mixed_derivative(&cfg.model, &cfg.phi, s, t, &x, &dirs, k, &params)?;
    let oracle = if matches!(cfg.phi, TestFunction::Cosine { .. }) {
        let mut p = cfg.eval_params();
        p.method = Some(Method::ClosedForm);
        Some(semigroup::mixed_derivative(&cfg.model, &cfg.phi, s, t, &x, &dirs, k, &p)?.value)
    } else {
        None
    };
    let mut table = Table::new(&[
        "order",
        "k_transported",
        "value",
        "uncertainty",
        "method",
        "oracle",
    ]);
    base_meta(&mut table, cfg, "deriv", &resolved);
    table.push_row(vec![
        dirs.len().to_string(),
        k.to_string(),
        fmt_f64(rep.value),
        fmt_f64(rep.uncertainty),
        rep.method.as_str().into(),
        oracle.map(fmt_f64).unwrap_or_default(),
    ]);
    let summary = format!(
        "deriv: order {} (k = {k}), value = {} +- {}",
        dirs.len(),
        fmt_f64(rep.value),
        fmt_f64(rep.uncertainty)
    );
    Ok(CmdOutput {
        tables: vec![("deriv".into(), table)],
        resolved,
        summary,
        suite_failed: false,
    })
}

pub fn cmd_mild(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section("mild");
    let s = sec.take_f64_required("s")?;
    let t = sec.take_f64_required("t")?;
    let x = DVector::from_vec(
        sec.take_vector("x")?
            .unwrap_or_else(|| vec![0.0; cfg.model.dim]),
    );
    let dirs = parse_dirs(&mut sec, cfg.model.dim)?;
    let theta = sec.take_f64("theta")?.unwrap_or(0.5);
    let mut spec = QuadSpec::default();
    if let Some(p) = sec.take_usize("panels")? {
        spec.panels = p;
    }
    if let Some(r) = sec.take_f64("ratio")? {
        spec.grading_ratio = r;
    }
    if let Some(n) = sec.take_usize("nodes")? {
        spec.nodes_per_panel = n;
    }
    spec.theta_hint = theta;
    sec.ensure_empty()?;
    let keys = vec![
        ("s".to_string(), fmt_f64(s)),
        ("t".to_string(), fmt_f64(t)),
        ("x".to_string(), vec_to_string(&x)),
        ("dirs".to_string(), dirs_to_string(&dirs)),
        ("theta".to_string(), fmt_f64(theta)),
        ("panels".to_string(), spec.panels.to_string()),
        ("ratio".to_string(), fmt_f64(spec.grading_ratio)),
        ("nodes".to_string(), spec.nodes_per_panel.to_string()),
    ];
    let resolved = cfg.resolved_text("mild", &keys);
    let params = cfg.eval_params();
    let mut table = Table::new(&["order", "value", "uncertainty", "u0", "u1"]);
    base_meta(&mut table, cfg, "mild", &resolved);
    let (rep, parts) = if dirs.is_empty() {
        let a = mild::u0(&cfg.model, &cfg.phi, s, t, &x, &params)?;
        let b = mild::u1(&cfg.model, &cfg.psi, s, t, &x, &spec, &params)?;
        let total = mild::mild_solution(&cfg.model, &cfg.phi, &cfg.psi, s, t, &x, &spec, &params)?;
        (total, Some((a.value, b.value)))
    } else {
        (
            mild::mild_derivative(
                &cfg.model, &cfg.phi, &cfg.psi, s, t, &x, &dirs, theta, &spec, &params,
            )?,
            None,
        )
    };
    table.push_row(vec![
        dirs.len().to_string(),
        fmt_f64(rep.value),
        fmt_f64(rep.uncertainty),
        parts.map(|p| fmt_f64(p.0)).unwrap_or_default(),
        parts.map(|p| fmt_f64(p.1)).unwrap_or_default(),
    ]);
    let summary = format!(
        "mild: order {}, value = {} +- {}",
        dirs.len(),
        fmt_f64(rep.value),
        fmt_f64(rep.uncertainty)
    );
    Ok(CmdOutput {
        tables: vec![("mild".into(), table)],
        resolved,
        summary,
        suite_failed: false,
    })
}

pub fn cmd_fit_theta(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section("fit_theta");
    let t = sec.take_f64_required("t")?;
    let tau_lo = sec.take_f64("tau_lo")?.unwrap_or(1e-4);
    let tau_hi = sec.take_f64("tau_hi")?.unwrap_or(1e-2);
    let points = sec.take_usize("points")?.unwrap_or(10);
    sec.ensure_empty()?;
    if !(tau_lo > 0.0 && tau_hi > tau_lo && tau_hi < t) {
        return Err(Error::Validation(
            "need 0 < tau_lo < tau_hi < t for the fit grid".into(),
        ));
    }
    let keys = vec![
        ("t".to_string(), fmt_f64(t)),
        ("tau_lo".to_string(), fmt_f64(tau_lo)),
        ("tau_hi".to_string(), fmt_f64(tau_hi)),
        ("points".to_string(), points.to_string()),
    ];
    let resolved = cfg.resolved_text("fit_theta", &keys);
    let taus = geometric_grid(tau_lo, tau_hi, points);
    let s_grid: Vec<f64> = taus.iter().map(|tau| t - tau).collect();
    let fit = regularity::theta_fit(&cfg.model, &cfg.space, t, &s_grid)?;
    let mut table = Table::new(&["tau", "lambda_norm"]);
    base_meta(&mut table, cfg, "fit_theta", &resolved);
    table.set_meta("slope", fmt_f64(fit.slope));
    table.set_meta("intercept", fmt_f64(fit.intercept));
    table.set_meta("r_squared", fmt_f64(fit.r_squared));
    table.set_meta("theta_hat", fmt_f64(-fit.slope));
    for (ln_tau, ln_norm) in &fit.points {
        table.push_row(vec![fmt_f64(ln_tau.exp()), fmt_f64(ln_norm.exp())]);
    }
    let summary = format!(
        "fit-theta: theta_hat = {} (r^2 = {})",
        fmt_f64(-fit.slope),
        fmt_f64(fit.r_squared)
    );
    Ok(CmdOutput {
        tables: vec![("fit_theta".into(), table)],
        resolved,
        summary,
        suite_failed: false,
    })
}

fn seminorm_cmd(cfg: &mut RunConfig, name: &str) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section(name);
    let alpha = sec.take_f64("alpha")?.unwrap_or(1.0);
    let budget = sec.take_u64("budget")?.unwrap_or(8192);
    sec.ensure_empty()?;
    let keys = vec![
        ("alpha".to_string(), fmt_f64(alpha)),
        ("budget".to_string(), budget.to_string()),
    ];
    let resolved = cfg.resolved_text(name, &keys);
    let phi = cfg.phi.clone();
    let mut eval = |x: &DVector<f64>| phi.eval(x);
    let est = if name == "holder" {
        regularity::holder_seminorm(
            &mut eval,
            &cfg.space,
            alpha,
            cfg.sample_box(),
            budget,
            cfg.run.seed,
        )?
    } else {
        regularity::zygmund_seminorm(&mut eval, &cfg.space, cfg.sample_box(), budget, cfg.run.seed)?
    };
    let mut table = Table::new(&["value", "witness_x", "witness_h", "budget"]);
    base_meta(&mut table, cfg, name, &resolved);
    table.push_row(vec![
        fmt_f64(est.value),
        vec_to_string(&est.witness_x),
        vec_to_string(&est.witness_h),
        est.budget.to_string(),
    ]);
    let summary = format!("{name}: seminorm >= {}", fmt_f64(est.value));
    Ok(CmdOutput {
        tables: vec![(name.to_string(), table)],
        resolved,
        summary,
        suite_failed: false,
    })
}

pub fn cmd_holder(cfg: &mut RunConfig) -> Result<CmdOutput> {
    seminorm_cmd(cfg, "holder")
}

pub fn cmd_zygmund(cfg: &mut RunConfig) -> Result<CmdOutput> {
    seminorm_cmd(cfg, "zygmund")
}

pub fn cmd_schauder(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let mut sec = cfg.take_cmd_section("schauder");
    let t = sec.take_f64_required("t")?;
    let alpha = sec.take_f64("alpha")?.unwrap_or(0.0);
    let theta = sec.take_f64("theta")?.unwrap_or(0.5);
    let s_grid = sec
        .take_vector("s_grid")?
        .unwrap_or_else(|| vec![0.25 * t, 0.5 * t, 0.75 * t]);
    let budget = sec.take_u64("budget")?.unwrap_or(16);
    let n_max = sec.take_usize("n_max")?.unwrap_or(2);
    sec.ensure_empty()?;
    let keys = vec![
        ("t".to_string(), fmt_f64(t)),
        ("alpha".to_string(), fmt_f64(alpha)),
        ("theta".to_string(), fmt_f64(theta)),
        (
            "s_grid".to_string(),
            format!(
                "[{}]",
                s_grid.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(", ")
            ),
        ),
        ("budget".to_string(), budget.to_string()),
        ("n_max".to_string(), n_max.to_string()),
    ];
    let resolved = cfg.resolved_text("schauder", &keys);
    let report = regularity::schauder_report(
        &cfg.model,
        &cfg.space,
        theta,
        &cfg.phi,
        &cfg.psi,
        t,
        alpha,
        &s_grid,
        cfg.sample_box(),
        budget,
        n_max,
        &QuadSpec {
            theta_hint: theta,
            ..QuadSpec::default()
        },
        &cfg.eval_params(),
    )?;
    let mut table = Table::new(&["s", "order", "fitted_exponent", "expected_exponent", "r_squared"]);
    base_meta(&mut table, cfg, "schauder", &resolved);
    table.set_meta("gain", fmt_f64(report.gain));
    table.set_meta("borderline", report.borderline.to_string());
    for row in &report.rows {
        table.push_row(vec![
            fmt_f64(row.s),
            row.order.to_string(),
            fmt_f64(row.fitted_exponent),
            row.expected_exponent.map(fmt_f64).unwrap_or_default(),
            fmt_f64(row.r_squared),
        ]);
    }
    let mut tables = vec![("schauder".into(), table)];
    if report.borderline {
        let mut ztable = Table::new(&["s", "scale", "ratio", "growth_factor", "max_min", "verdict"]);
        base_meta(&mut ztable, cfg, "schauder", &resolved);
        for row in &report.zygmund {
            for (scale, ratio) in row.scales.iter().zip(&row.ratios) {
                ztable.push_row(vec![
                    fmt_f64(row.s),
                    fmt_f64(*scale),
                    fmt_f64(*ratio),
                    fmt_f64(row.growth_factor),
                    fmt_f64(row.max_min_ratio),
                    row.verdict.as_str().into(),
                ]);
            }
        }
        tables.push(("schauder_zygmund".into(), ztable));
    }
    let summary = format!(
        "schauder: gain = {}, {} rows, borderline = {}",
        fmt_f64(report.gain),
        report.rows.len(),
        report.borderline
    );
    Ok(CmdOutput {
        tables,
        resolved,
        summary,
        suite_failed: false,
    })
}

/// The structural invariant suite (cocycle, covariance routes, monotonicity,
/// Chapman, Cameron-Martin density, I_n oracle, Gramian control, SDE oracle,
/// quadrature vs closed form, flat-model Lambda norm).
pub fn cmd_check(cfg: &mut RunConfig) -> Result<CmdOutput> {
    let sec = cfg.take_cmd_section("check");
    sec.ensure_empty()?;
    let resolved = cfg.resolved_text("check", &[]);
    let seed = cfg.run.seed;
    let threads = cfg.run.threads;
    let mut table = Table::new(&["check", "value", "threshold", "pass"]);
    base_meta(&mut table, cfg, "check", &resolved);
    let mut all_pass = true;
    let push = |table: &mut Table, name: &str, value: f64, threshold: f64| {
        let pass = value <= threshold;
        table.push_row(vec![
            name.into(),
            fmt_f64(value),
            fmt_f64(threshold),
            pass.to_string(),
        ]);
        pass
    };

    // Canonical models for the suite.
    let diag = EvolutionModel::example1(8, 1.0, 2.0);
    let dense = suite_dense_model(4);
    let flat = EvolutionModel::diagonal(
        4,
        1.0,
        vec![TimeFn::Const(0.0); 4],
        vec![TimeFn::Const(1.0); 4],
    )?;

    // 1. Cocycle, diagonal exact-antiderivative path.
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let p = crate::numeric::halton::point(i, 3);
        let mut v = [p[0], p[1], p[2]];
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        worst = worst.max(propagator::cocycle_defect(&diag, v[0], v[1], v[2])?);
    }
    all_pass &= push(&mut table, "cocycle_diagonal", worst, 1e-13);

    // 2. Cocycle, dense RK4 path.
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let p = crate::numeric::halton::point(i, 3);
        let mut v = [p[0], p[1], p[2]];
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        worst = worst.max(propagator::cocycle_defect(&dense, v[0], v[1], v[2])?);
    }
    all_pass &= push(&mut table, "cocycle_dense", worst, 1e-8);

    // 3. Covariance: Lyapunov ODE vs direct double quadrature.
    let q_ode = propagator::covariance(&dense, 0.1, 0.9)?.covariance_matrix();
    let q_quad = propagator::covariance_quadrature_oracle(&dense, 0.1, 0.9, 12)?;
    let rel = (&q_ode - &q_quad).amax() / q_ode.amax();
    all_pass &= push(&mut table, "covariance_ode_vs_quadrature", rel, 1e-8);

    // 4. Covariance monotonicity in s.
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let p = crate::numeric::halton::point(i, 3);
        let t = 0.2 + 0.8 * p[2];
        let s2 = t * (0.05 + 0.9 * p[1]);
        let s1 = s2 * p[0];
        let rep = propagator::cov_monotonicity_defect(&diag, t, s1, s2)?;
        worst = worst.max(rep.defect / rep.scale.max(1e-300));
    }
    all_pass &= push(&mut table, "covariance_monotonicity_rel", worst, 1e-10);

    // 5. Chapman-Kolmogorov in closed form.
    let phi = TestFunction::Cosine {
        ell: DVector::from_fn(8, |k, _| if k == 0 { 1.0 } else { 0.2 }),
        phase: 0.3,
    };
    let x = DVector::from_fn(8, |k, _| 0.1 * (k as f64 + 1.0));
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let p = crate::numeric::halton::point(i, 3);
        let s = 0.5 * p[0];
        let r = s + (0.9 - s) * p[1];
        let t = r + (1.0 - r) * p[2];
        worst = worst.max(semigroup::chapman_defect(&diag, &phi, s, r, t, &x)?);
    }
    all_pass &= push(&mut table, "chapman_closed_form", worst, 1e-10);

    // 6. Cameron-Martin density vs the explicit pdf ratio (N = 4).
    let mut worst: f64 = 0.0;
    for trial in 0..5u64 {
        let p = crate::numeric::halton::point_in_box(trial, 16 + 4, -0.4, 0.4);
        let a = DMatrix::from_fn(4, 4, |i, j| p[i * 4 + j]) + DMatrix::identity(4, 4) * 1.5;
        let q = &a * a.transpose();
        let cov = propagator::GaussianState::dense(DVector::zeros(4), q.clone())?;
        let h = DVector::from_fn(4, |k, _| p[16 + k]);
        let q_inv = q.clone().try_inverse().ok_or_else(|| {
            Error::Internal("suite covariance not invertible".into())
        })?;
        for i in 0..20u64 {
            let y = DVector::from_vec(crate::numeric::halton::point_in_box(
                700 + i,
                4,
                -2.0,
                2.0,
            ));
            let got = crate::gaussian::cm_density(&cov, &h, &y)?;
            let d = &y - &h;
            let oracle = (-0.5 * (d.dot(&(&q_inv * &d)) - y.dot(&(&q_inv * &y)))).exp();
            worst = worst.max((got - oracle).abs() / oracle.abs().max(1e-12));
        }
    }
    all_pass &= push(&mut table, "cameron_martin_density_rel", worst, 1e-10);

    // 7. I_n recursion vs the pairing-expansion oracle, up to the full
    // supported order so any disagreement beyond order 4 is surfaced too.
    let dirs: Vec<DVector<f64>> = (0..semigroup::MAX_SMOOTHING_ORDER as u64)
        .map(|j| DVector::from_vec(crate::numeric::halton::point_in_box(11 + j, 8, -1.0, 1.0)))
        .collect();
    let ctx = semigroup::SmoothingContext::new(&diag, 0.1, 0.7, &dirs)?;
    let mut worst: f64 = 0.0;
    for yi in 0..200u64 {
        let y = DVector::from_vec(crate::numeric::halton::point_in_box(yi, 8, -2.0, 2.0));
        for order in 1..=semigroup::MAX_SMOOTHING_ORDER {
            let subset: Vec<usize> = (0..order).collect();
            let rec = ctx.in_eval(&y, &subset);
            let oracle = ctx.in_pairing_expansion(&y, &subset);
            worst = worst.max((rec - oracle).abs() / oracle.abs().max(1.0));
        }
    }
    all_pass &= push(&mut table, "in_recursion_vs_pairing", worst, 1e-12);

    // 8. Minimum-energy control defect at 512 grid points.
    let target = DVector::from_fn(8, |k, _| 0.5 / (k as f64 + 1.0));
    let me = propagator::gramian_min_energy(&diag, 0.0, 0.8, &target, 512)?;
    all_pass &= push(&mut table, "gramian_min_energy_defect", me.defect, 1e-3);

    // 9. Euler-Maruyama oracle vs apply (4 sigma + order-1 bias allowance).
    let phi_sde = TestFunction::Cosine {
        ell: DVector::from_fn(4, |k, _| if k == 0 { 1.2 } else { 0.0 }),
        phase: 0.0,
    };
    let x4 = DVector::from_fn(4, |k, _| 0.2 * k as f64);
    let exact = semigroup::apply(
        &flat,
        &phi_sde,
        0.0,
        1.0,
        &x4,
        &EvalParams::with_method(Method::ClosedForm, seed),
    )?;
    let sde = semigroup::sde_expectation(&flat, &phi_sde, 0.0, 1.0, &x4, 1 << 16, 1 << 10, seed, threads)?;
    let tol = 4.0 * sde.uncertainty + 2.0 / (1 << 10) as f64;
    let gap = (sde.value - exact.value).abs();
    all_pass &= push(&mut table, "sde_vs_apply", gap, tol);

    // 10. Gauss-Hermite vs closed form on a cosine.
    let gh = semigroup::apply(
        &diag,
        &phi,
        0.2,
        0.9,
        &x,
        &EvalParams::with_method(Method::GaussHermite, seed),
    )?;
    let cf = semigroup::apply(
        &diag,
        &phi,
        0.2,
        0.9,
        &x,
        &EvalParams::with_method(Method::ClosedForm, seed),
    )?;
    all_pass &= push(&mut table, "gauss_hermite_vs_closed_form", (gh.value - cf.value).abs(), 1e-10);

    // 11. Flat-model Lambda norm equals (t-s)^{-1/2}.
    let e4 = DirectionSpace::ambient(4);
    let lam = propagator::lambda_operator(&flat, &e4, 0.0, 0.25)?;
    let rel = (lam.norm() - 2.0).abs() / 2.0;
    all_pass &= push(&mut table, "lambda_norm_flat_model_rel", rel, 1e-10);

    let summary = if all_pass {
        "check: all suite rows pass".to_string()
    } else {
        "check: FAILED rows present".to_string()
    };
    Ok(CmdOutput {
        tables: vec![("check".into(), table)],
        resolved,
        summary,
        suite_failed: !all_pass,
    })
}

/// Fixed dense 4x4 model used by the invariant suite.
pub fn suite_dense_model(n: usize) -> EvolutionModel {
    let p = crate::numeric::halton::point_in_box(5, 2 * n * n, -1.0, 1.0);
    let a1 = DMatrix::from_fn(n, n, |i, j| p[i * n + j]);
    let b1 = DMatrix::from_fn(n, n, |i, j| 0.5 * p[n * n + i * n + j]) + DMatrix::identity(n, n);
    EvolutionModel {
        dim: n,
        horizon: 1.0,
        coeffs: crate::model::Coefficients::Dense {
            a: vec![
                crate::model::DenseTerm {
                    coef: TimeFn::Const(1.0),
                    matrix: a1,
                },
                crate::model::DenseTerm {
                    coef: TimeFn::Trig {
                        amplitude: 0.5,
                        frequency: 2.0,
                        phase: 0.3,
                        offset: 0.0,
                    },
                    matrix: DMatrix::identity(n, n),
                },
            ],
            b: vec![crate::model::DenseTerm {
                coef: TimeFn::Const(1.0),
                matrix: b1,
            }],
        },
        affine: vec![TimeFn::zero(); n],
    }
}

/// Dispatch a subcommand by name.
pub fn run_command(cfg: &mut RunConfig, cmd: &str) -> Result<CmdOutput> {
    match cmd {
        "evolve" => cmd_evolve(cfg),
        "apply" => cmd_apply(cfg),
        "deriv" => cmd_deriv(cfg),
        "mild" => cmd_mild(cfg),
        "fit-theta" | "fit_theta" => cmd_fit_theta(cfg),
        "holder" => cmd_holder(cfg),
        "zygmund" => cmd_zygmund(cfg),
        "schauder" => cmd_schauder(cfg),
        "check" => cmd_check(cfg),
        other => Err(Error::Validation(format!("unknown subcommand `{other}`"))),
    }
}

/// Write the outputs of a command into `out_dir`.
pub fn write_outputs(out: &CmdOutput, out_dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (stem, table) in &out.tables {
        let path = out_dir.join(format!("{stem}.{}", format.extension()));
        let body = match format {
            OutputFormat::Csv => table.to_csv(),
            OutputFormat::Json => table.to_json(),
        };
        std::fs::write(&path, body)?;
        written.push(path);
    }
    let cfg_path = out_dir.join("resolved.cfg");
    std::fs::write(&cfg_path, &out.resolved)?;
    written.push(cfg_path);
    Ok(written)
}

/// Exit code for an error per the CLI contract.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::Validation(_) => 2,
        _ => 3,
    }
}
