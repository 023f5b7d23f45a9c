use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use qosc_core::bounds::{c_bound, certificates_for, gamma_radius, BoundCertificate};
use qosc_core::hamiltonian::{build_hamiltonian, hprime_diagonal, matrix_element_table_with};
use qosc_core::oracle::{compare, diagonalize, truncation_scan, ConvergenceReport, SolverRegistry, Verdict};
use qosc_core::perturbation::{solve_level, undeformed_terms, OrderPolicy, PerturbationResult, SolveOptions, MAX_ORDER_CAP};
use qosc_core::qcore::{energy_level, n_max, Q_WINDOW_UPPER};
use qosc_core::{ModelParameters, Precision};

use crate::config::{Command, Grid, LevelRange, RunConfig};
use crate::output::{float_json, Cell, Report, Table};

/// Exit status 2 when set: some certificate or verdict failed.
pub struct Outcome {
    pub report: Report,
    pub failed: Vec<String>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn ok(report: Report) -> Self {
        Self {
            report,
            failed: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

pub const FIGURE1_GRID: Grid = Grid::new(1.001, 1.059, 100);

pub const FIGURE2_GRID: Grid = Grid::new(1.001, 1.002, 3);

pub const CHECK_GRID: [f64; 5] = [1.005, 1.01, 1.02, 1.04, 1.059];

const DIVERGE_GAMMA: f64 = 0.1;
const DIVERGE_ORDERS: usize = 25;

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        Command::Spectrum => spectrum(cfg),
        Command::Melem => melem(cfg),
        Command::Series => series(cfg),
        Command::Radius => radius(cfg),
        Command::Figure1 => figure1(cfg),
        Command::Figure2 => figure2(cfg),
        Command::Oracle => oracle(cfg),
        Command::Check => check(cfg),
        Command::Diverge => diverge(cfg),
    }
}

/// Parameters at `q` with γ = 0; q = 1 selects the undeformed model.
fn base_params(cfg: &RunConfig, q: f64) -> Result<ModelParameters> {
    let p = if q == 1.0 {
        ModelParameters::undeformed(cfg.omega, cfg.mass, 0.0)?
    } else {
        ModelParameters::new(q, cfg.omega, cfg.mass, 0.0)?
    };
    Ok(if cfg.certify { p } else { p.allow_outside_window() })
}

fn require_q(cfg: &RunConfig) -> Result<f64> {
    cfg.q.ok_or_else(|| anyhow!("--q is required for `{}`", command_name(cfg.command)))
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Spectrum => "spectrum",
        Command::Melem => "melem",
        Command::Series => "series",
        Command::Radius => "radius",
        Command::Figure1 => "figure1",
        Command::Figure2 => "figure2",
        Command::Oracle => "oracle",
        Command::Check => "check",
        Command::Diverge => "diverge",
    }
}

/// q values from --grid, else --q, else the command default.
fn q_values(cfg: &RunConfig, default: Option<&[f64]>) -> Result<Vec<f64>> {
    if let Some(g) = cfg.grid {
        return Ok(g.points());
    }
    if let Some(q) = cfg.q {
        return Ok(vec![q]);
    }
    default
        .map(<[f64]>::to_vec)
        .ok_or_else(|| anyhow!("--q or --grid is required for `{}`", command_name(cfg.command)))
}

/// With certification on, every grid point must sit in (1, 1.06).
fn guard_grid(cfg: &RunConfig, qs: &[f64]) -> Result<()> {
    if !cfg.certify {
        return Ok(());
    }
    for &q in qs {
        if !(q > 1.0 && q < Q_WINDOW_UPPER) {
            return Err(qosc_core::Error::OutsideWindow { q, limit: Q_WINDOW_UPPER }.into());
        }
    }
    Ok(())
}

/// Explicit γ, else half the level's radius.
fn coupled(cfg: &RunConfig, p: ModelParameters, n: usize) -> Result<ModelParameters> {
    let g = match cfg.gamma {
        Some(g) => g,
        None => 0.5 * gamma_radius(n, &p)?,
    };
    Ok(p.with_gamma(g))
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    let mut opts = SolveOptions::default().with_tol(cfg.tol);
    opts.order = match cfg.max_order {
        Some(k) => OrderPolicy::Fixed(k),
        None => OrderPolicy::Majorant { cap: MAX_ORDER_CAP },
    };
    if !cfg.certify {
        opts = opts.uncertified();
    }
    opts
}

fn levels(cfg: &RunConfig, default: LevelRange) -> LevelRange {
    cfg.n.unwrap_or(default)
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome> {
    let range = levels(cfg, LevelRange { first: 0, last: 9 });
    let p = coupled(cfg, base_params(cfg, require_q(cfg)?)?, 0)?;
    let registry = SolverRegistry::with_builtin();
    let solver = registry.get(&cfg.solver)?;
    let spec = match cfg.levels {
        Some(n) => diagonalize(&build_hamiltonian(n, &p)?, solver)?,
        None => truncation_scan(&p, range.last, cfg.tol * 0.1, solver)?,
    };
    let mut t = Table::new(&["n", "eigenvalue", "unperturbed", "stability"]);
    for n in range.iter().filter(|&n| n < spec.levels) {
        t.push(vec![
            n.into(),
            spec.eigenvalues[n].into(),
            energy_level(n, &p).into(),
            spec.stability[n].into(),
        ]);
    }
    Ok(Outcome::ok(Report::Table(t)))
}

fn melem(cfg: &RunConfig) -> Result<Outcome> {
    let q = require_q(cfg)?;
    let p = base_params(cfg, q)?;
    let range = levels(cfg, LevelRange { first: 0, last: 10 });
    let precision = cfg.precision.unwrap_or_else(|| Precision::auto(q));
    let mut t = Table::new(&["n", "offset", "x4", "hprime"]);
    for r in matrix_element_table_with(range.iter(), &p, precision) {
        t.push(vec![r.n.into(), r.offset.into(), r.x4.into(), r.hprime.into()]);
    }
    Ok(Outcome::ok(Report::Table(t)))
}

fn series_json(r: &PerturbationResult) -> Value {
    let orders: Vec<Value> = r
        .orders
        .iter()
        .map(|t| json!({"k": t.order, "value": float_json(t.value), "tail_bound": float_json(t.tail_bound)}))
        .collect();
    json!({
        "n": r.n,
        "q": float_json(r.params.q()),
        "omega": float_json(r.params.omega()),
        "gamma": float_json(r.params.gamma()),
        "delta_e": float_json(r.delta_e),
        "orders": orders,
        "theta": float_json(r.theta),
        "tail_bound": float_json(r.tail_bound),
        "norm_sq": r.norm_sq.map_or(Value::Null, float_json),
        "residual": r.residual.map_or(Value::Null, float_json),
        "certified": r.certified,
    })
}

fn series(cfg: &RunConfig) -> Result<Outcome> {
    let base = base_params(cfg, require_q(cfg)?)?;
    let range = levels(cfg, LevelRange::single(0));
    let opts = solve_options(cfg);
    let results = range
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&n| {
            let p = coupled(cfg, base, n)?;
            Ok(solve_level(n, &p, &opts)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut t = Table::new(&["n", "k", "value", "tail_bound"]);
    for r in &results {
        for term in &r.orders {
            t.push(vec![r.n.into(), term.order.into(), term.value.into(), term.tail_bound.into()]);
        }
    }
    let json = if results.len() == 1 {
        series_json(&results[0])
    } else {
        Value::Array(results.iter().map(series_json).collect())
    };
    let mut out = Outcome::ok(Report::Document { json, csv: t });
    if results.iter().any(|r| !r.certified) {
        out.warnings.push("result is uncertified".into());
    }
    Ok(out)
}

fn radius(cfg: &RunConfig) -> Result<Outcome> {
    let qs = q_values(cfg, None)?;
    let range = levels(cfg, LevelRange::single(0));
    let rows = qs
        .par_iter()
        .map(|&q| {
            let p = base_params(cfg, q)?;
            let c = c_bound(&p)?;
            let nm = n_max(&p)?;
            range
                .iter()
                .map(|n| Ok(vec![q.into(), n.into(), gamma_radius(n, &p)?.into(), c.into(), nm.into()]))
                .collect::<Result<Vec<Vec<Cell>>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["q", "n", "gamma_radius", "c_bound", "n_max"]);
    rows.into_iter().flatten().for_each(|r| t.push(r));
    Ok(Outcome::ok(Report::Table(t)))
}

fn figure1(cfg: &RunConfig) -> Result<Outcome> {
    let grid = cfg.grid.unwrap_or(FIGURE1_GRID);
    let qs = grid.points();
    guard_grid(cfg, &qs)?;
    let n = cfg.n.map_or(0, |r| r.first);
    let radii = qs
        .par_iter()
        .map(|&q| Ok(gamma_radius(n, &base_params(cfg, q)?)?))
        .collect::<Result<Vec<f64>>>()?;
    let mut t = Table::new(&["q", "gamma_radius"]);
    for (q, r) in qs.iter().zip(radii) {
        t.push(vec![(*q).into(), r.into()]);
    }
    Ok(Outcome::ok(Report::Table(t)))
}

fn figure2(cfg: &RunConfig) -> Result<Outcome> {
    let qs = cfg.grid.unwrap_or(FIGURE2_GRID).points();
    guard_grid(cfg, &qs)?;
    let precision = cfg.precision.unwrap_or(Precision::Extended);
    let columns = qs
        .par_iter()
        .map(|&q| {
            let p = base_params(cfg, q)?;
            let range = match cfg.n {
                Some(r) => r,
                None => LevelRange {
                    first: 0,
                    last: (4.0 * n_max(&p)?).floor() as usize,
                },
            };
            Ok((q, range.first, hprime_diagonal(range.iter(), &p, precision)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["q", "n", "hprime_diag"]);
    for (q, first, col) in columns {
        for (i, h) in col.into_iter().enumerate() {
            t.push(vec![q.into(), (first + i).into(), h.into()]);
        }
    }
    Ok(Outcome::ok(Report::Table(t)))
}

fn report_row(r: &ConvergenceReport) -> Vec<Cell> {
    vec![
        r.params.q().into(),
        r.params.omega().into(),
        r.params.mass().into(),
        r.params.gamma().into(),
        r.n.into(),
        r.perturbative_energy.into(),
        r.oracle_energy.into(),
        r.difference.into(),
        r.tail_bound.into(),
        r.stability.into(),
        verdict_name(r.verdict).into(),
        r.overlap.into(),
    ]
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Uncertified => "UNCERTIFIED",
    }
}

fn report_json(r: &ConvergenceReport, levels: usize, solver: &str) -> Value {
    json!({
        "params": {
            "q": float_json(r.params.q()),
            "omega": float_json(r.params.omega()),
            "mass": float_json(r.params.mass()),
            "gamma": float_json(r.params.gamma()),
        },
        "n": r.n,
        "perturbative_energy": float_json(r.perturbative_energy),
        "oracle_energy": float_json(r.oracle_energy),
        "difference": float_json(r.difference),
        "tail_bound": float_json(r.tail_bound),
        "stability": float_json(r.stability),
        "verdict": verdict_name(r.verdict),
        "overlap": r.overlap.map_or(Value::Null, float_json),
        "levels": levels,
        "solver": solver,
    })
}

fn oracle(cfg: &RunConfig) -> Result<Outcome> {
    let base = base_params(cfg, require_q(cfg)?)?;
    let range = levels(cfg, LevelRange::single(0));
    let registry = SolverRegistry::with_builtin();
    let solver = registry.get(&cfg.solver)?;
    let opts = solve_options(cfg);
    let reports = range
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&n| {
            let p = coupled(cfg, base, n)?;
            let pert = solve_level(n, &p, &opts)?;
            let spec = truncation_scan(&p, n, cfg.tol * 0.1, solver)?;
            Ok((compare(&pert, &spec)?, spec.levels))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut t = Table::new(&[
        "q",
        "omega",
        "mass",
        "gamma",
        "n",
        "perturbative_energy",
        "oracle_energy",
        "difference",
        "tail_bound",
        "stability",
        "verdict",
        "overlap",
    ]);
    let mut out_failed = Vec::new();
    let mut warnings = Vec::new();
    for (r, _) in &reports {
        t.push(report_row(r));
        match r.verdict {
            Verdict::Fail => out_failed.push(format!(
                "n={} difference {:e} exceeds tail {:e} + stability {:e}",
                r.n, r.difference, r.tail_bound, r.stability
            )),
            Verdict::Uncertified => warnings.push(format!("n={}: comparison is uncertified", r.n)),
            Verdict::Pass => {}
        }
    }
    let docs: Vec<Value> = reports.iter().map(|(r, l)| report_json(r, *l, solver.name())).collect();
    let json = if docs.len() == 1 { docs[0].clone() } else { Value::Array(docs) };
    Ok(Outcome {
        report: Report::Document { json, csv: t },
        failed: out_failed,
        warnings,
    })
}

fn certificate_row(c: &BoundCertificate) -> Vec<Cell> {
    vec![
        c.name.clone().into(),
        c.n.into(),
        c.offset.into(),
        c.q.into(),
        c.lhs.into(),
        c.rhs.into(),
        c.satisfied.into(),
    ]
}

fn check(cfg: &RunConfig) -> Result<Outcome> {
    let qs = q_values(cfg, Some(&CHECK_GRID))?;
    let sets = qs
        .par_iter()
        .map(|&q| {
            if q <= 1.0 {
                return Err(qosc_core::Error::Undeformed { q }.into());
            }
            let p = base_params(cfg, q)?;
            Ok((p.in_certified_window(), certificates_for(&p)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut t = Table::new(&["name", "n", "offset", "q", "lhs", "rhs", "satisfied"]);
    let mut failed = Vec::new();
    let mut warnings = Vec::new();
    for (&q, (certified, certs)) in qs.iter().zip(&sets) {
        if !certified {
            warnings.push(format!("q = {q} is outside the certified window; certificates are uncertified"));
        }
        for c in certs {
            t.push(certificate_row(c));
            if !c.satisfied {
                let label = format!(
                    "{} q={} n={} offset={}: {:e} vs {:e}",
                    c.name,
                    c.q,
                    c.n.map_or("-".into(), |v| v.to_string()),
                    c.offset.map_or("-".into(), |v| v.to_string()),
                    c.lhs,
                    c.rhs
                );
                if *certified {
                    failed.push(label);
                } else {
                    warnings.push(format!("uncertified failure {label}"));
                }
            }
        }
    }
    Ok(Outcome {
        report: Report::Table(t),
        failed,
        warnings,
    })
}

fn diverge(cfg: &RunConfig) -> Result<Outcome> {
    let q = cfg.q.unwrap_or(1.0);
    if q != 1.0 {
        return Err(qosc_core::Error::InvalidParameter(format!(
            "diverge runs the undeformed model and needs q = 1 (got {q})"
        ))
        .into());
    }
    let p = ModelParameters::undeformed(cfg.omega, cfg.mass, 0.0)?;
    let gamma = cfg.gamma.unwrap_or(DIVERGE_GAMMA);
    let terms = undeformed_terms(gamma, cfg.max_order.unwrap_or(DIVERGE_ORDERS), &p)?;
    let mut t = Table::new(&["k", "term", "abs_term"]);
    for (i, v) in terms.iter().enumerate() {
        t.push(vec![(i + 1).into(), (*v).into(), v.abs().into()]);
    }
    Ok(Outcome::ok(Report::Table(t)))
}
