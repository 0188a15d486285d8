//! Subcommand runners. Each writes `report.json`, `report.csv`, its own
//! artifacts, and a `manifest.json` echoing the resolved configuration.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sheetlab::diagnostics::{
    fdd_test, moment_bound_probe, tightness_modulus_probe, variance_convergence_report,
};
use sheetlab::green::{green_eval, green_mc_estimate, lambda_sup};
use sheetlab::integrals::{Driver, Integrand};
use sheetlab::kernels::KernelField;
use sheetlab::report::{Comparison, Verdict};
use sheetlab::{
    solution_convergence_report, BoxIndicator, ConvergenceReport, Error, GreenIntegrand,
    GreenSeries, GridField, LatticePoint, PoissonProblem, RngStream,
};

use crate::config::{ConfigError, RunConfig};

/// Why a run stopped; `code()` is the process exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Verdict(String),
    Resource(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Verdict(_) => 3,
            Failure::Resource(_) => 4,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("config error: {m}"),
            Failure::Verdict(m) => format!("verdict failure: {m}"),
            Failure::Resource(m) => format!("resource refusal: {m}"),
            Failure::Runtime(m) => format!("error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::BudgetExceeded { .. } => Failure::Resource(msg),
            Error::NotConverged { .. }
            | Error::Stalled { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => Failure::Runtime(msg),
            _ => Failure::Config(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// RFC 3339 creation time; the only field that differs between identical runs.
    pub created: String,
    pub config: RunConfig,
    pub artifacts: Vec<String>,
    pub verdicts_passed: bool,
}

struct Output {
    report: ConvergenceReport,
    artifacts: Vec<String>,
    summary: String,
}

pub fn run(subcommand: &str, cfg: &RunConfig) -> Result<String, Failure> {
    let dir = cfg.output.as_path();
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Config(format!("output directory {}: {e}", dir.display())))?;
    let out = match subcommand {
        "simulate" => simulate(cfg, dir)?,
        "convergence-report" => convergence(cfg)?,
        "green-table" => green_table(cfg, dir)?,
        "poisson-solve" => poisson_solve(cfg, dir)?,
        "spde-compare" => spde_compare(cfg)?,
        other => return Err(Failure::Config(format!("unknown subcommand '{other}'"))),
    };
    out.report.write_to(dir, "report")?;
    let mut artifacts = vec!["report.json".to_string(), "report.csv".to_string()];
    artifacts.extend(out.artifacts);
    let passed = out.report.all_passed();
    let manifest = Manifest {
        tool: "sheetlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        created: chrono::Utc::now().to_rfc3339(),
        config: cfg.clone(),
        artifacts,
        verdicts_passed: passed,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text)?;
    for v in &out.report.verdicts {
        println!(
            "{} {}: {:e} {} {:e}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.statistic,
            comparison_symbol(v.comparison),
            v.threshold
        );
    }
    if cfg.strict && !passed {
        return Err(Failure::Verdict(format!(
            "{} verdict(s) failed",
            out.report.verdicts.iter().filter(|v| !v.passed).count()
        )));
    }
    Ok(out.summary)
}

fn comparison_symbol(c: Comparison) -> &'static str {
    match c {
        Comparison::AtMost => "<=",
        Comparison::AtLeast => ">=",
        Comparison::Above => ">",
        Comparison::Below => "<",
    }
}

fn series(cfg: &RunConfig) -> Result<GreenSeries, Failure> {
    let d = cfg.grid.d;
    Ok(match cfg.green.kmax {
        Some(k) => GreenSeries::new(d, k)?,
        None => GreenSeries::default_for(d)?,
    })
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<Output, Failure> {
    let grid = cfg.grid()?;
    let family = RunConfig::family("noise.family", &cfg.noise.family)?;
    let n = cfg.noise.n;
    let driver = family.sample(grid.lengths(), n, &mut RngStream::new(cfg.seed, 0))?;
    let mu = driver.measure();
    let field = GridField::from_fn(&grid, |x| mu.primitive(x));
    field.write_csv(File::create(dir.join("field.csv"))?)?;
    let driver_json = match &driver {
        Driver::Kernel(KernelField::Donsker(k)) => k.to_json()?,
        Driver::Kernel(KernelField::KacStroock(k)) => k.to_json()?,
        Driver::Sheet(s) => serde_json::to_string_pretty(s).map_err(Error::from)?,
    };
    std::fs::write(dir.join("driver.json"), driver_json)?;
    let mut report = ConvergenceReport::new("simulate", family.name());
    report.meta("seed", cfg.seed);
    report.push(Some(n), "field", "sup_norm", field.sup_norm());
    report.push(Some(n), "field", "total_mass", mu.total_mass());
    report.push(Some(n), "driver", "pieces", mu.box_count() as f64);
    Ok(Output {
        report,
        artifacts: vec!["field.csv".into(), "driver.json".into()],
        summary: format!(
            "simulated {} at n={n} on {} nodes",
            family.name(),
            grid.node_count()
        ),
    })
}

fn convergence(cfg: &RunConfig) -> Result<Output, Failure> {
    let diag = cfg.diag_config()?;
    let family = RunConfig::family("diag.family", &cfg.diag.family)?;
    let rng = RngStream::new(cfg.seed, 0);
    let integrand: Box<dyn Integrand> = match cfg.diag.integrand.as_str() {
        "indicator" => Box::new(BoxIndicator),
        "green" => Box::new(GreenIntegrand::new(series(cfg)?)),
        other => {
            return Err(Failure::Config(format!(
                "field `diag.integrand`: unknown integrand '{other}' (expected indicator or green)"
            )))
        }
    };
    let f = integrand.as_ref();
    let report = match cfg.diag.experiment.as_str() {
        "fdd" => fdd_test(f, family, &diag, &rng)?,
        "variance" => variance_convergence_report(f, family, &diag.probes[0], &diag, &rng)?,
        "moment" => moment_bound_probe(f, family, &diag, &rng)?,
        "tightness" => {
            let top = diag.grid.lengths().to_vec();
            let cells = diag.grid.cells()[0];
            let pairs: Vec<(LatticePoint, LatticePoint)> = (1..=cells / 2)
                .map(|k| {
                    let z: Vec<f64> = (0..top.len()).map(|a| diag.grid.node_coord(a, cells - k)).collect();
                    (LatticePoint::new(z), LatticePoint::new(top.clone()))
                })
                .collect();
            tightness_modulus_probe(f, family, &pairs, &diag, &rng)?
        }
        other => {
            return Err(Failure::Config(format!(
                "field `diag.experiment`: unknown experiment '{other}' (expected fdd, variance, moment or tightness)"
            )))
        }
    };
    let summary = format!(
        "{} for {} over n={:?}: {}",
        report.experiment,
        report.family,
        diag.n_list,
        if report.all_passed() {
            "all verdicts passed"
        } else {
            "some verdicts failed"
        }
    );
    Ok(Output {
        report,
        artifacts: vec![],
        summary,
    })
}

fn default_pairs(d: usize) -> Vec<[Vec<f64>; 2]> {
    let base = [
        [0.3, 0.6, 0.5],
        [0.5, 0.5, 0.5],
        [0.2, 0.2, 0.3],
        [0.8, 0.3, 0.4],
        [0.15, 0.85, 0.5],
    ];
    let other = [
        [0.55, 0.4, 0.5],
        [0.25, 0.5, 0.6],
        [0.7, 0.8, 0.6],
        [0.6, 0.65, 0.7],
        [0.4, 0.6, 0.25],
    ];
    base.iter()
        .zip(&other)
        .map(|(x, y)| [x[..d].to_vec(), y[..d].to_vec()])
        .collect()
}

fn green_table(cfg: &RunConfig, dir: &Path) -> Result<Output, Failure> {
    let gs = series(cfg)?;
    let d = gs.d;
    let pairs = if cfg.green.pairs.is_empty() {
        default_pairs(d)
    } else {
        cfg.green.pairs.clone()
    };
    let wos = cfg.wos_config();
    let mut report = ConvergenceReport::new("green_table", format!("d={d}, kmax={}", gs.kmax));
    report.meta("series", gs);
    let mut w = csv::Writer::from_path(dir.join("green_table.csv")).map_err(Error::from)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.extend((1..=d).map(|i| format!("y{i}")));
    header.extend(["series", "tail", "mc", "mc_std_error"].map(String::from));
    w.write_record(&header).map_err(Error::from)?;
    for (i, [x, y]) in pairs.iter().enumerate() {
        let value = green_eval(&gs, x, y)?;
        let tail = gs.tail_estimate(x, y)?;
        let label = format!("pair {i}");
        report.push(None, &label, "series", value);
        report.push(None, &label, "tail", tail);
        let mut row: Vec<String> = x.iter().chain(y.iter()).map(|v| v.to_string()).collect();
        row.push(format!("{value:e}"));
        row.push(format!("{tail:e}"));
        if wos.walks > 0 {
            let mc = green_mc_estimate(x, y, &wos, &RngStream::new(cfg.seed, i as u64))?;
            report.push(None, &label, "mc", mc.value);
            report.push(None, &label, "mc_std_error", mc.std_error);
            report.verdict(Verdict::new(
                format!("{label} |series - mc| within 3 SE + tail"),
                (value - mc.value).abs(),
                Comparison::AtMost,
                3.0 * mc.std_error + tail,
            ));
            row.push(format!("{:e}", mc.value));
            row.push(format!("{:e}", mc.std_error));
        } else {
            row.extend([String::new(), String::new()]);
        }
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush()?;
    let grid = sheetlab::GridSpec::unit(d, if d == 2 { 32 } else { 8 })?;
    let lam = lambda_sup(&gs, &grid)?;
    report.push(None, "lambda", "value", lam.value);
    report.push(None, "lambda", "refinement_delta", lam.refinement_delta);
    Ok(Output {
        report,
        artifacts: vec!["green_table.csv".into()],
        summary: format!(
            "tabulated {} pairs; Lambda_hat = {:.6}",
            pairs.len(),
            lam.value
        ),
    })
}

fn poisson_problem(cfg: &RunConfig) -> Result<PoissonProblem, Failure> {
    let grid = cfg.grid()?;
    let g = GridField::from_fn(&grid, |_| cfg.solver.g);
    Ok(PoissonProblem::new(series(cfg)?, &g)?)
}

fn poisson_solve(cfg: &RunConfig, dir: &Path) -> Result<Output, Failure> {
    let f = cfg.nonlinearity()?;
    let solve = cfg.solve_config()?;
    let problem = poisson_problem(cfg)?;
    let mut report = ConvergenceReport::new("poisson_solve", cfg.noise.family.clone());
    report.push(None, "lambda", "value", problem.lambda.value);
    report.push(
        None,
        "lambda",
        "refinement_delta",
        problem.lambda.refinement_delta,
    );
    let relaxed = match cfg.solver.method.as_str() {
        "contraction" => false,
        "relaxed" => true,
        other => {
            return Err(Failure::Config(format!(
                "field `solver.method`: unknown method '{other}' (expected contraction or relaxed)"
            )))
        }
    };
    if !relaxed {
        let gate = problem.gate(f.lipschitz)?;
        report.push(None, "gate", "inflated_lambda_l", gate);
    }
    let family = RunConfig::family("noise.family", &cfg.noise.family)?;
    let eta = problem.noise_potential(family, cfg.noise.n, &mut RngStream::new(cfg.seed, 0))?;
    let res = if relaxed {
        problem.solve_relaxed(&f, &eta, &solve)?
    } else {
        problem.solve_contraction(&f, &eta, &solve)?
    };
    res.u.write_csv(File::create(dir.join("solution.csv"))?)?;
    report.push(None, "solve", "iterations", res.iterations as f64);
    report.push(None, "solve", "residual", res.residual);
    if let Some(b) = res.error_bound {
        report.push(None, "solve", "error_bound", b);
    }
    for (k, u) in res.update_history.iter().enumerate() {
        report.push(Some(k + 1), "history", "update", *u);
    }
    report.verdict(Verdict::new(
        "solver converged",
        res.converged as u8 as f64,
        Comparison::AtLeast,
        1.0,
    ));
    Ok(Output {
        report,
        artifacts: vec!["solution.csv".into()],
        summary: format!(
            "solved with F={} in {} iterations, residual {:e}",
            f.name(),
            res.iterations,
            res.residual
        ),
    })
}

fn spde_compare(cfg: &RunConfig) -> Result<Output, Failure> {
    let f = cfg.nonlinearity()?;
    let solve = cfg.solve_config()?;
    let problem = poisson_problem(cfg)?;
    let study = cfg.study(&problem.grid)?;
    let report =
        solution_convergence_report(&study, &problem, &f, &solve, &RngStream::new(cfg.seed, 0))?;
    let summary = format!(
        "solution-law comparison for {} over n={:?}: {}",
        report.family,
        study.n_list,
        if report.all_passed() {
            "all verdicts passed"
        } else {
            "some verdicts failed"
        }
    );
    Ok(Output {
        report,
        artifacts: vec![],
        summary,
    })
}
