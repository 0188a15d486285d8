//! Mild-form solver for the stochastic Poisson equation on the unit cube:
//! find `u` with `u + K F(u) = K g + η` on a grid, where `K` is applied
//! spectrally and `η = ∫ K(·,y) θ(dy)` comes from a noise driver.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{
    green_potential, k_apply, lambda_sup, poincare_constant, GreenSeries, LambdaSup,
};
use crate::grid::{GridField, GridSpec, LatticePoint};
use crate::integrals::NoiseFamily;
use crate::report::{Comparison, ConvergenceReport, Verdict};
use crate::rng::RngStream;
use crate::stats::ks_two_sample;

/// Safety factor on the grid estimate of `Λ` in the contraction gate.
pub const GATE_INFLATION: f64 = 1.05;

/// Nonlinearity `F` with its declared constants.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Global Lipschitz constant `L`.
    pub lipschitz: f64,
    /// Constant `L'` in `(a - b)(F(a) - F(b)) ≥ -L' |a - b|²`.
    pub one_sided: f64,
    pub bound: Option<f64>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("one_sided", &self.one_sided)
            .field("bound", &self.bound)
            .finish()
    }
}

impl Nonlinearity {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        one_sided: f64,
        bound: Option<f64>,
    ) -> Result<Self> {
        if !(lipschitz >= 0.0) || !(one_sided >= 0.0) || bound.is_some_and(|b| !(b >= 0.0)) {
            return Err(Error::param("nonlinearity constants must be non-negative"));
        }
        Ok(Nonlinearity {
            name: name.into(),
            f: Arc::new(f),
            lipschitz,
            one_sided,
            bound,
        })
    }

    pub fn zero() -> Self {
        Nonlinearity::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Nonlinearity {
            name: if c == 0.0 {
                "zero".into()
            } else {
                format!("constant:{c}")
            },
            f: Arc::new(move |_| c),
            lipschitz: 0.0,
            one_sided: 0.0,
            bound: Some(c.abs()),
        }
    }

    /// `F(u) = λ u`.
    pub fn linear(lambda: f64) -> Self {
        Nonlinearity {
            name: format!("linear:{lambda}"),
            f: Arc::new(move |u| lambda * u),
            lipschitz: lambda.abs(),
            one_sided: (-lambda).max(0.0),
            bound: None,
        }
    }

    /// `F(u) = tanh(s u)`.
    pub fn tanh(scale: f64) -> Self {
        Nonlinearity {
            name: format!("tanh:{scale}"),
            f: Arc::new(move |u| (scale * u).tanh()),
            lipschitz: scale.abs(),
            one_sided: (-scale).max(0.0),
            bound: Some(1.0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn apply(&self, u: &GridField) -> GridField {
        u.map(|v| self.eval(v))
    }

    /// Checks the declared constants on a uniform probe set of `[-r, r]`.
    pub fn spot_check(&self, radius: f64, probes: usize) -> Result<()> {
        let pts: Vec<f64> = (0..probes)
            .map(|i| -radius + 2.0 * radius * i as f64 / (probes.max(2) - 1) as f64)
            .collect();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            let slack = 1e-12 * (1.0 + fa.abs() + fb.abs());
            if (fa - fb).abs() > self.lipschitz * (a - b).abs() + slack {
                return Err(Error::param(format!(
                    "{}: Lipschitz bound violated near {a}",
                    self.name
                )));
            }
            if (a - b) * (fa - fb) < -self.one_sided * (a - b).powi(2) - slack {
                return Err(Error::param(format!(
                    "{}: one-sided bound violated near {a}",
                    self.name
                )));
            }
        }
        if let Some(bound) = self.bound {
            if pts
                .iter()
                .any(|&u| self.eval(u).abs() > bound * (1.0 + 1e-12))
            {
                return Err(Error::param(format!(
                    "{}: |F| exceeds the declared bound",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let value = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::param(format!("nonlinearity '{s}' needs a parameter")))?
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("bad nonlinearity parameter in '{s}'")))
        };
        match head.trim() {
            "zero" => Ok(Nonlinearity::zero()),
            "constant" => Ok(Nonlinearity::constant(value(arg)?)),
            "linear" => Ok(Nonlinearity::linear(value(arg)?)),
            "tanh" => Ok(Nonlinearity::tanh(value(arg)?)),
            other => Err(Error::param(format!("unknown nonlinearity '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relaxation `ω ∈ (0, 1]`, used by the damped solver.
    pub relaxation: f64,
    /// Damped solver aborts when the residual has not decreased over this many iterations.
    pub patience: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tolerance: 1e-8,
            max_iterations: 500,
            relaxation: 0.5,
            patience: 25,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::param("relaxation must lie in (0, 1]"));
        }
        if self.max_iterations == 0 || self.patience == 0 {
            return Err(Error::param("iteration limits must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: GridField,
    pub iterations: usize,
    /// `‖u + K F(u) - K g - η‖_∞` of the returned `u`.
    pub residual: f64,
    pub converged: bool,
    /// Sup-norm updates `‖u_{k+1} - u_k‖_∞`.
    pub update_history: Vec<f64>,
    /// Ratios of successive updates.
    pub ratio_history: Vec<f64>,
    /// `tolerance / (1 - 1.05 Λ̂ L)` for the contraction solver, when the gate applies.
    pub error_bound: Option<f64>,
}

/// Solver context on one grid: caches `Λ̂` and `K g`.
#[derive(Clone, Debug)]
pub struct PoissonProblem {
    pub series: GreenSeries,
    pub grid: GridSpec,
    pub lambda: LambdaSup,
    pub kg: GridField,
}

impl PoissonProblem {
    pub fn new(series: GreenSeries, g: &GridField) -> Result<Self> {
        let lambda = lambda_sup(&series, &g.grid)?;
        let kg = k_apply(&series, g)?;
        Ok(PoissonProblem {
            series,
            grid: g.grid.clone(),
            lambda,
            kg,
        })
    }

    /// `1.05 Λ̂ L`, or a gate failure when it is not below 1.
    pub fn gate(&self, lipschitz: f64) -> Result<f64> {
        let product = GATE_INFLATION * self.lambda.value * lipschitz;
        if product < 1.0 {
            Ok(product)
        } else {
            Err(Error::GateFailure {
                lambda: self.lambda.value,
                lipschitz,
                product,
            })
        }
    }

    /// `T(u) = -K F(u) + K g + η`.
    fn map(&self, f: &Nonlinearity, u: &GridField, eta: &GridField) -> Result<GridField> {
        let kf = k_apply(&self.series, &f.apply(u))?;
        let rhs = self.kg.zip_map(eta, |a, b| a + b)?;
        rhs.zip_map(&kf, |a, b| a - b)
    }

    pub fn residual(&self, f: &Nonlinearity, u: &GridField, eta: &GridField) -> Result<f64> {
        u.sup_distance(&self.map(f, u, eta)?)
    }

    fn check_eta(&self, eta: &GridField) -> Result<()> {
        eta.ensure_same_grid(&self.kg)?;
        let b = eta.boundary_sup();
        if b > 1e-10 * (1.0 + eta.sup_norm()) {
            return Err(Error::param(format!(
                "η must vanish on the boundary (found {b:e})"
            )));
        }
        Ok(())
    }

    /// Fixed-point iteration `u ← T(u)` from `u₀ = 0` until the update is below tolerance.
    pub fn solve_contraction(
        &self,
        f: &Nonlinearity,
        eta: &GridField,
        cfg: &SolveConfig,
    ) -> Result<SolveResult> {
        cfg.validate()?;
        let gate = self.gate(f.lipschitz)?;
        self.check_eta(eta)?;
        let mut u = GridField::zeros(&self.grid);
        let mut updates: Vec<f64> = vec![];
        let mut ratios = vec![];
        for it in 1..=cfg.max_iterations {
            let next = self.map(f, &u, eta)?;
            let update = next.sup_distance(&u)?;
            if let Some(&prev) = updates.last() {
                if prev > 0.0 {
                    ratios.push(update / prev);
                }
            }
            updates.push(update);
            u = next;
            if update <= cfg.tolerance {
                let residual = self.residual(f, &u, eta)?;
                return Ok(SolveResult {
                    u,
                    iterations: it,
                    residual,
                    converged: residual <= cfg.tolerance,
                    update_history: updates,
                    ratio_history: ratios,
                    error_bound: Some(cfg.tolerance / (1.0 - gate)),
                });
            }
        }
        Err(Error::NotConverged {
            iterations: cfg.max_iterations,
            last_update: *updates.last().unwrap_or(&f64::NAN),
            history: updates,
        })
    }

    /// Damped iteration `u ← (1-ω) u + ω T(u)` for bounded `F` whose one-sided
    /// constant is below the Poincaré constant. Accepts only on residual.
    pub fn solve_relaxed(
        &self,
        f: &Nonlinearity,
        eta: &GridField,
        cfg: &SolveConfig,
    ) -> Result<SolveResult> {
        cfg.validate()?;
        if f.bound.is_none() {
            return Err(Error::param(
                "the damped solver needs a bounded nonlinearity",
            ));
        }
        let a = poincare_constant(&self.series);
        if f.one_sided >= a {
            return Err(Error::param(format!(
                "one-sided constant {} is not below the Poincaré constant {a}",
                f.one_sided
            )));
        }
        self.check_eta(eta)?;
        let w = cfg.relaxation;
        let mut u = GridField::zeros(&self.grid);
        let mut residuals: Vec<f64> = vec![];
        let mut updates = vec![];
        let mut ratios = vec![];
        for it in 0..cfg.max_iterations {
            let tu = self.map(f, &u, eta)?;
            let residual = u.sup_distance(&tu)?;
            residuals.push(residual);
            if residual <= cfg.tolerance {
                return Ok(SolveResult {
                    u,
                    iterations: it,
                    residual,
                    converged: true,
                    update_history: updates,
                    ratio_history: ratios,
                    error_bound: None,
                });
            }
            if !residual.is_finite()
                || (residuals.len() > cfg.patience
                    && residual >= residuals[residuals.len() - 1 - cfg.patience])
            {
                return Err(Error::Stalled {
                    iterations: it,
                    residual,
                    history: residuals,
                });
            }
            let next = u.zip_map(&tu, |a, b| (1.0 - w) * a + w * b)?;
            let update = next.sup_distance(&u)?;
            if let Some(&prev) = updates.last() {
                if prev > 0.0 {
                    ratios.push(update / prev);
                }
            }
            updates.push(update);
            u = next;
        }
        Err(Error::NotConverged {
            iterations: cfg.max_iterations,
            last_update: *residuals.last().unwrap_or(&f64::NAN),
            history: residuals,
        })
    }

    /// `η(x) = ∫ K(x,y) θ(dy)` for one realization of the driver.
    pub fn noise_potential(
        &self,
        family: NoiseFamily,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<GridField> {
        let driver = family.sample(self.grid.lengths(), n, rng)?;
        green_potential(&self.series, &driver.measure(), &self.grid)
    }

    /// One solution `Ψ(η_n)` of the mild equation driven by `family` at scale `n`.
    pub fn sample_solution(
        &self,
        family: NoiseFamily,
        n: usize,
        f: &Nonlinearity,
        cfg: &SolveConfig,
        rng: &mut RngStream,
    ) -> Result<SolveResult> {
        let eta = self.noise_potential(family, n, rng)?;
        self.solve_contraction(f, &eta, cfg)
    }
}

pub fn solve_contraction(
    f: &Nonlinearity,
    g: &GridField,
    eta: &GridField,
    gs: &GreenSeries,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    PoissonProblem::new(*gs, g)?.solve_contraction(f, eta, cfg)
}

pub fn solve_relaxed(
    f: &Nonlinearity,
    g: &GridField,
    eta: &GridField,
    gs: &GreenSeries,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    PoissonProblem::new(*gs, g)?.solve_relaxed(f, eta, cfg)
}

/// `‖u + K F(u) - K g - η‖_∞`.
pub fn residual(
    u: &GridField,
    f: &Nonlinearity,
    g: &GridField,
    eta: &GridField,
    gs: &GreenSeries,
) -> Result<f64> {
    u.ensure_same_grid(eta)?;
    u.ensure_same_grid(g)?;
    let kf = k_apply(gs, &f.apply(u))?;
    let kg = k_apply(gs, g)?;
    let mut worst: f64 = 0.0;
    for i in 0..u.values.len() {
        worst = worst.max((u.values[i] + kf.values[i] - kg.values[i] - eta.values[i]).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiContinuity {
    /// `‖Ψ(η) - Ψ(η')‖_∞`.
    pub lhs: f64,
    /// `(1 - Λ̂ L)^{-1} ‖η - η'‖_∞ + 2 tol`.
    pub rhs: f64,
    pub data_distance: f64,
    pub holds: bool,
}

impl PoissonProblem {
    pub fn psi_continuity(
        &self,
        f: &Nonlinearity,
        eta: &GridField,
        eta2: &GridField,
        cfg: &SolveConfig,
    ) -> Result<PsiContinuity> {
        self.gate(f.lipschitz)?;
        let a = self.solve_contraction(f, eta, cfg)?;
        let b = self.solve_contraction(f, eta2, cfg)?;
        let lhs = a.u.sup_distance(&b.u)?;
        let data_distance = eta.sup_distance(eta2)?;
        let rhs = data_distance / (1.0 - self.lambda.value * f.lipschitz) + 2.0 * cfg.tolerance;
        Ok(PsiContinuity {
            lhs,
            rhs,
            data_distance,
            holds: lhs <= rhs,
        })
    }
}

pub fn psi_continuity_check(
    f: &Nonlinearity,
    g: &GridField,
    eta: &GridField,
    eta2: &GridField,
    gs: &GreenSeries,
    cfg: &SolveConfig,
) -> Result<PsiContinuity> {
    PoissonProblem::new(*gs, g)?.psi_continuity(f, eta, eta2, cfg)
}

/// Samples `η` from the driver and returns `Ψ(η)`.
pub fn spde_solution_sample(
    family: NoiseFamily,
    n: usize,
    g: &GridField,
    f: &Nonlinearity,
    gs: &GreenSeries,
    cfg: &SolveConfig,
    rng: &mut RngStream,
) -> Result<GridField> {
    Ok(PoissonProblem::new(*gs, g)?
        .sample_solution(family, n, f, cfg, rng)?
        .u)
}

/// Configuration of a solution-law comparison across `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionStudy {
    pub family: NoiseFamily,
    pub n_list: Vec<usize>,
    pub probes: Vec<LatticePoint>,
    pub replicates: usize,
    pub significance: f64,
    /// Cells per unit length of the reference sheet.
    pub sheet_resolution: usize,
    /// Minimum fraction of probes whose KS distance shrinks from the first to the last `n`.
    pub trend_fraction: f64,
}

impl SolutionStudy {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(
                "n_list must be nonempty and strictly increasing",
            ));
        }
        if self.probes.is_empty() {
            return Err(Error::param("at least one probe is required"));
        }
        if self.replicates < crate::diagnostics::KS_MIN_REPLICATES {
            return Err(Error::param(format!(
                "at least {} replicates are required",
                crate::diagnostics::KS_MIN_REPLICATES
            )));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::param("significance must lie in (0, 1)"));
        }
        for p in &self.probes {
            grid.node_index(p)?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn probe_samples(
    problem: &PoissonProblem,
    family: NoiseFamily,
    n: usize,
    f: &Nonlinearity,
    cfg: &SolveConfig,
    probes: &[Vec<usize>],
    replicates: usize,
    block: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut stream = block.substream(r as u64);
            let sol = problem.sample_solution(family, n, f, cfg, &mut stream)?;
            Ok(probes.iter().map(|idx| sol.u.at_index(idx)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..probes.len())
        .map(|j| rows.iter().map(|row| row[j]).collect())
        .collect())
}

/// KS comparison of `u_n(x)` with the sheet-driven `u(x)` at each probe, per `n`.
pub fn solution_convergence_report(
    study: &SolutionStudy,
    problem: &PoissonProblem,
    f: &Nonlinearity,
    cfg: &SolveConfig,
    rng: &RngStream,
) -> Result<ConvergenceReport> {
    study.validate(&problem.grid)?;
    problem.gate(f.lipschitz)?;
    let idx: Vec<Vec<usize>> = study
        .probes
        .iter()
        .map(|p| problem.grid.node_index(p))
        .collect::<Result<_>>()?;
    let reference = probe_samples(
        problem,
        NoiseFamily::Sheet,
        study.sheet_resolution,
        f,
        cfg,
        &idx,
        study.replicates,
        &rng.substream(u64::MAX),
    )?;
    let mut report = ConvergenceReport::new("solution_convergence", study.family.name());
    report.meta("study", study);
    report.meta("nonlinearity", f.name());
    report.meta("solve_config", cfg);
    report.meta("lambda_hat", problem.lambda.value);
    let mut distances: Vec<Vec<f64>> = vec![];
    let mut last_rejected = 0;
    for (i, &n) in study.n_list.iter().enumerate() {
        let samples = probe_samples(
            problem,
            study.family,
            n,
            f,
            cfg,
            &idx,
            study.replicates,
            &rng.substream(i as u64),
        )?;
        let mut row = vec![];
        last_rejected = 0;
        for (j, s) in samples.iter().enumerate() {
            let ks = ks_two_sample(s, &reference[j])?;
            let label = format!("probe {j}");
            report.push(Some(n), &label, "ks_statistic", ks.statistic);
            report.push(Some(n), &label, "p_value", ks.p_value);
            row.push(ks.statistic);
            last_rejected += ks.rejects(study.significance) as usize;
        }
        report.push(Some(n), "all", "rejected_probes", last_rejected as f64);
        distances.push(row);
    }
    let probes = study.probes.len() as f64;
    let first = &distances[0];
    let last = &distances[distances.len() - 1];
    let shrinking = first.iter().zip(last).filter(|(a, b)| b <= a).count() as f64 / probes;
    let accepted = 1.0 - last_rejected as f64 / probes;
    report.push(None, "trend", "shrinking_fraction", shrinking);
    report.push(None, "final", "accepted_fraction", accepted);
    report.verdict(Verdict::new(
        "probes with KS distance shrinking from first to last n",
        shrinking,
        Comparison::AtLeast,
        study.trend_fraction,
    ));
    report.verdict(Verdict::new(
        "probes not rejected at the last n",
        accepted,
        Comparison::Above,
        0.5,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::GreenSeries;

    fn setup(n: usize) -> (GreenSeries, GridSpec) {
        (
            GreenSeries::new(2, 32).unwrap(),
            GridSpec::unit(2, n).unwrap(),
        )
    }

    fn bump(grid: &GridSpec, amp: f64) -> GridField {
        GridField::from_fn(grid, |x| {
            amp * crate::tensor::sin_pi(x[0]) * crate::tensor::sin_pi(2.0 * x[1]) * (x[0] + 1.0)
        })
    }

    #[test]
    fn presets_parse_and_check() {
        for s in ["zero", "linear:2.0", "tanh:3", "constant:-1.5", "linear:-4"] {
            let f: Nonlinearity = s.parse().unwrap();
            f.spot_check(10.0, 2001).unwrap();
        }
        assert!("cubic:1".parse::<Nonlinearity>().is_err());
        assert!("linear".parse::<Nonlinearity>().is_err());
        let lying = Nonlinearity::custom("lying", |u| 3.0 * u, 1.0, 0.0, None).unwrap();
        assert!(lying.spot_check(1.0, 11).is_err());
    }

    #[test]
    fn zero_nonlinearity_is_one_spectral_solve() {
        let (gs, grid) = setup(16);
        let g = GridField::from_fn(&grid, |x| 1.0 + x[0]);
        let eta = bump(&grid, 0.3);
        let cfg = SolveConfig::default();
        let res = solve_contraction(&Nonlinearity::zero(), &g, &eta, &gs, &cfg).unwrap();
        let want = k_apply(&gs, &g)
            .unwrap()
            .zip_map(&eta, |a, b| a + b)
            .unwrap();
        assert!(res.u.sup_distance(&want).unwrap() < 1e-15);
        assert!(res.residual < 1e-15);
        let relaxed = solve_relaxed(&Nonlinearity::zero(), &g, &eta, &gs, &cfg).unwrap();
        assert!(relaxed.u.sup_distance(&res.u).unwrap() <= 2.0 * cfg.tolerance);
    }

    #[test]
    fn constant_nonlinearity_closed_form() {
        let (gs, grid) = setup(16);
        let g = GridField::from_fn(&grid, |x| x[1]);
        let eta = bump(&grid, -0.2);
        let c = 2.5;
        let res = solve_contraction(
            &Nonlinearity::constant(c),
            &g,
            &eta,
            &gs,
            &SolveConfig::default(),
        )
        .unwrap();
        let k1 = k_apply(&gs, &GridField::from_fn(&grid, |_| 1.0)).unwrap();
        let kg = k_apply(&gs, &g).unwrap();
        for i in 0..grid.node_count() {
            let want = kg.values[i] + eta.values[i] - c * k1.values[i];
            assert!((res.u.values[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn manufactured_solution_and_ratios() {
        let (gs, grid) = setup(16);
        let f = Nonlinearity::tanh(4.0);
        let g = GridField::from_fn(&grid, |x| x[0] - x[1]);
        let ustar = bump(&grid, 1.3);
        let kf = k_apply(&gs, &f.apply(&ustar)).unwrap();
        let kg = k_apply(&gs, &g).unwrap();
        let eta = GridField::new(
            grid.clone(),
            (0..grid.node_count())
                .map(|i| ustar.values[i] + kf.values[i] - kg.values[i])
                .collect(),
        )
        .unwrap();
        let problem = PoissonProblem::new(gs, &g).unwrap();
        let cfg = SolveConfig::default();
        let res = problem.solve_contraction(&f, &eta, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.u.sup_distance(&ustar).unwrap() <= 10.0 * cfg.tolerance);
        let cap = problem.lambda.value * f.lipschitz + 0.05;
        assert!(
            res.ratio_history.iter().all(|&r| r <= cap),
            "{:?}",
            res.ratio_history
        );
        assert!(problem.residual(&f, &ustar, &eta).unwrap() < 1e-14);
        let random = bump(&grid, 0.7);
        assert!(problem.residual(&f, &random, &eta).unwrap() > 1e-3);
    }

    #[test]
    fn gate_refuses_large_lipschitz() {
        let (gs, grid) = setup(8);
        let g = GridField::zeros(&grid);
        let problem = PoissonProblem::new(gs, &g).unwrap();
        let l = 1.0 / (GATE_INFLATION * problem.lambda.value);
        assert!(problem.gate(0.99 * l).is_ok());
        assert!(matches!(
            problem.solve_contraction(&Nonlinearity::linear(1.01 * l), &g, &SolveConfig::default()),
            Err(Error::GateFailure { .. })
        ));
    }

    #[test]
    fn eta_must_vanish_on_boundary() {
        let (gs, grid) = setup(8);
        let g = GridField::zeros(&grid);
        let eta = GridField::from_fn(&grid, |_| 1.0);
        assert!(solve_contraction(
            &Nonlinearity::zero(),
            &g,
            &eta,
            &gs,
            &SolveConfig::default()
        )
        .is_err());
    }

    #[test]
    fn relaxed_solver_paths() {
        let (gs, grid) = setup(16);
        let g = GridField::from_fn(&grid, |_| 5.0);
        let eta = bump(&grid, 0.5);
        let cfg = SolveConfig::default();
        let res = solve_relaxed(&Nonlinearity::tanh(2.0), &g, &eta, &gs, &cfg).unwrap();
        assert!(res.converged && res.residual <= cfg.tolerance);
        // strongly decreasing linear F violates the one-sided condition
        let bad = Nonlinearity::custom(
            "steep",
            |u| -30.0 * u.clamp(-1.0, 1.0),
            30.0,
            30.0,
            Some(30.0),
        )
        .unwrap();
        assert!(solve_relaxed(&bad, &g, &eta, &gs, &cfg).is_err());
        assert!(solve_relaxed(&Nonlinearity::linear(1.0), &g, &eta, &gs, &cfg).is_err());
        // monotone but with a huge Lipschitz constant: the damped iteration oscillates
        let stiff = Nonlinearity::custom("stiff", |u| 1e4 * u.tanh(), 1e4, 0.0, Some(1e4)).unwrap();
        assert!(matches!(
            solve_relaxed(&stiff, &g, &eta, &gs, &cfg),
            Err(Error::Stalled { .. })
        ));
    }

    #[test]
    fn psi_affine_case() {
        let (gs, grid) = setup(16);
        let g = GridField::zeros(&grid);
        let problem = PoissonProblem::new(gs, &g).unwrap();
        let cfg = SolveConfig::default();
        let (e1, e2) = (bump(&grid, 0.4), bump(&grid, -0.1));
        let r = problem
            .psi_continuity(&Nonlinearity::zero(), &e1, &e2, &cfg)
            .unwrap();
        assert!((r.lhs - r.data_distance).abs() < 1e-15 && r.holds);
        let same = problem
            .psi_continuity(&Nonlinearity::tanh(3.0), &e1, &e1, &cfg)
            .unwrap();
        assert!(same.lhs <= 2.0 * cfg.tolerance);
        let e3 = e1.zip_map(&e2, |a, b| b + 2.0 * (b - a)).unwrap();
        let a = problem
            .solve_contraction(&Nonlinearity::zero(), &e2, &cfg)
            .unwrap()
            .u;
        let b = problem
            .solve_contraction(&Nonlinearity::zero(), &e1, &cfg)
            .unwrap()
            .u;
        let c = problem
            .solve_contraction(&Nonlinearity::zero(), &e3, &cfg)
            .unwrap()
            .u;
        for i in 0..grid.node_count() {
            assert!(
                ((c.values[i] - a.values[i]) + 2.0 * (b.values[i] - a.values[i])).abs() < 1e-14
            );
        }
    }

    #[test]
    fn spde_sample_is_deterministic_and_vanishes_on_boundary() {
        let (gs, grid) = setup(16);
        let g = GridField::from_fn(&grid, |_| 1.0);
        let f = Nonlinearity::tanh(1.0);
        let cfg = SolveConfig::default();
        for family in [
            NoiseFamily::Sheet,
            NoiseFamily::KacStroock,
            "donsker".parse().unwrap(),
        ] {
            let a = spde_solution_sample(family, 8, &g, &f, &gs, &cfg, &mut RngStream::new(4, 2))
                .unwrap();
            let b = spde_solution_sample(family, 8, &g, &f, &gs, &cfg, &mut RngStream::new(4, 2))
                .unwrap();
            assert_eq!(a, b);
            assert!(a.boundary_sup() <= cfg.tolerance);
        }
    }
}
