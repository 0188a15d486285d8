//! Random-field integrals `X_n(x) = int_D f(x,y) theta_n(y) dy` and their
//! Wiener-integral limits `X(x) = int_D f(x,y) W(dy)`.
//!
//! Every driver is a [`PiecewiseMeasure`], so all three cases share one
//! integration routine:
//!
//! 1. an integrand may integrate a measure exactly on its own
//!    ([`Integrand::integrate_measure`]; the Green kernel does this spectrally);
//! 2. against piecewise-constant densities (Donsker, sheet) an integrand with
//!    a box-average oracle is integrated exactly;
//! 3. otherwise the partition is merged with the `r`-refined evaluation grid
//!    and the midpoint rule is applied to `f` while the kernel mass of each
//!    box is exact.

use std::borrow::Cow;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, LatticePoint};
use crate::kernels::{
    DonskerField, InnovationLaw, KernelField, PoissonField, DEFAULT_MEMORY_BUDGET,
};
use crate::measure::PiecewiseMeasure;
use crate::rng::RngStream;
use crate::sheet::SheetSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    Smooth,
    SingularDiagonal,
}

/// Deterministic integrand `f(x, y)`.
pub trait Integrand: Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth
    }

    /// Exact average of `f(x, .)` over the box `[lo, hi]`, when known.
    fn box_average(&self, _x: &[f64], _lo: &[f64], _hi: &[f64]) -> Option<f64> {
        None
    }

    /// Exact `int f(x, y) mu(dy)` for every `x`, when the integrand can do it.
    fn integrate_measure(&self, _xs: &[LatticePoint], _mu: &PiecewiseMeasure) -> Option<Vec<f64>> {
        None
    }

    /// Exact `int f(x, y)^2 dy`, when known.
    fn section_norm_sq(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Quadrature controls: `refine` sub-cells per axis per grid cell, and the
/// radius of the ball around `x` excluded for singular integrands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub refine: usize,
    pub exclusion: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            refine: 1,
            exclusion: 0.0,
        }
    }
}

impl QuadSpec {
    pub fn new(refine: usize, exclusion: f64) -> Result<Self> {
        let q = QuadSpec { refine, exclusion };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.refine == 0 {
            return Err(Error::param("quadrature refinement must be >= 1"));
        }
        if !(self.exclusion >= 0.0) {
            return Err(Error::param("exclusion radius must be >= 0"));
        }
        Ok(())
    }
}

/// `I_{[0,x]}(y)`: integrating it against `theta_n` gives `zeta_n(x)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoxIndicator;

fn overlap_fraction(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .zip(x)
        .map(|((&a, &b), &c)| {
            if b <= a {
                0.0
            } else {
                ((c.min(b) - a) / (b - a)).clamp(0.0, 1.0)
            }
        })
        .product()
}

impl Integrand for BoxIndicator {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if y.iter().zip(x).all(|(a, b)| a <= b) {
            1.0
        } else {
            0.0
        }
    }

    fn box_average(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
        Some(overlap_fraction(x, lo, hi))
    }

    fn integrate_measure(&self, xs: &[LatticePoint], mu: &PiecewiseMeasure) -> Option<Vec<f64>> {
        Some(xs.iter().map(|x| mu.primitive(x)).collect())
    }

    fn section_norm_sq(&self, x: &[f64]) -> Option<f64> {
        Some(x.iter().product())
    }
}

type EvalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type AvgFn = dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync;
type NormFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Integrand built from closures.
#[derive(Clone)]
pub struct FnIntegrand {
    eval: Arc<EvalFn>,
    average: Option<Arc<AvgFn>>,
    norm_sq: Option<Arc<NormFn>>,
    smoothness: Smoothness,
}

impl FnIntegrand {
    pub fn new(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnIntegrand {
            eval: Arc::new(f),
            average: None,
            norm_sq: None,
            smoothness: Smoothness::Smooth,
        }
    }

    /// An integrand that depends on `y` only.
    pub fn of_y(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnIntegrand::new(move |_x, y| g(y))
    }

    pub fn with_average(
        mut self,
        avg: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.average = Some(Arc::new(avg));
        self
    }

    pub fn with_norm_sq(mut self, norm: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.norm_sq = Some(Arc::new(norm));
        self
    }

    pub fn singular(mut self) -> Self {
        self.smoothness = Smoothness::SingularDiagonal;
        self
    }
}

impl Integrand for FnIntegrand {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }

    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    fn box_average(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
        self.average.as_ref().map(|a| a(x, lo, hi))
    }

    fn section_norm_sq(&self, x: &[f64]) -> Option<f64> {
        self.norm_sq.as_ref().map(|n| n(x))
    }
}

/// `I_{[0,x]}(y) f(x, y)`.
pub struct Restricted<'a, F: Integrand + ?Sized>(pub &'a F);

impl<F: Integrand + ?Sized> Integrand for Restricted<'_, F> {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if y.iter().zip(x).all(|(a, b)| a <= b) {
            self.0.eval(x, y)
        } else {
            0.0
        }
    }

    fn smoothness(&self) -> Smoothness {
        self.0.smoothness()
    }

    fn box_average(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
        let frac = overlap_fraction(x, lo, hi);
        if frac == 0.0 {
            return Some(0.0);
        }
        let clipped: Vec<f64> = hi.iter().zip(x).map(|(b, c)| b.min(*c)).collect();
        self.0.box_average(x, lo, &clipped).map(|avg| avg * frac)
    }
}

/// Kernel family tag for diagnostics and solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Donsker(InnovationLaw),
    KacStroock,
    /// The limiting Brownian sheet, sampled on `ceil(n T_i)` cells per axis.
    Sheet,
}

impl NoiseFamily {
    pub fn name(&self) -> String {
        match self {
            NoiseFamily::Donsker(law) => format!("donsker:{}", law.name()),
            NoiseFamily::KacStroock => "kac-stroock".into(),
            NoiseFamily::Sheet => "sheet".into(),
        }
    }

    pub fn sample(&self, lengths: &[f64], n: usize, rng: &mut RngStream) -> Result<Driver> {
        self.sample_with_budget(lengths, n, rng, DEFAULT_MEMORY_BUDGET)
    }

    pub fn sample_with_budget(
        &self,
        lengths: &[f64],
        n: usize,
        rng: &mut RngStream,
        budget: usize,
    ) -> Result<Driver> {
        Ok(match self {
            NoiseFamily::Donsker(law) => Driver::Kernel(KernelField::Donsker(
                DonskerField::sample_with_budget(lengths, n, *law, rng, budget)?,
            )),
            NoiseFamily::KacStroock => Driver::Kernel(KernelField::KacStroock(
                PoissonField::sample_with_budget(lengths, n as f64, rng, budget)?,
            )),
            NoiseFamily::Sheet => {
                if n == 0 {
                    return Err(Error::param("sheet resolution must be >= 1"));
                }
                let cells: Vec<usize> = lengths
                    .iter()
                    .map(|t| ((n as f64 * t) - 1e-9).ceil().max(1.0) as usize)
                    .collect();
                let required: usize = cells.iter().product();
                if required > budget {
                    return Err(Error::BudgetExceeded { required, budget });
                }
                let grid = GridSpec::new(lengths.to_vec(), cells)?;
                Driver::Sheet(SheetSample::sample(&grid, rng))
            }
        })
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        match head {
            "donsker" => Ok(NoiseFamily::Donsker(
                tail.map(str::parse)
                    .transpose()?
                    .unwrap_or(InnovationLaw::Rademacher),
            )),
            "kac-stroock" | "kacstroock" | "poisson" => Ok(NoiseFamily::KacStroock),
            "sheet" | "brownian-sheet" => Ok(NoiseFamily::Sheet),
            other => Err(Error::param(format!("unknown noise family '{other}'"))),
        }
    }
}

/// One realization of any noise driver.
#[derive(Clone, Debug)]
pub enum Driver {
    Kernel(KernelField),
    Sheet(SheetSample),
}

impl Driver {
    pub fn measure(&self) -> Cow<'_, PiecewiseMeasure> {
        match self {
            Driver::Kernel(k) => Cow::Borrowed(k.measure()),
            Driver::Sheet(s) => Cow::Owned(s.measure()),
        }
    }
}

/// `zeta_n(x) = int_{[0,x]} theta_n(y) dy`.
pub fn zeta(kernel: &KernelField, x: &[f64], quad: &QuadSpec) -> Result<f64> {
    quad.validate()?;
    kernel.zeta(x)
}

/// `int_D f(x,y) mu(dy)` for every `x` in `xs` (grid nodes of `grid`).
pub fn integrate_measure(
    f: &(impl Integrand + ?Sized),
    mu: &PiecewiseMeasure,
    grid: &GridSpec,
    xs: &[LatticePoint],
    quad: &QuadSpec,
) -> Result<Vec<f64>> {
    integrate_measure_with_budget(f, mu, grid, xs, quad, DEFAULT_MEMORY_BUDGET)
}

pub fn integrate_measure_with_budget(
    f: &(impl Integrand + ?Sized),
    mu: &PiecewiseMeasure,
    grid: &GridSpec,
    xs: &[LatticePoint],
    quad: &QuadSpec,
    budget: usize,
) -> Result<Vec<f64>> {
    quad.validate()?;
    if mu.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: mu.dim(),
        });
    }
    for x in xs {
        grid.node_index(x)?;
    }
    if let Some(values) = f.integrate_measure(xs, mu) {
        return Ok(values);
    }

    if mu.is_piecewise_constant() && !xs.is_empty() {
        let (lo, hi) = mu.box_bounds(&vec![0; mu.dim()]);
        if f.box_average(&xs[0], &lo, &hi).is_some() {
            let points = mu.mass_points();
            let shape = mu.shape();
            let bounds: Vec<(Vec<f64>, Vec<f64>)> = crate::tensor::MultiIndex::new(&shape)
                .map(|idx| mu.box_bounds(&idx))
                .collect();
            return Ok(xs
                .par_iter()
                .map(|x| {
                    bounds
                        .iter()
                        .zip(&points.masses)
                        .filter(|(_, &m)| m != 0.0)
                        .map(|((lo, hi), &m)| m * f.box_average(x, lo, hi).unwrap_or(0.0))
                        .sum()
                })
                .collect());
        }
    }

    if f.smoothness() == Smoothness::SingularDiagonal && quad.exclusion <= 0.0 {
        return Err(Error::param(
            "singular integrand needs a positive exclusion radius",
        ));
    }
    let fine = grid.refined(quad.refine)?;
    let extra: Vec<Vec<f64>> = (0..fine.dim()).map(|a| fine.axis_nodes(a)).collect();
    let estimate: usize = mu
        .breaks()
        .iter()
        .zip(&extra)
        .map(|(b, e)| b.len() + e.len())
        .try_fold(1usize, |acc, c| acc.checked_mul(c))
        .unwrap_or(usize::MAX);
    if estimate > budget {
        return Err(Error::BudgetExceeded {
            required: estimate,
            budget,
        });
    }
    let refined = mu.refined_with(&extra);
    let points = refined.mass_points();
    let rho2 = quad.exclusion * quad.exclusion;
    let singular = f.smoothness() == Smoothness::SingularDiagonal;
    Ok(xs
        .par_iter()
        .map(|x| {
            let mut total = 0.0;
            for i in 0..points.len() {
                let m = points.masses[i];
                if m == 0.0 {
                    continue;
                }
                let y = points.mid(i);
                if singular {
                    let dist2: f64 = y.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    if dist2 < rho2 {
                        continue;
                    }
                }
                total += m * f.eval(x, y);
            }
            total
        })
        .collect())
}

/// `X_n(x) = int_D f(x,y) theta_n(y) dy` at the given grid nodes.
pub fn integrate_against_kernel(
    f: &(impl Integrand + ?Sized),
    kernel: &KernelField,
    grid: &GridSpec,
    xs: &[LatticePoint],
    quad: &QuadSpec,
) -> Result<Vec<f64>> {
    integrate_measure(f, kernel.measure(), grid, xs, quad)
}

/// `X_n` on every node of `grid`.
pub fn kernel_field(
    f: &(impl Integrand + ?Sized),
    kernel: &KernelField,
    grid: &GridSpec,
    quad: &QuadSpec,
) -> Result<GridField> {
    let xs: Vec<LatticePoint> = grid.nodes().collect();
    let values = integrate_against_kernel(f, kernel, grid, &xs, quad)?;
    GridField::new(grid.clone(), values)
}

/// `int_{[0,x]} f(x,y) theta_n(y) dy`.
pub fn integrate_restricted(
    f: &(impl Integrand + ?Sized),
    kernel: &KernelField,
    grid: &GridSpec,
    x: &LatticePoint,
    quad: &QuadSpec,
) -> Result<f64> {
    let restricted = Restricted(f);
    Ok(integrate_against_kernel(&restricted, kernel, grid, std::slice::from_ref(x), quad)?[0])
}

/// `X(x) = int_D f(x,y) W(dy)`, cell by cell (cell averages when the
/// integrand provides them, otherwise cell centers for `refine = 1`).
pub fn limit_field(
    f: &(impl Integrand + ?Sized),
    sheet: &SheetSample,
    xs: &[LatticePoint],
    quad: &QuadSpec,
) -> Result<Vec<f64>> {
    integrate_measure(f, &sheet.measure(), &sheet.grid, xs, quad)
}

/// Integral against any driver.
pub fn integrate_driver(
    f: &(impl Integrand + ?Sized),
    driver: &Driver,
    grid: &GridSpec,
    xs: &[LatticePoint],
    quad: &QuadSpec,
) -> Result<Vec<f64>> {
    integrate_measure(f, &driver.measure(), grid, xs, quad)
}

/// `int f(x,y)^2 dy`, exactly when the integrand knows it, otherwise by the
/// midpoint rule on `grid` refined by `quad.refine`.
pub fn section_norm_sq(
    f: &(impl Integrand + ?Sized),
    grid: &GridSpec,
    x: &[f64],
    quad: &QuadSpec,
) -> Result<f64> {
    if let Some(v) = f.section_norm_sq(x) {
        return Ok(v);
    }
    section_norm_pow(f, grid, x, 2.0, quad)
}

/// `int |f(x,y)|^p dy` by the midpoint rule (ball of radius `exclusion` removed).
pub fn section_norm_pow(
    f: &(impl Integrand + ?Sized),
    grid: &GridSpec,
    x: &[f64],
    p: f64,
    quad: &QuadSpec,
) -> Result<f64> {
    quad.validate()?;
    let fine = grid.refined(quad.refine)?;
    let vol = fine.cell_volume();
    let rho2 = quad.exclusion * quad.exclusion;
    let cells = fine.cells().to_vec();
    let count = fine.cell_count();
    let terms: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|flat| {
            let y = fine.cell_center(&crate::tensor::unflatten(&cells, flat));
            if rho2 > 0.0 {
                let dist2: f64 = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                if dist2 < rho2 {
                    return 0.0;
                }
            }
            f.eval(x, &y).abs().powf(p)
        })
        .collect();
    let total: f64 = terms.iter().sum();
    Ok(total * vol)
}
