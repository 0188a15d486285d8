//! Dirichlet Green function of `-Δ` on the unit cube `(0,1)^d`, `d ∈ {2, 3}`.
//!
//! `K(x,y) = Σ_k λ_k^{-1} e_k(x) e_k(y)` with `λ_k = π² |k|²` and
//! `e_k(x) = ∏ √2 sin(k_i π x_i)`, truncated at `kmax` modes per axis.
//! Walk-on-spheres gives an independent Monte Carlo estimate through
//! `K(x,y) = G(x,y) - E^x[G(B_τ, y)]`.

use std::f64::consts::{PI, SQRT_2};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand_distr::{UnitCircle, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, LatticePoint};
use crate::integrals::{Integrand, QuadSpec, Smoothness};
use crate::measure::PiecewiseMeasure;
use crate::rng::RngStream;
use crate::stats::{linear_fit, summarize};
use crate::tensor::{apply_separable, sin_pi, MultiIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenSeries {
    pub d: usize,
    pub kmax: usize,
}

impl GreenSeries {
    pub fn new(d: usize, kmax: usize) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::param(format!(
                "Green series supports d = 2 or 3, got {d}"
            )));
        }
        if kmax == 0 {
            return Err(Error::param("kmax must be >= 1"));
        }
        Ok(GreenSeries { d, kmax })
    }

    /// Default truncation: 64 modes per axis in d=2, 32 in d=3.
    pub fn default_for(d: usize) -> Result<Self> {
        GreenSeries::new(d, if d == 2 { 64 } else { 32 })
    }

    pub fn eigenvalue(&self, k: &[usize]) -> f64 {
        PI * PI * k.iter().map(|&v| (v * v) as f64).sum::<f64>()
    }

    pub fn eigenfunction(&self, k: &[usize], x: &[f64]) -> f64 {
        k.iter()
            .zip(x)
            .map(|(&ki, &xi)| SQRT_2 * sin_pi(ki as f64 * xi))
            .product()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.d as f64 * PI * PI
    }

    fn shape(&self) -> Vec<usize> {
        vec![self.kmax; self.d]
    }

    /// `λ_k^{-1}` over the mode tensor (0-based index `k - 1`).
    fn inverse_eigenvalues(&self, kmax: usize) -> Vec<f64> {
        let mut sums = vec![0usize];
        for _ in 0..self.d {
            sums = sums
                .iter()
                .flat_map(|&s| (1..=kmax).map(move |k| s + k * k))
                .collect();
        }
        sums.into_iter()
            .map(|s| 1.0 / (PI * PI * s as f64))
            .collect()
    }

    fn axis_sines(kmax: usize, t: f64) -> Vec<f64> {
        (1..=kmax).map(|k| SQRT_2 * sin_pi(k as f64 * t)).collect()
    }

    fn check_closed(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        Ok(())
    }

    fn eval_truncated(&self, kmax: usize, x: &[f64], y: &[f64]) -> f64 {
        let prods: Vec<Vec<f64>> = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                Self::axis_sines(kmax, a)
                    .into_iter()
                    .zip(Self::axis_sines(kmax, b))
                    .map(|(p, q)| p * q)
                    .collect()
            })
            .collect();
        separable_sum(&self.inverse_eigenvalues(kmax), kmax, &prods)
    }

    /// `|K_{2 kmax}(x,y) - K_{kmax}(x,y)|`, used as the truncation error estimate.
    pub fn tail_estimate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_closed(x)?;
        self.check_closed(y)?;
        Ok((self.eval_truncated(2 * self.kmax, x, y) - self.eval_truncated(self.kmax, x, y)).abs())
    }
}

/// `Σ_k w_k ∏_a v_a[k_a]` over the `kmax^d` mode tensor.
fn separable_sum(weights: &[f64], kmax: usize, vecs: &[Vec<f64>]) -> f64 {
    match vecs.len() {
        2 => {
            let mut total = 0.0;
            for i in 0..kmax {
                let row = &weights[i * kmax..(i + 1) * kmax];
                let inner: f64 = row.iter().zip(&vecs[1]).map(|(w, v)| w * v).sum();
                total += vecs[0][i] * inner;
            }
            total
        }
        _ => MultiIndex::new(&vec![kmax; vecs.len()])
            .zip(weights)
            .map(|(idx, w)| {
                w * idx
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| vecs[a][i])
                    .product::<f64>()
            })
            .sum(),
    }
}

/// Truncated series `K(x, y)`.
pub fn green_eval(gs: &GreenSeries, x: &[f64], y: &[f64]) -> Result<f64> {
    gs.check_closed(x)?;
    gs.check_closed(y)?;
    Ok(gs.eval_truncated(gs.kmax, x, y))
}

/// `‖K(x,·)‖₂ = (Σ_k λ_k^{-2} e_k(x)²)^{1/2}` by Parseval.
pub fn green_l2_norm(gs: &GreenSeries, x: &[f64]) -> Result<f64> {
    gs.check_closed(x)?;
    let inv = gs.inverse_eigenvalues(gs.kmax);
    let inv2: Vec<f64> = inv.iter().map(|v| v * v).collect();
    let sq: Vec<Vec<f64>> = x
        .iter()
        .map(|&t| {
            GreenSeries::axis_sines(gs.kmax, t)
                .into_iter()
                .map(|s| s * s)
                .collect()
        })
        .collect();
    Ok(separable_sum(&inv2, gs.kmax, &sq).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSup {
    /// Grid maximum of `‖K(x,·)‖₂`, a lower bound of the true supremum.
    pub value: f64,
    pub argmax: Vec<f64>,
    /// Change of the maximum when the grid is refined by a factor of 2.
    pub refinement_delta: f64,
}

fn grid_max_norm(gs: &GreenSeries, grid: &GridSpec) -> Result<(f64, Vec<f64>)> {
    let nodes: Vec<LatticePoint> = grid.nodes().collect();
    let norms: Vec<f64> = nodes
        .par_iter()
        .map(|x| green_l2_norm(gs, x))
        .collect::<Result<_>>()?;
    let (best, value) =
        norms.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    Ok((value, nodes[best].0.clone()))
}

/// `Λ̂ = max_{nodes} ‖K(x,·)‖₂`.
pub fn lambda_sup(gs: &GreenSeries, grid: &GridSpec) -> Result<LambdaSup> {
    if !grid.is_unit_cube() || grid.dim() != gs.d {
        return Err(Error::InvalidGrid(
            "Λ needs the unit cube in the series dimension".into(),
        ));
    }
    let (value, argmax) = grid_max_norm(gs, grid)?;
    let (fine, _) = grid_max_norm(gs, &grid.refined(2)?)?;
    Ok(LambdaSup {
        value,
        argmax,
        refinement_delta: fine - value,
    })
}

/// Poincaré constant `a = λ_min = d π²`.
pub fn poincare_constant(gs: &GreenSeries) -> f64 {
    gs.min_eigenvalue()
}

fn check_sine_grid(gs: &GreenSeries, grid: &GridSpec) -> Result<usize> {
    if grid.dim() != gs.d {
        return Err(Error::DimensionMismatch {
            expected: gs.d,
            got: grid.dim(),
        });
    }
    if !grid.is_unit_cube() || grid.cells().iter().any(|&c| c != grid.cells()[0]) {
        return Err(Error::InvalidGrid(
            "sine expansion needs the unit cube with equal cells per axis".into(),
        ));
    }
    let n = grid.cells()[0];
    if n < 2 {
        return Err(Error::InvalidGrid(
            "sine expansion needs at least 2 cells per axis".into(),
        ));
    }
    Ok(gs.kmax.min(n - 1))
}

/// `modes x (N+1)` matrix `√2 sin(kπ x_j)` for the nodes `x_j = j/N`.
fn node_sine_matrix(modes: usize, n: usize) -> Vec<f64> {
    let mut m = Vec::with_capacity(modes * (n + 1));
    for k in 1..=modes {
        for j in 0..=n {
            m.push(SQRT_2 * sin_pi((k * j) as f64 / n as f64));
        }
    }
    m
}

fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

/// Discrete sine coefficients `φ̂_k = h^d Σ_j φ(x_j) e_k(x_j)` for
/// `k ∈ {1..K}^d`, `K = min(kmax, N-1)`. Returns the coefficients and `K`.
pub fn sine_coefficients(gs: &GreenSeries, phi: &GridField) -> Result<(Vec<f64>, usize)> {
    let modes = check_sine_grid(gs, &phi.grid)?;
    let n = phi.grid.cells()[0];
    let h = 1.0 / n as f64;
    let s: Vec<f64> = node_sine_matrix(modes, n)
        .into_iter()
        .map(|v| v * h)
        .collect();
    let mats: Vec<&[f64]> = vec![&s; gs.d];
    let (coef, _) = apply_separable(
        &phi.values,
        &phi.grid.node_shape(),
        &mats,
        &vec![modes; gs.d],
    );
    Ok((coef, modes))
}

/// Field `Σ_k c_k e_k` at the nodes of `grid`, for a `K^d` coefficient tensor.
pub fn sine_synthesis(
    gs: &GreenSeries,
    grid: &GridSpec,
    coef: &[f64],
    modes: usize,
) -> Result<GridField> {
    check_sine_grid(gs, grid)?;
    let n = grid.cells()[0];
    let st = transpose(&node_sine_matrix(modes, n), modes, n + 1);
    let mats: Vec<&[f64]> = vec![&st; gs.d];
    let (values, _) = apply_separable(coef, &vec![modes; gs.d], &mats, &vec![n + 1; gs.d]);
    GridField::new(grid.clone(), values)
}

/// Spectral solve `u = ∫ K φ`: `Σ_k λ_k^{-1} φ̂_k e_k`.
pub fn k_apply(gs: &GreenSeries, phi: &GridField) -> Result<GridField> {
    let (mut coef, modes) = sine_coefficients(gs, phi)?;
    for (c, inv) in coef.iter_mut().zip(gs.inverse_eigenvalues(modes)) {
        *c *= inv;
    }
    sine_synthesis(gs, &phi.grid, &coef, modes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareCheck {
    pub a: f64,
    /// `⟨Kφ, φ⟩ = Σ λ_k^{-1} φ̂_k²`.
    pub lhs: f64,
    /// `a ‖Kφ‖₂² = a Σ λ_k^{-2} φ̂_k²`.
    pub rhs: f64,
    /// Every term satisfies `λ_k^{-1} φ̂_k² ≥ a λ_k^{-2} φ̂_k²` up to rounding.
    pub termwise: bool,
    /// Largest relative termwise gap `(λ_k^{-1} - a λ_k^{-2}) / λ_k^{-1}` among nonzero terms.
    pub max_gap: f64,
}

/// Spectral check of `⟨Kφ, φ⟩ ≥ a ‖Kφ‖₂²`.
pub fn poincare_check(gs: &GreenSeries, phi: &GridField) -> Result<PoincareCheck> {
    let (coef, modes) = sine_coefficients(gs, phi)?;
    let a = poincare_constant(gs);
    let inv = gs.inverse_eigenvalues(modes);
    let (mut lhs, mut rhs, mut termwise, mut max_gap) = (0.0, 0.0, true, 0.0_f64);
    for (c, li) in coef.iter().zip(inv) {
        let l_term = li * c * c;
        let r_term = a * li * li * c * c;
        lhs += l_term;
        rhs += r_term;
        if l_term < r_term * (1.0 - 4.0 * f64::EPSILON) {
            termwise = false;
        }
        if l_term > 0.0 {
            max_gap = max_gap.max((l_term - r_term) / l_term);
        }
    }
    Ok(PoincareCheck {
        a,
        lhs,
        rhs,
        termwise,
        max_gap,
    })
}

/// The Green kernel as an integrand `y ↦ K(x, y)`.
///
/// Integrals against piecewise measures on the unit cube are computed
/// exactly for the truncated series through the sine coefficients of the
/// measure, so the exclusion radius only matters for the generic quadrature.
#[derive(Clone, Copy, Debug)]
pub struct GreenIntegrand {
    pub series: GreenSeries,
}

impl GreenIntegrand {
    pub fn new(series: GreenSeries) -> Self {
        GreenIntegrand { series }
    }
}

const GL_DEGREE: usize = 8;

/// `∫_a^b y^p √2 sin(kπy) dy` for `k = 1..=kmax`.
fn axis_sine_moments(gl: &GaussLegendre, kmax: usize, a: f64, b: f64, p: f64) -> Vec<f64> {
    if b <= a {
        return vec![0.0; kmax];
    }
    if p == 0.0 {
        return (1..=kmax)
            .map(|k| {
                let kp = k as f64 * PI;
                SQRT_2 * ((kp * a).cos() - (kp * b).cos()) / kp
            })
            .collect();
    }
    // y = t², so y^p dy = 2 t^{2p+1} dt is smooth at the origin
    let (ta, tb) = (a.sqrt(), b.sqrt());
    let pieces = ((b - a) * kmax as f64 * 4.0).ceil().max(1.0) as usize;
    let step = (tb - ta) / pieces as f64;
    (1..=kmax)
        .map(|k| {
            let kp = k as f64 * PI;
            (0..pieces)
                .map(|i| {
                    let lo = ta + i as f64 * step;
                    gl.integrate(lo, lo + step, |t| {
                        2.0 * t.powf(2.0 * p + 1.0) * SQRT_2 * (kp * t * t).sin()
                    })
                })
                .sum()
        })
        .collect()
}

/// Sine coefficients `∫ e_k dμ` of a piecewise measure on the unit cube.
pub fn measure_sine_coefficients(kmax: usize, mu: &PiecewiseMeasure) -> Vec<f64> {
    let gl = GaussLegendre::new(NonZeroUsize::new(GL_DEGREE).unwrap());
    let p = mu.exponent();
    let mats: Vec<Vec<f64>> = mu
        .breaks()
        .iter()
        .map(|br| {
            let cols = br.len() - 1;
            let per_interval: Vec<Vec<f64>> = br
                .windows(2)
                .map(|w| axis_sine_moments(&gl, kmax, w[0], w[1], p))
                .collect();
            let mut m = vec![0.0; kmax * cols];
            for (j, col) in per_interval.iter().enumerate() {
                for k in 0..kmax {
                    m[k * cols + j] = col[k];
                }
            }
            m
        })
        .collect();
    let refs: Vec<&[f64]> = mats.iter().map(Vec::as_slice).collect();
    apply_separable(mu.coefficients(), &mu.shape(), &refs, &vec![kmax; mu.dim()]).0
}

impl Integrand for GreenIntegrand {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.series.eval_truncated(self.series.kmax, x, y)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::SingularDiagonal
    }

    fn integrate_measure(&self, xs: &[LatticePoint], mu: &PiecewiseMeasure) -> Option<Vec<f64>> {
        let gs = &self.series;
        let in_cube = mu.dim() == gs.d
            && mu
                .breaks()
                .iter()
                .all(|b| b[0] >= 0.0 && *b.last().unwrap() <= 1.0);
        if !in_cube {
            return None;
        }
        let mut coef = measure_sine_coefficients(gs.kmax, mu);
        for (c, inv) in coef.iter_mut().zip(gs.inverse_eigenvalues(gs.kmax)) {
            *c *= inv;
        }
        Some(
            xs.par_iter()
                .map(|x| {
                    let vecs: Vec<Vec<f64>> = x
                        .iter()
                        .map(|&t| GreenSeries::axis_sines(gs.kmax, t))
                        .collect();
                    separable_sum(&coef, gs.kmax, &vecs)
                })
                .collect(),
        )
    }

    fn section_norm_sq(&self, x: &[f64]) -> Option<f64> {
        green_l2_norm(&self.series, x).ok().map(|v| v * v)
    }
}

/// `η(x) = ∫ K(x,y) μ(dy)` at every node of a unit-cube grid.
pub fn green_potential(
    gs: &GreenSeries,
    mu: &PiecewiseMeasure,
    grid: &GridSpec,
) -> Result<GridField> {
    check_sine_grid(gs, grid)?;
    if mu.dim() != gs.d {
        return Err(Error::DimensionMismatch {
            expected: gs.d,
            got: mu.dim(),
        });
    }
    if mu
        .breaks()
        .iter()
        .any(|b| b[0] < 0.0 || *b.last().unwrap() > 1.0)
    {
        return Err(Error::param("measure must live on the unit cube"));
    }
    let mut coef = measure_sine_coefficients(gs.kmax, mu);
    for (c, inv) in coef.iter_mut().zip(gs.inverse_eigenvalues(gs.kmax)) {
        *c *= inv;
    }
    // synthesis uses all kmax modes here, not just the ones the grid resolves
    let n = grid.cells()[0];
    let st = transpose(&node_sine_matrix(gs.kmax, n), gs.kmax, n + 1);
    let mats: Vec<&[f64]> = vec![&st; gs.d];
    let (values, _) = apply_separable(&coef, &gs.shape(), &mats, &vec![n + 1; gs.d]);
    GridField::new(grid.clone(), values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WosConfig {
    pub walks: usize,
    /// Boundary-capture tolerance.
    pub delta: f64,
    pub max_steps: usize,
}

impl Default for WosConfig {
    fn default() -> Self {
        WosConfig {
            walks: 100_000,
            delta: 1e-4,
            max_steps: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub walks: usize,
    /// Walks stopped by `max_steps` rather than by capture.
    pub truncated_walks: usize,
}

/// Free-space fundamental solution of `-Δ`.
pub fn free_space_green(d: usize, x: &[f64], y: &[f64]) -> f64 {
    let r = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if d == 2 {
        -r.ln() / (2.0 * PI)
    } else {
        1.0 / (4.0 * PI * r)
    }
}

const WOS_CHUNK: usize = 1024;

fn walk_exit(x: &[f64], cfg: &WosConfig, rng: &mut RngStream) -> (Vec<f64>, bool) {
    let d = x.len();
    let mut p = x.to_vec();
    for _ in 0..cfg.max_steps {
        let (axis, dist) = nearest_face(&p);
        if dist < cfg.delta {
            project(&mut p, axis);
            return (p, false);
        }
        if d == 2 {
            let u: [f64; 2] = rng.sample(UnitCircle);
            p[0] += dist * u[0];
            p[1] += dist * u[1];
        } else {
            let u: [f64; 3] = rng.sample(UnitSphere);
            for a in 0..3 {
                p[a] += dist * u[a];
            }
        }
    }
    let (axis, _) = nearest_face(&p);
    project(&mut p, axis);
    (p, true)
}

fn nearest_face(p: &[f64]) -> (usize, f64) {
    p.iter()
        .enumerate()
        .map(|(a, &v)| (a, v.min(1.0 - v)))
        .fold(
            (0, f64::INFINITY),
            |acc, c| if c.1 < acc.1 { c } else { acc },
        )
}

fn project(p: &mut [f64], axis: usize) {
    p[axis] = if p[axis] < 0.5 { 0.0 } else { 1.0 };
}

/// Walk-on-spheres estimate of `K(x,y) = G(x,y) - E^x[G(B_τ, y)]`.
pub fn green_mc_estimate(
    x: &[f64],
    y: &[f64],
    cfg: &WosConfig,
    rng: &RngStream,
) -> Result<McEstimate> {
    let d = x.len();
    if !(2..=3).contains(&d) || y.len() != d {
        return Err(Error::param(
            "walk-on-spheres needs two points in d = 2 or 3",
        ));
    }
    for p in [x, y] {
        if p.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            return Err(Error::OutOfDomain(p.to_vec()));
        }
    }
    if x == y {
        return Err(Error::param("x = y is the free-space singularity"));
    }
    if cfg.walks < 2 || !(cfg.delta > 0.0) || cfg.max_steps == 0 {
        return Err(Error::param("invalid walk-on-spheres configuration"));
    }
    let chunks = cfg.walks.div_ceil(WOS_CHUNK);
    let per_chunk: Vec<(Vec<f64>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng.substream(c as u64);
            let count = WOS_CHUNK.min(cfg.walks - c * WOS_CHUNK);
            let mut truncated = 0;
            let vals = (0..count)
                .map(|_| {
                    let (exit, cut) = walk_exit(x, cfg, &mut stream);
                    truncated += cut as usize;
                    free_space_green(d, &exit, y)
                })
                .collect();
            (vals, truncated)
        })
        .collect();
    let truncated_walks = per_chunk.iter().map(|c| c.1).sum();
    let samples: Vec<f64> = per_chunk.into_iter().flat_map(|c| c.0).collect();
    let s = summarize(&samples);
    Ok(McEstimate {
        value: free_space_green(d, x, y) - s.mean,
        std_error: s.std_error,
        walks: samples.len(),
        truncated_walks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub pairs_used: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(|x - z|, ‖K(x,·) - K(z,·)‖_α)` per pair used.
    pub norms: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// `‖K(x,·) - K(z,·)‖_α` by the midpoint rule on `grid` refined by
/// `quad.refine`, with balls of radius `quad.exclusion` around `x` and `z` removed.
pub fn kernel_difference_norm(
    gs: &GreenSeries,
    alpha: f64,
    x: &[f64],
    z: &[f64],
    grid: &GridSpec,
    quad: &QuadSpec,
) -> Result<f64> {
    quad.validate()?;
    gs.check_closed(x)?;
    gs.check_closed(z)?;
    if grid.dim() != gs.d || !grid.is_unit_cube() {
        return Err(Error::InvalidGrid(
            "difference norm needs the unit cube".into(),
        ));
    }
    if x == z {
        return Ok(0.0);
    }
    let fine = grid.refined(quad.refine)?;
    let inv = gs.inverse_eigenvalues(gs.kmax);
    let sx: Vec<Vec<f64>> = x
        .iter()
        .map(|&t| GreenSeries::axis_sines(gs.kmax, t))
        .collect();
    let sz: Vec<Vec<f64>> = z
        .iter()
        .map(|&t| GreenSeries::axis_sines(gs.kmax, t))
        .collect();
    let coef: Vec<f64> = MultiIndex::new(&gs.shape())
        .zip(&inv)
        .map(|(idx, l)| {
            let ex: f64 = idx.iter().enumerate().map(|(a, &i)| sx[a][i]).product();
            let ez: f64 = idx.iter().enumerate().map(|(a, &i)| sz[a][i]).product();
            l * (ex - ez)
        })
        .collect();
    let centers: Vec<Vec<f64>> = (0..gs.d)
        .map(|a| {
            let h = fine.spacing(a);
            (0..fine.cells()[a]).map(|j| (j as f64 + 0.5) * h).collect()
        })
        .collect();
    let mats: Vec<Vec<f64>> = centers
        .iter()
        .map(|c| {
            let mut m = Vec::with_capacity(c.len() * gs.kmax);
            for &t in c {
                m.extend(GreenSeries::axis_sines(gs.kmax, t));
            }
            m
        })
        .collect();
    let refs: Vec<&[f64]> = mats.iter().map(Vec::as_slice).collect();
    let rows: Vec<usize> = fine.cells().to_vec();
    let (values, shape) = apply_separable(&coef, &gs.shape(), &refs, &rows);
    let rho2 = quad.exclusion * quad.exclusion;
    let total: f64 = MultiIndex::new(&shape)
        .zip(values)
        .filter(|(idx, _)| {
            if rho2 == 0.0 {
                return true;
            }
            let y: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(a, &i)| centers[a][i])
                .collect();
            let near =
                |p: &[f64]| y.iter().zip(p).map(|(u, v)| (u - v).powi(2)).sum::<f64>() < rho2;
            !near(x) && !near(z)
        })
        .map(|(_, v)| v.abs().powf(alpha))
        .sum();
    Ok((total * fine.cell_volume()).powf(1.0 / alpha))
}

/// Regression of `log ‖K(x,·) - K(z,·)‖_α` on `log |x - z|`.
pub fn holder_probe(
    gs: &GreenSeries,
    alpha: f64,
    pairs: &[(LatticePoint, LatticePoint)],
    grid: &GridSpec,
    quad: &QuadSpec,
) -> Result<HolderEstimate> {
    let warning = match gs.d {
        2 if alpha <= 2.0 => Some(format!(
            "alpha = {alpha} outside the proven window alpha > 2"
        )),
        3 if !(alpha > 2.0 && alpha < 2.25) => Some(format!(
            "alpha = {alpha} outside the proven window 2 < alpha < 9/4"
        )),
        _ => None,
    };
    let usable: Vec<&(LatticePoint, LatticePoint)> = pairs.iter().filter(|(x, z)| x != z).collect();
    let dists: Vec<f64> = usable
        .iter()
        .map(|(x, z)| {
            x.iter()
                .zip(z.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut distinct = dists.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    if distinct.len() < 3 {
        return Err(Error::param(
            "holder probe needs at least 3 distinct distances",
        ));
    }
    let span = (distinct[distinct.len() - 1] / distinct[0]).log10();
    if span < 1.5 - 1e-9 {
        return Err(Error::param(format!(
            "holder probe pairs span {span:.2} decades, need at least 1.5"
        )));
    }
    let norms: Vec<f64> = usable
        .par_iter()
        .map(|(x, z)| kernel_difference_norm(gs, alpha, x, z, grid, quad))
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = dists.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&lx, &ly)?;
    Ok(HolderEstimate {
        alpha,
        pairs_used: usable.len(),
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        norms: dists.into_iter().zip(norms).collect(),
        warning,
    })
}
