//! Monte Carlo diagnostics for the convergence in law of `X_n` to `X`:
//! finite-dimensional distributions, the moment bound, the tightness modulus
//! and the convergence of second moments.
//!
//! Every replicate draws from its own substream `(block, replicate)`, and
//! results are collected in replicate order, so reports are reproducible
//! bit for bit regardless of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LatticePoint};
use crate::integrals::{
    integrate_driver, section_norm_pow, section_norm_sq, Integrand, NoiseFamily, QuadSpec,
};
use crate::kernels::DonskerField;
use crate::report::{Comparison, ConvergenceReport, Verdict};
use crate::rng::RngStream;
use crate::stats::{ks_two_sample, linear_fit, median, summarize};
use crate::tensor::MultiIndex;

const DIRECTION_BLOCK: u64 = u64::MAX;
const REFERENCE_BLOCK: u64 = u64::MAX - 1;

/// Minimum replicate count for the asymptotic KS p-value.
pub const KS_MIN_REPLICATES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagConfig {
    pub n_list: Vec<usize>,
    /// Replicates per `n` (`M`).
    pub replicates: usize,
    /// Moment order `m`.
    pub moment: u32,
    /// Integrability index `q` of the moment bound.
    pub q: f64,
    pub significance: f64,
    pub probes: Vec<LatticePoint>,
    /// Number of random Cramér-Wold directions.
    pub projections: usize,
    pub grid: GridSpec,
    pub quad: QuadSpec,
    /// Cells per unit length of the reference sheet; defaults to the largest `n`.
    pub sheet_resolution: Option<usize>,
    /// FDD verdict: minimum fraction of directions not rejected.
    pub accept_fraction: f64,
    /// Moment verdict: maximum allowed `max / median` of the ratios.
    pub ratio_factor: f64,
}

impl DiagConfig {
    pub fn new(grid: GridSpec, n_list: Vec<usize>) -> Self {
        let top = LatticePoint::new(grid.lengths().to_vec());
        DiagConfig {
            n_list,
            replicates: 1000,
            moment: 2,
            q: 1.0,
            significance: 0.01,
            probes: vec![top],
            projections: 10,
            grid,
            quad: QuadSpec::default(),
            sheet_resolution: None,
            accept_fraction: 0.8,
            ratio_factor: 1.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::param("n_list must be nonempty with n >= 1"));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("n_list must be strictly increasing"));
        }
        if self.replicates < 100 {
            return Err(Error::param("at least 100 replicates are required"));
        }
        if self.moment < 2 {
            return Err(Error::param("moment order m must be >= 2"));
        }
        if !(self.q >= 1.0) {
            return Err(Error::param("q must be >= 1"));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::param("significance must lie in (0, 1)"));
        }
        if self.projections == 0 {
            return Err(Error::param("at least one projection is required"));
        }
        for p in &self.probes {
            self.grid.node_index(p)?;
        }
        self.quad.validate()
    }

    fn reference_resolution(&self) -> usize {
        self.sheet_resolution
            .unwrap_or_else(|| *self.n_list.last().unwrap_or(&1))
    }
}

/// `M x |xs|` table of `X_n(x)` over independent replicates.
#[allow(clippy::too_many_arguments)]
pub fn replicate_values(
    f: &(impl Integrand + ?Sized),
    family: NoiseFamily,
    n: usize,
    xs: &[LatticePoint],
    replicates: usize,
    grid: &GridSpec,
    quad: &QuadSpec,
    block: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut stream = block.substream(r as u64);
            let driver = family.sample(grid.lengths(), n, &mut stream)?;
            integrate_driver(f, &driver, grid, xs, quad)
        })
        .collect()
}

fn random_directions(count: usize, dim: usize, rng: &RngStream) -> Vec<Vec<f64>> {
    let mut stream = rng.substream(DIRECTION_BLOCK);
    (0..count)
        .map(|_| loop {
            let a: Vec<f64> = (0..dim).map(|_| stream.standard_normal()).collect();
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break a.into_iter().map(|v| v / norm).collect();
            }
        })
        .collect()
}

fn project(values: &[Vec<f64>], dir: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|row| row.iter().zip(dir).map(|(x, a)| x * a).sum())
        .collect()
}

/// Cramér-Wold FDD test: KS of `Σ a_j X_n(z^j)` against `Σ a_j X(z^j)` per
/// random direction `a`, for every `n`.
pub fn fdd_test(
    f: &(impl Integrand + ?Sized),
    family: NoiseFamily,
    cfg: &DiagConfig,
    rng: &RngStream,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if cfg.probes.is_empty() {
        return Err(Error::param("FDD test needs at least one probe point"));
    }
    if cfg.replicates < KS_MIN_REPLICATES {
        return Err(Error::param(format!(
            "FDD test needs at least {KS_MIN_REPLICATES} replicates"
        )));
    }
    let dirs = random_directions(cfg.projections, cfg.probes.len(), rng);
    let reference = replicate_values(
        f,
        NoiseFamily::Sheet,
        cfg.reference_resolution(),
        &cfg.probes,
        cfg.replicates,
        &cfg.grid,
        &cfg.quad,
        &rng.substream(REFERENCE_BLOCK),
    )?;
    let ref_proj: Vec<Vec<f64>> = dirs.iter().map(|a| project(&reference, a)).collect();

    let mut report = ConvergenceReport::new("fdd", family.name());
    report.meta("config", cfg);
    report.meta("directions", &dirs);
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let values = replicate_values(
            f,
            family,
            n,
            &cfg.probes,
            cfg.replicates,
            &cfg.grid,
            &cfg.quad,
            &rng.substream(i as u64),
        )?;
        let mut rejected = 0;
        for (j, a) in dirs.iter().enumerate() {
            let ks = ks_two_sample(&project(&values, a), &ref_proj[j])?;
            let label = format!("direction {j}");
            report.push(Some(n), &label, "ks_statistic", ks.statistic);
            report.push(Some(n), &label, "p_value", ks.p_value);
            rejected += ks.rejects(cfg.significance) as usize;
        }
        let frac = rejected as f64 / dirs.len() as f64;
        report.push(Some(n), "all", "rejection_fraction", frac);
        report.push(Some(n), "all", "accepted_fraction", 1.0 - frac);
    }
    let last = *cfg.n_list.last().unwrap();
    let accepted = report
        .value(Some(last), "all", "accepted_fraction")
        .unwrap();
    report.verdict(Verdict::new(
        format!("accepted fraction at n={last}"),
        accepted,
        Comparison::AtLeast,
        cfg.accept_fraction,
    ));
    Ok(report)
}

/// `∫_{[lo,hi]} g`, exactly when `g` has a box-average oracle, otherwise by
/// the midpoint rule with `r` sub-cells per axis.
fn box_integral(g: &(impl Integrand + ?Sized), x: &[f64], lo: &[f64], hi: &[f64], r: usize) -> f64 {
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    if let Some(avg) = g.box_average(x, lo, hi) {
        return avg * vol;
    }
    let d = lo.len();
    let sub = vol / (r.pow(d as u32)) as f64;
    MultiIndex::new(&vec![r; d])
        .map(|idx| {
            let y: Vec<f64> = (0..d)
                .map(|a| lo[a] + (idx[a] as f64 + 0.5) * (hi[a] - lo[a]) / r as f64)
                .collect();
            g.eval(x, &y) * sub
        })
        .sum()
}

/// `E[(∫ g θ_n)²] = Σ_k w_k²` for a Donsker kernel with unit-variance innovations.
pub fn donsker_second_moment(
    g: &(impl Integrand + ?Sized),
    lengths: &[f64],
    n: usize,
    x: &[f64],
    refine: usize,
) -> Result<f64> {
    let unit = DonskerField::from_innovations(
        lengths,
        n,
        crate::kernels::InnovationLaw::StandardNormal,
        vec![
            1.0;
            lengths
                .iter()
                .map(|t| ((n as f64 * t) - 1e-9).ceil().max(1.0) as usize)
                .product()
        ],
    )?;
    let mu = unit.measure();
    let scale = mu.coefficients()[0];
    Ok(MultiIndex::new(&mu.shape())
        .map(|idx| {
            let (lo, hi) = mu.box_bounds(&idx);
            (scale * box_integral(g, x, &lo, &hi, refine)).powi(2)
        })
        .sum())
}

/// Ratios `E|∫ g θ_n|^m / ‖g‖_{2q}^m` across `n` for an integrand in `y` only.
pub fn moment_bound_probe(
    g: &(impl Integrand + ?Sized),
    family: NoiseFamily,
    cfg: &DiagConfig,
    rng: &RngStream,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let x = LatticePoint::new(cfg.grid.lengths().to_vec());
    let m = cfg.moment;
    let norm = section_norm_pow(g, &cfg.grid, &x, 2.0 * cfg.q, &cfg.quad)?.powf(0.5 / cfg.q);
    if !(norm > 0.0) {
        return Err(Error::param(
            "the 2q-norm of g vanishes; ratios are undefined",
        ));
    }
    let mut report = ConvergenceReport::new("moment_bound", family.name());
    report.meta("config", cfg);
    report.meta("norm_2q", norm);
    let exact = matches!(family, NoiseFamily::Donsker(_)) && m == 2;
    report.meta("ratio_source", if exact { "exact" } else { "monte_carlo" });
    let mut ratios = Vec::with_capacity(cfg.n_list.len());
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let values = replicate_values(
            g,
            family,
            n,
            std::slice::from_ref(&x),
            cfg.replicates,
            &cfg.grid,
            &cfg.quad,
            &rng.substream(i as u64),
        )?;
        let powers: Vec<f64> = values.iter().map(|v| v[0].abs().powi(m as i32)).collect();
        let s = summarize(&powers);
        let denom = norm.powi(m as i32);
        report.push(Some(n), "mc", "moment", s.mean);
        report.push(Some(n), "mc", "std_error", s.std_error);
        report.push(Some(n), "mc", "ratio", s.mean / denom);
        report.push(Some(n), "mc", "ratio_std_error", s.std_error / denom);
        let ratio = if exact {
            let e = donsker_second_moment(g, cfg.grid.lengths(), n, &x, cfg.quad.refine)? / denom;
            report.push(Some(n), "exact", "ratio", e);
            e
        } else {
            s.mean / denom
        };
        ratios.push(ratio);
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let med = median(&ratios);
    report.push(None, "pooled", "max_over_median", max / med);
    report.verdict(Verdict::new(
        "ratio max/median",
        max / med,
        Comparison::AtMost,
        cfg.ratio_factor,
    ));
    Ok(report)
}

fn l1_distance(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b).abs()).sum()
}

fn distinct_count(mut v: Vec<f64>) -> usize {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    v.len()
}

/// Regression of `log E|X_n(x) - X_n(z)|^m` on `log Σ|x_i - z_i|`, pooled over `n`.
pub fn tightness_modulus_probe(
    f: &(impl Integrand + ?Sized),
    family: NoiseFamily,
    pairs: &[(LatticePoint, LatticePoint)],
    cfg: &DiagConfig,
    rng: &RngStream,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if pairs.iter().any(|(x, z)| x == z) {
        return Err(Error::param("tightness pairs must have distinct points"));
    }
    let dists: Vec<f64> = pairs.iter().map(|(x, z)| l1_distance(x, z)).collect();
    if distinct_count(dists.clone()) < 3 {
        return Err(Error::param(
            "tightness probe needs at least 3 distinct distances",
        ));
    }
    let mut points: Vec<LatticePoint> = vec![];
    let mut slot = |p: &LatticePoint| -> usize {
        match points.iter().position(|q| q == p) {
            Some(i) => i,
            None => {
                points.push(p.clone());
                points.len() - 1
            }
        }
    };
    let index: Vec<(usize, usize)> = pairs.iter().map(|(x, z)| (slot(x), slot(z))).collect();
    let d = cfg.grid.dim() as f64;
    let m = cfg.moment as i32;
    let mut report = ConvergenceReport::new("tightness_modulus", family.name());
    report.meta("config", cfg);
    let (mut lx, mut ly) = (vec![], vec![]);
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let values = replicate_values(
            f,
            family,
            n,
            &points,
            cfg.replicates,
            &cfg.grid,
            &cfg.quad,
            &rng.substream(i as u64),
        )?;
        for (j, &(a, b)) in index.iter().enumerate() {
            let incr: Vec<f64> = values
                .iter()
                .map(|row| (row[a] - row[b]).abs().powi(m))
                .collect();
            let s = summarize(&incr);
            let label = format!("pair {j}");
            report.push(Some(n), &label, "distance", dists[j]);
            report.push(Some(n), &label, "moment", s.mean);
            report.push(Some(n), &label, "std_error", s.std_error);
            if s.mean > 0.0 {
                lx.push(dists[j].ln());
                ly.push(s.mean.ln());
            }
        }
    }
    let fit = linear_fit(&lx, &ly)?;
    report.push(None, "pooled", "slope", fit.slope);
    report.push(None, "pooled", "intercept", fit.intercept);
    report.push(None, "pooled", "r_squared", fit.r_squared);
    report.verdict(Verdict::new(
        "modulus slope",
        fit.slope,
        Comparison::Above,
        d,
    ));
    Ok(report)
}

/// `E[X_n(x)²]` per `n` against the target `∫ f(x,y)² dy`.
pub fn variance_convergence_report(
    f: &(impl Integrand + ?Sized),
    family: NoiseFamily,
    x: &LatticePoint,
    cfg: &DiagConfig,
    rng: &RngStream,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    cfg.grid.node_index(x)?;
    let target = section_norm_sq(f, &cfg.grid, x, &cfg.quad)?;
    let mut report = ConvergenceReport::new("variance_convergence", family.name());
    report.meta("config", cfg);
    report.meta("probe", x);
    report.push(None, "target", "second_moment", target);
    let mut last = (0.0, 0.0);
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let values = replicate_values(
            f,
            family,
            n,
            std::slice::from_ref(x),
            cfg.replicates,
            &cfg.grid,
            &cfg.quad,
            &rng.substream(i as u64),
        )?;
        let squares: Vec<f64> = values.iter().map(|v| v[0] * v[0]).collect();
        let s = summarize(&squares);
        report.push(Some(n), "mc", "second_moment", s.mean);
        report.push(Some(n), "mc", "std_error", s.std_error);
        last = (s.mean, s.std_error);
    }
    let dev = (last.0 - target).abs();
    report.push(None, "final", "abs_deviation", dev);
    report.verdict(Verdict::new(
        "final second moment within 3 standard errors",
        dev,
        Comparison::AtMost,
        3.0 * last.1,
    ));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Slope of `log ‖f(x,·) - f(z,·)‖_{2q}` against `log |x - z|`.
    pub alpha: f64,
    pub r_squared: f64,
    /// Estimate is not positive: the Hölder hypothesis looks violated.
    pub flagged: bool,
    /// `m > d / α̂` with the configured `m`.
    pub moment_condition: bool,
}

/// Empirical Hölder exponent of `x ↦ f(x,·)` in `L^{2q}`, by quadrature.
pub fn integrand_holder_estimate(
    f: &(impl Integrand + ?Sized),
    pairs: &[(LatticePoint, LatticePoint)],
    cfg: &DiagConfig,
) -> Result<AlphaEstimate> {
    cfg.validate()?;
    let usable: Vec<_> = pairs.iter().filter(|(x, z)| x != z).collect();
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
    if distinct_count(dists.clone()) < 3 {
        return Err(Error::param(
            "Hölder estimate needs at least 3 distinct distances",
        ));
    }
    let p = 2.0 * cfg.q;
    let fine = cfg.grid.refined(cfg.quad.refine)?;
    let vol = fine.cell_volume();
    let cells = fine.cells().to_vec();
    let norms: Vec<f64> = usable
        .par_iter()
        .map(|(x, z)| {
            let s: f64 = MultiIndex::new(&cells)
                .map(|idx| {
                    let y = fine.cell_center(&idx);
                    (f.eval(x, &y) - f.eval(z, &y)).abs().powf(p)
                })
                .sum();
            (s * vol).powf(1.0 / p)
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = dists
        .iter()
        .zip(&norms)
        .filter(|(_, &v)| v > 0.0)
        .map(|(d, v)| (d.ln(), v.ln()))
        .unzip();
    let (alpha, r_squared) = if lx.len() >= 2 {
        let fit = linear_fit(&lx, &ly)?;
        (fit.slope, fit.r_squared)
    } else {
        (0.0, 0.0)
    };
    Ok(AlphaEstimate {
        alpha,
        r_squared,
        flagged: alpha <= 0.0,
        moment_condition: alpha > 0.0 && cfg.moment as f64 > cfg.grid.dim() as f64 / alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::{BoxIndicator, FnIntegrand};
    use crate::kernels::InnovationLaw;

    fn cfg1(n_list: Vec<usize>, m: usize) -> DiagConfig {
        let mut c = DiagConfig::new(GridSpec::unit(1, 4).unwrap(), n_list);
        c.replicates = m;
        c
    }

    #[test]
    fn config_validation() {
        let mut c = cfg1(vec![4, 16], 100);
        assert!(c.validate().is_ok());
        c.replicates = 99;
        assert!(c.validate().is_err());
        let mut c = cfg1(vec![16, 4], 100);
        assert!(c.validate().is_err());
        c.n_list = vec![4];
        c.significance = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg1(vec![4], 100);
        c.moment = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_norm_is_an_error() {
        let g = FnIntegrand::of_y(|_| 0.0);
        let c = cfg1(vec![4], 100);
        let fam = NoiseFamily::Donsker(InnovationLaw::Rademacher);
        assert!(moment_bound_probe(&g, fam, &c, &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn donsker_second_moment_is_one() {
        let g = FnIntegrand::of_y(|_| 1.0);
        for n in [4, 16, 64] {
            let v = donsker_second_moment(&g, &[1.0], n, &[1.0], 1).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fdd_requires_enough_replicates() {
        let c = cfg1(vec![4], 500);
        let fam = NoiseFamily::Donsker(InnovationLaw::Rademacher);
        assert!(fdd_test(&BoxIndicator, fam, &c, &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn reports_are_reproducible() {
        let c = cfg1(vec![2, 8], 200);
        let fam = NoiseFamily::KacStroock;
        let a = variance_convergence_report(
            &BoxIndicator,
            fam,
            &LatticePoint::new(vec![0.5]),
            &c,
            &RngStream::new(5, 0),
        )
        .unwrap();
        let b = variance_convergence_report(
            &BoxIndicator,
            fam,
            &LatticePoint::new(vec![0.5]),
            &c,
            &RngStream::new(5, 0),
        )
        .unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn zero_integrand_has_zero_variance() {
        let f = FnIntegrand::new(|_, _| 0.0);
        let c = cfg1(vec![4], 100);
        let r = variance_convergence_report(
            &f,
            NoiseFamily::KacStroock,
            &LatticePoint::new(vec![1.0]),
            &c,
            &RngStream::new(1, 0),
        )
        .unwrap();
        assert!(r.values(None, "second_moment").iter().all(|&v| v == 0.0));
        assert!(r.all_passed());
    }

    #[test]
    fn tightness_preconditions() {
        let c = cfg1(vec![4], 100);
        let p = |a: f64, b: f64| (LatticePoint::new(vec![a]), LatticePoint::new(vec![b]));
        let fam = NoiseFamily::Donsker(InnovationLaw::Rademacher);
        let rng = RngStream::new(1, 0);
        assert!(tightness_modulus_probe(
            &BoxIndicator,
            fam,
            &[p(0.5, 0.5), p(0.0, 0.25), p(0.0, 1.0)],
            &c,
            &rng
        )
        .is_err());
        assert!(tightness_modulus_probe(
            &BoxIndicator,
            fam,
            &[p(0.0, 0.25), p(0.25, 0.5)],
            &c,
            &rng
        )
        .is_err());
    }

    #[test]
    fn lipschitz_integrand_has_positive_alpha() {
        let f = FnIntegrand::new(|x, y| (x[0] * y[0]).sin());
        let c = cfg1(vec![4], 100);
        let p = |a: f64, b: f64| (LatticePoint::new(vec![a]), LatticePoint::new(vec![b]));
        let est =
            integrand_holder_estimate(&f, &[p(0.5, 0.75), p(0.5, 1.0), p(0.0, 1.0)], &c).unwrap();
        assert!((est.alpha - 1.0).abs() < 0.2 && !est.flagged);
    }
}
