//! Random kernels `theta_n` whose primitives approximate the Brownian sheet.
//!
//! * Donsker kernels: `n^{d/2} Z_k` on the cell `[(k-1)/n, k/n)`, with i.i.d.
//!   standardized innovations `Z_k`.
//! * Kac-Stroock kernels: `n^{d/2} (prod x_i)^{(d-1)/2} (-1)^{N_n(x)}`, where
//!   `N_n` counts the points of a Poisson process of intensity `n` below `x`.
//!
//! Both are stored as a [`PiecewiseMeasure`], so the primitive
//! `zeta_n(x) = int_{[0,x]} theta_n` is exact: the Kac-Stroock sign is
//! constant on every box of the grid spanned by the point coordinates.

use std::str::FromStr;

use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LatticePoint;
use crate::measure::PiecewiseMeasure;
use crate::rng::RngStream;
use crate::tensor::{flat_index, MultiIndex};

/// Default cap on materialized values (innovations or partition boxes).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 26;

/// Law of the Donsker innovations. All have mean 0, variance 1 and finite
/// moments of every order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnovationLaw {
    StandardNormal,
    Rademacher,
    CenteredUniform,
}

impl InnovationLaw {
    pub fn sample(self, rng: &mut RngStream) -> f64 {
        match self {
            InnovationLaw::StandardNormal => rng.standard_normal(),
            InnovationLaw::Rademacher => {
                if rng.uniform() < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            InnovationLaw::CenteredUniform => 3f64.sqrt() * (2.0 * rng.uniform() - 1.0),
        }
    }

    /// `E|Z|^m` for integer `m >= 1`.
    pub fn abs_moment(self, m: u32) -> f64 {
        match self {
            InnovationLaw::Rademacher => 1.0,
            InnovationLaw::CenteredUniform => 3f64.sqrt().powi(m as i32) / (m as f64 + 1.0),
            InnovationLaw::StandardNormal => {
                // (m-1)!!, times sqrt(2/pi) for odd m
                let double_fact: f64 = (1..m).rev().step_by(2).map(|v| v as f64).product();
                if m.is_multiple_of(2) {
                    double_fact
                } else {
                    double_fact * (2.0 / std::f64::consts::PI).sqrt()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InnovationLaw::StandardNormal => "standard-normal",
            InnovationLaw::Rademacher => "rademacher",
            InnovationLaw::CenteredUniform => "centered-uniform",
        }
    }
}

impl FromStr for InnovationLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard-normal" | "normal" | "gaussian" => Ok(InnovationLaw::StandardNormal),
            "rademacher" => Ok(InnovationLaw::Rademacher),
            "centered-uniform" | "uniform" => Ok(InnovationLaw::CenteredUniform),
            other => Err(Error::param(format!(
                "unsupported innovation law '{other}'"
            ))),
        }
    }
}

fn check_inside(lengths: &[f64], x: &[f64]) -> Result<()> {
    if x.len() != lengths.len() {
        return Err(Error::DimensionMismatch {
            expected: lengths.len(),
            got: x.len(),
        });
    }
    if x.iter()
        .zip(lengths)
        .any(|(&xi, &t)| !(0.0..=t).contains(&xi))
    {
        return Err(Error::OutOfDomain(x.to_vec()));
    }
    Ok(())
}

fn check_lengths(lengths: &[f64]) -> Result<()> {
    if lengths.is_empty() || lengths.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidGrid("axis lengths must be positive".into()));
    }
    Ok(())
}

/// One realization of the Donsker kernel at scale `1/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DonskerField {
    n: usize,
    law: InnovationLaw,
    lengths: Vec<f64>,
    counts: Vec<usize>,
    innovations: Vec<f64>,
    measure: PiecewiseMeasure,
}

impl DonskerField {
    /// Samples innovations for every multi-index `k` in `prod {1..ceil(n T_i)}`.
    pub fn sample(
        lengths: &[f64],
        n: usize,
        law: InnovationLaw,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::sample_with_budget(lengths, n, law, rng, DEFAULT_MEMORY_BUDGET)
    }

    pub fn sample_with_budget(
        lengths: &[f64],
        n: usize,
        law: InnovationLaw,
        rng: &mut RngStream,
        budget: usize,
    ) -> Result<Self> {
        check_lengths(lengths)?;
        if n == 0 {
            return Err(Error::param("Donsker scale n must be >= 1"));
        }
        let counts: Vec<usize> = lengths
            .iter()
            .map(|t| ((n as f64 * t) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let required = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX);
        if required > budget {
            return Err(Error::BudgetExceeded { required, budget });
        }
        let innovations: Vec<f64> = (0..required).map(|_| law.sample(rng)).collect();
        Self::from_innovations(lengths, n, law, innovations)
    }

    /// Builds a field from given innovations (row-major over `k`, last axis fastest).
    pub fn from_innovations(
        lengths: &[f64],
        n: usize,
        law: InnovationLaw,
        innovations: Vec<f64>,
    ) -> Result<Self> {
        check_lengths(lengths)?;
        if n == 0 {
            return Err(Error::param("Donsker scale n must be >= 1"));
        }
        let counts: Vec<usize> = lengths
            .iter()
            .map(|t| ((n as f64 * t) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let expected: usize = counts.iter().product();
        if innovations.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: innovations.len(),
            });
        }
        let d = lengths.len();
        let scale = (n as f64).powf(d as f64 / 2.0);
        let breaks: Vec<Vec<f64>> = lengths
            .iter()
            .zip(&counts)
            .map(|(&t, &c)| {
                (0..=c)
                    .map(|k| {
                        if k == c {
                            t
                        } else {
                            (k as f64 / n as f64).min(t)
                        }
                    })
                    .collect()
            })
            .collect();
        let coef = innovations.iter().map(|z| scale * z).collect();
        let measure = PiecewiseMeasure::new(breaks, coef, 0.0)?;
        Ok(DonskerField {
            n,
            law,
            lengths: lengths.to_vec(),
            counts,
            innovations,
            measure,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn law(&self) -> InnovationLaw {
        self.law
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Number of cells per axis, `ceil(n T_i)`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn innovations(&self) -> &[f64] {
        &self.innovations
    }

    /// Innovation `Z_k` for a 1-based multi-index `k`.
    pub fn innovation(&self, k: &[usize]) -> f64 {
        let zero_based: Vec<usize> = k.iter().map(|&v| v - 1).collect();
        self.innovations[flat_index(&self.counts, &zero_based)]
    }

    pub fn measure(&self) -> &PiecewiseMeasure {
        &self.measure
    }

    /// 1-based multi-index of the cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_inside(&self.lengths, x)?;
        Ok(x.iter()
            .zip(&self.counts)
            .map(|(&xi, &c)| ((self.n as f64 * xi).floor() as usize + 1).min(c))
            .collect())
    }

    /// `theta_n(x) = n^{d/2} Z_k` with `n x in [k-1, k)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let k = self.cell_of(x)?;
        let scale = (self.n as f64).powf(self.dim() as f64 / 2.0);
        Ok(scale * self.innovation(&k))
    }

    /// `zeta_n(x)`, integrated exactly cell by cell.
    pub fn zeta(&self, x: &[f64]) -> Result<f64> {
        check_inside(&self.lengths, x)?;
        Ok(self.measure.primitive(x))
    }

    /// Normalized partial sum `n^{-d/2} sum_{j <= k} Z_j` (1-based `k`).
    pub fn partial_sum(&self, k: &[usize]) -> f64 {
        let shape: Vec<usize> = k.to_vec();
        let total: f64 = MultiIndex::new(&shape)
            .map(|j| self.innovations[flat_index(&self.counts, &j)])
            .sum();
        total / (self.n as f64).powf(self.dim() as f64 / 2.0)
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = DonskerRepr {
            n: self.n,
            law: self.law,
            lengths: self.lengths.clone(),
            innovations: MultiIndex::new(&self.counts)
                .zip(&self.innovations)
                .map(|(k, &z)| IndexedValue {
                    k: k.iter().map(|v| v + 1).collect(),
                    z,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: DonskerRepr = serde_json::from_str(text)?;
        let counts: Vec<usize> = repr
            .lengths
            .iter()
            .map(|t| ((repr.n as f64 * t) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let mut values = vec![f64::NAN; counts.iter().product()];
        for entry in &repr.innovations {
            if entry.k.len() != counts.len()
                || entry.k.iter().zip(&counts).any(|(&k, &c)| k == 0 || k > c)
            {
                return Err(Error::param(format!(
                    "innovation index {:?} out of range",
                    entry.k
                )));
            }
            let zb: Vec<usize> = entry.k.iter().map(|v| v - 1).collect();
            values[flat_index(&counts, &zb)] = entry.z;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::param("missing innovations in serialized field"));
        }
        DonskerField::from_innovations(&repr.lengths, repr.n, repr.law, values)
    }
}

#[derive(Serialize, Deserialize)]
struct IndexedValue {
    k: Vec<usize>,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct DonskerRepr {
    n: usize,
    law: InnovationLaw,
    #[serde(rename = "T")]
    lengths: Vec<f64>,
    innovations: Vec<IndexedValue>,
}

/// One realization of the Kac-Stroock kernel: a Poisson point set of intensity `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonField {
    n: f64,
    lengths: Vec<f64>,
    points: Vec<LatticePoint>,
    measure: PiecewiseMeasure,
}

#[derive(Serialize, Deserialize)]
struct PoissonRepr {
    n: f64,
    #[serde(rename = "T")]
    lengths: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl PoissonField {
    pub fn sample(lengths: &[f64], n: f64, rng: &mut RngStream) -> Result<Self> {
        Self::sample_with_budget(lengths, n, rng, DEFAULT_MEMORY_BUDGET)
    }

    pub fn sample_with_budget(
        lengths: &[f64],
        n: f64,
        rng: &mut RngStream,
        budget: usize,
    ) -> Result<Self> {
        check_lengths(lengths)?;
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("Kac-Stroock intensity n must be positive"));
        }
        let mean = n * lengths.iter().product::<f64>();
        let count =
            rng.sample(Poisson::new(mean).map_err(|e| Error::param(e.to_string()))?) as usize;
        let points = (0..count)
            .map(|_| {
                LatticePoint(
                    lengths
                        .iter()
                        .map(|&t| loop {
                            let v = rng.uniform_open() * t;
                            if v < t {
                                break v;
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        Self::from_points_with_budget(lengths, n, points, budget)
    }

    pub fn from_points(lengths: &[f64], n: f64, points: Vec<LatticePoint>) -> Result<Self> {
        Self::from_points_with_budget(lengths, n, points, DEFAULT_MEMORY_BUDGET)
    }

    pub fn from_points_with_budget(
        lengths: &[f64],
        n: f64,
        points: Vec<LatticePoint>,
        budget: usize,
    ) -> Result<Self> {
        check_lengths(lengths)?;
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("Kac-Stroock intensity n must be positive"));
        }
        let d = lengths.len();
        for p in &points {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            if p.iter().zip(lengths).any(|(&c, &t)| !(c > 0.0 && c < t)) {
                return Err(Error::OutOfDomain(p.0.clone()));
            }
        }
        let required = (points.len() + 1)
            .checked_pow(d as u32)
            .unwrap_or(usize::MAX);
        if required > budget {
            return Err(Error::BudgetExceeded { required, budget });
        }
        let measure = sign_measure(lengths, n, &points)?;
        Ok(PoissonField {
            n,
            lengths: lengths.to_vec(),
            points,
            measure,
        })
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn measure(&self) -> &PiecewiseMeasure {
        &self.measure
    }

    /// Number of points `p` with `p <= x`.
    pub fn count_below(&self, x: &[f64]) -> usize {
        self.points
            .iter()
            .filter(|p| p.iter().zip(x).all(|(a, b)| a <= b))
            .count()
    }

    /// `n^{d/2} (prod x_i)^{(d-1)/2} (-1)^{N(x)}`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_inside(&self.lengths, x)?;
        let d = self.dim() as f64;
        let magnitude = self.n.powf(d / 2.0) * x.iter().product::<f64>().powf((d - 1.0) / 2.0);
        let sign = if self.count_below(x).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        Ok(sign * magnitude)
    }

    /// `zeta_n(x)`, exact on the sign-constant boxes.
    pub fn zeta(&self, x: &[f64]) -> Result<f64> {
        check_inside(&self.lengths, x)?;
        Ok(self.measure.primitive(x))
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = PoissonRepr {
            n: self.n,
            lengths: self.lengths.clone(),
            points: self.points.iter().map(|p| p.0.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: PoissonRepr = serde_json::from_str(text)?;
        PoissonField::from_points(
            &repr.lengths,
            repr.n,
            repr.points.into_iter().map(LatticePoint).collect(),
        )
    }
}

/// Partition by all point coordinates; `N` is constant on every box, and is
/// obtained by a d-dimensional prefix sum over point ranks.
fn sign_measure(lengths: &[f64], n: f64, points: &[LatticePoint]) -> Result<PiecewiseMeasure> {
    let d = lengths.len();
    let mut breaks = Vec::with_capacity(d);
    let mut ranks: Vec<Vec<usize>> = vec![vec![0; points.len()]; d];
    for a in 0..d {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| points[i][a].total_cmp(&points[j][a]));
        let mut br = Vec::with_capacity(points.len() + 2);
        br.push(0.0);
        for (r, &i) in order.iter().enumerate() {
            br.push(points[i][a]);
            // box index whose lower edge is this point's coordinate
            ranks[a][i] = r + 1;
        }
        br.push(lengths[a]);
        breaks.push(br);
    }
    let shape = vec![points.len() + 1; d];
    let mut counts = vec![0u32; shape.iter().product()];
    #[allow(clippy::needless_range_loop)]
    for i in 0..points.len() {
        let idx: Vec<usize> = (0..d).map(|a| ranks[a][i]).collect();
        counts[flat_index(&shape, &idx)] += 1;
    }
    // inclusive prefix sums along each axis
    let side = points.len() + 1;
    for a in 0..d {
        let stride: usize = shape[a + 1..].iter().product();
        for flat in 0..counts.len() {
            let j = (flat / stride) % side;
            if j > 0 {
                counts[flat] += counts[flat - stride];
            }
        }
    }
    let scale = n.powf(d as f64 / 2.0);
    let coef = counts
        .iter()
        .map(|&c| if c % 2 == 0 { scale } else { -scale })
        .collect();
    PiecewiseMeasure::new(breaks, coef, (d as f64 - 1.0) / 2.0)
}

/// A realization of either kernel family.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelField {
    Donsker(DonskerField),
    KacStroock(PoissonField),
}

impl KernelField {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            KernelField::Donsker(f) => f.eval(x),
            KernelField::KacStroock(f) => f.eval(x),
        }
    }

    pub fn zeta(&self, x: &[f64]) -> Result<f64> {
        match self {
            KernelField::Donsker(f) => f.zeta(x),
            KernelField::KacStroock(f) => f.zeta(x),
        }
    }

    pub fn measure(&self) -> &PiecewiseMeasure {
        match self {
            KernelField::Donsker(f) => f.measure(),
            KernelField::KacStroock(f) => f.measure(),
        }
    }

    pub fn lengths(&self) -> &[f64] {
        match self {
            KernelField::Donsker(f) => f.lengths(),
            KernelField::KacStroock(f) => f.lengths(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn innovation_counts() {
        let mut rng = RngStream::new(1, 0);
        let f = DonskerField::sample(&[1.0], 4, InnovationLaw::StandardNormal, &mut rng).unwrap();
        assert_eq!(f.innovations().len(), 4);
        let f = DonskerField::sample(&[1.0, 1.0], 3, InnovationLaw::Rademacher, &mut rng).unwrap();
        assert_eq!(f.innovations().len(), 9);
        let f = DonskerField::sample(&[1.3, 1.0], 2, InnovationLaw::Rademacher, &mut rng).unwrap();
        assert_eq!(f.counts(), &[3, 2]);
    }

    #[test]
    fn unsupported_law_is_rejected() {
        assert!("cauchy".parse::<InnovationLaw>().is_err());
        assert_eq!(
            "rademacher".parse::<InnovationLaw>().unwrap(),
            InnovationLaw::Rademacher
        );
    }

    #[test]
    fn budget_refusal() {
        let mut rng = RngStream::new(1, 0);
        let err = DonskerField::sample_with_budget(
            &[1.0, 1.0],
            100,
            InnovationLaw::Rademacher,
            &mut rng,
            1000,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::BudgetExceeded {
                required: 10000,
                ..
            }
        ));
    }

    #[test]
    fn rademacher_variance_within_three_standard_errors() {
        let mut rng = RngStream::new(42, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| InnovationLaw::Rademacher.sample(&mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Var of the sample variance for Rademacher is (mu4 - 1)/n = 0, so the
        // deviation is driven by the mean term; use the CLT scale of the mean.
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn all_laws_are_standardized() {
        for law in [
            InnovationLaw::StandardNormal,
            InnovationLaw::Rademacher,
            InnovationLaw::CenteredUniform,
        ] {
            let mut rng = RngStream::new(3, 1);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{law:?}");
            let se = ((m4 - m2 * m2) / n as f64).sqrt();
            assert!((m2 - 1.0).abs() < 4.0 * se.max(1e-12), "{law:?}: {m2}");
            assert_relative_eq!(law.abs_moment(2), 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(
            InnovationLaw::StandardNormal.abs_moment(4),
            3.0,
            epsilon = 1e-10
        );
        assert_relative_eq!(
            InnovationLaw::CenteredUniform.abs_moment(4),
            1.8,
            epsilon = 1e-12
        );
    }

    #[test]
    fn donsker_eval_examples() {
        let f = DonskerField::from_innovations(
            &[1.0],
            4,
            InnovationLaw::StandardNormal,
            vec![0.5, -1.5, 2.0, 0.25],
        )
        .unwrap();
        // n x = 1.2 lies in [1, 2): k = 2
        assert_eq!(f.eval(&[0.3]).unwrap(), 2.0 * -1.5);
        assert_eq!(f.eval(&[0.0]).unwrap(), 2.0 * 0.5);
        assert_eq!(f.eval(&[1.0]).unwrap(), 2.0 * 0.25);
        assert!(matches!(f.eval(&[1.2]), Err(Error::OutOfDomain(_))));

        let z: Vec<f64> = (0..4).map(|v| v as f64 + 1.0).collect();
        let f =
            DonskerField::from_innovations(&[1.0, 1.0], 2, InnovationLaw::Rademacher, z).unwrap();
        // n x = (1.2, 0.4): k = (2, 1), stored at zero-based (1, 0) -> flat 2
        assert_eq!(f.eval(&[0.6, 0.2]).unwrap(), 2.0 * 3.0);
        assert_eq!(f.innovation(&[2, 1]), 3.0);
    }

    #[test]
    fn donsker_zeta_is_the_partial_sum() {
        let mut rng = RngStream::new(5, 2);
        for d in 1..=2 {
            for n in [2usize, 4, 8] {
                let f =
                    DonskerField::sample(&vec![1.0; d], n, InnovationLaw::StandardNormal, &mut rng)
                        .unwrap();
                for k in MultiIndex::new(&vec![n + 1; d]) {
                    let x: Vec<f64> = k.iter().map(|&v| v as f64 / n as f64).collect();
                    let want = f.partial_sum(&k);
                    assert!((f.zeta(&x).unwrap() - want).abs() < 1e-12);
                }
            }
        }
        let f = DonskerField::sample(&[1.0], 4, InnovationLaw::Rademacher, &mut rng).unwrap();
        assert_eq!(f.zeta(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn kac_stroock_eval_examples() {
        let empty = PoissonField::from_points(&[1.0, 1.0], 4.0, vec![]).unwrap();
        assert_relative_eq!(empty.eval(&[0.5, 0.5]).unwrap(), 4.0 * 0.5, epsilon = 1e-15);
        assert_eq!(empty.eval(&[0.0, 0.5]).unwrap(), 0.0);

        let f = PoissonField::from_points(
            &[1.0],
            9.0,
            vec![LatticePoint::new(vec![0.2]), LatticePoint::new(vec![0.7])],
        )
        .unwrap();
        assert_relative_eq!(f.eval(&[0.5]).unwrap(), -3.0, epsilon = 1e-15);
        assert_relative_eq!(f.eval(&[0.0]).unwrap(), 3.0, epsilon = 1e-15);

        let f = PoissonField::from_points(
            &[1.0, 1.0],
            4.0,
            vec![
                LatticePoint::new(vec![0.1, 0.2]),
                LatticePoint::new(vec![0.4, 0.9]),
            ],
        )
        .unwrap();
        assert_relative_eq!(f.eval(&[0.5, 0.5]).unwrap(), -2.0, epsilon = 1e-15);
    }

    #[test]
    fn kac_stroock_rejects_bad_input() {
        let mut rng = RngStream::new(1, 1);
        assert!(PoissonField::sample(&[1.0], 0.0, &mut rng).is_err());
        assert!(PoissonField::sample(&[1.0], -2.0, &mut rng).is_err());
        assert!(
            PoissonField::from_points(&[1.0], 1.0, vec![LatticePoint::new(vec![1.0])]).is_err()
        );
    }

    #[test]
    fn kac_stroock_empty_zeta_closed_form() {
        for d in 1..=3usize {
            let n = 3.0;
            let f = PoissonField::from_points(&vec![1.0; d], n, vec![]).unwrap();
            let x: Vec<f64> = (0..d).map(|i| 0.3 + 0.2 * i as f64).collect();
            let p = (d as f64 + 1.0) / 2.0;
            let want = n.powf(d as f64 / 2.0) * x.iter().map(|xi| xi.powf(p) / p).product::<f64>();
            assert_relative_eq!(f.zeta(&x).unwrap(), want, max_relative = 1e-13);
        }
    }

    #[test]
    fn kac_stroock_zeta_matches_fine_quadrature() {
        // independent check: brute-force midpoint sum of eval on a fine grid
        let mut rng = RngStream::new(9, 0);
        let f = PoissonField::sample(&[1.0, 1.0], 6.0, &mut rng).unwrap();
        let x = [0.8, 0.6];
        let m = 800;
        let (hx, hy) = (x[0] / m as f64, x[1] / m as f64);
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let y = [(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy];
                total += f.eval(&y).unwrap() * hx * hy;
            }
        }
        let exact = f.zeta(&x).unwrap();
        assert!(
            (exact - total).abs() < 0.02,
            "exact {exact} vs quadrature {total}"
        );
    }

    #[test]
    fn sign_counts_agree_with_direct_counting() {
        let mut rng = RngStream::new(21, 0);
        let f = PoissonField::sample(&[1.0, 2.0], 5.0, &mut rng).unwrap();
        let mp = f.measure().mass_points();
        for i in 0..mp.len() {
            let y = mp.mid(i);
            let direct = f.eval(y).unwrap().signum();
            let stored = f.measure().coefficients()[i].signum();
            assert_eq!(direct, stored, "box {i} at {y:?}");
        }
    }

    #[test]
    fn poisson_count_mean() {
        let mut rng = RngStream::new(8, 8);
        let reps = 10_000;
        let counts: Vec<f64> = (0..reps)
            .map(|_| {
                PoissonField::sample(&[2.0, 1.0], 50.0, &mut rng)
                    .unwrap()
                    .points()
                    .len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        assert!((mean - 100.0).abs() < 3.0 * (100.0f64 / reps as f64).sqrt());
        let tiny = PoissonField::sample(&[1.0], 1e-9, &mut rng).unwrap();
        assert!(tiny.points().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = RngStream::new(2, 2);
        let f =
            DonskerField::sample(&[1.0, 0.5], 3, InnovationLaw::CenteredUniform, &mut rng).unwrap();
        let back = DonskerField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let p = PoissonField::sample(&[1.0, 0.5], 7.0, &mut rng).unwrap();
        assert_eq!(PoissonField::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn determinism() {
        let a = DonskerField::sample(
            &[1.0],
            10,
            InnovationLaw::StandardNormal,
            &mut RngStream::new(3, 3),
        )
        .unwrap();
        let b = DonskerField::sample(
            &[1.0],
            10,
            InnovationLaw::StandardNormal,
            &mut RngStream::new(3, 3),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
