//! Signed measures that are piecewise smooth on a tensor partition of `D`.
//!
//! Every noise driver in this crate (Donsker kernels, Kac-Stroock kernels,
//! Brownian-sheet cell increments) has density `c_b * prod_i y_i^p` on each
//! box `b` of some axis-aligned partition, with `p = 0` for the piecewise
//! constant drivers and `p = (d-1)/2` for Kac-Stroock. Masses of boxes and of
//! rectangles `[lo, hi]` are therefore available in closed form.

use crate::error::{Error, Result};
use crate::tensor::{flat_index, MultiIndex};

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseMeasure {
    breaks: Vec<Vec<f64>>,
    coef: Vec<f64>,
    exponent: f64,
}

/// Flattened box midpoints with their masses.
#[derive(Clone, Debug)]
pub struct MassPoints {
    pub dim: usize,
    pub mids: Vec<f64>,
    pub masses: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl MassPoints {
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mid(&self, i: usize) -> &[f64] {
        &self.mids[i * self.dim..(i + 1) * self.dim]
    }
}

impl PiecewiseMeasure {
    pub fn new(breaks: Vec<Vec<f64>>, coef: Vec<f64>, exponent: f64) -> Result<Self> {
        if breaks.is_empty() || breaks.iter().any(|b| b.len() < 2) {
            return Err(Error::param("every axis needs at least two breakpoints"));
        }
        if breaks.iter().any(|b| b.windows(2).any(|w| w[1] < w[0])) {
            return Err(Error::param("breakpoints must be sorted"));
        }
        if exponent < 0.0 {
            return Err(Error::param("weight exponent must be non-negative"));
        }
        let expected: usize = breaks.iter().map(|b| b.len() - 1).product();
        if coef.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: coef.len(),
            });
        }
        Ok(PiecewiseMeasure {
            breaks,
            coef,
            exponent,
        })
    }

    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    pub fn breaks(&self) -> &[Vec<f64>] {
        &self.breaks
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn shape(&self) -> Vec<usize> {
        self.breaks.iter().map(|b| b.len() - 1).collect()
    }

    pub fn box_count(&self) -> usize {
        self.coef.len()
    }

    /// True when the density is constant on every box.
    pub fn is_piecewise_constant(&self) -> bool {
        self.exponent == 0.0
    }

    /// `int_a^b y^p dy`.
    pub fn axis_weight(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if self.exponent == 0.0 {
            return b - a;
        }
        let q = self.exponent + 1.0;
        (b.powf(q) - a.powf(q)) / q
    }

    pub fn box_bounds(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let lo = idx
            .iter()
            .enumerate()
            .map(|(a, &j)| self.breaks[a][j])
            .collect();
        let hi = idx
            .iter()
            .enumerate()
            .map(|(a, &j)| self.breaks[a][j + 1])
            .collect();
        (lo, hi)
    }

    pub fn box_coef(&self, idx: &[usize]) -> f64 {
        self.coef[flat_index(&self.shape(), idx)]
    }

    /// Exact mass of the rectangle `[lo, hi]`.
    pub fn mass_in_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let d = self.dim();
        let mut weights: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(d);
        for a in 0..d {
            let br = &self.breaks[a];
            let w: Vec<f64> = br
                .windows(2)
                .map(|s| self.axis_weight(s[0].max(lo[a]), s[1].min(hi[a])))
                .collect();
            let first = w.iter().position(|&v| v != 0.0);
            let last = w.iter().rposition(|&v| v != 0.0);
            match (first, last) {
                (Some(f), Some(l)) => ranges.push((f, l + 1)),
                _ => return 0.0,
            }
            weights.push(w);
        }
        let shape = self.shape();
        let sub: Vec<usize> = ranges.iter().map(|(f, l)| l - f).collect();
        let mut total = 0.0;
        let mut idx = vec![0; d];
        for rel in MultiIndex::new(&sub) {
            let mut w = 1.0;
            for a in 0..d {
                idx[a] = rel[a] + ranges[a].0;
                w *= weights[a][idx[a]];
            }
            total += self.coef[flat_index(&shape, &idx)] * w;
        }
        total
    }

    /// Mass of `[0, x]`.
    pub fn primitive(&self, x: &[f64]) -> f64 {
        let origin = vec![0.0; x.len()];
        self.mass_in_box(&origin, x)
    }

    /// Same measure on the common refinement with `extra` breakpoints per axis
    /// (points outside the current range are ignored).
    pub fn refined_with(&self, extra: &[Vec<f64>]) -> PiecewiseMeasure {
        let d = self.dim();
        let mut new_breaks = Vec::with_capacity(d);
        let mut parent: Vec<Vec<usize>> = Vec::with_capacity(d);
        for a in 0..d {
            let old = &self.breaks[a];
            let (lo, hi) = (old[0], old[old.len() - 1]);
            let mut merged: Vec<f64> = old
                .iter()
                .copied()
                .chain(
                    extra
                        .get(a)
                        .into_iter()
                        .flatten()
                        .copied()
                        .filter(|&v| v > lo && v < hi),
                )
                .collect();
            merged.sort_by(f64::total_cmp);
            merged.dedup();
            let map: Vec<usize> = merged
                .windows(2)
                .map(|s| {
                    let mid = 0.5 * (s[0] + s[1]);
                    // last old break <= mid
                    old.partition_point(|&b| b <= mid)
                        .saturating_sub(1)
                        .min(old.len() - 2)
                })
                .collect();
            new_breaks.push(merged);
            parent.push(map);
        }
        let old_shape = self.shape();
        let new_shape: Vec<usize> = new_breaks.iter().map(|b| b.len() - 1).collect();
        let mut old_idx = vec![0; d];
        let coef = MultiIndex::new(&new_shape)
            .map(|idx| {
                for a in 0..d {
                    old_idx[a] = parent[a][idx[a]];
                }
                self.coef[flat_index(&old_shape, &old_idx)]
            })
            .collect();
        PiecewiseMeasure {
            breaks: new_breaks,
            coef,
            exponent: self.exponent,
        }
    }

    /// Midpoints, masses and volumes of every box.
    pub fn mass_points(&self) -> MassPoints {
        let d = self.dim();
        let shape = self.shape();
        let axis_w: Vec<Vec<f64>> = self
            .breaks
            .iter()
            .map(|b| b.windows(2).map(|s| self.axis_weight(s[0], s[1])).collect())
            .collect();
        let axis_mid: Vec<Vec<f64>> = self
            .breaks
            .iter()
            .map(|b| b.windows(2).map(|s| 0.5 * (s[0] + s[1])).collect())
            .collect();
        let axis_len: Vec<Vec<f64>> = self
            .breaks
            .iter()
            .map(|b| b.windows(2).map(|s| s[1] - s[0]).collect())
            .collect();
        let n = self.box_count();
        let mut mids = Vec::with_capacity(n * d);
        let mut masses = Vec::with_capacity(n);
        let mut volumes = Vec::with_capacity(n);
        for (flat, idx) in MultiIndex::new(&shape).enumerate() {
            let mut w = 1.0;
            let mut v = 1.0;
            for a in 0..d {
                mids.push(axis_mid[a][idx[a]]);
                w *= axis_w[a][idx[a]];
                v *= axis_len[a][idx[a]];
            }
            masses.push(self.coef[flat] * w);
            volumes.push(v);
        }
        MassPoints {
            dim: d,
            mids,
            masses,
            volumes,
        }
    }

    /// Total mass over the whole partition.
    pub fn total_mass(&self) -> f64 {
        self.mass_points().masses.iter().sum()
    }
}
