//! Direct simulation of the Brownian sheet through independent Gaussian cell
//! increments, and Wiener integrals against it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::measure::PiecewiseMeasure;
use crate::rng::RngStream;
use crate::tensor::MultiIndex;

/// One realization of the sheet on a grid: `W(cell) ~ N(0, |cell|)`, i.i.d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetSample {
    pub grid: GridSpec,
    pub increments: Vec<f64>,
}

impl SheetSample {
    pub fn sample(grid: &GridSpec, rng: &mut RngStream) -> Self {
        let sd = grid.cell_volume().sqrt();
        let increments = (0..grid.cell_count())
            .map(|_| sd * rng.standard_normal())
            .collect();
        SheetSample {
            grid: grid.clone(),
            increments,
        }
    }

    pub fn from_increments(grid: &GridSpec, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch {
                expected: grid.cell_count(),
                got: increments.len(),
            });
        }
        Ok(SheetSample {
            grid: grid.clone(),
            increments,
        })
    }

    /// `W(x)` at every node: the sum of increments of cells inside `[0, x]`.
    pub fn node_values(&self) -> GridField {
        let shape = self.grid.node_shape();
        let mut values = vec![0.0; self.grid.node_count()];
        let cells = self.grid.cells().to_vec();
        // scatter each cell increment to its upper corner, then prefix-sum
        for (c, idx) in MultiIndex::new(&cells).enumerate() {
            let upper: Vec<usize> = idx.iter().map(|v| v + 1).collect();
            values[self.grid.node_flat(&upper)] = self.increments[c];
        }
        for a in 0..shape.len() {
            let stride: usize = shape[a + 1..].iter().product();
            for flat in 0..values.len() {
                if !(flat / stride).is_multiple_of(shape[a]) {
                    values[flat] += values[flat - stride];
                }
            }
        }
        GridField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `W(x)` at a single grid node.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        let idx = self.grid.node_index(x)?;
        let sub: Vec<usize> = idx.clone();
        let cells = self.grid.cells();
        Ok(MultiIndex::new(&sub)
            .map(|c| self.increments[crate::tensor::flat_index(cells, &c)])
            .sum())
    }

    /// The white-noise measure `W(dy)` with density `increment / |cell|` per cell.
    pub fn measure(&self) -> PiecewiseMeasure {
        let vol = self.grid.cell_volume();
        let breaks = (0..self.grid.dim())
            .map(|a| self.grid.axis_nodes(a))
            .collect();
        PiecewiseMeasure::new(
            breaks,
            self.increments.iter().map(|w| w / vol).collect(),
            0.0,
        )
        .expect("grid partition is valid")
    }
}

/// Discrete Wiener integral `sum_cells f_c * W(cell)`.
pub fn wiener_integral(fvals: &[f64], sheet: &SheetSample) -> Result<f64> {
    if fvals.len() != sheet.increments.len() {
        return Err(Error::ShapeMismatch {
            expected: sheet.increments.len(),
            got: fvals.len(),
        });
    }
    Ok(fvals
        .iter()
        .zip(&sheet.increments)
        .map(|(f, w)| f * w)
        .sum())
}

/// `f` evaluated at every cell center of the grid, row-major.
pub fn cell_center_values(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    MultiIndex::new(grid.cells())
        .map(|idx| f(&grid.cell_center(&idx)))
        .collect()
}

/// `Cov(W(x), W(z)) = prod_i min(x_i, z_i)`.
pub fn sheet_covariance(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a.min(*b)).product()
}
