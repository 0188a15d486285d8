//! Rectangular parameter domain `D = [0, T]`, its uniform grids and the
//! rectangle-increment operator.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{flat_index, MultiIndex};

/// Relative tolerance used when snapping a coordinate to a grid node.
const NODE_TOL: f64 = 1e-10;

/// Uniform grid over `[0, T_1] x ... x [0, T_d]` with `N_i` cells on axis `i`.
///
/// Node `j` on axis `i` sits at `j * T_i / N_i`; coordinates are always
/// recomputed from the integer index so node positions are bit-stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    lengths: Vec<f64>,
    cells: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    d: usize,
    #[serde(rename = "T")]
    t: Vec<f64>,
    #[serde(rename = "N")]
    n: Vec<usize>,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;

    fn try_from(r: GridSpecRepr) -> Result<Self> {
        if r.t.len() != r.d {
            return Err(Error::DimensionMismatch {
                expected: r.d,
                got: r.t.len(),
            });
        }
        GridSpec::new(r.t, r.n)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr {
            d: g.dim(),
            t: g.lengths,
            n: g.cells,
        }
    }
}

impl GridSpec {
    pub fn new(lengths: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if lengths.len() != cells.len() {
            return Err(Error::DimensionMismatch {
                expected: lengths.len(),
                got: cells.len(),
            });
        }
        if let Some(t) = lengths.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "axis length {t} must be positive"
            )));
        }
        if cells.contains(&0) {
            return Err(Error::InvalidGrid(
                "every axis needs at least one cell".into(),
            ));
        }
        Ok(GridSpec { lengths, cells })
    }

    /// Unit cube `[0,1]^d` with `n` cells per axis.
    pub fn unit(d: usize, n: usize) -> Result<Self> {
        GridSpec::new(vec![1.0; d], vec![n; d])
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid spec serializes")
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Shape of the node array, `N_i + 1` per axis.
    pub fn node_shape(&self) -> Vec<usize> {
        self.cells.iter().map(|n| n + 1).collect()
    }

    pub fn node_count(&self) -> usize {
        self.node_shape().iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn node_coord(&self, axis: usize, j: usize) -> f64 {
        if j == self.cells[axis] {
            self.lengths[axis]
        } else {
            j as f64 * self.lengths[axis] / self.cells[axis] as f64
        }
    }

    /// Sorted node coordinates along one axis.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..=self.cells[axis])
            .map(|j| self.node_coord(axis, j))
            .collect()
    }

    pub fn node_point(&self, idx: &[usize]) -> LatticePoint {
        LatticePoint(
            idx.iter()
                .enumerate()
                .map(|(a, &j)| self.node_coord(a, j))
                .collect(),
        )
    }

    pub fn node_flat(&self, idx: &[usize]) -> usize {
        flat_index(&self.node_shape(), idx)
    }

    /// All nodes in row-major order (last axis fastest).
    pub fn nodes(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        MultiIndex::new(&self.node_shape()).map(move |idx| self.node_point(&idx))
    }

    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &j)| (j as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lengths)
                .all(|(&xi, &t)| (0.0..=t).contains(&xi))
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        Ok(())
    }

    /// Multi-index of the node at `x`, or `OffGrid`.
    pub fn node_index(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_point(x)?;
        x.iter()
            .enumerate()
            .map(|(a, &xi)| {
                let scaled = xi * self.cells[a] as f64 / self.lengths[a];
                let j = scaled.round();
                if (scaled - j).abs() <= NODE_TOL * self.cells[a].max(1) as f64 {
                    Ok(j as usize)
                } else {
                    Err(Error::OffGrid(x.to_vec()))
                }
            })
            .collect()
    }

    /// Cell containing `y`: cells are half-open `[node, next)` except the
    /// last one per axis, which is closed at `T_i`.
    pub fn cell_of(&self, y: &[f64]) -> Result<Vec<usize>> {
        self.check_point(y)?;
        Ok(y.iter()
            .enumerate()
            .map(|(a, &yi)| {
                let j = (yi * self.cells[a] as f64 / self.lengths[a]).floor() as usize;
                j.min(self.cells[a] - 1)
            })
            .collect())
    }

    /// Same domain with every cell split into `r` per axis.
    pub fn refined(&self, r: usize) -> Result<GridSpec> {
        if r == 0 {
            return Err(Error::param("refinement factor must be >= 1"));
        }
        GridSpec::new(
            self.lengths.clone(),
            self.cells.iter().map(|n| n * r).collect(),
        )
    }

    /// True when the domain is the unit cube.
    pub fn is_unit_cube(&self) -> bool {
        self.lengths.iter().all(|&t| t == 1.0)
    }
}

/// A point of `D`, compared under the componentwise partial order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<f64>);

impl LatticePoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        LatticePoint(coords.into())
    }

    pub fn origin(d: usize) -> Self {
        LatticePoint(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Product of coordinates, the volume of `[0, x]`.
    pub fn box_volume(&self) -> f64 {
        self.0.iter().product()
    }
}

impl Deref for LatticePoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for LatticePoint {
    fn from(v: Vec<f64>) -> Self {
        LatticePoint(v)
    }
}

/// Componentwise order: `x <= z` iff `x_i <= z_i` for all `i`.
pub fn leq(x: &[f64], z: &[f64]) -> Result<bool> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(x.iter().zip(z).all(|(a, b)| a <= b))
}

/// Real values on every node of a grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count();
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        GridField {
            values: vec![0.0; grid.node_count()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        GridField {
            values: grid.nodes().map(|p| f(&p)).collect(),
            grid: grid.clone(),
        }
    }

    pub fn at_index(&self, idx: &[usize]) -> f64 {
        self.values[self.grid.node_flat(idx)]
    }

    /// Value at the node located at `x`.
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        let idx = self.grid.node_index(x)?;
        Ok(self.at_index(&idx))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute value over nodes on the boundary of `D`.
    pub fn boundary_sup(&self) -> f64 {
        let shape = self.grid.node_shape();
        MultiIndex::new(&shape)
            .filter(|idx| idx.iter().zip(&shape).any(|(&j, &s)| j == 0 || j + 1 == s))
            .map(|idx| self.at_index(&idx).abs())
            .fold(0.0, f64::max)
    }

    pub fn ensure_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.ensure_same_grid(other)?;
        Ok(GridField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sup-norm distance to another field on the same grid.
    pub fn sup_distance(&self, other: &GridField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Writes `x_1, ..., x_d, value` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.grid.dim()).map(|i| format!("x{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (p, v) in self.grid.nodes().zip(&self.values) {
            let mut row: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Increment of the field over the box `[x, z]`.
    pub fn rectangle_increment(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        rectangle_increment(self, x, z)
    }
}

/// Alternating sum `sum_{eps in {0,1}^d} (-1)^{d - |eps|} F(x + eps * (z - x))`.
pub fn rectangle_increment(field: &GridField, x: &[f64], z: &[f64]) -> Result<f64> {
    if !leq(x, z)? {
        return Err(Error::NotOrdered {
            x: x.to_vec(),
            z: z.to_vec(),
        });
    }
    let lo = field.grid.node_index(x)?;
    let hi = field.grid.node_index(z)?;
    Ok(alternating_corner_sum(lo.len(), |eps| {
        let idx: Vec<usize> = (0..lo.len())
            .map(|a| if eps[a] { hi[a] } else { lo[a] })
            .collect();
        field.at_index(&idx)
    }))
}

/// `sum_{eps} (-1)^{d - |eps|} value(eps)` over the `2^d` corners.
pub fn alternating_corner_sum(d: usize, value: impl Fn(&[bool]) -> f64) -> f64 {
    let mut total = 0.0;
    let mut eps = vec![false; d];
    for mask in 0u32..(1u32 << d) {
        let mut ones = 0;
        for (a, e) in eps.iter_mut().enumerate() {
            *e = mask & (1 << a) != 0;
            ones += *e as usize;
        }
        let sign = if (d - ones).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += sign * value(&eps);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid2() -> GridSpec {
        GridSpec::new(vec![1.0, 2.0], vec![4, 5]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(vec![1.0, -1.0], vec![2, 2]).is_err());
        assert!(GridSpec::new(vec![1.0], vec![0]).is_err());
        assert!(GridSpec::new(vec![1.0, 1.0], vec![2]).is_err());
        assert!(GridSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn leq_examples() {
        assert!(leq(&[0.1, 0.2], &[0.1, 0.5]).unwrap());
        assert!(!leq(&[0.3, 0.2], &[0.1, 0.5]).unwrap());
        assert!(leq(&[0.3, 0.2], &[0.3, 0.2]).unwrap());
        assert!(matches!(
            leq(&[0.1], &[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn node_coordinates_come_from_indices() {
        let g = grid2();
        assert_eq!(g.node_coord(0, 4), 1.0);
        assert_eq!(g.node_coord(1, 5), 2.0);
        assert_eq!(g.node_coord(1, 3), 3.0 * 2.0 / 5.0);
        assert_eq!(g.node_count(), 30);
        assert_eq!(g.node_index(&[0.75, 0.8]).unwrap(), vec![3, 2]);
        assert!(matches!(g.node_index(&[0.7, 0.8]), Err(Error::OffGrid(_))));
        assert!(matches!(
            g.node_index(&[1.5, 0.8]),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn cell_lookup_is_half_open_except_last() {
        let g = GridSpec::new(vec![1.0], vec![4]).unwrap();
        assert_eq!(g.cell_of(&[0.0]).unwrap(), vec![0]);
        assert_eq!(g.cell_of(&[0.25]).unwrap(), vec![1]);
        assert_eq!(g.cell_of(&[0.2499]).unwrap(), vec![0]);
        assert_eq!(g.cell_of(&[1.0]).unwrap(), vec![3]);
    }

    #[test]
    fn toml_round_trip_uses_d_t_n_keys() {
        let g = grid2();
        let text = g.to_toml();
        assert!(text.contains("d = 2"));
        assert!(text.contains("T = "));
        assert!(text.contains("N = "));
        assert_eq!(GridSpec::from_toml(&text).unwrap(), g);
        assert!(GridSpec::from_toml("d = 3\nT = [1.0]\nN = [2]").is_err());
    }

    #[test]
    fn increment_one_dimensional() {
        let g = GridSpec::new(vec![1.0], vec![4]).unwrap();
        let f = GridField::from_fn(&g, |x| x[0] * x[0]);
        let inc = f.rectangle_increment(&[0.25], &[0.75]).unwrap();
        assert!((inc - (0.5625 - 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn increment_two_dimensional_formula() {
        let g = grid2();
        let f = GridField::from_fn(&g, |x| (3.0 * x[0]).sin() + x[0] * x[1] * x[1]);
        let (x, z) = ([0.25, 0.4], [0.75, 1.6]);
        let want = f.at(&[z[0], z[1]]).unwrap()
            - f.at(&[x[0], z[1]]).unwrap()
            - f.at(&[z[0], x[1]]).unwrap()
            + f.at(&[x[0], x[1]]).unwrap();
        assert_eq!(f.rectangle_increment(&x, &z).unwrap(), want);
    }

    #[test]
    fn increment_of_product_is_product_of_sides() {
        let g = GridSpec::new(vec![1.0, 1.0, 1.0], vec![4, 4, 4]).unwrap();
        let f = GridField::from_fn(&g, |x| x.iter().product());
        let inc = f
            .rectangle_increment(&[0.25, 0.0, 0.5], &[0.75, 1.0, 0.75])
            .unwrap();
        assert!((inc - 0.5 * 1.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn increment_errors() {
        let g = grid2();
        let f = GridField::zeros(&g);
        assert!(matches!(
            f.rectangle_increment(&[0.5, 0.4], &[0.25, 0.8]),
            Err(Error::NotOrdered { .. })
        ));
        assert!(matches!(
            f.rectangle_increment(&[0.1, 0.4], &[0.25, 0.8]),
            Err(Error::OffGrid(_))
        ));
    }

    proptest! {
        #[test]
        fn increment_is_additive_over_splits(
            values in proptest::collection::vec(-5.0f64..5.0, 36),
            a in 0usize..5, b in 0usize..5, c in 0usize..5, e in 0usize..5,
            axis in 0usize..2,
        ) {
            let g = GridSpec::unit(2, 5).unwrap();
            let f = GridField::new(g.clone(), values).unwrap();
            let (lo0, hi0) = (a.min(b), a.max(b) + 1);
            let (lo1, hi1) = (c.min(e), c.max(e) + 1);
            let mut lo = [lo0, lo1];
            let hi = [hi0, hi1];
            let x = g.node_point(&lo);
            let z = g.node_point(&hi);
            let whole = f.rectangle_increment(&x, &z).unwrap();
            // split at the midpoint node along `axis`
            let mid = (lo[axis] + hi[axis]) / 2;
            let mut hi_left = hi;
            hi_left[axis] = mid;
            let left = f.rectangle_increment(&x, &g.node_point(&hi_left)).unwrap();
            lo[axis] = mid;
            let right = f.rectangle_increment(&g.node_point(&lo), &z).unwrap();
            prop_assert!((whole - left - right).abs() < 1e-12);
        }

        #[test]
        fn additive_fields_have_zero_increment(
            g0 in proptest::collection::vec(-5.0f64..5.0, 5),
            g1 in proptest::collection::vec(-5.0f64..5.0, 5),
            g2 in proptest::collection::vec(-5.0f64..5.0, 5),
            lo in proptest::collection::vec(0usize..2, 3),
            hi in proptest::collection::vec(2usize..5, 3),
        ) {
            let g = GridSpec::unit(3, 4).unwrap();
            let shape = g.node_shape();
            let values: Vec<f64> = MultiIndex::new(&shape)
                .map(|idx| g0[idx[0]] + g1[idx[1]] + g2[idx[2]])
                .collect();
            let f = GridField::new(g.clone(), values).unwrap();
            let inc = f.rectangle_increment(&g.node_point(&lo), &g.node_point(&hi)).unwrap();
            prop_assert!(inc.abs() < 1e-12);
        }
    }
}
