//! Row-major multi-index helpers and axis-wise linear maps on dense tensors.

/// Iterates all multi-indices of a row-major shape, last axis fastest.
#[derive(Clone, Debug)]
pub struct MultiIndex {
    shape: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl MultiIndex {
    pub fn new(shape: &[usize]) -> Self {
        MultiIndex {
            shape: shape.to_vec(),
            current: vec![0; shape.len()],
            done: shape.contains(&0),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut axis = self.shape.len();
        loop {
            if axis == 0 {
                self.done = true;
                break;
            }
            axis -= 1;
            self.current[axis] += 1;
            if self.current[axis] < self.shape[axis] {
                break;
            }
            self.current[axis] = 0;
        }
        Some(out)
    }
}

pub fn flat_index(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &s)| acc * s + i)
}

pub fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}

/// Applies `matrix` (rows x cols, row-major, cols == shape[axis]) along `axis`.
/// Returns the new tensor and its shape (shape[axis] replaced by rows).
pub fn apply_along_axis(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    matrix: &[f64],
    rows: usize,
) -> (Vec<f64>, Vec<usize>) {
    let cols = shape[axis];
    debug_assert_eq!(matrix.len(), rows * cols);
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        let src = &data[o * cols * inner..(o + 1) * cols * inner];
        let dst = &mut out[o * rows * inner..(o + 1) * rows * inner];
        for r in 0..rows {
            let row = &matrix[r * cols..(r + 1) * cols];
            let dst_row = &mut dst[r * inner..(r + 1) * inner];
            for (c, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let src_row = &src[c * inner..(c + 1) * inner];
                for (d, &s) in dst_row.iter_mut().zip(src_row) {
                    *d += m * s;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = rows;
    (out, new_shape)
}

/// Applies one matrix per axis: `mats[a]` has `rows[a]` rows and `shape[a]` columns.
pub fn apply_separable(
    data: &[f64],
    shape: &[usize],
    mats: &[&[f64]],
    rows: &[usize],
) -> (Vec<f64>, Vec<usize>) {
    let mut cur = data.to_vec();
    let mut cur_shape = shape.to_vec();
    for axis in 0..shape.len() {
        let (next, next_shape) = apply_along_axis(&cur, &cur_shape, axis, mats[axis], rows[axis]);
        cur = next;
        cur_shape = next_shape;
    }
    (cur, cur_shape)
}

/// `sin(pi * t)` with exact zeros at integer `t`.
pub fn sin_pi(t: f64) -> f64 {
    let r = t.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r < 0.5 {
        (std::f64::consts::PI * r).sin()
    } else if r <= 1.5 {
        (std::f64::consts::PI * (1.0 - r)).sin()
    } else {
        (std::f64::consts::PI * (r - 2.0)).sin()
    }
}

/// `cos(pi * t)` with exact values at integer `t`.
pub fn cos_pi(t: f64) -> f64 {
    let r = t.rem_euclid(2.0);
    if r == 0.0 {
        return 1.0;
    }
    if r == 1.0 {
        return -1.0;
    }
    sin_pi(t + 0.5)
}
