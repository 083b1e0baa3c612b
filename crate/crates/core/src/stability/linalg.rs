//! Nonnegative matrices: spectral radius by shifted power iteration and
//! dense linear solves.

use crate::error::{Error, Result};

/// Shift added to the diagonal before iterating. `M + I` has spectral
/// radius `rho(M) + 1` and no other eigenvalue of that modulus, so
/// periodic matrices converge too.
pub const SHIFT: f64 = 1.0;
/// Iteration cap of the power method.
pub const MAX_ITERATIONS: usize = 100_000;

/// Row-major sparse square matrix with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub size: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(size: usize) -> Self {
        SparseMatrix {
            size,
            rows: vec![Vec::new(); size],
        }
    }

    pub fn from_dense(m: &[Vec<f64>]) -> Result<Self> {
        let size = m.len();
        let mut rows = Vec::with_capacity(size);
        for (r, row) in m.iter().enumerate() {
            if row.len() != size {
                return Err(Error::NonSquare {
                    rows: size,
                    cols: row.len(),
                });
            }
            let mut sparse = Vec::new();
            for (c, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::NegativeEntry { row: r, col: c });
                }
                if v > 0.0 {
                    sparse.push((c, v));
                }
            }
            rows.push(sparse);
        }
        Ok(SparseMatrix { size, rows })
    }

    /// Adds `v` to entry `(r, c)`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        match self.rows[r].iter_mut().find(|(col, _)| *col == c) {
            Some(e) => e.1 += v,
            None => self.rows[r].push((c, v)),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows[r]
            .iter()
            .find(|(col, _)| *col == c)
            .map_or(0.0, |e| e.1)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.size]; self.size];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                d[r][c] += v;
            }
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                if c >= self.size {
                    return Err(Error::NonSquare {
                        rows: self.size,
                        cols: c + 1,
                    });
                }
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::NegativeEntry { row: r, col: c });
                }
            }
        }
        Ok(())
    }
}

/// Lower and upper bounds on the spectral radius, with a point estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
}

/// Runs the power method on `M + SHIFT * I` from the all-ones vector.
///
/// For a positive vector `v`, the smallest and largest ratios
/// `(Av)_i / v_i` enclose the spectral radius of `A`; the iteration stops
/// once they are within `tolerance` of each other, or as soon as `stop`
/// says the bracket is good enough.
pub fn spectral_bracket(
    m: &SparseMatrix,
    tolerance: f64,
    stop: impl Fn(&Spectrum) -> bool,
) -> Result<Spectrum> {
    m.validate()?;
    if m.size == 0 {
        return Ok(Spectrum {
            lower: 0.0,
            upper: 0.0,
            estimate: 0.0,
        });
    }
    let mut v = vec![1.0; m.size];
    let mut best = Spectrum {
        lower: 0.0,
        upper: f64::INFINITY,
        estimate: 0.0,
    };
    for _ in 0..MAX_ITERATIONS {
        let mut w = m.mul_vec(&v);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += SHIFT * vi;
            let ratio = *wi / vi;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        best.lower = best.lower.max(lo - SHIFT);
        best.upper = best.upper.min(hi - SHIFT);
        let norm = w.iter().copied().fold(0.0, f64::max);
        best.estimate = (norm - SHIFT).clamp(best.lower, best.upper);
        if best.upper - best.lower <= tolerance || stop(&best) {
            return Ok(best);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            // keep entries positive so the ratios stay defined
            *vi = (wi / norm).max(1e-300);
        }
    }
    Ok(best)
}

/// Spectral radius of a nonnegative square matrix, to about 1e-9.
pub fn spectral_radius(m: &SparseMatrix) -> Result<f64> {
    Ok(spectral_bracket(m, 1e-10, |_| false)?.estimate)
}

/// Solves `(I - M) x = n` by Gaussian elimination with partial pivoting.
pub fn solve_identity_minus(m: &SparseMatrix, n: &[f64]) -> Result<Vec<f64>> {
    let size = m.size;
    let mut a = m.to_dense();
    for (r, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v = -*v;
        }
        row[r] += 1.0;
    }
    let mut b = n.to_vec();
    for col in 0..size {
        let pivot = (col..size)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..size {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * y;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; size];
    for r in (0..size).rev() {
        let s: f64 = (r + 1..size).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}
