//! Small dense symmetric linear algebra on `nalgebra` storage.
//!
//! Dimensions here are the parameter count `d` (single digits to low tens), so a
//! hand-written Cholesky with an explicit singularity threshold is both fast and
//! lets callers tell "numerically singular" apart from "barely positive definite".

use nalgebra::{DMatrix, DVector};

/// A pivot smaller than this fraction of the largest diagonal entry counts as zero.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
}

impl SpdFactor {
    /// Factorizes `a`, reading only its lower triangle. Returns `None` when any pivot
    /// falls below `PIVOT_RTOL` times the largest diagonal entry, or is not finite.
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let d = a.nrows();
        assert_eq!(d, a.ncols(), "SpdFactor needs a square matrix");
        let scale = (0..d).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let floor = PIVOT_RTOL * scale;
        let mut l = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let mut pivot = a[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if !(pivot > floor) || !pivot.is_finite() {
                return None;
            }
            let ljj = pivot.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..d {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Some(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let d = self.dim();
        let l = &self.lower;
        for i in 0..d {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }

    /// Explicit symmetric inverse `A⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut inv = DMatrix::<f64>::zeros(d, d);
        let mut col = vec![0.0; d];
        for j in 0..d {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..d {
                inv[(i, j)] = col[i];
            }
        }
        symmetrize(&mut inv);
        inv
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `B⁻¹ M B⁻¹` given `B⁻¹`, returned exactly symmetric.
pub fn sandwich(bread_inv: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = bread_inv * meat * bread_inv;
    symmetrize(&mut out);
    out
}

/// `vᵀ A v`.
pub fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v))
}

/// Adds `weight · x xᵀ` into the lower triangle of `acc`.
#[inline]
pub(crate) fn rank_one_lower(acc: &mut DMatrix<f64>, x: &[f64], weight: f64) {
    let d = x.len();
    for j in 0..d {
        let wx = weight * x[j];
        for i in j..d {
            acc[(i, j)] += wx * x[i];
        }
    }
}

/// Copies the lower triangle of `m` into its upper triangle.
pub(crate) fn mirror_lower(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for j in 0..d {
        for i in (j + 1)..d {
            m[(j, i)] = m[(i, j)];
        }
    }
}
