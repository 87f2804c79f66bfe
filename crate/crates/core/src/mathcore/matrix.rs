//! Symmetric positive-definite matrices with a cached Cholesky factor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Squared pivots below this fraction of the largest diagonal entry are rejected.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `m` is read. Fails with the index of the first
/// pivot whose squared value is not above `PIVOT_TOL * max(diag(m))`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.ncols(),
        });
    }
    let max_diag = (0..d).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    let floor = PIVOT_TOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let d = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..d {
            let mut s = 0.0;
            for k in j..i {
                s -= l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = s / l[(i, i)];
        }
    }
    inv
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl SpdMatrix {
    /// Validates symmetry (relative `SYMMETRY_TOL`) and positive definiteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let d = entries.nrows();
        if entries.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: entries.ncols(),
            });
        }
        if d == 0 {
            return Err(Error::InvalidParameter("matrix must be at least 1x1".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                let diff = (entries[(i, j)] - entries[(j, i)]).abs();
                if diff > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        // store the exactly symmetric version
        let entries = symmetrize(entries);
        Self::from_symmetric_unchecked(entries)
    }

    /// Averages `m` with its transpose before factorizing. For matrices that are
    /// symmetric in exact arithmetic but built from floating-point products.
    pub fn from_symmetrized(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Self::from_symmetric_unchecked(symmetrize(m))
    }

    fn from_symmetric_unchecked(entries: DMatrix<f64>) -> Result<Self> {
        let chol = cholesky(&entries)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { entries, chol, log_det })
    }

    pub fn identity(d: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(d, d)).expect("identity is SPD")
    }

    /// Diagonal matrix; every entry must be positive.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular `L` with `L Lᵀ = self`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.entries[(i, j)]).collect()).collect()
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        let linv = invert_lower(&self.chol);
        SpdMatrix::from_symmetrized(linv.transpose() * linv)
    }

    /// `c * self` for positive `c`.
    pub fn scaled(&self, c: f64) -> Result<SpdMatrix> {
        SpdMatrix::from_symmetrized(&self.entries * c)
    }

    /// `C · self · Cᵀ`.
    pub fn congruence(&self, c: &DMatrix<f64>) -> Result<SpdMatrix> {
        if c.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: c.ncols(),
            });
        }
        SpdMatrix::from_symmetrized(c * &self.entries * c.transpose())
    }

    /// Squared Mahalanobis norm `vᵀ self⁻¹ v`, by forward substitution.
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(v.len(), d);
        let l = &self.chol;
        let mut buf = [0.0_f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut buf[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = v[i];
            for k in 0..i {
                s -= l[(i, k)] * z[k];
            }
            z[i] = s / l[(i, i)];
            acc += z[i] * z[i];
        }
        acc
    }

    /// `self⁻¹ v` via two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = &self.chol;
        let d = self.dim();
        let mut y = v.clone();
        for i in 0..d {
            for k in 0..i {
                y[i] -= l[(i, k)] * y[k];
            }
            y[i] /= l[(i, i)];
        }
        for i in (0..d).rev() {
            for k in (i + 1)..d {
                y[i] -= l[(k, i)] * y[k];
            }
            y[i] /= l[(i, i)];
        }
        y
    }

    /// Maximum absolute elementwise difference relative to the largest entry of `self`.
    pub fn relative_diff(&self, other: &SpdMatrix) -> f64 {
        let scale = self.entries.amax().max(f64::MIN_POSITIVE);
        (&self.entries - &other.entries).amax() / scale
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SpdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    for row in rows {
        if row.len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: row.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}
