//! Densities and samplers used by the mixture model.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};

use super::matrix::{cholesky, invert_lower, SpdMatrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `N_d(mean, cov)` at `x`.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &SpdMatrix) -> Result<f64> {
    let d = cov.dim();
    for len in [x.len(), mean.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: len,
            });
        }
    }
    Ok(mvn_logpdf_unchecked(x, mean, cov))
}

/// Same as [`mvn_logpdf`] without dimension checks; used in the sampler's inner loop.
#[inline]
pub fn mvn_logpdf_unchecked(x: &[f64], mean: &[f64], cov: &SpdMatrix) -> f64 {
    let d = cov.dim();
    let mut diff = [0.0_f64; 16];
    let q = if d <= 16 {
        for k in 0..d {
            diff[k] = x[k] - mean[k];
        }
        cov.inv_quad_form(&diff[..d])
    } else {
        let v: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        cov.inv_quad_form(&v)
    };
    -0.5 * (d as f64 * LN_2PI + cov.log_det() + q)
}

pub fn standard_normals(d: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// `mean + L z` with `L = chol(cov)`.
pub fn mvn_from_normals(mean: &DVector<f64>, cov: &SpdMatrix, z: &DVector<f64>) -> DVector<f64> {
    mean + cov.chol() * z
}

/// Draws from `N_d(mean, cov)` as `mean + chol(cov) · z`, `z` standard normal.
pub fn sample_mvn(mean: &DVector<f64>, cov: &SpdMatrix, rng: &mut RngStream) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            found: mean.len(),
        });
    }
    let z = standard_normals(cov.dim(), rng);
    Ok(mvn_from_normals(mean, cov, &z))
}

/// Chi-square laws for the Bartlett diagonal, `χ²(df − i)` for row `i`.
fn bartlett_laws(df: f64, d: usize) -> Result<Vec<ChiSquared<f64>>> {
    (0..d)
        .map(|i| {
            ChiSquared::new(df - i as f64)
                .map_err(|e| Error::InvalidParameter(format!("chi-square df {}: {e}", df - i as f64)))
        })
        .collect()
}

/// Fills the row-major lower-triangular Bartlett factor `A` with `A_ii² ~ χ²(df − i)`
/// and standard-normal entries below the diagonal. Row by row: the chi-square
/// for the diagonal first, then the normals left to right.
fn bartlett_into(laws: &[ChiSquared<f64>], rng: &mut RngStream, a: &mut [f64]) {
    let d = laws.len();
    a.fill(0.0);
    for i in 0..d {
        a[i * d + i] = laws[i].sample(rng).sqrt();
        for j in 0..i {
            a[i * d + j] = StandardNormal.sample(rng);
        }
    }
}

/// `out = L A` for row-major lower-triangular `L` and `A`.
pub(crate) fn lower_mul(l: &[f64], a: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = if j > i {
                0.0
            } else {
                (j..=i).map(|k| l[i * d + k] * a[k * d + j]).sum()
            };
        }
    }
}

fn lower_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            v[i * d + j] = m[(i, j)];
        }
    }
    v
}

fn check_df(df: f64, d: usize) -> Result<()> {
    if !(df > d as f64 - 1.0) || !df.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom {df} must exceed dimension - 1 = {}",
            d as f64 - 1.0
        )));
    }
    Ok(())
}

/// Wishart draw `L A Aᵀ Lᵀ` with `L = chol(scale)`.
pub fn sample_wishart(df: f64, scale: &SpdMatrix, rng: &mut RngStream) -> Result<SpdMatrix> {
    let d = scale.dim();
    check_df(df, d)?;
    let laws = bartlett_laws(df, d)?;
    let mut a = vec![0.0; d * d];
    bartlett_into(&laws, rng, &mut a);
    let mut t = vec![0.0; d * d];
    lower_mul(&lower_row_major(scale.chol()), &a, d, &mut t);
    let t = DMatrix::from_row_slice(d, d, &t);
    SpdMatrix::from_symmetrized(&t * t.transpose())
}

/// Inverse-Wishart sampler with the inverse scale factorized once.
///
/// `Σ ~ IW(df, scale)` is drawn as the inverse of `W ~ Wishart(df, scale⁻¹)`,
/// i.e. `Σ = T⁻ᵀ T⁻¹` with `T = L A` and `L = chol(scale⁻¹)`. `E[Σ] = scale / (df − d − 1)`.
#[derive(Debug, Clone)]
pub struct InverseWishart {
    df: f64,
    dim: usize,
    inv_scale_chol: Vec<f64>,
    laws: Vec<ChiSquared<f64>>,
}

impl InverseWishart {
    pub fn new(df: f64, scale: &SpdMatrix) -> Result<Self> {
        let d = scale.dim();
        check_df(df, d)?;
        let linv = invert_lower(scale.chol());
        let inv_scale = linv.transpose() * linv;
        let inv_scale = (&inv_scale + inv_scale.transpose()) * 0.5;
        Ok(Self {
            df,
            dim: d,
            inv_scale_chol: lower_row_major(&cholesky(&inv_scale)?),
            laws: bartlett_laws(df, d)?,
        })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws the precision factor `T` (row-major, lower triangular) so that
    /// `Σ⁻¹ = T Tᵀ`. `a` is scratch space of length `d²`.
    pub(crate) fn sample_factor(&self, rng: &mut RngStream, a: &mut [f64], t: &mut [f64]) {
        bartlett_into(&self.laws, rng, a);
        lower_mul(&self.inv_scale_chol, a, self.dim, t);
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<SpdMatrix> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        let mut t = vec![0.0; d * d];
        self.sample_factor(rng, &mut a, &mut t);
        sigma_from_factor(&t, d)
    }
}

/// `Σ = T⁻ᵀ T⁻¹` from a row-major lower-triangular precision factor.
pub(crate) fn sigma_from_factor(t: &[f64], d: usize) -> Result<SpdMatrix> {
    let tinv = invert_lower(&DMatrix::from_row_slice(d, d, t));
    SpdMatrix::from_symmetrized(tinv.transpose() * tinv)
}

pub fn sample_inv_wishart(df: f64, scale: &SpdMatrix, rng: &mut RngStream) -> Result<SpdMatrix> {
    InverseWishart::new(df, scale)?.sample(rng)
}

/// Gamma draw with the given shape and rate (mean `shape / rate`).
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    let g =
        Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

pub fn sample_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    let beta = Beta::new(a, b).map_err(|e| Error::InvalidParameter(format!("beta({a}, {b}): {e}")))?;
    Ok(beta.sample(rng))
}

/// `log Σ exp(v)`, stable for large magnitudes. Needs at least one finite entry.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NoFiniteWeight);
    }
    Ok(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Inverse-CDF draw from unnormalized log-weights given a uniform `u ∈ [0, 1)`.
///
/// The result depends only on the normalized weights and `u`.
pub fn categorical_sample(log_weights: &[f64], u: f64) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NoFiniteWeight);
    }
    let mut buf = [0.0_f64; 64];
    let mut heap;
    let w: &mut [f64] = if log_weights.len() <= 64 {
        &mut buf[..log_weights.len()]
    } else {
        heap = vec![0.0; log_weights.len()];
        &mut heap
    };
    let mut total = 0.0;
    for (slot, &lw) in w.iter_mut().zip(log_weights) {
        *slot = (lw - max).exp();
        total += *slot;
    }
    let target = u * total;
    let mut cum = 0.0;
    let mut last = 0;
    for (k, &wk) in w.iter().enumerate() {
        if wk > 0.0 {
            cum += wk;
            last = k;
            if cum > target {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

/// Log density of `N(mean, var)` in one dimension.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logpdf_at_mean_and_scalar() {
        let i2 = SpdMatrix::identity(2);
        let v = mvn_logpdf(&[0.3, -1.0], &[0.3, -1.0], &i2).unwrap();
        assert_relative_eq!(v, (1.0 / (2.0 * PI)).ln(), epsilon = 1e-14);
        assert_relative_eq!(v, -1.837_877_1, epsilon = 1e-7);
        let v = mvn_logpdf(&[1.0], &[0.0], &SpdMatrix::identity(1)).unwrap();
        assert_relative_eq!(v, -0.5 - 0.5 * (2.0 * PI).ln(), epsilon = 1e-14);
    }

    #[test]
    fn logpdf_dimension_mismatch() {
        let i2 = SpdMatrix::identity(2);
        assert!(matches!(
            mvn_logpdf(&[0.0], &[0.0, 0.0], &i2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logpdf_matches_explicit_formula() {
        let cov = SpdMatrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.5]]).unwrap();
        let x = [1.0, -0.5];
        let m = [0.2, 0.1];
        let inv = cov.entries().clone().try_inverse().unwrap();
        let dv = DVector::from_vec(vec![x[0] - m[0], x[1] - m[1]]);
        let q = (dv.transpose() * inv * &dv)[(0, 0)];
        let expected = -0.5 * (2.0 * LN_2PI + cov.entries().determinant().ln() + q);
        assert_relative_eq!(mvn_logpdf(&x, &m, &cov).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn sampling_with_recorded_normals() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let i2 = SpdMatrix::identity(2);
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 0);
        let x = sample_mvn(&mean, &i2, &mut a).unwrap();
        let z = standard_normals(2, &mut b);
        assert_eq!(x, &mean + &z);
    }

    #[test]
    fn categorical_symmetric_and_shift_invariant() {
        assert_eq!(categorical_sample(&[0.0, 0.0], 0.25).unwrap(), 0);
        assert_eq!(categorical_sample(&[0.0, 0.0], 0.75).unwrap(), 1);
        let lw = [-1.3, 0.2, -0.7, 2.0];
        for k in 0..200 {
            let u = k as f64 / 200.0;
            let shifted: Vec<f64> = lw.iter().map(|v| v + 1000.0).collect();
            assert_eq!(
                categorical_sample(&lw, u).unwrap(),
                categorical_sample(&shifted, u).unwrap()
            );
        }
    }

    #[test]
    fn categorical_overwhelming_weight() {
        let w0 = normal_logpdf(0.0, 0.0, 1.0);
        let w1 = normal_logpdf(0.0, 10.0, 1.0);
        assert_relative_eq!(w0.exp(), 0.39894, epsilon = 1e-5);
        assert!((w1.exp() - 7.69e-23).abs() < 1e-25);
        for u in [0.0, 0.5, 0.9, 1.0 - 1e-12] {
            assert_eq!(categorical_sample(&[w0, w1], u).unwrap(), 0);
        }
    }

    #[test]
    fn categorical_skips_impossible_entries() {
        let ninf = f64::NEG_INFINITY;
        assert_eq!(categorical_sample(&[ninf, 0.0, ninf], 0.999).unwrap(), 1);
        assert!(matches!(
            categorical_sample(&[ninf, ninf], 0.5),
            Err(Error::NoFiniteWeight)
        ));
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_relative_eq!(
            log_sum_exp(&[1000.0, 1000.0]).unwrap(),
            1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(log_sum_exp(&[-1000.0, f64::NEG_INFINITY]).unwrap(), -1000.0);
        assert!(log_sum_exp(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn inverse_wishart_rejects_small_df() {
        let s = SpdMatrix::identity(3);
        assert!(sample_inv_wishart(2.0, &s, &mut RngStream::new(0, 0)).is_err());
        assert!(sample_inv_wishart(2.5, &s, &mut RngStream::new(0, 0)).is_ok());
    }

    #[test]
    fn gamma_and_beta_validate() {
        let mut r = RngStream::new(0, 0);
        assert!(sample_gamma(-1.0, 1.0, &mut r).is_err());
        assert!(sample_beta(0.0, 1.0, &mut r).is_err());
    }
}
