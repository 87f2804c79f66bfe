//! Grid-evaluated posterior predictive densities, their affine pushforwards,
//! and L1 / Hellinger distances between densities on a common grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mathcore::dist::LN_2PI;
use crate::mathcore::{RngStream, SpdMatrix};
use crate::model::{AffineMap, Dataset};
use crate::sampler::{BaseSampler, Component, DrawSet};

pub const DEFAULT_MAX_POINTS: usize = 1_000_000;
/// Stream id (under the chain seed) for the new-cluster term of the predictive.
pub const PREDICTIVE_STREAM: u64 = 3;
/// Relative tolerance used when deciding whether two grids coincide.
pub const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.steps - 1) as f64
    }

    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step()
    }
}

/// Regular rectangular grid, endpoints included, last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        Self::with_cap(axes, DEFAULT_MAX_POINTS)
    }

    pub fn with_cap(axes: Vec<Axis>, max_points: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        let mut total = 1usize;
        for (k, a) in axes.iter().enumerate() {
            if a.steps < 2 {
                return Err(Error::InvalidParameter(format!("axis {k} needs at least 2 steps")));
            }
            if !(a.min < a.max) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "axis {k} needs finite min < max, got [{}, {}]",
                    a.min, a.max
                )));
            }
            total = total.saturating_mul(a.steps);
        }
        if total > max_points {
            return Err(Error::InvalidParameter(format!(
                "grid has {total} points, above the cap of {max_points}"
            )));
        }
        Ok(Self { axes })
    }

    /// Data range extended by `margin` times its width on each side, `steps` points per axis.
    pub fn around(data: &Dataset, margin: f64, steps: usize) -> Result<Self> {
        let axes = data
            .bounds()
            .into_iter()
            .map(|(lo, hi)| {
                let w = if hi > lo { hi - lo } else { 1.0 };
                Axis {
                    min: lo - margin * w,
                    max: hi + margin * w,
                    steps,
                }
            })
            .collect();
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Writes the coordinates of flat index `idx` into `out`.
    #[inline]
    pub fn point_into(&self, mut idx: usize, out: &mut [f64]) {
        for k in (0..self.axes.len()).rev() {
            let a = &self.axes[k];
            out[k] = a.point(idx % a.steps);
            idx /= a.steps;
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    pub fn approx_eq(&self, other: &Grid) -> bool {
        self.axes.len() == other.axes.len()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                let w = (a.max - a.min).abs();
                a.steps == b.steps && (a.min - b.min).abs() <= GRID_TOL * w && (a.max - b.max).abs() <= GRID_TOL * w
            })
    }

    /// Image of the grid under a diagonal map, and for each new flat index
    /// the old flat index it came from (axes with negative scale are reversed).
    fn map_diagonal(&self, g: &AffineMap) -> Result<(Grid, Vec<usize>)> {
        if !g.is_diagonal() {
            return Err(Error::InvalidParameter(
                "pushforward on a rectangular grid needs a diagonal map".into(),
            ));
        }
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: g.dim(),
            });
        }
        let c = g.matrix();
        let b = g.shift();
        let mut flipped = vec![false; self.dim()];
        let axes = self
            .axes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let (lo, hi) = (c[(k, k)] * a.min + b[k], c[(k, k)] * a.max + b[k]);
                flipped[k] = c[(k, k)] < 0.0;
                Axis {
                    min: lo.min(hi),
                    max: lo.max(hi),
                    steps: a.steps,
                }
            })
            .collect();
        let grid = Grid::with_cap(axes, usize::MAX)?;
        let order = (0..self.len())
            .map(|mut idx| {
                let mut old = 0;
                let mut stride = 1;
                for k in (0..self.dim()).rev() {
                    let s = self.axes[k].steps;
                    let mut i = idx % s;
                    idx /= s;
                    if flipped[k] {
                        i = s - 1 - i;
                    }
                    old += i * stride;
                    stride *= s;
                }
                old
            })
            .collect();
        Ok((grid, order))
    }

    /// Image grid under a diagonal affine map.
    pub fn image(&self, g: &AffineMap) -> Result<Grid> {
        Ok(self.map_diagonal(g)?.0)
    }
}

/// Density values on a grid with their Riemann-sum mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mass: f64,
}

impl DensityEstimate {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density value {v} is negative or NaN")));
        }
        let mass = pairwise_sum(&values) * grid.cell_volume();
        Ok(Self { grid, values, mass })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> Result<Self> {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut p);
                f(&p)
            })
            .collect();
        Self::from_values(grid, values)
    }
}

/// Summation with `O(log n)` error growth and a fixed reduction order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// A weighted Gaussian with precomputed precision for fast evaluation.
#[derive(Debug, Clone)]
struct Kernel {
    log_scale: f64,
    mean: Vec<f64>,
    precision: Vec<f64>,
}

impl Kernel {
    fn new(weight: f64, c: &Component) -> Result<Self> {
        let d = c.mu.len();
        let p = c.sigma.inverse()?;
        Ok(Self {
            log_scale: weight.ln() - 0.5 * (d as f64 * LN_2PI + c.sigma.log_det()),
            mean: c.mu.iter().copied().collect(),
            precision: p.entries().transpose().as_slice().to_vec(),
        })
    }

    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let q = match d {
            1 => {
                let u = x[0] - self.mean[0];
                self.precision[0] * u * u
            }
            2 => {
                let u = x[0] - self.mean[0];
                let v = x[1] - self.mean[1];
                self.precision[0] * u * u + 2.0 * self.precision[1] * u * v + self.precision[3] * v * v
            }
            _ => {
                let mut q = 0.0;
                for a in 0..d {
                    let da = x[a] - self.mean[a];
                    let mut s = 0.0;
                    for b in 0..d {
                        s += self.precision[a * d + b] * (x[b] - self.mean[b]);
                    }
                    q += da * s;
                }
                q
            }
        };
        let arg = self.log_scale - 0.5 * q;
        // exp underflows to exactly zero below this
        if arg < -745.2 {
            0.0
        } else {
            arg.exp()
        }
    }
}

/// Flattens all retained draws into one weighted Gaussian mixture.
///
/// Draw `t` contributes `n_j / (n + alpha)` per cluster and `alpha / ((n + alpha) aux_m)`
/// per fresh base-measure draw, all divided by the number of draws.
fn predictive_kernels(draws: &DrawSet) -> Result<Vec<Kernel>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let t = draws.len() as f64;
    let n = draws.n_obs as f64;
    let aux_m = draws.aux_m();
    let mut rng = RngStream::new(draws.seed(), PREDICTIVE_STREAM);
    let mut kernels = Vec::new();
    for draw in &draws.draws {
        if draw.clusters.is_empty() {
            return Err(Error::InvalidParameter(
                "draws were recorded without cluster parameters".into(),
            ));
        }
        let denom = n + draw.alpha;
        for (c, size) in draw.clusters.iter().zip(draw.sizes()) {
            kernels.push(Kernel::new(size as f64 / denom / t, c)?);
        }
        if draw.alpha > 0.0 {
            let base = BaseSampler::new(&draw.pi)?;
            let w = draw.alpha / denom / aux_m as f64 / t;
            for _ in 0..aux_m {
                kernels.push(Kernel::new(w, &base.draw(&mut rng)?)?);
            }
        }
    }
    Ok(kernels)
}

const CHUNK: usize = 256;

fn eval_on_points<P>(kernels: &[Kernel], n_points: usize, dim: usize, point: P, exec: Exec) -> Vec<f64>
where
    P: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut values = vec![0.0; n_points];
    exec.fill_chunks(&mut values, CHUNK, |start, out| {
        let mut x = vec![0.0; dim];
        for (k, v) in out.iter_mut().enumerate() {
            point(start + k, &mut x);
            *v = kernels.iter().map(|kern| kern.eval(&x)).sum();
        }
    });
    values
}

/// Rao-Blackwellized posterior predictive density averaged over retained draws.
pub fn predictive_density(draws: &DrawSet, grid: &Grid) -> Result<DensityEstimate> {
    predictive_density_with(draws, grid, Exec::default())
}

pub fn predictive_density_with(draws: &DrawSet, grid: &Grid, exec: Exec) -> Result<DensityEstimate> {
    if grid.dim() != draws.dim {
        return Err(Error::DimensionMismatch {
            expected: draws.dim,
            found: grid.dim(),
        });
    }
    let kernels = predictive_kernels(draws)?;
    let values = eval_on_points(&kernels, grid.len(), grid.dim(), |i, x| grid.point_into(i, x), exec);
    DensityEstimate::from_values(grid.clone(), values)
}

/// Predictive density at arbitrary points (rows of `points`).
pub fn predictive_at_points(draws: &DrawSet, points: &Dataset, exec: Exec) -> Result<Vec<f64>> {
    if points.dim() != draws.dim {
        return Err(Error::DimensionMismatch {
            expected: draws.dim,
            found: points.dim(),
        });
    }
    let kernels = predictive_kernels(draws)?;
    Ok(eval_on_points(
        &kernels,
        points.n(),
        points.dim(),
        |i, x| x.copy_from_slice(points.row(i)),
        exec,
    ))
}

/// Density of `g(X)` when `X` has density `est`: grid mapped by `g`, values
/// divided by `|det C|`. Only diagonal maps keep the grid rectangular.
pub fn pushforward_density(est: &DensityEstimate, g: &AffineMap) -> Result<DensityEstimate> {
    let (grid, order) = est.grid.map_diagonal(g)?;
    let scale = 1.0 / g.abs_det();
    let values = order.iter().map(|&o| est.values[o] * scale).collect();
    DensityEstimate::from_values(grid, values)
}

/// Predictive density of the chain fit to `g(X)`, pulled back to the scale of
/// `X`: `x ↦ |det C| f(g(x))` on `grid`. Works for any invertible `C`.
pub fn pulled_back_predictive(draws: &DrawSet, g: &AffineMap, grid: &Grid, exec: Exec) -> Result<DensityEstimate> {
    if g.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: g.dim(),
        });
    }
    let kernels = predictive_kernels(draws)?;
    let det = g.abs_det();
    let d = grid.dim();
    let values = eval_on_points(
        &kernels,
        grid.len(),
        d,
        |i, x| {
            grid.point_into(i, x);
            let y = g.apply(x);
            x.copy_from_slice(&y);
        },
        exec,
    );
    DensityEstimate::from_values(grid.clone(), values.into_iter().map(|v| v * det).collect())
}

fn check_same_grid(f1: &DensityEstimate, f2: &DensityEstimate) -> Result<()> {
    if f1.grid.approx_eq(&f2.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `∫ |f1 − f2|` as a Riemann sum.
pub fn l1_distance(f1: &DensityEstimate, f2: &DensityEstimate) -> Result<f64> {
    check_same_grid(f1, f2)?;
    let diffs: Vec<f64> = f1.values.iter().zip(&f2.values).map(|(a, b)| (a - b).abs()).collect();
    Ok(pairwise_sum(&diffs) * f1.grid.cell_volume())
}

/// `{∫ (√f1 − √f2)²}^{1/2}`, bounded by √2 for unit-mass densities.
pub fn hellinger(f1: &DensityEstimate, f2: &DensityEstimate) -> Result<f64> {
    check_same_grid(f1, f2)?;
    let sq: Vec<f64> = f1
        .values
        .iter()
        .zip(&f2.values)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .collect();
    Ok((pairwise_sum(&sq) * f1.grid.cell_volume()).sqrt())
}

/// Predictive density of a chain fit to `g(X)`, brought back to the scale of `X`
/// on `grid` (evaluated on `g(grid)`, then pushed forward by `g⁻¹`).
pub fn rescaled_predictive(draws: &DrawSet, g: &AffineMap, grid: &Grid, exec: Exec) -> Result<DensityEstimate> {
    let est = predictive_density_with(draws, &grid.image(g)?, exec)?;
    pushforward_density(&est, &g.inverse()?)
}

/// L1 distance between two predictive densities fit to `g_a(X)` and `g_b(X)`,
/// both mapped back to the original scale. Diagonal maps only.
pub fn compare_rescaled(
    draws_a: &DrawSet,
    draws_b: &DrawSet,
    g_a: &AffineMap,
    g_b: &AffineMap,
    grid: &Grid,
) -> Result<f64> {
    let fa = rescaled_predictive(draws_a, g_a, grid, Exec::default())?;
    let fb = rescaled_predictive(draws_b, g_b, grid, Exec::default())?;
    l1_distance(&fa, &fb)
}

/// [`compare_rescaled`] for arbitrary invertible maps, via pointwise pullback.
pub fn compare_rescaled_general(
    draws_a: &DrawSet,
    draws_b: &DrawSet,
    g_a: &AffineMap,
    g_b: &AffineMap,
    grid: &Grid,
) -> Result<f64> {
    let fa = pulled_back_predictive(draws_a, g_a, grid, Exec::default())?;
    let fb = pulled_back_predictive(draws_b, g_b, grid, Exec::default())?;
    l1_distance(&fa, &fb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub raw: Vec<Vec<f64>>,
    /// `raw` divided by its largest entry (all zeros when every pair coincides).
    pub normalized: Vec<Vec<f64>>,
    pub max: f64,
    pub all_zero: bool,
}

impl DistanceMatrix {
    pub fn from_raw(raw: Vec<Vec<f64>>) -> Self {
        let max = raw.iter().flatten().copied().fold(0.0_f64, f64::max);
        let all_zero = max == 0.0;
        let normalized = raw
            .iter()
            .map(|r| r.iter().map(|v| if all_zero { 0.0 } else { v / max }).collect())
            .collect();
        Self {
            raw,
            normalized,
            max,
            all_zero,
        }
    }
}

/// Pairwise L1 distances between estimates fit to `g_k(X)`, after mapping
/// each back with `g_k⁻¹`, normalized by the largest distance.
pub fn normalized_distance_matrix(estimates: &[DensityEstimate], maps: &[AffineMap]) -> Result<DistanceMatrix> {
    if estimates.len() != maps.len() {
        return Err(Error::DimensionMismatch {
            expected: estimates.len(),
            found: maps.len(),
        });
    }
    let back = estimates
        .iter()
        .zip(maps)
        .map(|(e, g)| pushforward_density(e, &g.inverse()?))
        .collect::<Result<Vec<_>>>()?;
    let k = back.len();
    let mut raw = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let v = l1_distance(&back[i], &back[j])?;
            raw[i][j] = v;
            raw[j][i] = v;
        }
    }
    Ok(DistanceMatrix::from_raw(raw))
}

/// Density of a finite Gaussian mixture.
pub fn mixture_pdf(weights: &[f64], components: &[(Vec<f64>, SpdMatrix)], x: &[f64]) -> f64 {
    weights
        .iter()
        .zip(components)
        .map(|(w, (m, s))| w * crate::mathcore::dist::mvn_logpdf_unchecked(x, m, s).exp())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::dist::normal_logpdf;
    use approx::assert_relative_eq;

    fn line(min: f64, max: f64, steps: usize) -> Grid {
        Grid::new(vec![Axis { min, max, steps }]).unwrap()
    }

    fn normal(grid: &Grid, m: f64, v: f64) -> DensityEstimate {
        DensityEstimate::from_fn(grid.clone(), |x| normal_logpdf(x[0], m, v).exp()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![Axis {
            min: 0.0,
            max: 1.0,
            steps: 1
        }])
        .is_err());
        assert!(Grid::new(vec![Axis {
            min: 1.0,
            max: 1.0,
            steps: 5
        }])
        .is_err());
        let big = Axis {
            min: 0.0,
            max: 1.0,
            steps: 1001,
        };
        assert!(Grid::new(vec![big, big]).is_err());
        let g = Grid::new(vec![
            Axis {
                min: 0.0,
                max: 1.0,
                steps: 3,
            },
            Axis {
                min: 0.0,
                max: 2.0,
                steps: 5,
            },
        ])
        .unwrap();
        assert_eq!(g.len(), 15);
        assert_relative_eq!(g.cell_volume(), 0.25);
        assert_eq!(g.point(0), vec![0.0, 0.0]);
        assert_eq!(g.point(1), vec![0.0, 0.5]);
        assert_eq!(g.point(14), vec![1.0, 2.0]);
    }

    #[test]
    fn identical_densities_are_at_distance_zero() {
        let g = line(-8.0, 8.0, 801);
        let f = normal(&g, 0.0, 1.0);
        assert_eq!(l1_distance(&f, &f).unwrap(), 0.0);
        assert_eq!(hellinger(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_reach_the_bound() {
        let g = line(0.0, 4.0, 5);
        let a = DensityEstimate::from_values(g.clone(), vec![0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let b = DensityEstimate::from_values(g, vec![0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_relative_eq!(l1_distance(&a, &b).unwrap(), 2.0);
        assert_relative_eq!(hellinger(&a, &b).unwrap(), 2f64.sqrt());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = normal(&line(-5.0, 5.0, 101), 0.0, 1.0);
        let b = normal(&line(-5.0, 5.0, 111), 0.0, 1.0);
        assert!(matches!(l1_distance(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn one_dimensional_dilation_pushforward() {
        let g = line(-6.0, 6.0, 241);
        let f = normal(&g, 0.0, 1.0);
        let two = AffineMap::scaling(1, 2.0).unwrap();
        let p = pushforward_density(&f, &two).unwrap();
        assert_eq!(p.grid.axes()[0].min, -12.0);
        assert_eq!(p.grid.axes()[0].max, 12.0);
        for (a, b) in p.values.iter().zip(&f.values) {
            assert_eq!(*a, b / 2.0);
        }
        assert!((p.mass - f.mass).abs() < 1e-10);
        let id = pushforward_density(&f, &AffineMap::identity(1)).unwrap();
        assert_eq!(id, f);
    }

    #[test]
    fn negative_scale_reverses_the_axis() {
        let g = line(0.0, 2.0, 3);
        let f = DensityEstimate::from_values(g, vec![0.1, 0.2, 0.7]).unwrap();
        let flip = AffineMap::diagonal(&[-1.0], &[0.0]).unwrap();
        let p = pushforward_density(&f, &flip).unwrap();
        assert_eq!(p.grid.axes()[0].min, -2.0);
        assert_eq!(p.values, vec![0.7, 0.2, 0.1]);
    }

    #[test]
    fn non_diagonal_pushforward_is_rejected() {
        let g = Grid::new(vec![
            Axis {
                min: 0.0,
                max: 1.0,
                steps: 3
            };
            2
        ])
        .unwrap();
        let f = DensityEstimate::from_fn(g, |_| 1.0).unwrap();
        let shear = AffineMap::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            nalgebra::DVector::zeros(2),
        )
        .unwrap();
        assert!(pushforward_density(&f, &shear).is_err());
    }

    #[test]
    fn empty_draws_are_rejected() {
        let draws = DrawSet {
            draws: vec![],
            n_obs: 3,
            dim: 1,
            config: Default::default(),
            warnings: vec![],
        };
        assert!(matches!(
            predictive_density(&draws, &line(0.0, 1.0, 3)),
            Err(Error::EmptyDraws)
        ));
    }

    #[test]
    fn normalized_matrix_contract() {
        let g = line(-6.0, 6.0, 121);
        let f = normal(&g, 0.0, 1.0);
        let id = AffineMap::identity(1);
        let m = normalized_distance_matrix(&[f.clone()], &[id.clone()]).unwrap();
        assert_eq!(m.normalized, vec![vec![0.0]]);
        let m = normalized_distance_matrix(&[f.clone(), f.clone()], &[id.clone(), id.clone()]).unwrap();
        assert!(m.all_zero);
        let h = normal(&g, 0.5, 1.0);
        let m = normalized_distance_matrix(&[f, h], &[id.clone(), id]).unwrap();
        assert_eq!(m.normalized[0][1], 1.0);
        assert_eq!(m.normalized[1][1], 0.0);
        assert!(!m.all_zero);
    }
}
