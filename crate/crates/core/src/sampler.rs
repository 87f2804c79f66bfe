//! Marginal Gibbs sampler for the Dirichlet process mixture of Gaussians.
//!
//! One sweep updates, in order: the allocations (Pólya-urn moves with
//! `aux_m` auxiliary components for the non-conjugate base measure), every
//! cluster's `(mu, Sigma)` from its conditional posterior, the base-measure
//! location hyperparameters when a hyperprior is present, and the precision
//! `alpha` when it has a gamma prior.
//!
//! Randomness is split across three streams derived from the chain seed:
//! allocation uniforms, parameter draws, and hyperparameter/`alpha` draws.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::dist::{mvn_logpdf_unchecked, sigma_from_factor, standard_normals, LN_2PI};
use crate::mathcore::{categorical_sample, sample_beta, sample_gamma, InverseWishart, RngStream, SpdMatrix};
use crate::model::{empirical_bayes, AlphaSpec, BaseMeasure, Dataset, HyperPriorSpec};

pub const ALLOCATION_STREAM: u64 = 0;
pub const PARAMETER_STREAM: u64 = 1;
pub const HYPER_STREAM: u64 = 2;

/// Parameters of one Gaussian mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mu: DVector<f64>,
    pub sigma: SpdMatrix,
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    mu: Vec<f64>,
    sigma: SpdMatrix,
}

impl Serialize for Component {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ComponentRepr {
            mu: self.mu.iter().copied().collect(),
            sigma: self.sigma.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Component {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ComponentRepr::deserialize(d)?;
        if r.mu.len() != r.sigma.dim() {
            return Err(serde::de::Error::custom("mu and sigma dimensions differ"));
        }
        Ok(Component {
            mu: DVector::from_vec(r.mu),
            sigma: r.sigma,
        })
    }
}

impl Component {
    #[inline]
    pub fn logpdf(&self, x: &[f64]) -> f64 {
        mvn_logpdf_unchecked(x, self.mu.as_slice(), &self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub params: Component,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Cluster index of each observation.
    pub allocations: Vec<usize>,
    /// Live clusters in creation order.
    pub clusters: Vec<Cluster>,
    pub pi: BaseMeasure,
    pub alpha: f64,
    pub iteration: usize,
}

impl ChainState {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Sizes sum to `n`, labels index live clusters, no cluster is empty.
    pub fn check_invariants(&self) -> Result<()> {
        let mut counts = vec![0usize; self.clusters.len()];
        for &a in &self.allocations {
            if a >= counts.len() {
                return Err(Error::InvalidParameter(format!("allocation {a} has no cluster")));
            }
            counts[a] += 1;
        }
        for (j, (c, cl)) in counts.iter().zip(&self.clusters).enumerate() {
            if *c != cl.size || *c == 0 {
                return Err(Error::InvalidParameter(format!(
                    "cluster {j} records size {} but holds {c} observations",
                    cl.size
                )));
            }
        }
        Ok(())
    }

    fn remove_cluster(&mut self, j: usize) -> Cluster {
        let cl = self.clusters.remove(j);
        for a in &mut self.allocations {
            if *a > j {
                *a -= 1;
            }
        }
        cl
    }
}

/// The three random streams a chain consumes.
#[derive(Debug, Clone)]
pub struct ChainStreams {
    pub allocation: RngStream,
    pub parameters: RngStream,
    pub hyper: RngStream,
}

impl ChainStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            allocation: RngStream::new(seed, ALLOCATION_STREAM),
            parameters: RngStream::new(seed, PARAMETER_STREAM),
            hyper: RngStream::new(seed, HYPER_STREAM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub aux_m: usize,
    pub seed: u64,
    pub record_params: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 5000,
            burn_in: 2500,
            thin: 1,
            aux_m: 3,
            seed: 0,
            record_params: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in > self.n_iter {
            return Err(Error::InvalidParameter(format!(
                "burn_in {} exceeds n_iter {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if self.aux_m == 0 {
            return Err(Error::InvalidParameter("aux_m must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Draws `(mu, Sigma)` from the base measure; `mu` first, then `Sigma`.
#[derive(Debug, Clone)]
pub struct BaseSampler {
    m0: Vec<f64>,
    b0_chol: Vec<f64>,
    iw: InverseWishart,
}

impl BaseSampler {
    pub fn new(pi: &BaseMeasure) -> Result<Self> {
        let d = pi.dim();
        let l = pi.b0.chol();
        Ok(Self {
            m0: pi.m0.iter().copied().collect(),
            b0_chol: (0..d * d).map(|k| l[(k / d, k % d)]).collect(),
            iw: InverseWishart::new(pi.nu0, &pi.s0)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    /// Writes `mu` and the precision factor `T` of `Sigma` (`Sigma⁻¹ = T Tᵀ`).
    fn draw_into(&self, rng: &mut RngStream, mu: &mut [f64], t: &mut [f64], scratch: &mut [f64]) {
        let d = self.dim();
        for z in scratch[..d].iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        for i in 0..d {
            mu[i] = self.m0[i] + (0..=i).map(|k| self.b0_chol[i * d + k] * scratch[k]).sum::<f64>();
        }
        self.iw.sample_factor(rng, scratch, t);
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<Component> {
        let d = self.dim();
        let mut mu = vec![0.0; d];
        let mut t = vec![0.0; d * d];
        let mut scratch = vec![0.0; d * d];
        self.draw_into(rng, &mut mu, &mut t, &mut scratch);
        Ok(Component {
            mu: DVector::from_vec(mu),
            sigma: sigma_from_factor(&t, d)?,
        })
    }
}

/// Fresh auxiliary components kept in factored form; only the one chosen by an
/// allocation move is turned into a [`Component`].
struct AuxPool {
    d: usize,
    len: usize,
    mu: Vec<f64>,
    factor: Vec<f64>,
    log_norm: Vec<f64>,
    scratch: Vec<f64>,
}

impl AuxPool {
    fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            len: 0,
            mu: vec![0.0; m * d],
            factor: vec![0.0; m * d * d],
            log_norm: vec![0.0; m],
            scratch: vec![0.0; (d * d).max(d)],
        }
    }

    fn refill(&mut self, base: &BaseSampler, count: usize, rng: &mut RngStream) {
        let (d, dd) = (self.d, self.d * self.d);
        for k in 0..count {
            let t = &mut self.factor[k * dd..(k + 1) * dd];
            base.draw_into(rng, &mut self.mu[k * d..(k + 1) * d], t, &mut self.scratch);
            let half_log_det_prec: f64 = (0..d).map(|i| t[i * d + i].ln()).sum();
            self.log_norm[k] = half_log_det_prec - 0.5 * d as f64 * LN_2PI;
        }
        self.len = count;
    }

    #[inline]
    fn logpdf(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.d;
        let mu = &self.mu[k * d..(k + 1) * d];
        let t = &self.factor[k * d * d..(k + 1) * d * d];
        // ‖Tᵀ (x − mu)‖²
        let mut q = 0.0;
        for j in 0..d {
            let w: f64 = (j..d).map(|i| t[i * d + j] * (x[i] - mu[i])).sum();
            q += w * w;
        }
        self.log_norm[k] - 0.5 * q
    }

    fn component(&self, k: usize) -> Result<Component> {
        let d = self.d;
        Ok(Component {
            mu: DVector::from_column_slice(&self.mu[k * d..(k + 1) * d]),
            sigma: sigma_from_factor(&self.factor[k * d * d..(k + 1) * d * d], d)?,
        })
    }
}

/// How the base measure is obtained for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSource {
    Fixed(BaseMeasure),
    EmpiricalBayes { gamma1: f64, gamma2: f64, nu0: f64 },
}

impl BaseSource {
    pub fn resolve(&self, data: &Dataset) -> Result<BaseMeasure> {
        match self {
            BaseSource::Fixed(pi) => Ok(pi.clone()),
            BaseSource::EmpiricalBayes { gamma1, gamma2, nu0 } => empirical_bayes(data, *gamma1, *gamma2, *nu0),
        }
    }
}

/// `mu | Sigma, data ~ N(m_n, B_n)` with `B_n = (B0⁻¹ + n Sigma⁻¹)⁻¹` and
/// `m_n = B_n (B0⁻¹ m0 + n Sigma⁻¹ x̄)`.
pub fn mu_conditional(
    pi: &BaseMeasure,
    sigma: &SpdMatrix,
    n: usize,
    xbar: &DVector<f64>,
) -> Result<(DVector<f64>, SpdMatrix)> {
    if n == 0 {
        return Ok((pi.m0.clone(), pi.b0.clone()));
    }
    let b0_inv = pi.b0.inverse()?;
    let s_inv = sigma.inverse()?;
    let nf = n as f64;
    let precision = SpdMatrix::from_symmetrized(b0_inv.entries() + s_inv.entries() * nf)?;
    let bn = precision.inverse()?;
    let rhs = b0_inv.entries() * &pi.m0 + s_inv.entries() * xbar * nf;
    let mn = bn.entries() * rhs;
    Ok((mn, bn))
}

/// `Sigma | mu, data ~ IW(nu0 + n, S0 + Σ (x_i − mu)(x_i − mu)ᵀ)`, given the scatter sum.
pub fn sigma_conditional(pi: &BaseMeasure, n: usize, scatter: &DMatrix<f64>) -> Result<(f64, SpdMatrix)> {
    Ok((
        pi.nu0 + n as f64,
        SpdMatrix::from_symmetrized(pi.s0.entries() + scatter)?,
    ))
}

/// Conditional posterior of `(m0, B0)` given cluster locations treated as
/// exchangeable `N(m0, B0)` observations under the normal/inverse-Wishart hyperprior.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPosterior {
    pub kappa: f64,
    pub mean: DVector<f64>,
    pub df: f64,
    pub scale: SpdMatrix,
}

pub fn hyper_conditional(hyper: &HyperPriorSpec, locations: &[&DVector<f64>]) -> Result<HyperPosterior> {
    let d = hyper.dim();
    let k = locations.len();
    if k == 0 {
        return Ok(HyperPosterior {
            kappa: hyper.kappa0,
            mean: hyper.m0_mean.clone(),
            df: hyper.b0_df,
            scale: hyper.b0_scale.clone(),
        });
    }
    let kf = k as f64;
    let mut mbar = DVector::zeros(d);
    for m in locations {
        mbar += *m;
    }
    mbar /= kf;
    let mut scatter = DMatrix::zeros(d, d);
    for m in locations {
        let dm = *m - &mbar;
        scatter += &dm * dm.transpose();
    }
    let kappa = hyper.kappa0 + kf;
    let mean = (&hyper.m0_mean * hyper.kappa0 + &mbar * kf) / kappa;
    let dev = &mbar - &hyper.m0_mean;
    let scale = hyper.b0_scale.entries() + scatter + (&dev * dev.transpose()) * (hyper.kappa0 * kf / kappa);
    Ok(HyperPosterior {
        kappa,
        mean,
        df: hyper.b0_df + kf,
        scale: SpdMatrix::from_symmetrized(scale)?,
    })
}

/// Starts with every observation in one cluster. With a hyperprior, `(m0, B0)`
/// start at the hyperprior mean. The cluster's `Sigma` starts at `E[Sigma]`
/// and one conditional refresh of `(mu, Sigma)` follows.
pub fn init_state(
    data: &Dataset,
    pi: &BaseMeasure,
    hyper: Option<&HyperPriorSpec>,
    alpha: &AlphaSpec,
    streams: &mut ChainStreams,
) -> Result<ChainState> {
    if data.dim() != pi.dim() {
        return Err(Error::DimensionMismatch {
            expected: pi.dim(),
            found: data.dim(),
        });
    }
    if data.n() == 0 {
        return Err(Error::DegenerateData("no observations".into()));
    }
    alpha.validate()?;
    let mut pi = pi.clone();
    if let Some(h) = hyper {
        if h.dim() != pi.dim() {
            return Err(Error::DimensionMismatch {
                expected: pi.dim(),
                found: h.dim(),
            });
        }
        pi.m0 = h.m0_mean.clone();
        pi.b0 = h.mean_b0();
    }
    let cluster = Cluster {
        params: Component {
            mu: pi.m0.clone(),
            sigma: pi.expected_sigma(),
        },
        size: data.n(),
    };
    let mut state = ChainState {
        allocations: vec![0; data.n()],
        clusters: vec![cluster],
        pi,
        alpha: alpha.initial_value(),
        iteration: 0,
    };
    update_cluster_params(&mut state, data, &mut streams.parameters)?;
    Ok(state)
}

/// One sweep of allocation moves over all observations.
///
/// For observation `i` the candidates are the live clusters (weight
/// `n_{-i,j} φ(x_i; mu_j, Sigma_j)`) and `aux_m` auxiliary components (weight
/// `(alpha / aux_m) φ(x_i; ·)`). When `i` was alone in its cluster, that
/// cluster's parameters fill the first auxiliary slot; the remaining slots
/// are fresh base-measure draws.
pub fn update_allocations(
    state: &mut ChainState,
    data: &Dataset,
    aux_m: usize,
    allocation_rng: &mut RngStream,
    parameter_rng: &mut RngStream,
) -> Result<()> {
    let base = BaseSampler::new(&state.pi)?;
    let alpha = state.alpha;
    let log_aux = if alpha > 0.0 {
        (alpha / aux_m as f64).ln()
    } else {
        f64::NEG_INFINITY
    };
    let mut pool = AuxPool::new(data.dim(), aux_m);
    let mut log_w: Vec<f64> = Vec::with_capacity(state.clusters.len() + aux_m + 1);
    for i in 0..data.n() {
        let x = data.row(i);
        let ci = state.allocations[i];
        state.clusters[ci].size -= 1;
        let mut reused = None;
        if state.clusters[ci].size == 0 {
            if alpha == 0.0 && state.clusters.len() == 1 {
                // nowhere else to go
                state.clusters[ci].size = 1;
                continue;
            }
            reused = Some(state.remove_cluster(ci).params);
        }
        let fresh = if alpha > 0.0 {
            aux_m - usize::from(reused.is_some())
        } else {
            0
        };
        pool.refill(&base, fresh, parameter_rng);
        log_w.clear();
        log_w.extend(state.clusters.iter().map(|c| (c.size as f64).ln() + c.params.logpdf(x)));
        if let Some(r) = &reused {
            log_w.push(log_aux + r.logpdf(x));
        }
        log_w.extend((0..pool.len).map(|k| log_aux + pool.logpdf(k, x)));
        let k = categorical_sample(&log_w, allocation_rng.uniform())?;
        let live = state.clusters.len();
        if k < live {
            state.allocations[i] = k;
            state.clusters[k].size += 1;
        } else {
            let slot = k - live;
            let params = match reused.take() {
                Some(r) if slot == 0 => r,
                Some(_) => pool.component(slot - 1)?,
                None => pool.component(slot)?,
            };
            state.clusters.push(Cluster { params, size: 1 });
            state.allocations[i] = live;
        }
    }
    Ok(())
}

/// Refreshes every live cluster: all `mu_j | Sigma_j` first, then all `Sigma_j | mu_j`.
pub fn update_cluster_params(state: &mut ChainState, data: &Dataset, rng: &mut RngStream) -> Result<()> {
    let d = data.dim();
    let k = state.clusters.len();
    let mut sums = vec![DVector::<f64>::zeros(d); k];
    for (i, &a) in state.allocations.iter().enumerate() {
        let x = data.row(i);
        for (s, v) in sums[a].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (cl, sum) in state.clusters.iter_mut().zip(&sums) {
        let xbar = sum / cl.size as f64;
        let (mn, bn) = mu_conditional(&state.pi, &cl.params.sigma, cl.size, &xbar)?;
        let z = standard_normals(d, rng);
        cl.params.mu = mn + bn.chol() * z;
    }
    let mut scatter = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut dev = vec![0.0; d];
    for (i, &a) in state.allocations.iter().enumerate() {
        let x = data.row(i);
        let mu = &state.clusters[a].params.mu;
        for r in 0..d {
            dev[r] = x[r] - mu[r];
        }
        let s = &mut scatter[a];
        for r in 0..d {
            for c in 0..d {
                s[(r, c)] += dev[r] * dev[c];
            }
        }
    }
    for (cl, sc) in state.clusters.iter_mut().zip(&scatter) {
        let (df, scale) = sigma_conditional(&state.pi, cl.size, sc)?;
        cl.params.sigma = InverseWishart::new(df, &scale)?.sample(rng)?;
    }
    Ok(())
}

/// Draws `(m0, B0)` given the current cluster locations. No-op without a hyperprior.
pub fn update_hyperparams(state: &mut ChainState, hyper: Option<&HyperPriorSpec>, rng: &mut RngStream) -> Result<()> {
    let Some(hyper) = hyper else {
        return Ok(());
    };
    let locations: Vec<&DVector<f64>> = state.clusters.iter().map(|c| &c.params.mu).collect();
    let post = hyper_conditional(hyper, &locations)?;
    let b0 = InverseWishart::new(post.df, &post.scale)?.sample(rng)?;
    let z = standard_normals(hyper.dim(), rng);
    let m0 = &post.mean + b0.chol() * z / post.kappa.sqrt();
    state.pi = BaseMeasure::new(m0, b0, state.pi.nu0, state.pi.s0.clone())?;
    Ok(())
}

/// Beta-augmentation update of `alpha` under a gamma prior; no-op in fixed mode.
///
/// `eta ~ Beta(alpha + 1, n)`, then `alpha` from the mixture
/// `w Gamma(a + K, b − ln eta) + (1 − w) Gamma(a + K − 1, b − ln eta)` with
/// `w / (1 − w) = (a + K − 1) / (n (b − ln eta))`.
pub fn update_alpha(state: &mut ChainState, n: usize, spec: &AlphaSpec, rng: &mut RngStream) -> Result<()> {
    let AlphaSpec::Gamma { shape, rate } = *spec else {
        return Ok(());
    };
    state.alpha = alpha_step(state.alpha, state.clusters.len(), n, shape, rate, rng)?;
    Ok(())
}

/// A single augmentation step for a given cluster count `k`.
pub fn alpha_step(alpha: f64, k: usize, n: usize, shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    let nf = n as f64;
    let kf = k as f64;
    let eta = sample_beta(alpha + 1.0, nf, rng)?;
    let post_rate = rate - eta.ln();
    let odds = (shape + kf - 1.0) / (nf * post_rate);
    let w = odds / (1.0 + odds);
    let post_shape = if rng.uniform() < w {
        shape + kf
    } else {
        shape + kf - 1.0
    };
    sample_gamma(post_shape, post_rate, rng)
}

/// One retained posterior snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iter: usize,
    pub alpha: f64,
    pub allocations: Vec<u32>,
    /// Empty when the chain ran with `record_params = false`.
    pub clusters: Vec<Component>,
    pub pi: BaseMeasure,
}

#[derive(Serialize, Deserialize)]
struct DrawRepr {
    iter: usize,
    alpha: f64,
    #[serde(rename = "K")]
    k: usize,
    allocations: Vec<u32>,
    clusters: Vec<Component>,
    pi: BaseMeasure,
}

impl Serialize for Draw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DrawRepr {
            iter: self.iter,
            alpha: self.alpha,
            k: self.n_clusters(),
            allocations: self.allocations.clone(),
            clusters: self.clusters.clone(),
            pi: self.pi.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Draw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = DrawRepr::deserialize(d)?;
        let draw = Draw {
            iter: r.iter,
            alpha: r.alpha,
            allocations: r.allocations,
            clusters: r.clusters,
            pi: r.pi,
        };
        if draw.n_clusters() != r.k {
            return Err(serde::de::Error::custom(format!(
                "K = {} but allocations use {} clusters",
                r.k,
                draw.n_clusters()
            )));
        }
        Ok(draw)
    }
}

impl Draw {
    pub fn n_clusters(&self) -> usize {
        self.allocations.iter().map(|&a| a as usize + 1).max().unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &a in &self.allocations {
            sizes[a as usize] += 1;
        }
        sizes
    }

    fn from_state(state: &ChainState, record_params: bool) -> Draw {
        Draw {
            iter: state.iteration,
            alpha: state.alpha,
            allocations: state.allocations.iter().map(|&a| a as u32).collect(),
            clusters: if record_params {
                state.clusters.iter().map(|c| c.params.clone()).collect()
            } else {
                Vec::new()
            },
            pi: state.pi.clone(),
        }
    }
}

/// Retained draws of one chain with enough provenance to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub draws: Vec<Draw>,
    pub n_obs: usize,
    pub dim: usize,
    pub config: ChainConfig,
    pub warnings: Vec<String>,
}

impl DrawSet {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn aux_m(&self) -> usize {
        self.config.aux_m
    }
}

/// Runs a full chain and keeps post-burn-in snapshots every `thin` iterations.
pub fn run_chain(
    data: &Dataset,
    base: &BaseSource,
    hyper: Option<&HyperPriorSpec>,
    alpha: &AlphaSpec,
    config: &ChainConfig,
) -> Result<DrawSet> {
    run_chain_observed(data, base, hyper, alpha, config, |_| {})
}

/// [`run_chain`] with a callback invoked on the state after every iteration.
pub fn run_chain_observed<F: FnMut(&ChainState)>(
    data: &Dataset,
    base: &BaseSource,
    hyper: Option<&HyperPriorSpec>,
    alpha: &AlphaSpec,
    config: &ChainConfig,
    mut observer: F,
) -> Result<DrawSet> {
    config.validate()?;
    let pi = base.resolve(data)?;
    let mut streams = ChainStreams::new(config.seed);
    let mut state = init_state(data, &pi, hyper, alpha, &mut streams)?;
    let mut warnings = Vec::new();
    if config.retained() == 0 {
        let msg = format!(
            "no draws retained: n_iter = {}, burn_in = {}, thin = {}",
            config.n_iter, config.burn_in, config.thin
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut draws = Vec::with_capacity(config.retained());
    for iter in 0..config.n_iter {
        state.iteration = iter;
        sweep(&mut state, data, hyper, alpha, config.aux_m, &mut streams).map_err(|e| e.at_iteration(iter))?;
        observer(&state);
        if iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0 {
            draws.push(Draw::from_state(&state, config.record_params));
        }
    }
    Ok(DrawSet {
        draws,
        n_obs: data.n(),
        dim: data.dim(),
        config: *config,
        warnings,
    })
}

/// One full Gibbs iteration.
pub fn sweep(
    state: &mut ChainState,
    data: &Dataset,
    hyper: Option<&HyperPriorSpec>,
    alpha: &AlphaSpec,
    aux_m: usize,
    streams: &mut ChainStreams,
) -> Result<()> {
    update_allocations(state, data, aux_m, &mut streams.allocation, &mut streams.parameters)?;
    update_cluster_params(state, data, &mut streams.parameters)?;
    update_hyperparams(state, hyper, &mut streams.hyper)?;
    update_alpha(state, data.n(), alpha, &mut streams.hyper)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub log_likelihood: f64,
}

/// Per-draw `K`, `alpha` and `Σ_i log φ(x_i; mu_{c_i}, Sigma_{c_i})`.
pub fn traces(draws: &DrawSet, data: &Dataset) -> Result<Vec<TraceRow>> {
    if data.n() != draws.n_obs {
        return Err(Error::DimensionMismatch {
            expected: draws.n_obs,
            found: data.n(),
        });
    }
    draws
        .draws
        .iter()
        .map(|d| {
            let log_likelihood = if d.clusters.is_empty() {
                f64::NAN
            } else {
                d.allocations
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| d.clusters[a as usize].logpdf(data.row(i)))
                    .sum()
            };
            Ok(TraceRow {
                iter: d.iter,
                k: d.n_clusters(),
                alpha: d.alpha,
                log_likelihood,
            })
        })
        .collect()
}
