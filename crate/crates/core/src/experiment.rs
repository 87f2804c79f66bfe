//! Replicate studies over sample sizes and rescaling constants, the exact
//! invariance replay, and the standardized analysis pipeline.

use std::path::Path;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::{self, ConfusionMatrix, CredibleBall, OptimalPartition, Psm};
use crate::density::{self, DensityEstimate, Grid};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::{self, DataFile};
use crate::mathcore::{derive_seed, RngStream};
use crate::model::{
    self, apply_affine, check_robustness_condition, expected_clusters, map_base_measure, presets, AffineMap, AlphaSpec,
    BaseMeasure, HyperPriorSpec, RobustnessReport,
};
use crate::sampler::{self, BaseSource, ChainConfig, DrawSet};
use crate::scenario::{self, ScenarioKind, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Table1,
    Fig2,
    Fig4,
    Prop1,
}

impl Study {
    fn code(self) -> u64 {
        match self {
            Study::Table1 | Study::Fig2 => 1,
            Study::Fig4 => 2,
            Study::Prop1 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Study::Table1 => "table1",
            Study::Fig2 => "fig2",
            Study::Fig4 => "fig4",
            Study::Prop1 => "prop1",
        }
    }

    pub fn scenario(self) -> ScenarioKind {
        match self {
            Study::Fig4 => ScenarioKind::StudentT,
            _ => ScenarioKind::Mog2d,
        }
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Study::Table1),
            "fig2" => Ok(Study::Fig2),
            "fig4" => Ok(Study::Fig4),
            "prop1" => Ok(Study::Prop1),
            _ => Err(Error::InvalidParameter(format!("unknown study '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::InvalidParameter(format!("unknown scale '{s}'"))),
        }
    }
}

/// Settings of a replicate study over `sizes × constants`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicateConfig {
    pub replicates: usize,
    pub sizes: Vec<usize>,
    pub constants: Vec<f64>,
    /// The chain seed is ignored; every fit gets a derived seed.
    pub chain: ChainConfig,
    pub grid_steps: usize,
    pub grid_margin: f64,
    pub clustering: bool,
    pub density: bool,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self::new(Study::Table1, Scale::Desk)
    }
}

impl ReplicateConfig {
    pub fn new(study: Study, scale: Scale) -> Self {
        let (replicates, thin) = match scale {
            Scale::Desk => (10, 10),
            Scale::Paper => (100, 1),
        };
        Self {
            replicates,
            sizes: vec![100, 300, 1000],
            constants: vec![0.2, 0.5, 1.0, 2.0, 5.0],
            chain: ChainConfig {
                thin,
                ..ChainConfig::default()
            },
            grid_steps: if study.scenario().dim() == 1 { 1000 } else { 200 },
            grid_margin: 0.25,
            clustering: matches!(study, Study::Table1 | Study::Fig2),
            density: matches!(study, Study::Fig2 | Study::Fig4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.replicates == 0 || self.sizes.is_empty() || self.constants.is_empty() {
            return Err(Error::InvalidParameter(
                "study needs replicates, sizes and constants".into(),
            ));
        }
        if let Some(c) = self.constants.iter().find(|c| !(**c > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "rescaling constant {c} must be positive"
            )));
        }
        Ok(())
    }
}

/// One fit: a replicate at one sample size and one constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub n: usize,
    pub replicate: usize,
    pub c: f64,
    pub seed: u64,
    pub k_hat: Option<usize>,
    pub mean_k: Option<f64>,
    pub status: String,
}

/// Distance between the rescaled estimates at two constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub n: usize,
    pub replicate: usize,
    pub c1: f64,
    pub c2: f64,
    pub l1: Option<f64>,
    pub status: String,
}

/// Replicate means laid out as `sizes × constants` or per-size pair matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: Study,
    pub sizes: Vec<usize>,
    pub constants: Vec<f64>,
    pub fits: Vec<FitRow>,
    pub pairs: Vec<PairRow>,
    /// Mean optimal-partition block count, `[size][constant]`.
    pub mean_k_hat: Option<Vec<Vec<f64>>>,
    /// Replicate-mean L1 matrices, `[size][c1][c2]`.
    pub mean_l1: Option<Vec<Vec<Vec<f64>>>>,
    /// `mean_l1` divided by its largest entry over all sizes.
    pub normalized_l1: Option<Vec<Vec<Vec<f64>>>>,
}

impl StudyReport {
    pub fn failures(&self) -> usize {
        self.fits.iter().filter(|r| r.status != "ok").count() + self.pairs.iter().filter(|r| r.status != "ok").count()
    }

    /// Normalized distance of the pair `(c1, c2)` at every size.
    pub fn pair_trend(&self, c1: f64, c2: f64) -> Option<Vec<f64>> {
        let i = self.constants.iter().position(|c| *c == c1)?;
        let j = self.constants.iter().position(|c| *c == c2)?;
        Some(self.normalized_l1.as_ref()?.iter().map(|m| m[i][j]).collect())
    }

    pub fn k_hat(&self, n: usize, c: f64) -> Option<f64> {
        let i = self.sizes.iter().position(|s| *s == n)?;
        let j = self.constants.iter().position(|v| *v == c)?;
        Some(self.mean_k_hat.as_ref()?[i][j])
    }
}

fn study_prior(kind: ScenarioKind) -> (BaseMeasure, HyperPriorSpec, AlphaSpec) {
    match kind {
        ScenarioKind::Mog2d => presets::mixture_study(),
        ScenarioKind::StudentT => presets::student_t_study(),
    }
}

struct Job {
    size_idx: usize,
    replicate: usize,
}

struct JobOutput {
    fits: Vec<FitRow>,
    pairs: Vec<PairRow>,
}

fn status_of<T>(r: &Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    }
}

fn run_job(study: Study, cfg: &ReplicateConfig, master: u64, job: &Job) -> JobOutput {
    let n = cfg.sizes[job.size_idx];
    let kind = study.scenario();
    let d = kind.dim();
    let path = [study.code(), n as u64, job.replicate as u64];
    let data = scenario::simulate(&ScenarioSpec {
        kind,
        n,
        c: 1.0,
        seed: derive_seed(master, &path),
    });
    let (base, hyper, alpha) = study_prior(kind);
    let grid = data
        .as_ref()
        .ok()
        .and_then(|x| Grid::around(x, cfg.grid_margin, cfg.grid_steps).ok());

    let mut fits = Vec::new();
    let mut estimates: Vec<Option<DensityEstimate>> = Vec::new();
    for (ci, &c) in cfg.constants.iter().enumerate() {
        let seed = derive_seed(master, &[path[0], path[1], path[2], 1 + ci as u64]);
        let fit = || -> Result<(Option<(usize, f64)>, Option<DensityEstimate>)> {
            let x = match &data {
                Ok(x) => x.scaled(c),
                Err(e) => return Err(Error::InvalidParameter(format!("simulation failed: {e}"))),
            };
            let chain = ChainConfig { seed, ..cfg.chain };
            let draws = sampler::run_chain(&x, &BaseSource::Fixed(base.clone()), Some(&hyper), &alpha, &chain)?;
            if draws.is_empty() {
                return Err(Error::EmptyDraws);
            }
            let k = if cfg.clustering {
                let parts = clustering::partitions(&draws);
                let psm = Psm::from_partitions(&parts, Exec::Sequential)?;
                let opt = clustering::optimal_partition(&parts, &psm, Exec::Sequential)?;
                let mean_k = parts.iter().map(|p| p.n_clusters() as f64).sum::<f64>() / parts.len() as f64;
                Some((opt.partition.n_clusters(), mean_k))
            } else {
                None
            };
            let est = if cfg.density {
                let grid = grid.as_ref().ok_or(Error::GridMismatch)?;
                let g = AffineMap::scaling(d, c)?;
                Some(density::rescaled_predictive(&draws, &g, grid, Exec::Sequential)?)
            } else {
                None
            };
            Ok((k, est))
        };
        let result = fit();
        let status = status_of(&result);
        let (k, est) = result.unwrap_or((None, None));
        fits.push(FitRow {
            n,
            replicate: job.replicate,
            c,
            seed,
            k_hat: k.map(|v| v.0),
            mean_k: k.map(|v| v.1),
            status,
        });
        estimates.push(est);
    }

    let mut pairs = Vec::new();
    if cfg.density {
        for i in 0..cfg.constants.len() {
            for j in (i + 1)..cfg.constants.len() {
                let r = match (&estimates[i], &estimates[j]) {
                    (Some(a), Some(b)) => density::l1_distance(a, b),
                    _ => Err(Error::InvalidParameter("a fit in this pair failed".into())),
                };
                pairs.push(PairRow {
                    n,
                    replicate: job.replicate,
                    c1: cfg.constants[i],
                    c2: cfg.constants[j],
                    status: status_of(&r),
                    l1: r.ok(),
                });
            }
        }
    }
    JobOutput { fits, pairs }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = values.fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Runs a replicate study. Replicates run concurrently; failures are recorded
/// in the rows and left out of the aggregates.
pub fn run_replicate_study(study: Study, cfg: &ReplicateConfig, master_seed: u64, exec: Exec) -> Result<StudyReport> {
    if study == Study::Prop1 {
        return Err(Error::InvalidParameter("prop1 is not a replicate study".into()));
    }
    cfg.validate()?;
    let jobs: Vec<Job> = (0..cfg.sizes.len())
        .flat_map(|size_idx| (0..cfg.replicates).map(move |replicate| Job { size_idx, replicate }))
        .collect();
    let outputs = exec.map(jobs.len(), |k| run_job(study, cfg, master_seed, &jobs[k]));
    let mut fits = Vec::new();
    let mut pairs = Vec::new();
    for o in outputs {
        fits.extend(o.fits);
        pairs.extend(o.pairs);
    }

    let mean_k_hat = cfg.clustering.then(|| {
        cfg.sizes
            .iter()
            .map(|&n| {
                cfg.constants
                    .iter()
                    .map(|&c| {
                        mean(
                            fits.iter()
                                .filter(|r| r.n == n && r.c == c)
                                .filter_map(|r| r.k_hat.map(|k| k as f64)),
                        )
                    })
                    .collect()
            })
            .collect()
    });
    let (mean_l1, normalized_l1) = if cfg.density {
        let k = cfg.constants.len();
        let panels: Vec<Vec<Vec<f64>>> = cfg
            .sizes
            .iter()
            .map(|&n| {
                let mut m = vec![vec![0.0; k]; k];
                for i in 0..k {
                    for j in (i + 1)..k {
                        let (c1, c2) = (cfg.constants[i], cfg.constants[j]);
                        let v = mean(
                            pairs
                                .iter()
                                .filter(|r| r.n == n && r.c1 == c1 && r.c2 == c2)
                                .filter_map(|r| r.l1),
                        );
                        m[i][j] = v;
                        m[j][i] = v;
                    }
                }
                m
            })
            .collect();
        let normalized = normalize_panels(&panels);
        (Some(panels), Some(normalized))
    } else {
        (None, None)
    };
    Ok(StudyReport {
        study,
        sizes: cfg.sizes.clone(),
        constants: cfg.constants.clone(),
        fits,
        pairs,
        mean_k_hat,
        mean_l1,
        normalized_l1,
    })
}

/// Divides every panel by the largest finite entry across all panels.
pub fn normalize_panels(panels: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let max = panels
        .iter()
        .flatten()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max);
    panels
        .iter()
        .map(|m| {
            m.iter()
                .map(|r| r.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect())
                .collect()
        })
        .collect()
}

fn fmt_c(c: f64) -> String {
    if c < 1.0 && (1.0 / c).fract() == 0.0 {
        format!("1/{}", 1.0 / c)
    } else {
        c.to_string()
    }
}

/// Writes the tidy rows and aggregate tables of a study into `dir`.
pub fn write_study_report(report: &StudyReport, dir: &Path) -> Result<()> {
    let name = report.study.name();
    io::write_rows_csv(&dir.join(format!("{name}_fits.csv")), &report.fits)?;
    if !report.pairs.is_empty() {
        io::write_rows_csv(&dir.join(format!("{name}_pairs.csv")), &report.pairs)?;
    }
    let mut head = vec!["n".to_string()];
    head.extend(report.constants.iter().map(|c| format!("c={}", fmt_c(*c))));
    if let Some(k) = &report.mean_k_hat {
        let rows: Vec<Vec<f64>> = report
            .sizes
            .iter()
            .zip(k)
            .map(|(n, r)| std::iter::once(*n as f64).chain(r.iter().copied()).collect())
            .collect();
        io::write_matrix_csv(&dir.join(format!("{name}_mean_k_hat.csv")), &rows, Some(&head))?;
    }
    if let Some(panels) = &report.normalized_l1 {
        let mut chead = vec!["c".to_string()];
        chead.extend(report.constants.iter().map(|c| fmt_c(*c)));
        for (n, m) in report.sizes.iter().zip(panels) {
            let rows: Vec<Vec<f64>> = report
                .constants
                .iter()
                .zip(m)
                .map(|(c, r)| std::iter::once(*c).chain(r.iter().copied()).collect())
                .collect();
            io::write_matrix_csv(&dir.join(format!("{name}_normalized_l1_n{n}.csv")), &rows, Some(&chead))?;
        }
    }
    io::write_json(&dir.join(format!("{name}_summary.json")), report)
}

/// Settings of the matched-seed invariance replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prop1Config {
    pub n: usize,
    pub maps: usize,
    pub seeds: usize,
    pub n_iter: usize,
    pub aux_m: usize,
    /// Largest scale factor; scales are log-uniform on `[1/max_scale, max_scale]`.
    pub max_scale: f64,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Self {
            n: 50,
            maps: 5,
            seeds: 3,
            n_iter: 500,
            aux_m: 3,
            max_scale: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Row {
    pub map: usize,
    pub seed: u64,
    pub iter: usize,
    pub allocations_match: bool,
    /// Largest relative deviation of `(mu', Sigma')` from `(C mu + b, C Sigma Cᵀ)`.
    pub max_rel_err: f64,
}

/// Random diagonal map with positive log-uniform scales and normal shifts.
pub fn random_diagonal_map(d: usize, max_scale: f64, seed: u64) -> Result<AffineMap> {
    let mut rng = RngStream::new(seed, 0);
    let ln = max_scale.ln();
    let scales: Vec<f64> = (0..d).map(|_| (ln * (2.0 * rng.uniform() - 1.0)).exp()).collect();
    let shift: Vec<f64> = (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        })
        .collect();
    AffineMap::diagonal(&scales, &shift)
}

/// Random map with a full matrix: a rotation-shear times log-uniform scales,
/// re-drawn until well conditioned.
pub fn random_general_map(d: usize, max_scale: f64, seed: u64) -> Result<AffineMap> {
    let mut rng = RngStream::new(seed, 0);
    let ln = max_scale.ln();
    loop {
        let c = nalgebra::DMatrix::from_fn(d, d, |i, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i == j {
                (ln * (2.0 * rng.uniform() - 1.0)).exp() + 0.3 * z
            } else {
                0.7 * z
            }
        });
        let b = DVector::from_fn(d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        });
        let sv = c.clone().svd(false, false).singular_values;
        let cond = sv.max() / sv.min();
        if cond.is_finite() && cond < 20.0 {
            return AffineMap::new(c, b);
        }
    }
}

fn rel_err(a: &[f64], b: &[f64], scale: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    diff / scale.max(f64::MIN_POSITIVE)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

struct Snapshot {
    allocations: Vec<usize>,
    params: Vec<(Vec<f64>, Vec<f64>)>,
}

fn snapshot(state: &sampler::ChainState) -> Snapshot {
    Snapshot {
        allocations: state.allocations.clone(),
        params: state
            .clusters
            .iter()
            .map(|c| {
                (
                    c.params.mu.iter().copied().collect(),
                    c.params.sigma.entries().iter().copied().collect(),
                )
            })
            .collect(),
    }
}

/// Compares chains on `(X, π)` and `(g(X), π_g)` run with the same seed,
/// iteration by iteration. Hyperparameters and `alpha` are held fixed.
pub fn run_prop1(cfg: &Prop1Config, master_seed: u64, exec: Exec) -> Result<Vec<Prop1Row>> {
    let (base, _, _) = presets::mixture_study();
    let alpha = AlphaSpec::Fixed { value: 1.0 };
    let jobs: Vec<(usize, usize)> = (0..cfg.maps)
        .flat_map(|m| (0..cfg.seeds).map(move |s| (m, s)))
        .collect();
    let results = exec.map(jobs.len(), |k| -> Result<Vec<Prop1Row>> {
        let (m, s) = jobs[k];
        let code = Study::Prop1.code();
        let g = random_diagonal_map(2, cfg.max_scale, derive_seed(master_seed, &[code, 0, m as u64]))?;
        let data = scenario::simulate(&ScenarioSpec {
            kind: ScenarioKind::Mog2d,
            n: cfg.n,
            c: 1.0,
            seed: derive_seed(master_seed, &[code, 1, m as u64]),
        })?;
        let seed = derive_seed(master_seed, &[code, 2, m as u64, s as u64]);
        let chain = ChainConfig {
            n_iter: cfg.n_iter,
            burn_in: cfg.n_iter,
            thin: 1,
            aux_m: cfg.aux_m,
            seed,
            record_params: false,
        };
        let mut reference = Vec::with_capacity(cfg.n_iter);
        sampler::run_chain_observed(&data, &BaseSource::Fixed(base.clone()), None, &alpha, &chain, |st| {
            reference.push(snapshot(st))
        })?;
        let mapped = apply_affine(&data, &g)?;
        let base_g = map_base_measure(&base, &g)?;
        let mut rows = Vec::with_capacity(cfg.n_iter);
        let cm = g.matrix();
        let diag: Vec<f64> = (0..2).map(|i| cm[(i, i)]).collect();
        let cmax = inf_norm(&diag);
        let bmax = inf_norm(g.shift().as_slice());
        sampler::run_chain_observed(&mapped, &BaseSource::Fixed(base_g), None, &alpha, &chain, |st| {
            let r = &reference[rows.len()];
            let snap = snapshot(st);
            let allocations_match = snap.allocations == r.allocations && snap.params.len() == r.params.len();
            let mut err: f64 = 0.0;
            if allocations_match {
                for ((mu_g, sig_g), (mu, sig)) in snap.params.iter().zip(&r.params) {
                    let target: Vec<f64> = g.apply(mu);
                    err = err.max(rel_err(mu_g, &target, cmax * inf_norm(mu) + bmax));
                    // column-major entries of C Σ Cᵀ for diagonal C
                    let target: Vec<f64> = (0..4).map(|k| diag[k % 2] * sig[k] * diag[k / 2]).collect();
                    err = err.max(rel_err(sig_g, &target, inf_norm(&target)));
                }
            } else {
                err = f64::INFINITY;
            }
            rows.push(Prop1Row {
                map: m,
                seed,
                iter: st.iteration,
                allocations_match,
                max_rel_err: err,
            });
        })?;
        Ok(rows)
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Settings of the standardized analysis pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    /// Defaults to the smallest integer above both `(d + 1)(2d − 3)` and `d + 1`.
    pub nu0: Option<f64>,
    /// Diagonal of `E[Sigma]` on the standardized scale.
    pub expected_sigma: f64,
    pub chain: ChainConfig,
    pub level: f64,
    pub label_column: Option<String>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            nu0: None,
            expected_sigma: 1.0,
            chain: ChainConfig {
                n_iter: 20_000,
                burn_in: 5_000,
                ..ChainConfig::default()
            },
            level: 0.95,
            label_column: None,
        }
    }
}

pub fn default_nu0(d: usize) -> f64 {
    (model::robustness_threshold(d).max(d as f64 + 1.0)).floor() + 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub standardization: AffineMap,
    pub base: BaseMeasure,
    pub hyperprior: HyperPriorSpec,
    pub alpha_prior: AlphaSpec,
    pub alpha_prior_mean: f64,
    pub prior_expected_clusters: f64,
    pub robustness: RobustnessReport,
    pub optimal: OptimalPartition,
    pub credible_ball: CredibleBall,
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip)]
    pub psm: Psm,
    #[serde(skip)]
    pub draws: DrawSet,
}

/// Standardize, check the robustness condition, fit, and summarize the partition.
pub fn analyze(file: &DataFile, cfg: &AnalyzeConfig, seed: u64, exec: Exec) -> Result<AnalyzeReport> {
    let (data, g) = model::standardize(&file.data)?;
    let d = data.dim();
    let nu0 = cfg.nu0.unwrap_or_else(|| default_nu0(d));
    let (base, hyper, alpha) = presets::standardized_analysis(d, nu0, cfg.expected_sigma)?;
    let robustness = check_robustness_condition(&base, d);
    if !robustness.satisfied {
        log::warn!("{robustness}");
    }
    let chain = ChainConfig { seed, ..cfg.chain };
    let draws = sampler::run_chain(&data, &BaseSource::Fixed(base.clone()), Some(&hyper), &alpha, &chain)?;
    let parts = clustering::partitions(&draws);
    let psm = Psm::from_partitions(&parts, exec)?;
    let optimal = clustering::optimal_partition(&parts, &psm, exec)?;
    let credible_ball = clustering::credible_ball(&parts, &optimal.partition, cfg.level, exec)?;
    let confusion = match &file.labels {
        Some(l) => Some(clustering::confusion_matrix(&optimal.partition, l)?),
        None => None,
    };
    Ok(AnalyzeReport {
        standardization: g,
        alpha_prior_mean: alpha.initial_value(),
        prior_expected_clusters: expected_clusters(alpha.initial_value(), data.n()),
        base,
        hyperprior: hyper,
        alpha_prior: alpha,
        robustness,
        optimal,
        credible_ball,
        confusion,
        psm,
        draws,
    })
}
