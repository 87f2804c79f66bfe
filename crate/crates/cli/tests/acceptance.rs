//! Acceptance gate. One PASS/FAIL line per criterion.
//!
//! The replicate-study criteria (3, 4, 5) take about an hour on one core and
//! run only with `ACCEPTANCE_FULL=1`; otherwise they print SKIP.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use affine_dpm::clustering::{vi, Partition};
use affine_dpm::density::{compare_rescaled_general, hellinger, l1_distance, Axis, DensityEstimate, Grid};
use affine_dpm::exec::Exec;
use affine_dpm::experiment::{
    random_general_map, run_prop1, run_replicate_study, Prop1Config, ReplicateConfig, Scale, Study,
};
use affine_dpm::mathcore::dist::sample_inv_wishart;
use affine_dpm::mathcore::{RngStream, SpdMatrix};
use affine_dpm::model::{
    apply_affine, check_robustness_condition, expected_clusters, map_base_measure, presets, AffineMap, AlphaSpec,
    BaseMeasure, Dataset,
};
use affine_dpm::sampler::{mu_conditional, run_chain, sigma_conditional, BaseSource, ChainConfig};
use affine_dpm::scenario::{simulate, ScenarioKind, ScenarioSpec};
use nalgebra::{DMatrix, DVector};

// criterion 1
const PROP1_REL_TOL: f64 = 1e-8;
const PROP1_BUDGET: Duration = Duration::from_secs(60);
// criterion 2
const GENERAL_MAP_L1: f64 = 0.05;
const GENERAL_MAP_BUDGET: Duration = Duration::from_secs(300);
// criteria 3 and 5
const HARNESS_SEEDS: u64 = 10;
const TREND_MIN_SEEDS: usize = 8;
// criterion 4
const K_C1_N1000: (f64, f64) = (1.7, 2.5);
const K_C02_N300: (f64, f64) = (1.7, 2.4);
const K_C5_N100_MIN: f64 = 6.0;
const K_RATIO_N1000: (f64, f64) = (0.85, 1.35);
// criterion 6
const EXPECTED_K: (f64, f64) = (1.9, 2.1);
// criterion 7
const CONJ_MEAN_TOL: f64 = 1e-6;
const CONJ_VAR_TOL: f64 = 1e-4;
const IW_MAX_Z: f64 = 3.0;
const IW_SAMPLES: usize = 100_000;
// criterion 8
const ENUM_TV: f64 = 0.05;
const ENUM_SWEEPS: usize = 200_000;
const ENUM_BUDGET: Duration = Duration::from_secs(600);
// criterion 9
const VI_TRIPLES: usize = 1000;
const L1_NORMALS: (f64, f64) = (0.645, 0.005);
const HELLINGER_NORMALS: (f64, f64) = (0.48475, 0.002);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Option<Outcome> {
    Some(Outcome { pass, detail })
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

fn full() -> bool {
    std::env::var("ACCEPTANCE_FULL").is_ok_and(|v| v == "1")
}

fn criterion_1() -> Option<Outcome> {
    let t = Instant::now();
    let rows = run_prop1(&Prop1Config::default(), 2024, Exec::Parallel).expect("replay runs");
    let all_match = rows.iter().all(|r| r.allocations_match);
    let err = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let el = t.elapsed();
    outcome(
        all_match && err <= PROP1_REL_TOL && el < PROP1_BUDGET,
        format!(
            "{} iterations compared, allocations identical: {all_match}, max relative error {err:.2e}, {el:.1?}",
            rows.len()
        ),
    )
}

fn criterion_2() -> Option<Outcome> {
    let t = Instant::now();
    let (pi, hyper, alpha) = presets::mixture_study();
    let data = simulate(&ScenarioSpec {
        kind: ScenarioKind::Mog2d,
        n: 100,
        c: 1.0,
        seed: 21,
    })
    .unwrap();
    let grid = Grid::around(&data, 0.25, 100).unwrap();
    let mut worst: f64 = 0.0;
    let mut ds = Vec::new();
    for k in 0..3u64 {
        let g = random_general_map(2, 5.0, 100 + k).unwrap();
        assert!(!g.is_diagonal());
        let cfg = ChainConfig {
            seed: 5 + k,
            ..ChainConfig::default()
        };
        let a = run_chain(&data, &BaseSource::Fixed(pi.clone()), Some(&hyper), &alpha, &cfg).unwrap();
        let gx = apply_affine(&data, &g).unwrap();
        let pig = map_base_measure(&pi, &g).unwrap();
        let b = run_chain(
            &gx,
            &BaseSource::Fixed(pig),
            Some(&hyper.map(&g).unwrap()),
            &alpha,
            &cfg,
        )
        .unwrap();
        let d = compare_rescaled_general(&a, &b, &AffineMap::identity(2), &g, &grid).unwrap();
        worst = worst.max(d);
        ds.push(format!("{d:.4}"));
    }
    let el = t.elapsed();
    outcome(
        worst <= GENERAL_MAP_L1 && el < GENERAL_MAP_BUDGET,
        format!("L1 per map [{}], bound {GENERAL_MAP_L1}, {el:.1?}", ds.join(", ")),
    )
}

fn desk(study: Study, constants: Vec<f64>, clustering: bool) -> ReplicateConfig {
    ReplicateConfig {
        constants,
        clustering,
        ..ReplicateConfig::new(study, Scale::Desk)
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Seed 0 runs all five constants with clustering (criterion 4 reads it);
/// the other seeds run only the extreme pair.
fn trend_study(study: Study) -> (usize, Vec<String>, Option<affine_dpm::experiment::StudyReport>) {
    let mut hits = 0;
    let mut lines = Vec::new();
    let mut first = None;
    for seed in 0..HARNESS_SEEDS {
        let t = Instant::now();
        let cfg = if seed == 0 && study == Study::Fig2 {
            desk(study, vec![0.2, 0.5, 1.0, 2.0, 5.0], true)
        } else {
            desk(study, vec![0.2, 5.0], false)
        };
        let r = run_replicate_study(study, &cfg, seed, Exec::Parallel).expect("study runs");
        let trend = r.pair_trend(0.2, 5.0).expect("pair present");
        let ok = strictly_decreasing(&trend) && r.failures() == 0;
        hits += usize::from(ok);
        let t = t.elapsed();
        lines.push(format!(
            "    seed {seed}: {} {}",
            trend.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" > "),
            if ok {
                format!("ok ({t:.0?})")
            } else {
                format!("not decreasing ({t:.0?})")
            }
        ));
        if seed == 0 {
            first = Some(r);
        }
    }
    (hits, lines, first)
}

fn criteria_3_and_4() -> (Option<Outcome>, Option<Outcome>) {
    if !full() {
        return (None, None);
    }
    let (hits, lines, first) = trend_study(Study::Fig2);
    for l in &lines {
        println!("{l}");
    }
    let c3 = outcome(
        hits >= TREND_MIN_SEEDS,
        format!("(c=1/5, c=5) distance decreasing in {hits}/{HARNESS_SEEDS} seeds, need {TREND_MIN_SEEDS}"),
    );
    let r = first.expect("seed 0");
    let k = |n, c| r.k_hat(n, c).unwrap();
    let (a, b, c, ratio) = (k(1000, 1.0), k(300, 0.2), k(100, 5.0), k(1000, 5.0) / k(1000, 0.2));
    let checks = [
        within(a, K_C1_N1000),
        within(b, K_C02_N300),
        c >= K_C5_N100_MIN,
        within(ratio, K_RATIO_N1000),
    ];
    let mark = |ok: bool| if ok { "ok" } else { "out of range" };
    let c4 = outcome(
        checks.iter().all(|x| *x),
        format!(
            "K(c=1,n=1000) {a:.2} {}; K(c=1/5,n=300) {b:.2} {}; K(c=5,n=100) {c:.2} {}; ratio at n=1000 {ratio:.3} {}",
            mark(checks[0]),
            mark(checks[1]),
            mark(checks[2]),
            mark(checks[3])
        ),
    );
    (c3, c4)
}

fn criterion_5() -> Option<Outcome> {
    if !full() {
        return None;
    }
    let (hits, lines, _) = trend_study(Study::Fig4);
    for l in &lines {
        println!("{l}");
    }
    outcome(
        hits >= TREND_MIN_SEEDS,
        format!("(c=1/5, c=5) distance decreasing in {hits}/{HARNESS_SEEDS} seeds, need {TREND_MIN_SEEDS}"),
    )
}

fn criterion_6() -> Option<Outcome> {
    let e = expected_clusters(0.19, 139);
    // independent summation
    let oracle: f64 = (1..=139).map(|i| 0.19 / (0.19 + i as f64 - 1.0)).sum();
    outcome(
        within(e, EXPECTED_K) && (e - oracle).abs() < 1e-12,
        format!("expected_clusters(0.19, 139) = {e:.4}"),
    )
}

fn univariate(m0: f64, b0: f64, nu0: f64, s0: f64) -> BaseMeasure {
    BaseMeasure::new(
        DVector::from_vec(vec![m0]),
        SpdMatrix::diagonal(&[b0]).unwrap(),
        nu0,
        SpdMatrix::diagonal(&[s0]).unwrap(),
    )
    .unwrap()
}

/// Posterior mean and variance of a scalar by the trapezoid rule on `[lo, hi]`
/// in the variable `t`, with `value(t)` the quantity of interest.
fn quadrature<F: Fn(f64) -> f64, V: Fn(f64) -> f64>(log_density: F, value: V, lo: f64, hi: f64) -> (f64, f64) {
    let steps = 400_000;
    let h = (hi - lo) / steps as f64;
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for j in 0..=steps {
        let t = lo + j as f64 * h;
        let w = if j == 0 || j == steps { 0.5 } else { 1.0 } * log_density(t).exp();
        let v = value(t);
        z += w;
        m1 += w * v;
        m2 += w * v * v;
    }
    let m = m1 / z;
    (m, m2 / z - m * m)
}

fn criterion_7() -> Option<Outcome> {
    let (m0, b0, nu0, s0) = (0.4, 2.0, 5.0, 1.5);
    let pi = univariate(m0, b0, nu0, s0);
    let (mut mean_err, mut var_err): (f64, f64) = (0.0, 0.0);
    let toy: [&[f64]; 3] = [&[0.3], &[-1.0, 2.2], &[0.1, 0.5, 1.7]];
    for xs in toy {
        let n = xs.len();
        // mean | variance
        let s2 = 0.8;
        let xbar = xs.iter().sum::<f64>() / n as f64;
        let (mn, bn) = mu_conditional(
            &pi,
            &SpdMatrix::diagonal(&[s2]).unwrap(),
            n,
            &DVector::from_vec(vec![xbar]),
        )
        .unwrap();
        let lp =
            |mu: f64| -(mu - m0).powi(2) / (2.0 * b0) - xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (2.0 * s2);
        let (qm, qv) = quadrature(lp, |mu| mu, -20.0, 20.0);
        mean_err = mean_err.max((mn[0] - qm).abs());
        var_err = var_err.max((bn.entries()[(0, 0)] - qv).abs());
        // variance | mean, integrated over t = ln s²
        let mu = 0.2;
        let scatter: f64 = xs.iter().map(|x| (x - mu).powi(2)).sum();
        let (df, scale) = sigma_conditional(&pi, n, &DMatrix::from_element(1, 1, scatter)).unwrap();
        let lp = |t: f64| {
            let s2 = t.exp();
            -(nu0 / 2.0) * t - s0 / (2.0 * s2) - n as f64 / 2.0 * t - scatter / (2.0 * s2)
        };
        let (qm, qv) = quadrature(lp, f64::exp, -14.0, 14.0);
        let s = scale.entries()[(0, 0)];
        mean_err = mean_err.max((s / (df - 2.0) - qm).abs());
        var_err = var_err.max((2.0 * s * s / ((df - 2.0).powi(2) * (df - 4.0)) - qv).abs());
    }
    let conj_ok = mean_err <= CONJ_MEAN_TOL && var_err <= CONJ_VAR_TOL;

    let mut zs = Vec::new();
    for (k, (d, nu)) in [(1usize, 4.0), (2, 6.0), (4, 26.0)].into_iter().enumerate() {
        let s0 = SpdMatrix::new(DMatrix::from_fn(d, d, |i, j| {
            2.0 * 0.5f64.powi((i as i32 - j as i32).abs())
        }))
        .unwrap();
        let mut rng = RngStream::new(70 + k as u64, 0);
        let draws: Vec<DMatrix<f64>> = (0..IW_SAMPLES)
            .map(|_| sample_inv_wishart(nu, &s0, &mut rng).unwrap().into_entries())
            .collect();
        let target = s0.entries() / (nu - d as f64 - 1.0);
        let nf = IW_SAMPLES as f64;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..=i {
                let m = draws.iter().map(|s| s[(i, j)]).sum::<f64>() / nf;
                let v = draws.iter().map(|s| (s[(i, j)] - m).powi(2)).sum::<f64>() / (nf - 1.0);
                worst = worst.max((m - target[(i, j)]).abs() / (v / nf).sqrt());
            }
        }
        zs.push((d, nu, worst));
    }
    let iw_ok = zs.iter().all(|z| z.2 <= IW_MAX_Z);
    outcome(
        conj_ok && iw_ok,
        format!(
            "conditional mean err {mean_err:.1e}, variance err {var_err:.1e}; IW max |z| {}",
            zs.iter()
                .map(|(d, nu, z)| format!("(d={d}, nu0={nu}) {z:.2}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let a = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(cur: &mut Vec<u32>, n: usize, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            cur.push(l);
            rec(cur, n, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, &mut out);
    out
}

/// log marginal of a block: the mean integrated in closed form, the variance by quadrature in ln s².
fn block_log_marginal(xs: &[f64], m0: f64, b0: f64, nu0: f64, s0: f64) -> f64 {
    let k = xs.len() as f64;
    let (a, b) = (nu0 / 2.0, s0 / 2.0);
    let ss: f64 = xs.iter().map(|v| (v - m0).powi(2)).sum();
    let sd: f64 = xs.iter().map(|v| v - m0).sum();
    let steps = 40_000;
    let (lo, hi) = (-14.0, 10.0);
    let h = (hi - lo) / steps as f64;
    let vals: Vec<f64> = (0..=steps)
        .map(|j| {
            let t = lo + j as f64 * h;
            let s2 = t.exp();
            let log_det = (k - 1.0) * t + (s2 + k * b0).ln();
            let q = ss / s2 - b0 * sd * sd / (s2 * (s2 + k * b0));
            -0.5 * k * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * q + a * b.ln() - ln_gamma(a) - a * t - b / s2
        })
        .collect();
    let mx = vals.iter().copied().fold(f64::MIN, f64::max);
    let s: f64 = vals
        .iter()
        .enumerate()
        .map(|(j, v)| if j == 0 || j == steps { 0.5 } else { 1.0 } * (v - mx).exp())
        .sum();
    mx + (s * h).ln()
}

fn criterion_8() -> Option<Outcome> {
    let t = Instant::now();
    let x = [-1.3, -0.8, 0.2, 1.4, 1.9];
    let (m0, b0, nu0, s0, alpha): (f64, f64, f64, f64, f64) = (0.0, 1.0, 4.0, 1.0, 1.0);
    let parts = set_partitions(x.len());
    let logp: Vec<f64> = parts
        .iter()
        .map(|p| {
            Partition::new(p)
                .blocks()
                .iter()
                .map(|blk| {
                    let xs: Vec<f64> = blk.iter().map(|&i| x[i]).collect();
                    alpha.ln() + ln_gamma(blk.len() as f64) + block_log_marginal(&xs, m0, b0, nu0, s0)
                })
                .sum()
        })
        .collect();
    let mx = logp.iter().copied().fold(f64::MIN, f64::max);
    let z: f64 = logp.iter().map(|v| (v - mx).exp()).sum();

    let data = Dataset::from_rows(&x.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
    let cfg = ChainConfig {
        n_iter: ENUM_SWEEPS + 1000,
        burn_in: 1000,
        thin: 1,
        aux_m: 3,
        seed: 3,
        record_params: false,
    };
    let base = BaseSource::Fixed(univariate(m0, b0, nu0, s0));
    let draws = run_chain(&data, &base, None, &AlphaSpec::Fixed { value: alpha }, &cfg).unwrap();
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for d in &draws.draws {
        *counts
            .entry(Partition::new(&d.allocations).labels().to_vec())
            .or_default() += 1;
    }
    let tt = draws.len() as f64;
    let tv = 0.5
        * parts
            .iter()
            .zip(&logp)
            .map(|(p, l)| (counts.get(p).copied().unwrap_or(0) as f64 / tt - (l - mx).exp() / z).abs())
            .sum::<f64>();
    let el = t.elapsed();
    outcome(
        parts.len() == 52 && tv <= ENUM_TV && el < ENUM_BUDGET,
        format!(
            "{} partitions, total variation {tv:.4} over {} sweeps, {el:.1?}",
            parts.len(),
            draws.len()
        ),
    )
}

fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

fn criterion_9() -> Option<Outcome> {
    let mut rng = RngStream::new(99, 0);
    let mut label = |n: usize| -> Vec<u32> { (0..n).map(|_| (rng.uniform() * 5.0) as u32).collect() };
    let mut vi_ok = true;
    for _ in 0..VI_TRIPLES {
        let (a, b, c) = (
            Partition::new(&label(20)),
            Partition::new(&label(20)),
            Partition::new(&label(20)),
        );
        let ab = vi(&a, &b).unwrap();
        let ba = vi(&b, &a).unwrap();
        vi_ok &= vi(&a, &a).unwrap() == 0.0
            && ab >= 0.0
            && (ab == 0.0) == (a == b)
            && (ab - ba).abs() <= 1e-12
            && ab <= vi(&a, &c).unwrap() + vi(&c, &b).unwrap() + 1e-12;
    }
    let grid = Grid::new(vec![Axis {
        min: -40.0,
        max: 40.0,
        steps: 16_001,
    }])
    .unwrap();
    let mut bounds_ok = true;
    let mut rng = RngStream::new(98, 0);
    for _ in 0..200 {
        let p: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
        let f = DensityEstimate::from_fn(grid.clone(), |x| {
            normal_pdf(x[0], 10.0 * (p[0] - 0.5), 0.2 + 3.0 * p[1])
        })
        .unwrap();
        let g = DensityEstimate::from_fn(grid.clone(), |x| {
            normal_pdf(x[0], 10.0 * (p[2] - 0.5), 0.2 + 3.0 * p[3])
        })
        .unwrap();
        bounds_ok &= l1_distance(&f, &g).unwrap() <= 2.0 + 1e-9 && hellinger(&f, &g).unwrap() <= 2f64.sqrt() + 1e-9;
    }
    let fine = Grid::new(vec![Axis {
        min: -30.0,
        max: 30.0,
        steps: 60_001,
    }])
    .unwrap();
    let n01 = DensityEstimate::from_fn(fine.clone(), |x| normal_pdf(x[0], 0.0, 1.0)).unwrap();
    let n04 = DensityEstimate::from_fn(fine.clone(), |x| normal_pdf(x[0], 0.0, 2.0)).unwrap();
    let n11 = DensityEstimate::from_fn(fine, |x| normal_pdf(x[0], 1.0, 1.0)).unwrap();
    let l1 = l1_distance(&n01, &n04).unwrap();
    let h = hellinger(&n01, &n11).unwrap();
    // crossing-point oracle: ∫|f − g| = 4 (Φ(r) − Φ(r/2)) with r² = 8 ln 2 / 3, Φ by midpoint rule
    let r = (8.0 * 2f64.ln() / 3.0).sqrt();
    let steps = 200_000;
    let hh = r / steps as f64;
    let oracle = 4.0
        * (0..steps)
            .map(|k| {
                let x = (k as f64 + 0.5) * hh;
                (normal_pdf(x, 0.0, 1.0) - normal_pdf(x, 0.0, 2.0)) * hh
            })
            .sum::<f64>();
    let l1_ok = (l1 - L1_NORMALS.0).abs() <= L1_NORMALS.1 && (l1 - oracle).abs() < 1e-6;
    let h_ok = (h - HELLINGER_NORMALS.0).abs() <= HELLINGER_NORMALS.1;
    outcome(
        vi_ok && bounds_ok && l1_ok && h_ok,
        format!(
            "VI axioms on {VI_TRIPLES} triples: {vi_ok}; L1/Hellinger bounds: {bounds_ok}; L1(N(0,1), N(0,4)) = {l1:.4}; H(N(0,1), N(1,1)) = {h:.5}"
        ),
    )
}

fn criterion_10() -> Option<Outcome> {
    let base = |nu0: f64| {
        BaseMeasure::new(
            DVector::zeros(4),
            SpdMatrix::identity(4),
            nu0,
            SpdMatrix::diagonal(&[21.0; 4]).unwrap(),
        )
        .unwrap()
    };
    let at26 = check_robustness_condition(&base(26.0), 4).satisfied;
    let at25 = check_robustness_condition(&base(25.0), 4).satisfied;
    outcome(at26 && !at25, format!("d=4: nu0=26 -> {at26}, nu0=25 -> {at25}"))
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_affine-dpm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn same_files(a: &Path, b: &Path) -> bool {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    !names.is_empty()
        && names
            .iter()
            .all(|n| std::fs::read(a.join(n)).ok() == std::fs::read(b.join(n)).ok())
}

fn criterion_11() -> Option<Outcome> {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).display().to_string();
    std::fs::write(
        root.join("cfg.json"),
        r#"{"sampler": {"n_iter": 400, "burn_in": 200, "thin": 2}, "grid": {"steps": 40},
            "maps": [{"C": [[1, 0], [0, 1]], "b": [0, 0]}, {"C": [[2, 0.5], [0, 1]], "b": [1, 0]}],
            "analyze": {"chain": {"n_iter": 300, "burn_in": 100}},
            "prop1": {"n": 20, "maps": 2, "seeds": 1, "n_iter": 50},
            "experiment": {"replicates": 2, "sizes": [30, 60], "constants": [0.5, 2.0],
                           "chain": {"n_iter": 120, "burn_in": 60, "thin": 3}, "grid_steps": 30}}"#,
    )
    .unwrap();
    let cfg = p("cfg.json");
    let steps: Vec<(&str, Vec<String>)> = vec![
        (
            "sim",
            vec![
                "simulate".into(),
                "--scenario".into(),
                "mog2d".into(),
                "--n".into(),
                "80".into(),
            ],
        ),
        ("fit", vec!["fit".into(), "--data".into(), p("sim/data.csv")]),
        (
            "dens",
            vec![
                "density".into(),
                "--draws".into(),
                p("fit/draws.jsonl"),
                "--data".into(),
                p("sim/data.csv"),
            ],
        ),
        (
            "cmp",
            vec![
                "compare".into(),
                "--draws".into(),
                p("fit/draws.jsonl"),
                p("fit/draws.jsonl"),
                "--data".into(),
                p("sim/data.csv"),
            ],
        ),
        ("clu", vec!["cluster".into(), "--draws".into(), p("fit/draws.jsonl")]),
        ("ana", vec!["analyze".into(), "--data".into(), p("sim/data.csv")]),
        ("exp", vec!["experiment".into(), "--study".into(), "fig2".into()]),
        ("pr1", vec!["experiment".into(), "--study".into(), "prop1".into()]),
    ];
    let mut failures = Vec::new();
    for (dir, args) in &steps {
        let mut full_args = vec!["--seed", "17", "--workers", "1", "--config", cfg.as_str()];
        let out_dir = p(dir);
        full_args.extend(["--out-dir", out_dir.as_str()]);
        full_args.extend(args.iter().map(String::as_str));
        let first = cli(&full_args);
        if !first.status.success() {
            failures.push(format!("{dir}: {}", String::from_utf8_lossy(&first.stderr).trim()));
            continue;
        }
        let cmd = if args[0] == "experiment" {
            "experiment"
        } else {
            args[0].as_str()
        };
        let manifest = format!("{out_dir}/{cmd}_manifest.json");
        let again = p(&format!("{dir}_again"));
        let second = cli(&[
            "--workers",
            "4",
            "--out-dir",
            again.as_str(),
            "rerun",
            manifest.as_str(),
        ]);
        if !second.status.success() || !same_files(Path::new(&out_dir), Path::new(&again)) {
            failures.push(format!(
                "{dir}: rerun differs ({})",
                String::from_utf8_lossy(&second.stderr).trim()
            ));
        }
    }
    let missing = cli(&["fit", "--data", &p("nope.csv")]).status.code();
    let bad_flag = cli(&["fit", "--bogus"]).status.code();
    let codes_ok = missing == Some(2) && bad_flag == Some(2);
    if !codes_ok {
        failures.push(format!("exit codes: missing file {missing:?}, bad flag {bad_flag:?}"));
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} commands re-run from their manifests with 4 workers, all bytes identical",
                steps.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, o: Option<Outcome>| match o {
        Some(o) => {
            failed += usize::from(!o.pass);
            println!(
                "criterion {n:>2} {}: {name}: {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
        }
        None => println!("criterion {n:>2} SKIP: {name}: set ACCEPTANCE_FULL=1 to run"),
    };
    report(1, "exact invariance under diagonal maps", criterion_1());
    report(2, "distributional invariance under general maps", criterion_2());
    let (c3, c4) = criteria_3_and_4();
    report(3, "mixture rescaling trend", c3);
    report(4, "mean optimal-partition size spot checks", c4);
    report(5, "Student-t rescaling trend", criterion_5());
    report(6, "expected number of clusters", criterion_6());
    report(7, "conjugate conditionals and inverse-Wishart mean", criterion_7());
    report(8, "five-point partition posterior", criterion_8());
    report(9, "partition and density metrics", criterion_9());
    report(10, "robustness threshold", criterion_10());
    report(11, "manifest re-runs are byte-identical", criterion_11());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
