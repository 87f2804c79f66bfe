use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::json;

use affine_dpm::clustering::{self, Psm};
use affine_dpm::density::{self, DistanceMatrix};
use affine_dpm::exec::Exec;
use affine_dpm::experiment::{self, Scale, Study};
use affine_dpm::io::{self, DataFile};
use affine_dpm::model::{AffineMap, Dataset};
use affine_dpm::sampler::DrawSet;
use affine_dpm::scenario::{self, ScenarioKind, ScenarioSpec};
use affine_dpm::{sampler, Error, Result};

use crate::config::Config;
use crate::manifest::{self, FileHash, Manifest};
use crate::{Cli, Command, ScaleArg, ScenarioArg, StudyArg};

const EXEC: Exec = Exec::Parallel;

/// What a command used and produced, for its manifest.
struct Outcome {
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Fit { .. } => "fit",
        Command::Density { .. } => "density",
        Command::Compare { .. } => "compare",
        Command::Cluster { .. } => "cluster",
        Command::Experiment { .. } => "experiment",
        Command::Analyze { .. } => "analyze",
        Command::Rerun { .. } => "rerun",
    }
}

pub fn run(cli: &Cli, raw_args: &[String]) -> Result<()> {
    if let Command::Rerun { manifest } = &cli.command {
        return rerun(cli, manifest);
    }
    let cfg = match &cli.config {
        Some(p) => Config::from_path(p)?,
        None => Config::default(),
    };
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = &cli.out_dir;
    let outcome = match &cli.command {
        Command::Simulate { scenario, n, c, input } => simulate(out, cli.seed, *scenario, *n, *c, input.as_deref())?,
        Command::Fit { data } => fit(out, &cfg, cli.seed, data)?,
        Command::Density { draws, data } => density_cmd(out, &cfg, draws, data.as_deref())?,
        Command::Compare { draws, data } => compare(out, &cfg, draws, data.as_deref())?,
        Command::Cluster { draws, level } => cluster(out, &cfg, draws, *level)?,
        Command::Experiment { study, scale } => experiment_cmd(out, &cfg, cli.seed, *study, *scale)?,
        Command::Analyze {
            data,
            label_column,
            level,
        } => analyze(out, &cfg, cli.seed, data, label_column.clone(), *level)?,
        Command::Rerun { .. } => unreachable!(),
    };
    let mut inputs = outcome.inputs;
    if let Some(p) = &cli.config {
        inputs.insert(0, p.clone());
    }
    let hash = |rel: &Path, abs: &Path| -> Result<FileHash> {
        Ok(FileHash {
            path: rel.display().to_string(),
            sha256: manifest::sha256_file(abs)?,
        })
    };
    let m = Manifest {
        command: name(&cli.command).to_string(),
        args: manifest::portable_args(raw_args),
        master_seed: cli.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: manifest::sha256_json(&outcome.config)?,
        config: outcome.config,
        inputs: inputs.iter().map(|p| hash(p, p)).collect::<Result<_>>()?,
        outputs: outcome
            .outputs
            .iter()
            .map(|f| hash(Path::new(f), &out.join(f)))
            .collect::<Result<_>>()?,
    };
    m.write(out)?;
    for f in &m.outputs {
        println!("{}", out.join(&f.path).display());
    }
    Ok(())
}

fn rerun(cli: &Cli, path: &Path) -> Result<()> {
    let m = Manifest::read(path)?;
    m.check_inputs()?;
    let mut argv = vec!["affine-dpm".to_string()];
    argv.extend(m.args.iter().cloned());
    argv.push("--out-dir".into());
    argv.push(cli.out_dir.display().to_string());
    let again = Cli::try_parse_from(&argv).map_err(|e| Error::InvalidParameter(format!("manifest arguments: {e}")))?;
    if matches!(again.command, Command::Rerun { .. }) {
        return Err(Error::InvalidParameter("a manifest cannot record a rerun".into()));
    }
    run(&again, &m.args)?;
    let bad = m.mismatches(&cli.out_dir)?;
    if bad.is_empty() {
        println!("all {} outputs reproduced", m.outputs.len());
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "outputs differ from the manifest: {}",
            bad.join(", ")
        )))
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("no such file: {}", path.display())))
    }
}

fn read_data(path: &Path, label_column: Option<&str>) -> Result<DataFile> {
    require(path)?;
    io::read_data_csv(path, label_column)
}

fn read_draws(path: &Path) -> Result<DrawSet> {
    require(path)?;
    require(&io::meta_path(path))?;
    io::read_draws(path)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn simulate(
    out: &Path,
    seed: u64,
    kind: ScenarioArg,
    n: Option<usize>,
    c: f64,
    input: Option<&Path>,
) -> Result<Outcome> {
    let (data, header, config, inputs) = match kind {
        ScenarioArg::File => {
            let path = input.ok_or_else(|| Error::InvalidParameter("--scenario file needs --input".into()))?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
            }
            let f = read_data(path, None)?;
            let config = json!({ "kind": "file", "c": c });
            (f.data.scaled(c), f.header, config, vec![path.to_path_buf()])
        }
        _ => {
            let spec = ScenarioSpec {
                kind: if kind == ScenarioArg::Mog2d {
                    ScenarioKind::Mog2d
                } else {
                    ScenarioKind::StudentT
                },
                n: n.ok_or_else(|| Error::InvalidParameter("--n is required".into()))?,
                c,
                seed,
            };
            (scenario::simulate(&spec)?, None, to_value(&spec)?, Vec::new())
        }
    };
    io::write_data_csv(&out.join("data.csv"), &data, header.as_deref())?;
    Ok(Outcome {
        config,
        inputs,
        outputs: vec!["data.csv".into()],
    })
}

fn fit(out: &Path, cfg: &Config, seed: u64, data_path: &Path) -> Result<Outcome> {
    let data = read_data(data_path, None)?.data;
    let s = cfg.fit_settings(data.dim(), seed)?;
    let draws = sampler::run_chain(&data, &s.base, s.hyperprior.as_ref(), &s.alpha, &s.sampler)?;
    for w in &draws.warnings {
        eprintln!("warning: {w}");
    }
    io::write_draws(&out.join("draws.jsonl"), &draws)?;
    let outputs = if s.sampler.record_params {
        io::write_traces_csv(&out.join("traces.csv"), &sampler::traces(&draws, &data)?)?;
        vec!["draws.jsonl".into(), "draws.meta.json".into(), "traces.csv".into()]
    } else {
        vec!["draws.jsonl".into(), "draws.meta.json".into()]
    };
    Ok(Outcome {
        config: to_value(&s)?,
        inputs: vec![data_path.to_path_buf()],
        outputs,
    })
}

fn grid_data(path: Option<&Path>) -> Result<Option<Dataset>> {
    path.map(|p| read_data(p, None).map(|f| f.data)).transpose()
}

fn density_cmd(out: &Path, cfg: &Config, draws_path: &Path, data: Option<&Path>) -> Result<Outcome> {
    let draws = read_draws(draws_path)?;
    let grid = cfg.grid.resolve(grid_data(data)?.as_ref())?;
    let est = density::predictive_density_with(&draws, &grid, EXEC)?;
    io::write_density_csv(&out.join("density.csv"), &est)?;
    let mut inputs = vec![draws_path.to_path_buf(), io::meta_path(draws_path)];
    inputs.extend(data.map(Path::to_path_buf));
    Ok(Outcome {
        config: json!({ "grid": grid.axes(), "mass": est.mass }),
        inputs,
        outputs: vec!["density.csv".into()],
    })
}

fn compare(out: &Path, cfg: &Config, draws_paths: &[PathBuf], data: Option<&Path>) -> Result<Outcome> {
    let sets = draws_paths.iter().map(|p| read_draws(p)).collect::<Result<Vec<_>>>()?;
    let d = sets[0].dim;
    let maps = match &cfg.maps {
        Some(m) if m.len() != sets.len() => {
            return Err(Error::InvalidParameter(format!(
                "{} maps for {} draws files",
                m.len(),
                sets.len()
            )))
        }
        Some(m) => m.clone(),
        None => vec![AffineMap::identity(d); sets.len()],
    };
    let grid = cfg.grid.resolve(grid_data(data)?.as_ref())?;
    let diagonal = maps.iter().all(AffineMap::is_diagonal);
    let estimates = sets
        .iter()
        .zip(&maps)
        .map(|(s, g)| {
            if diagonal {
                density::rescaled_predictive(s, g, &grid, EXEC)
            } else {
                density::pulled_back_predictive(s, g, &grid, EXEC)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let k = estimates.len();
    let mut l1 = vec![vec![0.0; k]; k];
    let mut hel = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            l1[i][j] = density::l1_distance(&estimates[i], &estimates[j])?;
            hel[i][j] = density::hellinger(&estimates[i], &estimates[j])?;
            l1[j][i] = l1[i][j];
            hel[j][i] = hel[i][j];
        }
    }
    let l1 = DistanceMatrix::from_raw(l1);
    let report = json!({
        "method": if diagonal { "pushforward" } else { "pullback" },
        "distance": l1.raw[0][1],
        "l1": l1,
        "hellinger": hel,
        "mass": estimates.iter().map(|e| e.mass).collect::<Vec<_>>(),
    });
    io::write_json(&out.join("compare.json"), &report)?;
    io::write_matrix_csv(&out.join("compare_matrix.csv"), &l1.raw, None)?;
    let mut inputs = Vec::new();
    for p in draws_paths {
        inputs.push(p.clone());
        inputs.push(io::meta_path(p));
    }
    inputs.extend(data.map(Path::to_path_buf));
    Ok(Outcome {
        config: json!({ "grid": grid.axes(), "maps": maps }),
        inputs,
        outputs: vec!["compare.json".into(), "compare_matrix.csv".into()],
    })
}

fn cluster(out: &Path, cfg: &Config, draws_path: &Path, level: Option<f64>) -> Result<Outcome> {
    let draws = read_draws(draws_path)?;
    let level = level.or(cfg.level).unwrap_or(0.95);
    let parts = clustering::partitions(&draws);
    let psm = Psm::from_partitions(&parts, EXEC)?;
    let opt = clustering::optimal_partition(&parts, &psm, EXEC)?;
    let ball = clustering::credible_ball(&parts, &opt.partition, level, EXEC)?;
    io::write_json(&out.join("partition.json"), &opt.partition)?;
    io::write_psm_csv(&out.join("psm.csv"), &psm)?;
    io::write_json(&out.join("credible_ball.json"), &ball)?;
    Ok(Outcome {
        config: json!({
            "level": level,
            "vi_log_base": "e",
            "expected_vi_bound": opt.expected_vi_bound,
            "source": opt.source,
        }),
        inputs: vec![draws_path.to_path_buf(), io::meta_path(draws_path)],
        outputs: vec!["partition.json".into(), "psm.csv".into(), "credible_ball.json".into()],
    })
}

fn experiment_cmd(out: &Path, cfg: &Config, seed: u64, study: StudyArg, scale: ScaleArg) -> Result<Outcome> {
    let study = match study {
        StudyArg::Table1 => Study::Table1,
        StudyArg::Fig2 => Study::Fig2,
        StudyArg::Fig4 => Study::Fig4,
        StudyArg::Prop1 => Study::Prop1,
    };
    let scale = match scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Paper => Scale::Paper,
    };
    if study == Study::Prop1 {
        let p = cfg.prop1.clone().unwrap_or_default();
        let rows = experiment::run_prop1(&p, seed, EXEC)?;
        io::write_rows_csv(&out.join("prop1_rows.csv"), &rows)?;
        let summary = json!({
            "all_allocations_match": rows.iter().all(|r| r.allocations_match),
            "max_rel_err": rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max),
            "rows": rows.len(),
        });
        io::write_json(&out.join("prop1_summary.json"), &summary)?;
        return Ok(Outcome {
            config: to_value(&p)?,
            inputs: Vec::new(),
            outputs: vec!["prop1_rows.csv".into(), "prop1_summary.json".into()],
        });
    }
    let rc = cfg.replicate_config(study, scale)?;
    let report = experiment::run_replicate_study(study, &rc, seed, EXEC)?;
    if report.failures() > 0 {
        eprintln!(
            "warning: {} replicate rows failed; see the status column",
            report.failures()
        );
    }
    experiment::write_study_report(&report, out)?;
    let name = study.name();
    let mut outputs = vec![format!("{name}_fits.csv")];
    if !report.pairs.is_empty() {
        outputs.push(format!("{name}_pairs.csv"));
    }
    if report.mean_k_hat.is_some() {
        outputs.push(format!("{name}_mean_k_hat.csv"));
    }
    if report.normalized_l1.is_some() {
        outputs.extend(report.sizes.iter().map(|n| format!("{name}_normalized_l1_n{n}.csv")));
    }
    outputs.push(format!("{name}_summary.json"));
    Ok(Outcome {
        config: json!({ "study": study, "scale": scale, "settings": rc }),
        inputs: Vec::new(),
        outputs,
    })
}

fn analyze(
    out: &Path,
    cfg: &Config,
    seed: u64,
    data_path: &Path,
    label_column: Option<String>,
    level: Option<f64>,
) -> Result<Outcome> {
    let mut ac = cfg.analyze.clone().unwrap_or_default();
    if label_column.is_some() {
        ac.label_column = label_column;
    }
    if let Some(l) = level {
        ac.level = l;
    }
    let file = read_data(data_path, ac.label_column.as_deref())?;
    let report = experiment::analyze(&file, &ac, seed, EXEC)?;
    if !report.robustness.satisfied {
        eprintln!("warning: {}", report.robustness);
    }
    io::write_json(&out.join("analysis.json"), &report)?;
    io::write_json(&out.join("partition.json"), &report.optimal.partition)?;
    io::write_json(&out.join("credible_ball.json"), &report.credible_ball)?;
    io::write_psm_csv(&out.join("psm.csv"), &report.psm)?;
    let mut outputs: Vec<String> = ["analysis.json", "partition.json", "credible_ball.json", "psm.csv"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if report.draws.config.record_params {
        let (standardized, _) = affine_dpm::model::standardize(&file.data)?;
        io::write_traces_csv(&out.join("traces.csv"), &sampler::traces(&report.draws, &standardized)?)?;
        outputs.push("traces.csv".into());
    }
    if let Some(cm) = &report.confusion {
        let mut w = csv::Writer::from_path(out.join("confusion.csv"))?;
        let mut head = vec!["block".to_string()];
        head.extend(cm.columns.iter().cloned());
        w.write_record(&head)?;
        for (r, counts) in cm.rows.iter().zip(&cm.counts) {
            w.write_record(std::iter::once(r.to_string()).chain(counts.iter().map(|c| c.to_string())))?;
        }
        w.flush()?;
        outputs.push("confusion.csv".into());
    }
    Ok(Outcome {
        config: json!({
            "analyze": ac,
            "vi_log_base": "e",
            "alpha_prior_mean": report.alpha_prior_mean,
            "prior_expected_clusters": report.prior_expected_clusters,
        }),
        inputs: vec![data_path.to_path_buf()],
        outputs,
    })
}
