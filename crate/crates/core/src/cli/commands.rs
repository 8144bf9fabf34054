use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::RunConfig;
use super::io;
use crate::aci::{aci_series, aci_signal_dispersion_series, AciMode, AciSeries};
use crate::assim::{conditional_filter_smoother, default_window};
use crate::cir::{anchor_grid, anchor_profiles, cir_series, default_anchor_stride};
use crate::error::{Error, Result};
use crate::model::CgnsModel;
use crate::sim::{burn_in_split, burn_in_steps, euler_maruyama, Trajectory};
use crate::validate::{run_validation_suite, ValidationReport};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub steps: usize,
    pub window: usize,
    pub anchors: usize,
    pub max_aci: f64,
    pub mean_aci: f64,
    pub mean_objective_cir: f64,
    pub truncated_anchors: usize,
    pub window_warnings: usize,
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct TrajectoryMeta<'a> {
    config_hash: String,
    model_hash: String,
    model: &'a str,
    seed: u64,
    dt: f64,
    steps: usize,
    burn_in_steps: usize,
    observed_labels: &'a [String],
    hidden_labels: &'a [String],
}

#[derive(Serialize)]
struct AciMeta<'a> {
    config_hash: String,
    model_hash: String,
    seed: u64,
    mode: AciMode,
    cause_labels: &'a [String],
    effect_labels: &'a [String],
    conditioning_labels: &'a [String],
    strategy: crate::assim::ConditionalStrategy,
    max: f64,
    mean: f64,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config_hash: String,
    model_hash: String,
    seed: u64,
    summary: &'a AnalysisSummary,
    created_at: u64,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Simulates the configured model and writes `trajectory.csv` (and its JSON
/// sidecar). Burn-in is simulated on a clock that reaches 0 when the kept
/// part starts.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(CgnsModel, Trajectory)> {
    cfg.check()?;
    let model = cfg.model.build()?;
    let (x0, y0) = cfg.initial_state(&model)?;
    let dt = cfg.simulation.dt;
    let skip = burn_in_steps(dt, cfg.simulation.burn_in);
    let sim_model = model.time_shifted(-(skip as f64) * dt);
    let mut tr = euler_maruyama(&sim_model, &x0, &y0, dt, cfg.steps() + skip, cfg.simulation.seed)?;
    if skip > 0 {
        tr = burn_in_split(&tr, skip as f64 * dt)?;
    }

    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let hash = cfg.config_hash();
    io::write_trajectory(&dir.join(TRAJECTORY_CSV), &hash, &tr, &model)?;
    if cfg.output.json {
        io::write_json(
            &dir.join("trajectory.json"),
            &TrajectoryMeta {
                config_hash: hash,
                model_hash: cfg.model_hash(),
                model: &model.name,
                seed: cfg.simulation.seed,
                dt,
                steps: tr.steps(),
                burn_in_steps: skip,
                observed_labels: &model.observed_labels,
                hidden_labels: &model.hidden_labels,
            },
        )?;
    }
    Ok((model, tr))
}

pub fn load_trajectory(cfg: &RunConfig, path: &Path) -> Result<(CgnsModel, Trajectory)> {
    let model = cfg.model.build()?;
    let tr = io::read_trajectory(path, &model, cfg.simulation.seed)?;
    Ok((model, tr))
}

/// Filter, smoother, ACI and CIR of a trajectory; writes every analysis file
/// and `run.json`.
pub fn cmd_analyze(cfg: &RunConfig, model: &CgnsModel, tr: &Trajectory) -> Result<AnalysisSummary> {
    cfg.check()?;
    let dt = cfg.simulation.dt;
    if (tr.dt - dt).abs() > 1e-9 * dt {
        return Err(Error::GridMismatch(format!("trajectory step {} differs from configured step {dt}", tr.dt)));
    }
    let partition = cfg.partition(model)?;
    let prior = cfg.prior(model)?;
    let n = tr.steps();
    let window = cfg.assimilation.window.unwrap_or_else(|| default_window(&tr.x)).min(n.max(1));
    let anchors = anchor_grid(n, cfg.analysis.anchor_stride.unwrap_or_else(|| default_anchor_stride(n)));
    let audit_anchors: &[usize] = if cfg.analysis.lagged_audit { &anchors } else { &[] };

    let out = conditional_filter_smoother(model, &tr.x, dt, &partition, &prior, cfg.assimilation.strategy, window, audit_anchors)?;
    let names = |idx: &[usize]| idx.iter().map(|&i| model.observed_labels[i].clone()).collect::<Vec<_>>();
    let mut aci: AciSeries = aci_series(&out.filter, &out.smoother)?.with_labels(
        &model.hidden_labels,
        &names(&partition.target_indices),
        &names(&partition.nontarget_indices),
    );
    if partition.has_nontarget() {
        aci.mode = AciMode::Conditional;
    }
    let (signal, dispersion) = aci_signal_dispersion_series(&out.filter, &out.smoother)?;
    let profiles = anchor_profiles(&out.online, &anchors, window)?;
    let thresholds = (!cfg.analysis.thresholds.is_empty()).then_some(cfg.analysis.thresholds.as_slice());
    let cir = cir_series(&profiles, dt, thresholds, cfg.analysis.objective);

    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let hash = cfg.config_hash();
    let stride = cfg.analysis.stride;
    let mut files: Vec<String> = Vec::new();
    let mut written = |name: &str| -> PathBuf {
        files.push(name.to_string());
        dir.join(name)
    };
    io::write_path(&written("filter.csv"), &hash, &out.filter, &model.hidden_labels, stride)?;
    io::write_path(&written("smoother.csv"), &hash, &out.smoother, &model.hidden_labels, stride)?;
    io::write_aci(&written("aci.csv"), &hash, &aci, &signal, &dispersion, stride)?;
    io::write_cir(&written("cir.csv"), &hash, &cir)?;
    if thresholds.is_some() {
        io::write_subjective(&written("cir_subjective.csv"), &hash, &cir)?;
    }
    let y_at: Vec<f64> = cir.anchors.iter().map(|&j| tr.y[j][0]).collect();
    io::write_whiskers(&written("whiskers.csv"), &hash, &cir, &model.hidden_labels[0], &y_at)?;
    if cfg.analysis.lagged_audit {
        io::write_lagged_audit(&written("lagged.csv"), &hash, out.families.values(), dt, &model.hidden_labels)?;
    }
    if cfg.output.json {
        io::write_json(
            &written("aci.json"),
            &AciMeta {
                config_hash: hash.clone(),
                model_hash: cfg.model_hash(),
                seed: cfg.simulation.seed,
                mode: aci.mode,
                cause_labels: &aci.cause_labels,
                effect_labels: &aci.effect_labels,
                conditioning_labels: &aci.conditioning_labels,
                strategy: cfg.assimilation.strategy,
                max: aci.max(),
                mean: aci.mean(),
            },
        )?;
    }

    let mean_cir = if cir.objective.is_empty() {
        0.0
    } else {
        cir.objective.iter().sum::<f64>() / cir.objective.len() as f64
    };
    let summary = AnalysisSummary {
        steps: n,
        window,
        anchors: anchors.len(),
        max_aci: aci.max(),
        mean_aci: aci.mean(),
        mean_objective_cir: mean_cir,
        truncated_anchors: cir.truncated.iter().filter(|&&t| t).count(),
        window_warnings: cir.window_warning.iter().filter(|&&w| w).count(),
        files,
    };
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    io::write_json(
        &dir.join("run.json"),
        &RunManifest { config_hash: hash, model_hash: cfg.model_hash(), seed: cfg.simulation.seed, summary: &summary, created_at },
    )?;
    Ok(summary)
}

/// Simulate then analyze.
pub fn cmd_run(cfg: &RunConfig) -> Result<AnalysisSummary> {
    let (model, tr) = cmd_simulate(cfg)?;
    cmd_analyze(cfg, &model, &tr)
}

#[derive(Serialize)]
struct ValidationFile<'a> {
    config_hash: String,
    passed: bool,
    reports: &'a [ValidationReport],
}

/// Runs the validation suite and writes `validation.json`.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Vec<ValidationReport>> {
    let reports = run_validation_suite(&cfg.validation)?;
    ensure_dir(&cfg.output.dir)?;
    io::write_json(
        &cfg.output.dir.join("validation.json"),
        &ValidationFile { config_hash: cfg.config_hash(), passed: reports.iter().all(|r| r.passed()), reports: &reports },
    )?;
    Ok(reports)
}
