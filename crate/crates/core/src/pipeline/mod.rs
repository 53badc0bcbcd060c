//! End-to-end orchestration: parse, aggregate, benchmark, describe, select
//! features with the forest, embed, validate k, bisect and export.
//!
//! All artifacts are rendered in memory first and written only once every
//! stage has succeeded; if writing fails part-way, files written by this run
//! are removed again.

mod cache;
mod config;
mod export;

pub use cache::{sha256_hex, StageCache};
pub use config::{PipelineConfig, SomSettings};
pub use export::{export_network, fmt_num, round_sig, to_stable_json, NetworkVertex};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    recursive_bisection, silhouette, validate_k, BisectionStep, BisectionStrategy, ClusterAssignment, Validation,
};
use crate::dataset::{
    aggregate, benchmark_classify, benchmark_thresholds, parse_team_seasons, BenchmarkLabel, FeatureMatrix,
    TeamAggregate, Variable,
};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, kfold_cv, select_variables, vim_corrected, Selection, VimReport};
use crate::spectral::{embedding, SpectralGraph};
use crate::stats::{descriptive_table, DescriptiveRow};
use export::{fmt_opt, CsvTable};

/// Inverse-distance guard for the network export.
pub const NETWORK_EPSILON: f64 = 1e-9;

/// How far a pipeline invocation goes. Later stages include earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Vim,
    Embed,
    Validate,
    Cluster,
    Run,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSummary {
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub input_sha256: String,
    pub n_seasons: usize,
    pub n_entities: usize,
    pub benchmark: BenchmarkSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedForest {
    pub variables: Vec<String>,
    pub oob_mse: Option<f64>,
    pub oob_r2: Option<f64>,
    pub cv_folds: usize,
    pub cv_mse: f64,
    pub cv_r2: Option<f64>,
}

/// The cached outcome of the forest stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSummary {
    pub predictors: Vec<String>,
    pub full_oob_mse: Option<f64>,
    pub full_oob_r2: Option<f64>,
    pub vim: VimReport,
    pub selection: Selection,
    pub manual_selection: bool,
    pub refined: RefinedForest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub features: Vec<String>,
    pub dropped_constant: Vec<String>,
    pub standardized: bool,
    pub sigma: f64,
    pub eigenvalues: Vec<f64>,
    pub jacobi_sweeps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    pub team_id: u32,
    pub team_name: String,
    pub tournament: String,
    pub cluster: usize,
    pub silhouette: f64,
    pub benchmark: BenchmarkLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub k: usize,
    /// `validated` or `configured`.
    pub k_source: &'static str,
    pub strategy: BisectionStrategy,
    pub sizes: Vec<usize>,
    pub avg_silhouette: f64,
    pub cluster_silhouette: Vec<f64>,
    pub dunn: Option<f64>,
    pub trace: Vec<BisectionStep>,
    pub members: Vec<Member>,
}

/// Cluster-by-benchmark contingency table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crosstab {
    pub benchmark_labels: Vec<String>,
    /// `counts[c][b]`: entities in cluster `c + 1` with benchmark label `b`.
    pub counts: Vec<Vec<usize>>,
    /// Average silhouette of the benchmark partition on the same distances;
    /// `None` when fewer than two benchmark groups are present.
    pub benchmark_avg_silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub descriptives: Vec<DescriptiveRow>,
    pub forest: ForestSummary,
    pub spectral: SpectralSummary,
    pub validation: Validation,
    pub clusters: ClusterSummary,
    pub benchmark_comparison: Crosstab,
    /// SHA-256 of every other artifact of the run.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Present for [`Stage::Run`].
    pub report: Option<RunReport>,
    pub artifacts: Vec<Artifact>,
}

impl PipelineOutput {
    pub fn artifact(&self, name: &str) -> Option<&[u8]> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.bytes.as_slice())
    }
}

/// Contingency table of cluster labels (1..=k) against benchmark labels.
pub fn crosstab(clusters: &[usize], benchmark: &[BenchmarkLabel], distances: &Array2<f64>) -> Result<Crosstab> {
    if clusters.len() != benchmark.len() {
        return Err(Error::Schema(format!(
            "{} cluster labels but {} benchmark labels",
            clusters.len(),
            benchmark.len()
        )));
    }
    let k = clusters.iter().copied().max().unwrap_or(0);
    let mut counts = vec![vec![0; BenchmarkLabel::ALL.len()]; k];
    for (&c, b) in clusters.iter().zip(benchmark) {
        if c == 0 {
            return Err(Error::Parameter("cluster labels start at 1".into()));
        }
        let col = BenchmarkLabel::ALL.iter().position(|l| l == b).expect("label in ALL");
        counts[c - 1][col] += 1;
    }
    let ids: Vec<usize> = benchmark
        .iter()
        .map(|b| BenchmarkLabel::ALL.iter().position(|l| l == b).expect("label in ALL"))
        .collect();
    let benchmark_avg_silhouette = match silhouette(&ids, distances) {
        Ok(s) => Some(s.average),
        Err(Error::UndefinedIndex(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Crosstab {
        benchmark_labels: BenchmarkLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
        counts,
        benchmark_avg_silhouette,
    })
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn response_of(aggs: &[TeamAggregate], var: Variable) -> Vec<f64> {
    aggs.iter().map(|a| a.get(var)).collect()
}

fn names(vars: &[Variable]) -> Vec<String> {
    vars.iter().map(|v| v.column().to_string()).collect()
}

fn forest_stage(config: &PipelineConfig, aggs: &[TeamAggregate]) -> Result<ForestSummary> {
    let predictors = config.predictors()?;
    let y = response_of(aggs, config.response_variable()?);
    let x = FeatureMatrix::from_aggregates(aggs, &predictors)?;

    let full = fit_forest(&x, &y, &config.forest_params(0))?;
    let mut vim = vim_corrected(&x, &y, config.vim_replications, &config.forest_params(1))?;
    let (selection, manual) = match &config.selected_variables {
        Some(chosen) => (
            Selection {
                variables: chosen.clone(),
                gap_after: None,
                warning: None,
            },
            true,
        ),
        None => (select_variables(&vim)?, false),
    };
    vim.selected = selection.variables.clone();

    let refined_x = x.select_columns(&selection.variables)?;
    let refined = fit_forest(&refined_x, &y, &config.forest_params(2))?;
    let folds = config.cv_folds.min(y.len());
    if folds < config.cv_folds {
        log::warn!("only {} entities: {}-fold CV reduced to leave-one-out", y.len(), config.cv_folds);
    }
    let cv = kfold_cv(&refined_x, &y, folds, &config.forest_params(3))?;
    Ok(ForestSummary {
        predictors: names(&predictors),
        full_oob_mse: full.oob_mse,
        full_oob_r2: full.oob_r2,
        vim,
        selection: selection.clone(),
        manual_selection: manual,
        refined: RefinedForest {
            variables: selection.variables,
            oob_mse: refined.oob_mse,
            oob_r2: refined.oob_r2,
            cv_folds: cv.folds,
            cv_mse: cv.mse,
            cv_r2: cv.r2,
        },
    })
}

/// Run the pipeline up to `until` and render its artifacts in memory.
/// `cache`, when given, is consulted and filled for the forest stage.
pub fn run_pipeline(config: &PipelineConfig, until: Stage, cache: Option<&StageCache>) -> Result<PipelineOutput> {
    stage("config", config.validate())?;
    let input = stage("parse", fs::read(&config.input).map_err(Error::from))?;
    let input_sha = sha256_hex(&input);
    let seasons = stage("parse", parse_team_seasons(input.as_slice()))?;
    let aggs = stage("aggregate", aggregate(&seasons))?;
    let (low, high) = stage(
        "benchmark",
        benchmark_thresholds(&aggs, config.benchmark_low_q, config.benchmark_high_q),
    )?;
    let aggs = stage(
        "benchmark",
        benchmark_classify(&aggs, config.benchmark_low_q, config.benchmark_high_q),
    )?;
    let labels: Vec<BenchmarkLabel> = aggs.iter().map(|a| a.benchmark.expect("classified")).collect();
    let descriptives = stage("anova", descriptive_table(&aggs, &Variable::ALL))?;

    let forest = {
        let key = StageCache::key("forest", &input_sha, &forest_settings(config))?;
        match cache.and_then(|c| c.load::<ForestSummary>("forest", &key)) {
            Some(hit) => {
                log::info!("forest stage restored from cache");
                hit
            }
            None => {
                let fresh = stage("forest", forest_stage(config, &aggs))?;
                if let Some(c) = cache {
                    if let Err(e) = c.store("forest", &key, &fresh) {
                        log::warn!("could not write forest cache: {e}");
                    }
                }
                fresh
            }
        }
    };

    let comment = artifact_comment(config)?;
    let mut artifacts = vec![
        Artifact { name: "vim.csv", bytes: vim_csv(&forest.vim, &comment)? },
        Artifact { name: "descriptives.csv", bytes: descriptives_csv(&descriptives, &comment)? },
    ];
    if until == Stage::Vim {
        return Ok(PipelineOutput { report: None, artifacts });
    }

    let selected: Vec<Variable> = forest
        .selection
        .variables
        .iter()
        .map(|n| Variable::from_column(n).ok_or_else(|| Error::Schema(format!("unknown variable `{n}`"))))
        .collect::<Result<_>>()?;
    let raw = stage("standardize", FeatureMatrix::from_aggregates(&aggs, &selected))?;
    let (features, dropped) = if config.standardize {
        stage("standardize", raw.standardize())?
    } else {
        (raw, Vec::new())
    };
    if features.n_cols() == 0 {
        return Err(Error::DegenerateSample("every selected feature is constant".into()).in_stage("standardize"));
    }
    let graph = stage("graph", SpectralGraph::from_features(&features, config.sigma))?;
    let map = stage("eigenmap", graph.eigenmap())?;
    let dims = if graph.len() >= 4 { 3 } else { 2 };
    let emb = stage("eigenmap", embedding(&map, dims))?;
    let spectral = SpectralSummary {
        features: features.columns.clone(),
        dropped_constant: dropped,
        standardized: features.standardized,
        sigma: config.sigma,
        eigenvalues: map.eigenvalues.to_vec(),
        jacobi_sweeps: map.sweeps,
        warnings: emb.warnings.clone(),
    };

    if until == Stage::Embed {
        artifacts.push(Artifact { name: "embedding.csv", bytes: embedding_csv(&aggs, &emb.coordinates, None, &comment)? });
        return Ok(PipelineOutput { report: None, artifacts });
    }

    let validation = stage(
        "validate",
        validate_k(&features, &graph.distances, &config.k_range, &config.som_config()),
    )?;
    if validation.disagreement {
        log::warn!(
            "silhouette peaks at k = {} but Dunn at k = {:?}",
            validation.silhouette_best,
            validation.dunn_best
        );
    }
    artifacts.push(Artifact { name: "validation.csv", bytes: validation_csv(&validation, &comment)? });
    if until == Stage::Validate {
        artifacts.push(Artifact { name: "embedding.csv", bytes: embedding_csv(&aggs, &emb.coordinates, None, &comment)? });
        return Ok(PipelineOutput { report: None, artifacts });
    }

    let (k, k_source) = match config.clusters {
        Some(k) => (k, "configured"),
        None => (validation.chosen_k, "validated"),
    };
    let assignment = stage("bisect", recursive_bisection(&graph, k, config.bisection))?;
    let comparison = stage("crosstab", crosstab(&assignment.labels, &labels, &graph.distances))?;

    artifacts.push(Artifact {
        name: "embedding.csv",
        bytes: embedding_csv(&aggs, &emb.coordinates, Some(&assignment.labels), &comment)?,
    });
    artifacts.push(Artifact { name: "clusters.csv", bytes: clusters_csv(&aggs, &assignment, &comment)? });
    let vertices: Vec<NetworkVertex> = aggs
        .iter()
        .zip(&assignment.labels)
        .map(|(a, &c)| NetworkVertex {
            id: a.team_id,
            name: &a.team_name,
            cluster: Some(c),
            benchmark: a.benchmark.map(|b| b.as_str()),
        })
        .collect();
    artifacts.push(Artifact {
        name: "graph.dot",
        bytes: export_network(&graph.distances, &vertices, NETWORK_EPSILON, &comment),
    });
    if until == Stage::Cluster {
        return Ok(PipelineOutput { report: None, artifacts });
    }

    let mut counts = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.as_str().to_string()).or_insert(0) += 1;
    }
    let members = aggs
        .iter()
        .enumerate()
        .map(|(i, a)| Member {
            team_id: a.team_id,
            team_name: a.team_name.clone(),
            tournament: a.tournament.clone(),
            cluster: assignment.labels[i],
            silhouette: assignment.silhouette[i],
            benchmark: labels[i],
        })
        .collect();
    let report = RunReport {
        tool: ToolInfo { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") },
        config: config.clone(),
        dataset: DatasetSummary {
            input_sha256: input_sha,
            n_seasons: seasons.len(),
            n_entities: aggs.len(),
            benchmark: BenchmarkSummary { low_threshold: low, high_threshold: high, counts },
        },
        descriptives,
        forest,
        spectral,
        validation,
        clusters: ClusterSummary {
            k: assignment.k,
            k_source,
            strategy: config.bisection,
            sizes: assignment.sizes.clone(),
            avg_silhouette: assignment.avg_silhouette,
            cluster_silhouette: assignment.cluster_silhouette.clone(),
            dunn: assignment.dunn,
            trace: assignment.trace.clone(),
            members,
        },
        benchmark_comparison: comparison,
        artifacts: artifacts.iter().map(|a| (a.name.to_string(), sha256_hex(&a.bytes))).collect(),
    };
    artifacts.push(Artifact { name: "report.json", bytes: to_stable_json(&report)? });
    Ok(PipelineOutput { report: Some(report), artifacts })
}

/// Settings that influence the forest stage, used as its cache key.
fn forest_settings(c: &PipelineConfig) -> serde_json::Value {
    serde_json::json!({
        "seed": c.seed,
        "response": c.response,
        "excluded": c.excluded,
        "n_trees": c.n_trees,
        "mtry": c.mtry,
        "min_node_size": c.min_node_size,
        "vim_replications": c.vim_replications,
        "cv_folds": c.cv_folds,
        "selected_variables": c.selected_variables,
    })
}

fn artifact_comment(config: &PipelineConfig) -> Result<String> {
    Ok(format!(
        "{} {} seed={}\nconfig {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        config.seed,
        serde_json::to_string(config)?
    ))
}

/// Write artifacts into `dir`. On failure, files written so far are removed.
pub fn write_artifacts(artifacts: &[Artifact], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(a.name);
        if let Err(e) = fs::write(&path, &a.bytes) {
            for p in written.iter().chain(std::iter::once(&path)) {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written)
}

/// [`run_pipeline`] followed by [`write_artifacts`], caching under `<dir>/.cache`.
pub fn execute(config: &PipelineConfig, until: Stage, out_dir: &Path, use_cache: bool) -> Result<PipelineOutput> {
    let cache = use_cache.then(|| StageCache::new(out_dir.join(".cache")));
    let output = run_pipeline(config, until, cache.as_ref())?;
    write_artifacts(&output.artifacts, out_dir)?;
    Ok(output)
}

fn vim_csv(vim: &VimReport, comment: &str) -> Result<Vec<u8>> {
    let mut t = CsvTable::new(comment, &["variable", "raw_vim", "shadow_vim", "corrected_vim", "selected"])?;
    for i in vim.ranking() {
        let name = &vim.variables[i];
        t.row([
            name.clone(),
            fmt_num(vim.raw[i]),
            fmt_num(vim.shadow[i]),
            fmt_num(vim.corrected[i]),
            vim.selected.contains(name).to_string(),
        ])?;
    }
    t.finish()
}

fn descriptives_csv(rows: &[DescriptiveRow], comment: &str) -> Result<Vec<u8>> {
    let mut header = vec!["variable".to_string()];
    for g in BenchmarkLabel::ALL.iter().map(|l| l.as_str()).chain(["Total"]) {
        for stat in ["n", "mean", "sd", "median", "min", "max"] {
            header.push(format!("{g}_{stat}"));
        }
    }
    header.extend(["f_stat", "p_value", "significant_pairs"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(comment, &header)?;
    for r in rows {
        let mut fields = vec![r.variable.clone()];
        let cells = |d: Option<&crate::stats::Describe>| -> Vec<String> {
            match d {
                Some(d) => vec![
                    d.n.to_string(),
                    fmt_num(d.mean),
                    fmt_opt(d.sd),
                    fmt_num(d.median),
                    fmt_num(d.min),
                    fmt_num(d.max),
                ],
                None => vec![String::new(); 6],
            }
        };
        for label in BenchmarkLabel::ALL {
            let d = r.labels.iter().position(|l| l == label.as_str()).map(|i| &r.groups[i]);
            fields.extend(cells(d));
        }
        fields.extend(cells(Some(&r.total)));
        match &r.anova {
            Some(a) => {
                fields.push(fmt_num(a.f_stat));
                fields.push(fmt_num(a.p_value));
                let pairs: Vec<String> = a.significant_pairs(0.05).iter().map(|p| p.to_string()).collect();
                fields.push(pairs.join(","));
            }
            None => fields.extend([String::new(), String::new(), String::new()]),
        }
        t.row(fields)?;
    }
    t.finish()
}

fn embedding_csv(
    aggs: &[TeamAggregate],
    coords: &Array2<f64>,
    clusters: Option<&[usize]>,
    comment: &str,
) -> Result<Vec<u8>> {
    let mut t = CsvTable::new(comment, &["team_id", "team_name", "v2", "v3", "v4", "cluster", "benchmark_label"])?;
    for (i, a) in aggs.iter().enumerate() {
        let coord = |c: usize| (c < coords.ncols()).then(|| coords[[i, c]]);
        t.row([
            a.team_id.to_string(),
            a.team_name.clone(),
            fmt_opt(coord(0)),
            fmt_opt(coord(1)),
            fmt_opt(coord(2)),
            clusters.map(|c| c[i].to_string()).unwrap_or_default(),
            a.benchmark.map(|b| b.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    t.finish()
}

fn clusters_csv(aggs: &[TeamAggregate], assignment: &ClusterAssignment, comment: &str) -> Result<Vec<u8>> {
    let mut t = CsvTable::new(comment, &["team_id", "team_name", "tournament", "cluster", "silhouette"])?;
    for (i, a) in aggs.iter().enumerate() {
        t.row([
            a.team_id.to_string(),
            a.team_name.clone(),
            a.tournament.clone(),
            assignment.labels[i].to_string(),
            fmt_num(assignment.silhouette[i]),
        ])?;
    }
    t.finish()
}

fn validation_csv(v: &Validation, comment: &str) -> Result<Vec<u8>> {
    let mut t = CsvTable::new(comment, &["k", "dunn", "avg_silhouette"])?;
    for r in &v.rows {
        t.row([r.k.to_string(), fmt_opt(r.dunn), fmt_opt(r.avg_silhouette)])?;
    }
    t.finish()
}
