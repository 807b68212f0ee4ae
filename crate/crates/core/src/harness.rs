//! Method dispatch, estimate files and the seeded benchmark sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{self, SransacParams, TlinkageParams};
use crate::em::{self, EmParams, Hypothesis, MultiModelEstimate};
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Labeling, RigidTransform};
use crate::horn;
use crate::init;
use crate::io;
use crate::metrics::{self, MetricsReport, Segmentation};
use crate::par;
use crate::scenegen::{self, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "em")]
    Em,
    #[serde(rename = "em-vanilla")]
    EmVanilla,
    #[serde(rename = "tlinkage")]
    Tlinkage,
    #[serde(rename = "sransac")]
    Sransac,
    #[serde(rename = "naive")]
    Naive,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Em,
        Method::EmVanilla,
        Method::Tlinkage,
        Method::Sransac,
        Method::Naive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Em => "em",
            Method::EmVanilla => "em-vanilla",
            Method::Tlinkage => "tlinkage",
            Method::Sransac => "sransac",
            Method::Naive => "naive",
        }
    }

    pub fn needs_init(&self) -> bool {
        !matches!(self, Method::Sransac)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown method `{s}` (expected em, em-vanilla, tlinkage, sransac or naive)"
                )
            })
    }
}

/// Source of the initial clustering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitSpec {
    /// Euclidean clustering of the source points tuned to a cluster count.
    Euclidean(usize),
    /// Labels CSV produced elsewhere.
    Labels(PathBuf),
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("euclidean", n)) => n
                .parse()
                .map(InitSpec::Euclidean)
                .map_err(|_| format!("bad cluster count `{n}`")),
            Some(("labels", p)) if !p.is_empty() => Ok(InitSpec::Labels(p.into())),
            _ => Err(format!(
                "bad init `{s}` (expected euclidean:<count> or labels:<file>)"
            )),
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Euclidean(n) => write!(f, "euclidean:{n}"),
            InitSpec::Labels(p) => write!(f, "labels:{}", p.display()),
        }
    }
}

impl Serialize for InitSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

pub fn build_init(spec: &InitSpec, corrs: &CorrespondenceSet) -> Result<Labeling> {
    let labels = match spec {
        InitSpec::Euclidean(target) => {
            init::euclidean_clusters(&corrs.sources(), *target)?.labeling
        }
        InitSpec::Labels(path) => init::load_labels(path)?,
    };
    if labels.len() != corrs.len() {
        return Err(Error::LengthMismatch {
            expected: corrs.len(),
            actual: labels.len(),
        });
    }
    Ok(labels)
}

fn params_from<T: serde::de::DeserializeOwned + Default>(params: &Value) -> Result<T> {
    if params.is_null() {
        return Ok(T::default());
    }
    Ok(serde_json::from_value(params.clone())?)
}

/// Runs `method` with method-specific JSON `params` (missing fields take
/// their defaults). `seed` seeds RANSAC unless `params` sets one.
pub fn run_method(
    method: Method,
    corrs: &CorrespondenceSet,
    init: Option<&Labeling>,
    params: &Value,
    seed: u64,
) -> Result<MultiModelEstimate> {
    let need_init = || {
        init.ok_or_else(|| {
            Error::invalid("init", format!("{method} requires an initial clustering"))
        })
    };
    match method {
        Method::Em | Method::EmVanilla => {
            let mut p: EmParams = params_from(params)?;
            if method == Method::EmVanilla {
                p.use_distance_term = false;
            }
            em::solve_em(corrs, need_init()?, &p, seed)
        }
        Method::Tlinkage => {
            let p: TlinkageParams = params_from(params)?;
            baselines::solve_tlinkage(corrs, need_init()?, &p)
        }
        Method::Naive => baselines::solve_naive(corrs, need_init()?),
        Method::Sransac => {
            let mut p: SransacParams = params_from(params)?;
            if params.get("seed").is_none() {
                p.seed = seed;
            }
            baselines::solve_sransac(corrs, &p)
        }
    }
}

/// Serialized solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub method: Method,
    pub n: usize,
    pub labels: Labeling,
    pub hypotheses: Vec<Hypothesis>,
    pub iterations_run: usize,
    pub wall_time_s: f64,
}

impl EstimateFile {
    pub fn new(method: Method, estimate: MultiModelEstimate, wall_time_s: f64) -> Self {
        Self {
            method,
            n: estimate.labeling.len(),
            labels: estimate.labeling,
            hypotheses: estimate.hypotheses,
            iterations_run: estimate.iterations_run,
            wall_time_s,
        }
    }

    pub fn poses(&self) -> BTreeMap<i32, RigidTransform> {
        pose_map(&self.hypotheses)
    }
}

pub fn pose_map(hypotheses: &[Hypothesis]) -> BTreeMap<i32, RigidTransform> {
    hypotheses
        .iter()
        .enumerate()
        .map(|(k, h)| (k as i32, h.pose))
        .collect()
}

/// Ground-truth poses: the stored ones, or Horn fits of each ground-truth
/// cluster when none are stored.
pub fn ground_truth_poses(corrs: &CorrespondenceSet) -> Result<BTreeMap<i32, RigidTransform>> {
    if let Some(poses) = &corrs.gt_poses {
        return Ok(poses.clone());
    }
    let labels = corrs
        .gt_labels
        .as_ref()
        .ok_or_else(|| Error::invalid("gt_labels", "ground-truth labels required"))?;
    labels
        .clusters()
        .into_iter()
        .map(|(id, members)| Ok((id, horn::fit_pose_subset(&corrs.items, &members)?)))
        .collect()
}

/// Metrics of an estimate against the ground truth carried by `corrs`.
pub fn evaluate_estimate(
    corrs: &CorrespondenceSet,
    labels: &Labeling,
    hypotheses: &[Hypothesis],
) -> Result<MetricsReport> {
    let gt_labels = corrs
        .gt_labels
        .as_ref()
        .ok_or_else(|| Error::invalid("gt_labels", "ground-truth labels required"))?;
    if labels.len() != corrs.len() {
        return Err(Error::LengthMismatch {
            expected: corrs.len(),
            actual: labels.len(),
        });
    }
    let gt_poses = ground_truth_poses(corrs)?;
    let est_poses = pose_map(hypotheses);
    metrics::evaluate(
        corrs,
        Segmentation::new(gt_labels, &gt_poses),
        Segmentation::new(labels, &est_poses),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scene: SceneSpec,
    #[serde(default = "default_init")]
    pub init: InitSpec,
}

fn default_init() -> InitSpec {
    InitSpec::Euclidean(100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Row label in the reports; defaults to the method name.
    #[serde(default)]
    pub name: Option<String>,
    pub method: Method,
    #[serde(default)]
    pub params: Value,
}

impl MethodConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub base_seed: u64,
    pub trials: usize,
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodConfig>,
}

fn default_methods() -> Vec<MethodConfig> {
    Method::ALL
        .into_iter()
        .map(|method| MethodConfig {
            name: None,
            method,
            params: Value::Null,
        })
        .collect()
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be >= 1"));
        }
        if self.experiments.is_empty() {
            return Err(Error::invalid(
                "experiments",
                "at least one experiment required",
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "at least one method required"));
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodConfig::label).collect();
        names.sort();
        names.dedup();
        if names.len() != self.methods.len() {
            return Err(Error::invalid("methods", "method labels must be unique"));
        }
        let mut exps: Vec<&str> = self.experiments.iter().map(|e| e.name.as_str()).collect();
        exps.sort();
        exps.dedup();
        if exps.len() != self.experiments.len() {
            return Err(Error::invalid(
                "experiments",
                "experiment names must be unique",
            ));
        }
        for e in &self.experiments {
            e.scene.validate()?;
        }
        Ok(())
    }
}

/// One (experiment, method, trial) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub clusters: Option<usize>,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

pub const METRICS: [&str; 4] = [
    "iou",
    "per_point_error",
    "rotation_error",
    "translation_error",
];

fn metric_values(r: &MetricsReport) -> [f64; 4] {
    [
        r.iou,
        r.per_point_error,
        r.rotation_error,
        r.translation_error,
    ]
}

/// Runs every trial of every experiment with every method. Records come
/// back sorted by (experiment, method, trial) in configuration order.
pub fn run_trials(config: &BenchConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.experiments.len())
        .flat_map(|e| (0..config.trials).map(move |t| (e, t)))
        .collect();
    let per_job = par::map_slice(&jobs, |&(e, t)| run_job(config, e, t));
    let mut records: Vec<(usize, usize, usize, TrialRecord)> = Vec::new();
    for (&(e, t), recs) in jobs.iter().zip(per_job) {
        for (m, r) in recs.into_iter().enumerate() {
            records.push((e, m, t, r));
        }
    }
    records.sort_by_key(|(e, m, t, _)| (*e, *m, *t));
    Ok(records.into_iter().map(|(.., r)| r).collect())
}

fn run_job(config: &BenchConfig, e: usize, trial: usize) -> Vec<TrialRecord> {
    let exp = &config.experiments[e];
    let seed = config.base_seed + trial as u64;
    let failed = |method: &MethodConfig, msg: String| TrialRecord {
        experiment: exp.name.clone(),
        method: method.label(),
        trial,
        seed,
        clusters: None,
        report: None,
        error: Some(msg),
        wall_time_s: 0.0,
    };
    let scene = SceneSpec {
        seed,
        ..exp.scene.clone()
    };
    let corrs = match scenegen::generate_scene(&scene) {
        Ok(c) => c,
        Err(err) => {
            return config
                .methods
                .iter()
                .map(|m| failed(m, format!("scene: {err}")))
                .collect()
        }
    };
    let init = if config.methods.iter().any(|m| m.method.needs_init()) {
        build_init(&exp.init, &corrs).map_err(|e| e.to_string())
    } else {
        Ok(Labeling::default())
    };
    config
        .methods
        .iter()
        .map(|m| {
            let init = match (&init, m.method.needs_init()) {
                (Err(msg), true) => return failed(m, format!("init: {msg}")),
                (Ok(l), true) => Some(l),
                _ => None,
            };
            let start = Instant::now();
            let outcome = run_method(m.method, &corrs, init, &m.params, seed);
            let wall_time_s = start.elapsed().as_secs_f64();
            let outcome = outcome.and_then(|est| {
                let report = evaluate_estimate(&corrs, &est.labeling, &est.hypotheses)?;
                Ok((est.hypotheses.len(), report))
            });
            match outcome {
                Ok((clusters, report)) => TrialRecord {
                    experiment: exp.name.clone(),
                    method: m.label(),
                    trial,
                    seed,
                    clusters: Some(clusters),
                    report: Some(report),
                    error: None,
                    wall_time_s,
                },
                Err(err) => TrialRecord {
                    wall_time_s,
                    ..failed(m, err.to_string())
                },
            }
        })
        .collect()
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn groups<'a>(
    config: &BenchConfig,
    records: &'a [TrialRecord],
) -> Vec<(String, String, Vec<&'a TrialRecord>)> {
    let mut out = Vec::new();
    for e in &config.experiments {
        for m in &config.methods {
            let label = m.label();
            let rs: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.experiment == e.name && r.method == label)
                .collect();
            out.push((e.name.clone(), label, rs));
        }
    }
    out
}

/// Mean of every metric per (experiment, method).
pub fn summary_csv(config: &BenchConfig, records: &[TrialRecord]) -> String {
    let mut s = String::from("experiment,method,trials_ok,trials_failed,mean_clusters");
    for m in METRICS {
        s.push(',');
        s.push_str(m);
    }
    s.push('\n');
    for (exp, method, rs) in groups(config, records) {
        let ok: Vec<&TrialRecord> = rs.iter().copied().filter(|r| r.report.is_some()).collect();
        let failed = rs.len() - ok.len();
        s.push_str(&format!("{exp},{method},{},{failed}", ok.len()));
        if ok.is_empty() {
            s.push_str(&",".repeat(METRICS.len() + 1));
        } else {
            let k = ok.len() as f64;
            let clusters: f64 = ok
                .iter()
                .map(|r| r.clusters.unwrap_or(0) as f64)
                .sum::<f64>()
                / k;
            s.push_str(&format!(",{clusters}"));
            for idx in 0..METRICS.len() {
                let mean = ok
                    .iter()
                    .map(|r| metric_values(r.report.as_ref().unwrap())[idx])
                    .sum::<f64>()
                    / k;
                s.push_str(&format!(",{mean}"));
            }
        }
        s.push('\n');
    }
    s
}

/// Five-number summary of every metric per (experiment, method).
pub fn boxplot_csv(config: &BenchConfig, records: &[TrialRecord]) -> String {
    let mut s = String::from("experiment,method,metric,count,min,q1,median,q3,max\n");
    for (exp, method, rs) in groups(config, records) {
        for (idx, metric) in METRICS.iter().enumerate() {
            let mut v: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.report.as_ref())
                .map(|r| metric_values(r)[idx])
                .collect();
            if v.is_empty() {
                s.push_str(&format!("{exp},{method},{metric},0,,,,,\n"));
                continue;
            }
            v.sort_by(f64::total_cmp);
            s.push_str(&format!(
                "{exp},{method},{metric},{},{},{},{},{},{}\n",
                v.len(),
                v[0],
                quantile_sorted(&v, 0.25),
                quantile_sorted(&v, 0.5),
                quantile_sorted(&v, 0.75),
                v[v.len() - 1]
            ));
        }
    }
    s
}

fn timing_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from("experiment,method,trial,wall_time_s\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.experiment, r.method, r.trial, r.wall_time_s
        ));
    }
    s
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<TrialRecord>,
    pub summary_path: PathBuf,
    pub boxplot_path: PathBuf,
}

impl BenchOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.report.is_none()).count()
    }
}

/// Runs the sweep and writes `trials/<experiment>/<method>/trial_NNNN.json`,
/// `summary.csv`, `boxplot.csv` and `timing.csv` under `out_dir`.
pub fn run_bench(config: &BenchConfig, out_dir: &Path) -> Result<BenchOutcome> {
    let records = run_trials(config)?;
    for r in &records {
        let dir = out_dir.join("trials").join(&r.experiment).join(&r.method);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        io::write_json(dir.join(format!("trial_{:04}.json", r.trial)), r)?;
    }
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let summary_path = write("summary.csv", summary_csv(config, &records))?;
    let boxplot_path = write("boxplot.csv", boxplot_csv(config, &records))?;
    write("timing.csv", timing_csv(&records))?;
    Ok(BenchOutcome {
        records,
        summary_path,
        boxplot_path,
    })
}
