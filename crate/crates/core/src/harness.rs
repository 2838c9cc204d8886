//! Batch driver behind the command-line tool: dataset preparation, black-box
//! setup, per-instance explanation and evaluation, and report rendering.
//!
//! Every explained instance gets its own RNG seed derived from the run seed
//! and the instance's test-set index, so results do not depend on how the
//! instances are scheduled across threads.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::baselines::{gen_crn, gen_global, gen_ros, gen_rnd, Method, CRN_K};
use crate::blackbox::external::{connect_external_with_timeout, DEFAULT_TIMEOUT};
use crate::blackbox::{BaggedTreeEnsemble, BlackBox, BlackBoxError, EnsembleParams};
use crate::data::{
    build_empirical_distributions, impute_missing, load_dataset, train_test_split, DataError, Dataset, FeatureSchema,
};
use crate::distance::{distance, DistanceKind};
use crate::explanation::{explain_with_tree, fit_surrogate, ExplainError, ExplainParams, Explanation};
use crate::genetic::{build_neighborhood, GaParams, Neighborhood};
use crate::metrics::{self, EvalRecord, Summary, SUMMARY_COLUMNS};
use crate::tree::{DecisionTree, TreeError, TreeParams};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    BlackBox(#[from] BlackBoxError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("{0}")]
    Internal(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<ExplainError> for HarnessError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::BlackBox(e) => HarnessError::BlackBox(e),
            ExplainError::Tree(e) => HarnessError::Tree(e),
            ExplainError::Data(e) => HarnessError::Data(e),
            ExplainError::Internal(m) => HarnessError::Internal(m),
        }
    }
}

impl HarnessError {
    /// Process exit code: 1 usage, 2 data or schema, 3 black box.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::BlackBox(_) => 3,
            HarnessError::Data(_) | HarnessError::Tree(_) | HarnessError::Internal(_) | HarnessError::Output { .. } => 2,
        }
    }
}

/// Where black-box predictions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlackBoxSource {
    /// Bagged tree ensemble trained on the training split.
    Ensemble,
    /// Shell command speaking the wire protocol on stdin/stdout.
    Command(String),
    Http(String),
}

impl FromStr for BlackBoxSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin:ensemble" {
            Ok(BlackBoxSource::Ensemble)
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                Err("empty black-box command".into())
            } else {
                Ok(BlackBoxSource::Command(cmd.to_string()))
            }
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(BlackBoxSource::Http(s.to_string()))
        } else if let Some(rest) = s.strip_prefix("http:") {
            if rest.starts_with("http://") || rest.starts_with("https://") {
                Ok(BlackBoxSource::Http(rest.to_string()))
            } else {
                Ok(BlackBoxSource::Http(format!("http://{}", rest.trim_start_matches('/'))))
            }
        } else {
            Err(format!(
                "unknown black-box source `{s}` (expected builtin:ensemble, cmd:<command> or http:<url>)"
            ))
        }
    }
}

/// Test-set rows to explain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceSelector {
    All,
    /// Indices in the given order.
    List(Vec<usize>),
    /// Half-open range `start..end`.
    Range(usize, usize),
}

impl FromStr for InstanceSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad instance index `{t}`"));
        if s == "all" {
            Ok(InstanceSelector::All)
        } else if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            if a >= b {
                return Err(format!("empty instance range `{s}`"));
            }
            Ok(InstanceSelector::Range(a, b))
        } else {
            Ok(InstanceSelector::List(s.split(',').map(num).collect::<Result<_, _>>()?))
        }
    }
}

impl InstanceSelector {
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>, HarnessError> {
        let out: Vec<usize> = match self {
            InstanceSelector::All => (0..n).collect(),
            InstanceSelector::List(v) => v.clone(),
            InstanceSelector::Range(a, b) => (*a..*b).collect(),
        };
        if let Some(bad) = out.iter().find(|&&i| i >= n) {
            return Err(HarnessError::Usage(format!("instance index {bad} is out of range (test set has {n} rows)")));
        }
        Ok(out)
    }
}

/// Which split feeds the empirical distributions used for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmpiricalSource {
    #[default]
    Test,
    Train,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub blackbox: BlackBoxSource,
    pub ga: GaParams,
    pub distance: DistanceKind,
    pub surrogate: TreeParams,
    pub instances: InstanceSelector,
    pub seed: u64,
    pub train_fraction: f64,
    pub trees: usize,
    pub crn_k: usize,
    pub empirical: EmpiricalSource,
    pub timeout: Duration,
}

impl RunConfig {
    pub fn new(data: impl Into<PathBuf>, schema: impl Into<PathBuf>) -> Self {
        RunConfig {
            data: data.into(),
            schema: schema.into(),
            blackbox: BlackBoxSource::Ensemble,
            ga: GaParams::default(),
            distance: DistanceKind::default(),
            surrogate: TreeParams::default(),
            instances: InstanceSelector::List(vec![0]),
            seed: DEFAULT_SEED,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            trees: EnsembleParams::default().tree_count,
            crn_k: CRN_K,
            empirical: EmpiricalSource::Test,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.ga.validate().map_err(HarnessError::Usage)?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(HarnessError::Usage("train fraction must lie strictly between 0 and 1".into()));
        }
        if self.trees == 0 {
            return Err(HarnessError::Usage("the ensemble needs at least one tree".into()));
        }
        if self.crn_k == 0 {
            return Err(HarnessError::Usage("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loaded data, sampling schema and black box for one run.
#[derive(Debug)]
pub struct Workspace {
    /// Schema with empirical distributions attached.
    pub schema: FeatureSchema,
    pub train: Dataset,
    pub test: Dataset,
    pub black_box: BlackBox,
}

/// Loads, imputes and splits the data, then builds the black box.
pub fn prepare(config: &RunConfig) -> Result<Workspace, HarnessError> {
    config.validate()?;
    let data = impute_missing(load_dataset(&config.data, &config.schema)?)?;
    let (train, test) = train_test_split(&data, config.train_fraction, config.seed);
    if test.is_empty() || train.is_empty() {
        return Err(HarnessError::Data(DataError::EmptyDataset));
    }
    let schema = build_empirical_distributions(match config.empirical {
        EmpiricalSource::Test => &test,
        EmpiricalSource::Train => &train,
    })?;
    let black_box = match &config.blackbox {
        BlackBoxSource::Ensemble => {
            let params = EnsembleParams {
                tree_count: config.trees,
                ..EnsembleParams::default()
            };
            BlackBox::new(BaggedTreeEnsemble::train(&train, params, config.seed)?)
        }
        BlackBoxSource::Command(cmd) => connect_external_with_timeout(cmd, &schema, config.timeout)?,
        BlackBoxSource::Http(url) => connect_external_with_timeout(url, &schema, config.timeout)?,
    };
    Ok(Workspace {
        schema,
        train,
        test,
        black_box,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG seed for the instance at test-set position `index`.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ index as u64)
}

/// Surrogate trained once on the whole test set.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub tree: DecisionTree,
    pub neighborhood: Neighborhood,
}

pub fn build_global(ws: &Workspace, config: &RunConfig) -> Result<GlobalModel, HarnessError> {
    let neighborhood = gen_global(&ws.test, &ws.black_box)?;
    let tree = fit_surrogate(&ws.schema, &neighborhood, config.surrogate)?;
    Ok(GlobalModel { tree, neighborhood })
}

/// Everything produced for one explained instance.
#[derive(Debug, Clone)]
pub struct InstanceRun {
    pub index: usize,
    pub explanation: Explanation,
    pub record: EvalRecord,
    pub tree: DecisionTree,
    /// Set when a random generator stopped before balancing classes.
    pub cap_hit: bool,
}

/// Neighborhood for one test instance under `method`.
pub fn generate(
    ws: &Workspace,
    config: &RunConfig,
    method: Method,
    index: usize,
    global: Option<&GlobalModel>,
) -> Result<(Neighborhood, bool), HarnessError> {
    let x = &ws.test.rows[index];
    let seed = instance_seed(config.seed, index);
    let n = config.ga.population;
    let bb = &ws.black_box;
    Ok(match method {
        Method::Lore => {
            let ga = GaParams { seed, ..config.ga };
            (build_neighborhood(x, bb, &ga, &ws.schema, config.distance)?, false)
        }
        Method::Crn => (gen_crn(x, &ws.test, bb, config.crn_k, config.distance)?, false),
        Method::Rnd => {
            let g = gen_rnd(x, &ws.test, bb, &ws.schema, n, config.crn_k, config.distance, seed)?;
            (g.neighborhood, g.cap_hit)
        }
        Method::Ros => {
            let g = gen_ros(x, &ws.test, bb, &ws.schema, n, config.crn_k, config.distance, seed)?;
            (g.neighborhood, g.cap_hit)
        }
        Method::Global => {
            let g = global.ok_or_else(|| HarnessError::Internal("global surrogate not built".into()))?;
            (g.neighborhood.clone(), false)
        }
    })
}

/// Explains and scores the test instance at `index`.
pub fn run_instance(
    ws: &Workspace,
    config: &RunConfig,
    method: Method,
    index: usize,
    global: Option<&GlobalModel>,
) -> Result<InstanceRun, HarnessError> {
    let x = &ws.test.rows[index];
    let bx = ws.black_box.predict_one(x)?;
    let (z, cap_hit) = generate(ws, config, method, index, global)?;
    let tree = match (method, global) {
        (Method::Global, Some(g)) => g.tree.clone(),
        _ => fit_surrogate(&ws.schema, &z, config.surrogate)?,
    };
    let explanation = explain_with_tree(x, bx, &tree, &z, &ws.schema, config.distance)?;
    let cf_rules = explanation.counterfactual_rules();
    let record = EvalRecord {
        index,
        hit: metrics::hit(&tree, bx, x),
        fidelity: explanation.diagnostics.fidelity,
        l_fidelity: explanation.diagnostics.l_fidelity,
        c_hit: metrics::c_hit(&ws.black_box, &explanation)?,
        cl_fidelity: metrics::cl_fidelity(&tree, &z, &cf_rules),
        tree_depth: tree.depth(),
        premise_length: explanation.rule.premise.len(),
        nf: explanation.min_nf(),
        counterfactual_rules: cf_rules.len(),
    };
    Ok(InstanceRun {
        index,
        explanation,
        record,
        tree,
        cap_hit,
    })
}

/// Runs `method` on every selected instance, in parallel, keeping the
/// selection order.
pub fn run_method(ws: &Workspace, config: &RunConfig, method: Method) -> Result<(Vec<InstanceRun>, usize), HarnessError> {
    let indices = config.instances.resolve(ws.test.len())?;
    let global = match method {
        Method::Global => Some(build_global(ws, config)?),
        _ => None,
    };
    let runs = indices
        .par_iter()
        .map(|&i| run_instance(ws, config, method, i, global.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((runs, usize::from(global.is_some())))
}

/// Explanation documents for the selected instances.
pub fn cmd_explain(ws: &Workspace, config: &RunConfig, method: Method, format: OutputFormat, dump_tree: bool) -> Result<String, HarnessError> {
    let (runs, _) = run_method(ws, config, method)?;
    let mut out = String::new();
    for run in &runs {
        match format {
            OutputFormat::Structured => {
                let mut doc = run.explanation.to_document(&ws.schema, Some(run.index));
                if dump_tree {
                    doc["tree"] = Value::String(run.tree.dump(&ws.schema));
                }
                out.push_str(&serde_json::to_string(&doc).expect("documents serialize"));
                out.push('\n');
            }
            OutputFormat::Text => {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&run.explanation.to_text(&ws.schema, Some(run.index)));
                if dump_tree {
                    out.push_str("tree:\n");
                    out.push_str(&run.tree.dump(&ws.schema));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Structured,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "structured" | "json" => Ok(OutputFormat::Structured),
            other => Err(format!("unknown format `{other}` (expected text or structured)")),
        }
    }
}

/// Per-instance records and aggregates of one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub records: Vec<EvalRecord>,
    pub summary: Summary,
    /// Instances whose random generator hit its draw cap.
    pub cap_hits: usize,
    /// Surrogates trained once for the whole run (1 for `global`).
    pub shared_surrogates: usize,
}

pub fn cmd_evaluate(ws: &Workspace, config: &RunConfig, method: Method) -> Result<MethodReport, HarnessError> {
    let (runs, shared) = run_method(ws, config, method)?;
    let cap_hits = runs.iter().filter(|r| r.cap_hit).count();
    if cap_hits > 0 {
        log::warn!("{method}: random generation hit its draw cap for {cap_hits} instance(s)");
    }
    let records: Vec<EvalRecord> = runs.into_iter().map(|r| r.record).collect();
    Ok(MethodReport {
        method,
        summary: Summary::of(&records),
        records,
        cap_hits,
        shared_surrogates: shared,
    })
}

pub fn cmd_compare(ws: &Workspace, config: &RunConfig, methods: &[Method]) -> Result<Vec<MethodReport>, HarnessError> {
    methods.iter().map(|&m| cmd_evaluate(ws, config, m)).collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

/// Tab-separated per-instance rows followed by `mean ± std` rows.
pub fn render_records_tsv(report: &MethodReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "method\tindex\thit\tfidelity\tl_fidelity\tc_hit\tcl_fidelity\ttree_depth\tpremise_length\tnf\tcounterfactual_rules"
    )
    .unwrap();
    for r in &report.records {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            report.method,
            r.index,
            r.hit,
            cell(r.fidelity),
            cell(r.l_fidelity),
            cell(r.c_hit),
            cell(r.cl_fidelity),
            r.tree_depth,
            r.premise_length,
            r.nf.map_or("NA".into(), |n| n.to_string()),
            r.counterfactual_rules
        )
        .unwrap();
    }
    s.push('\n');
    s.push_str(&render_summary_tsv(std::slice::from_ref(report)));
    s
}

/// One row per method, one `mean ± std` column per measure.
pub fn render_summary_tsv(reports: &[MethodReport]) -> String {
    let mut s = String::from("method\tinstances");
    for c in SUMMARY_COLUMNS {
        s.push('\t');
        s.push_str(c);
    }
    s.push_str("\tskipped\n");
    for r in reports {
        write!(s, "{}\t{}", r.method, r.summary.instances).unwrap();
        for a in r.summary.columns() {
            write!(s, "\t{}", a.display()).unwrap();
        }
        let skipped: Vec<String> = SUMMARY_COLUMNS
            .iter()
            .zip(r.summary.columns())
            .filter(|(_, a)| a.skipped > 0)
            .map(|(c, a)| format!("{c}={}", a.skipped))
            .collect();
        writeln!(s, "\t{}", if skipped.is_empty() { "-".into() } else { skipped.join(",") }).unwrap();
    }
    s
}

fn agg_json(a: &metrics::Aggregate) -> Value {
    let num = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
    json!({"mean": num(a.mean), "std": num(a.std), "count": a.count, "skipped": a.skipped})
}

/// Structured report for one or more methods.
pub fn reports_json(config: &RunConfig, reports: &[MethodReport]) -> Value {
    let methods: Vec<Value> = reports
        .iter()
        .map(|r| {
            let mut summary = serde_json::Map::new();
            summary.insert("instances".into(), json!(r.summary.instances));
            for (c, a) in SUMMARY_COLUMNS.iter().zip(r.summary.columns()) {
                summary.insert((*c).into(), agg_json(a));
            }
            json!({
                "method": r.method.name(),
                "summary": Value::Object(summary),
                "cap_hits": r.cap_hits,
                "shared_surrogates": r.shared_surrogates,
                "records": serde_json::to_value(&r.records).expect("records serialize"),
            })
        })
        .collect();
    json!({
        "seed": config.seed,
        "distance": config.distance.to_string(),
        "neighborhood_size": config.ga.population,
        "generations": config.ga.generations,
        "methods": methods,
    })
}

/// CSV dump of the neighborhood generated for one instance.
pub fn cmd_neighborhood(ws: &Workspace, config: &RunConfig, method: Method, index: usize) -> Result<(String, Neighborhood), HarnessError> {
    if index >= ws.test.len() {
        return Err(HarnessError::Usage(format!(
            "instance index {index} is out of range (test set has {} rows)",
            ws.test.len()
        )));
    }
    let global = match method {
        Method::Global => Some(build_global(ws, config)?),
        _ => None,
    };
    let (z, _) = generate(ws, config, method, index, global.as_ref())?;
    let x = &ws.test.rows[index];
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ws.schema.feature_names().into_iter().map(String::from).collect();
    header.push(ws.schema.target.name.clone());
    header.push("distance".into());
    let csv_err = |e: csv::Error| HarnessError::Internal(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (inst, &label) in z.instances.iter().zip(&z.labels) {
        let mut rec: Vec<String> = inst
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| ws.schema.format_value(i, v))
            .collect();
        rec.push(ws.schema.label_name(label).to_string());
        rec.push(format!("{}", distance(config.distance, &ws.schema, x, inst)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Internal(e.to_string()))?;
    Ok((String::from_utf8(bytes).expect("csv output is utf-8"), z))
}

/// Explanation parameters derived from a run configuration.
pub fn explain_params(config: &RunConfig) -> ExplainParams {
    ExplainParams {
        ga: config.ga,
        distance: config.distance,
        tree: config.surrogate,
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_output(path: &std::path::Path, contents: &str) -> Result<(), HarnessError> {
    let err = |source| HarnessError::Output {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(err)?;
    }
    std::fs::write(path, contents).map_err(err)
}
