//! Experiment configuration, ε sweeps and report files.
//!
//! A config names the private data, the workload, a list of methods, the ε
//! values and seeds. [`run_experiment`] runs every (method, ε, seed) with a
//! fresh ledger and writes `report.csv`, `report.json`, `summary.csv`, ledger
//! dumps, PE traces, JAM-lite plans and the generator request log.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::baselines::{
    dp_workload, errors_against, in_distribution_public, independent_baseline, uniform_public, BaselineKind,
};
use crate::error::{Error, Result};
use crate::evolution::{run_pe, PeConfig};
use crate::generator::{
    CachedGenerator, CandidateGenerator, EndpointConfig, HttpTransport, LoggingGenerator, MockGenerator,
    MockPriorConfig, RandomRequest, RemoteGenerator, RequestLog,
};
use crate::privacy::{format_real, json_real, make_schedule, AccountantLedger, PrivacyBudget, ScheduleKind, SeedTree};
use crate::publicfit::{
    gemini_inference, jam_lite, mst_lite, mwem_refine, sample_from_weights, FitOptions, JamOptions, MstSplit,
};
use crate::schema::{load_dataset, ClampPolicy, Dataset, Provenance, TableSchema};
use crate::workload::{
    build_grouped_numeric_workload, build_marginal_workload, build_marginals_up_to, evaluate, Workload,
};

pub const CONFIG_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_HEADER: &str = "method,epsilon,seed,werror_l1,werror_linf,runtime_ms,final_epsilon,final_delta,gen_rejects";

/// A privacy level: a positive real or the literal `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(pub f64);

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        json_real(self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        deserialize_real(d).map(Epsilon)
    }
}

/// Accepts numbers, `"inf"` and `null` (read as NaN).
fn deserialize_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
        Null(()),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{t}\""))),
        Raw::Null(()) => Ok(f64::NAN),
    }
}

fn serialize_real<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    json_real(*v).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    /// All k-way marginals, or the listed column subsets.
    Marginal {
        k: usize,
        #[serde(default)]
        subsets: Option<Vec<Vec<String>>>,
    },
    /// All marginals of size 1 through k.
    MarginalsUpTo { k: usize },
    GroupedNumeric { group_by: Vec<String>, numeric: Vec<String> },
}

impl WorkloadSpec {
    pub fn build(&self, schema: Arc<TableSchema>) -> Result<Workload> {
        let index = |name: &String| schema.column_index(name).ok_or_else(|| Error::MissingColumn(name.clone()));
        match self {
            WorkloadSpec::Marginal { k, subsets: None } => build_marginal_workload(schema.clone(), *k, None),
            WorkloadSpec::Marginal { k, subsets: Some(sets) } => {
                let sets = sets.iter().map(|s| s.iter().map(index).collect()).collect::<Result<Vec<Vec<usize>>>>()?;
                build_marginal_workload(schema.clone(), *k, Some(sets))
            }
            WorkloadSpec::MarginalsUpTo { k } => build_marginals_up_to(schema.clone(), *k),
            WorkloadSpec::GroupedNumeric { group_by, numeric } => {
                let g = group_by.iter().map(index).collect::<Result<Vec<_>>>()?;
                let v = numeric.iter().map(index).collect::<Result<Vec<_>>>()?;
                build_grouped_numeric_workload(schema.clone(), &g, &v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    GeminiInference,
    MstLite,
    JamLite,
    Mwem,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::GeminiInference => "gemini-inference",
            Pipeline::MstLite => "mst-lite",
            Pipeline::JamLite => "jam-lite",
            Pipeline::Mwem => "mwem",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Pipeline::GeminiInference, Pipeline::MstLite, Pipeline::JamLite, Pipeline::Mwem]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pipeline `{s}`")))
    }
}

fn default_rounds() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    /// MWEM rounds.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub mst_split: MstSplit,
    #[serde(default)]
    pub jam: JamOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { rounds: default_rounds(), mst_split: MstSplit::default(), jam: JamOptions::default() }
    }
}

fn default_pool_factor() -> f64 {
    2.0
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Even
}

fn default_baseline_n() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Pe {
        iterations: usize,
        n_synth: usize,
        #[serde(default = "default_pool_factor")]
        pool_factor: f64,
        #[serde(default = "default_schedule")]
        schedule: ScheduleKind,
    },
    /// Generator records as public data for a weight-fitting pipeline.
    Oneshot {
        pipeline: Pipeline,
        n_synth: usize,
        /// Records requested from the generator.
        public_n: usize,
        #[serde(default)]
        options: PipelineOptions,
    },
    /// `pipeline` applies to the public-data baselines; `n_synth` to the
    /// independent baseline and to generator output without DP.
    Baseline {
        baseline: BaselineKind,
        #[serde(default = "default_baseline_n")]
        n_synth: usize,
        #[serde(default)]
        pipeline: Option<Pipeline>,
        #[serde(default)]
        options: PipelineOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub id: String,
    pub method: Method,
}

impl MethodSpec {
    fn needs_generator(&self) -> bool {
        match &self.method {
            Method::Pe { .. } | Method::Oneshot { .. } => true,
            Method::Baseline { baseline, .. } => matches!(baseline, BaselineKind::GeneratorNoDp),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains([',', '/', '\\', '"', '\n']) {
            return Err(Error::Config(format!("method id `{}` must be non-empty without , / \\ or quotes", self.id)));
        }
        match &self.method {
            Method::Pe { iterations, n_synth, pool_factor, .. } => {
                if *iterations == 0 {
                    return Err(Error::ZeroIterations);
                }
                if *n_synth == 0 || !(*pool_factor >= 1.0 && pool_factor.is_finite()) {
                    return Err(Error::Config(format!("method `{}`: need n_synth >= 1 and pool_factor >= 1", self.id)));
                }
            }
            Method::Oneshot { n_synth, public_n, options, .. } => {
                if *n_synth == 0 || *public_n == 0 {
                    return Err(Error::Config(format!("method `{}`: need n_synth and public_n >= 1", self.id)));
                }
                options.validate()?;
            }
            Method::Baseline { baseline, options, .. } => {
                baseline.validate()?;
                options.validate()?;
            }
        }
        Ok(())
    }
}

impl PipelineOptions {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::ZeroIterations);
        }
        self.mst_split.validate()?;
        self.jam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Mock { prior: PathBuf },
    Endpoint { config: PathBuf },
    Cache { path: PathBuf },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    /// Relative paths resolve against the config file's directory.
    pub schema: PathBuf,
    pub private_data: PathBuf,
    pub workload: WorkloadSpec,
    pub methods: Vec<MethodSpec>,
    pub epsilons: Vec<Epsilon>,
    pub delta: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    pub output_dir: PathBuf,
    /// When false, `runtime_ms` is written as 0 so reports are byte-stable.
    #[serde(default = "default_true")]
    pub record_runtime: bool,
    /// Also write each row's released dataset as CSV.
    #[serde(default)]
    pub write_synthetic: bool,
    #[serde(skip)]
    base_dir: PathBuf,
    #[serde(skip)]
    output_override: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates; relative paths are taken from `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let config = Self::parse(text, base_dir)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without [`validate`](Self::validate), so referenced files need not exist.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn set_output_dir(&mut self, dir: impl Into<PathBuf>) {
        self.output_override = Some(dir.into());
    }

    pub fn output_path(&self) -> PathBuf {
        self.output_override.clone().unwrap_or_else(|| self.resolve(&self.output_dir))
    }

    /// SHA-256 of the config as written (paths unresolved).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("config version {} unsupported (expected {CONFIG_VERSION})", self.version)));
        }
        if self.epsilons.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("epsilons, seeds and methods must be non-empty".into()));
        }
        for e in &self.epsilons {
            if e.0.is_nan() || e.0 <= 0.0 {
                return Err(Error::Config(format!("epsilon {} must be positive or \"inf\"", e.0)));
            }
        }
        PrivacyBudget::new(1.0, self.delta)?;
        let mut ids = std::collections::HashSet::new();
        for m in &self.methods {
            m.validate()?;
            if !ids.insert(m.id.as_str()) {
                return Err(Error::Config(format!("duplicate method id `{}`", m.id)));
            }
        }
        let public_files = self.methods.iter().filter_map(|m| match &m.method {
            Method::Baseline { baseline: BaselineKind::InDistributionPublic { path }, .. } => Some(path),
            _ => None,
        });
        for p in [&self.schema, &self.private_data].into_iter().chain(public_files) {
            if !self.resolve(p).is_file() {
                return Err(Error::Config(format!("file {} does not exist", self.resolve(p).display())));
            }
        }
        match &self.generator {
            Some(GeneratorSpec::Mock { prior: p }) | Some(GeneratorSpec::Endpoint { config: p }) | Some(GeneratorSpec::Cache { path: p }) => {
                if !self.resolve(p).is_file() {
                    return Err(Error::Config(format!("generator file {} does not exist", self.resolve(p).display())));
                }
            }
            None => {
                if let Some(m) = self.methods.iter().find(|m| m.needs_generator()) {
                    return Err(Error::Config(format!("method `{}` needs a generator", m.id)));
                }
            }
        }
        if matches!(self.generator, Some(GeneratorSpec::Cache { .. })) {
            if let Some(m) = self.methods.iter().find(|m| matches!(m.method, Method::Pe { .. })) {
                return Err(Error::Config(format!("method `{}`: PE needs a mock or endpoint generator, not a cache", m.id)));
            }
        }
        Ok(())
    }

    /// Keeps only the methods matching `keep`; fails if none remain.
    pub fn retain_methods(&mut self, keep: impl Fn(&MethodSpec) -> bool) -> Result<()> {
        self.methods.retain(|m| keep(m));
        if self.methods.is_empty() {
            return Err(Error::Config("no method in the config matches the request".into()));
        }
        Ok(())
    }
}

/// One (method, ε, seed) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    #[serde(serialize_with = "serialize_real", deserialize_with = "deserialize_real")]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(serialize_with = "serialize_real", deserialize_with = "deserialize_real")]
    pub werror_l1: f64,
    #[serde(serialize_with = "serialize_real", deserialize_with = "deserialize_real")]
    pub werror_linf: f64,
    pub runtime_ms: u64,
    #[serde(serialize_with = "serialize_real", deserialize_with = "deserialize_real")]
    pub final_epsilon: f64,
    pub final_delta: f64,
    pub gen_rejects: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.method,
            format_real(self.epsilon),
            self.seed,
            self.werror_l1,
            self.werror_linf,
            self.runtime_ms,
            format_real(self.final_epsilon),
            self.final_delta,
            self.gen_rejects
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub artifact_version: String,
    pub config_version: u32,
    pub config_hash: String,
    pub workload_hash: String,
    pub workload_queries: usize,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Paths of everything a run wrote.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub summary_csv: PathBuf,
    pub files: Vec<PathBuf>,
}

/// What a method released, ready for evaluation.
struct MethodResult {
    answers: crate::workload::AnswerVector,
    released: Option<Dataset>,
    rejects: usize,
    extra: Vec<(String, Vec<u8>)>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    schema: Arc<TableSchema>,
    workload: &'a Workload,
    s_priv: &'a Dataset,
    mock_prior: Option<MockPriorConfig>,
    endpoint: Option<EndpointConfig>,
    log: RequestLog,
}

impl Context<'_> {
    fn generator(&self) -> Result<Box<dyn CandidateGenerator>> {
        let schema = self.schema.clone();
        match &self.config.generator {
            Some(GeneratorSpec::Mock { .. }) => {
                let prior = self.mock_prior.as_ref().expect("loaded with config");
                Ok(Box::new(LoggingGenerator::new(MockGenerator::new(schema, prior)?, self.log.clone())))
            }
            Some(GeneratorSpec::Endpoint { .. }) => {
                let cfg = self.endpoint.clone().expect("loaded with config");
                let transport = HttpTransport::from_config(&cfg)?;
                Ok(Box::new(RemoteGenerator::new(cfg, transport, schema)?.with_log(self.log.clone())))
            }
            Some(GeneratorSpec::Cache { path }) => Ok(Box::new(LoggingGenerator::new(
                CachedGenerator::load(self.config.resolve(path), schema)?,
                self.log.clone(),
            ))),
            None => Err(Error::Config("no generator configured".into())),
        }
    }

    fn generate_public(&self, n: usize, seeds: &SeedTree) -> Result<(Dataset, usize)> {
        let mut generator = self.generator()?;
        let batch = generator.random_api(&RandomRequest::new(self.schema.clone(), n), &mut seeds.stream("public"))?;
        let rejects = batch.rejected_count;
        if batch.is_empty() {
            return Err(Error::EmptyPublicSet);
        }
        Ok((batch.records.retag(Provenance::Public), rejects))
    }

    fn released(&self, synthetic: Dataset, rejects: usize, extra: Vec<(String, Vec<u8>)>) -> Result<MethodResult> {
        Ok(MethodResult { answers: evaluate(self.workload, &synthetic)?, released: Some(synthetic), rejects, extra })
    }

    #[allow(clippy::too_many_arguments)]
    fn pipeline(
        &self,
        pipeline: Pipeline,
        public: &Dataset,
        n_synth: usize,
        options: &PipelineOptions,
        budget: &PrivacyBudget,
        ledger: &mut AccountantLedger,
        seeds: &SeedTree,
        rejects: usize,
    ) -> Result<MethodResult> {
        let fit = FitOptions::default();
        let rho = budget.rho;
        match pipeline {
            Pipeline::GeminiInference => {
                let out = gemini_inference(public, self.workload, self.s_priv, n_synth, rho, ledger, seeds, &fit)?;
                self.released(out.synthetic, rejects, vec![])
            }
            Pipeline::Mwem => {
                let w = mwem_refine(public, self.workload, self.s_priv, options.rounds, rho, ledger, seeds)?;
                let synthetic = sample_from_weights(&w, n_synth, &mut seeds.stream("mwem/sample"))?;
                self.released(synthetic, rejects, vec![])
            }
            Pipeline::MstLite => {
                let out = mst_lite(self.s_priv, public, n_synth, rho, options.mst_split, ledger, seeds, &fit)?;
                let names: Vec<[&str; 2]> = out
                    .tree
                    .iter()
                    .map(|&(i, j)| [self.schema.columns[i].name.as_str(), self.schema.columns[j].name.as_str()])
                    .collect();
                let tree = serde_json::to_vec_pretty(&serde_json::json!({ "tree": names }))?;
                self.released(out.output.synthetic, rejects, vec![("mst-tree.json".into(), tree)])
            }
            Pipeline::JamLite => {
                let (plan, out) =
                    jam_lite(self.s_priv, public, self.workload, n_synth, rho, options.jam, ledger, seeds, &fit)?;
                let plan = serde_json::to_vec_pretty(&plan)?;
                self.released(out.synthetic, rejects, vec![("jam-plan.json".into(), plan)])
            }
        }
    }

    fn run_method(
        &self,
        spec: &MethodSpec,
        budget: &PrivacyBudget,
        ledger: &mut AccountantLedger,
        seeds: &SeedTree,
    ) -> Result<MethodResult> {
        match &spec.method {
            Method::Pe { iterations, n_synth, pool_factor, schedule } => {
                let config = PeConfig {
                    iterations: *iterations,
                    n_synth: *n_synth,
                    pool_factor: *pool_factor,
                    schedule: make_schedule(*schedule, *iterations)?,
                    budget: *budget,
                };
                let mut generator = self.generator()?;
                let out = run_pe(self.s_priv, self.workload, &config, &mut generator, ledger, seeds)?;
                let mut csv = Vec::new();
                out.trace.write_csv(&mut csv).map_err(|e| Error::io("trace", e))?;
                let json = serde_json::to_vec_pretty(&out.trace)?;
                let extra = vec![("trace.csv".into(), csv), ("trace.json".into(), json)];
                self.released(out.synthetic, out.generator_rejects, extra)
            }
            Method::Oneshot { pipeline, n_synth, public_n, options } => {
                let (public, rejects) = self.generate_public(*public_n, seeds)?;
                self.pipeline(*pipeline, &public, *n_synth, options, budget, ledger, seeds, rejects)
            }
            Method::Baseline { baseline, n_synth, pipeline, options } => match baseline {
                BaselineKind::DpWorkload => {
                    let answers = dp_workload(self.s_priv, self.workload, budget.rho, ledger, &mut seeds.stream("dp"))?;
                    Ok(MethodResult { answers, released: None, rejects: 0, extra: vec![] })
                }
                BaselineKind::Independent => {
                    let out = independent_baseline(self.s_priv, *n_synth, budget.rho, ledger, seeds)?;
                    self.released(out.synthetic, 0, vec![])
                }
                BaselineKind::UniformPublic { n } => {
                    let public = uniform_public(self.schema.clone(), *n, &mut seeds.stream("uniform"))?;
                    let p = pipeline.unwrap_or(Pipeline::GeminiInference);
                    self.pipeline(p, &public, *n_synth, options, budget, ledger, seeds, 0)
                }
                BaselineKind::InDistributionPublic { path } => {
                    let public = in_distribution_public(self.config.resolve(path), self.schema.clone())?;
                    let p = pipeline.unwrap_or(Pipeline::GeminiInference);
                    self.pipeline(p, &public, *n_synth, options, budget, ledger, seeds, 0)
                }
                BaselineKind::GeneratorNoDp => {
                    let (public, rejects) = self.generate_public(*n_synth, seeds)?;
                    self.released(public.retag(Provenance::Synthetic), rejects, vec![])
                }
            },
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the whole sweep and writes the report files.
///
/// Config problems fail before the private data is read. Method failures
/// become rows with NaN errors and an `error` message in `report.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Report, RunArtifacts)> {
    config.validate()?;
    let schema = Arc::new(TableSchema::load(config.resolve(&config.schema))?);
    let workload = config.workload.build(schema.clone())?;
    let mock_prior = match &config.generator {
        Some(GeneratorSpec::Mock { prior }) => {
            let prior = MockPriorConfig::load(config.resolve(prior))?;
            MockGenerator::new(schema.clone(), &prior)?;
            Some(prior)
        }
        _ => None,
    };
    let endpoint = match &config.generator {
        Some(GeneratorSpec::Endpoint { config: p }) => Some(EndpointConfig::load(config.resolve(p))?),
        _ => None,
    };
    let budgets = config
        .epsilons
        .iter()
        .map(|e| PrivacyBudget::new(e.0, config.delta))
        .collect::<Result<Vec<_>>>()?;

    let s_priv = load_dataset(
        config.resolve(&config.private_data),
        schema.clone(),
        ClampPolicy::default_for(Provenance::Private),
        Provenance::Private,
    )?;
    let ctx = Context { config, schema, workload: &workload, s_priv: &s_priv, mock_prior, endpoint, log: RequestLog::default() };

    let out_dir = config.output_path();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut artifacts = RunArtifacts::default();
    let mut rows = Vec::new();
    for spec in &config.methods {
        for budget in &budgets {
            for &seed in &config.seeds {
                let stem = format!("{}_eps{}_seed{seed}", spec.id, format_real(budget.epsilon));
                let seeds = SeedTree::new(seed).child(&spec.id);
                let mut ledger = budget.ledger();
                let start = Instant::now();
                let outcome = ctx.run_method(spec, budget, &mut ledger, &seeds);
                let runtime_ms = if config.record_runtime { start.elapsed().as_millis() as u64 } else { 0 };
                let final_epsilon = ledger.epsilon_spent();
                if final_epsilon > budget.epsilon * (1.0 + 1e-9) {
                    return Err(Error::BudgetExceeded {
                        label: stem,
                        rho: ledger.total_rho(),
                        total: ledger.total_rho(),
                        cap: ledger.cap(),
                    });
                }
                let final_delta = if ledger.total_rho() > 0.0 { config.delta } else { 0.0 };
                let mut row = ReportRow {
                    method: spec.id.clone(),
                    epsilon: budget.epsilon,
                    seed,
                    werror_l1: f64::NAN,
                    werror_linf: f64::NAN,
                    runtime_ms,
                    final_epsilon,
                    final_delta,
                    gen_rejects: 0,
                    error: None,
                };
                match outcome.and_then(|r| errors_against(&workload, &s_priv, &r.answers).map(|e| (r, e))) {
                    Ok((result, errors)) => {
                        row.werror_l1 = errors.l1;
                        row.werror_linf = errors.linf;
                        row.gen_rejects = result.rejects;
                        for (suffix, bytes) in result.extra {
                            let dir = if suffix.starts_with("trace") { "traces" } else { "plans" };
                            let path = out_dir.join(dir).join(format!("{stem}_{suffix}"));
                            write_file(&path, &bytes)?;
                            artifacts.files.push(path);
                        }
                        if let (true, Some(ds)) = (config.write_synthetic, result.released) {
                            let path = out_dir.join("synthetic").join(format!("{stem}.csv"));
                            std::fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| Error::io(&path, e))?;
                            ds.write_csv(&path)?;
                            artifacts.files.push(path);
                        }
                    }
                    Err(e) => {
                        log::warn!("{stem}: {e}");
                        row.error = Some(e.to_string());
                    }
                }
                let path = out_dir.join("ledgers").join(format!("{stem}.json"));
                write_file(&path, serde_json::to_string_pretty(&ledger.to_json())?.as_bytes())?;
                artifacts.files.push(path);
                rows.push(row);
            }
        }
    }

    let report = Report {
        name: config.name.clone(),
        artifact_version: ARTIFACT_VERSION.into(),
        config_version: CONFIG_VERSION,
        config_hash: config.hash(),
        workload_hash: workload.hash(),
        workload_queries: workload.len(),
        rows,
    };
    artifacts.report_csv = out_dir.join("report.csv");
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| Error::io(&artifacts.report_csv, e))?;
    write_file(&artifacts.report_csv, &csv)?;
    artifacts.report_json = out_dir.join("report.json");
    write_file(&artifacts.report_json, serde_json::to_string_pretty(&report)?.as_bytes())?;
    artifacts.summary_csv = out_dir.join("summary.csv");
    let mut summary = Vec::new();
    write_summary_csv(&summarize(&report.rows), &mut summary).map_err(|e| Error::io(&artifacts.summary_csv, e))?;
    write_file(&artifacts.summary_csv, &summary)?;
    let lines = ctx.log.lines();
    if !lines.is_empty() {
        let path = out_dir.join("generator_requests.jsonl");
        write_file(&path, (lines.join("\n") + "\n").as_bytes())?;
        artifacts.files.push(path);
    }
    Ok((report, artifacts))
}

/// Mean and sample standard deviation over seeds for one (method, ε).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub epsilon: f64,
    pub seeds: usize,
    pub werror_l1_mean: f64,
    pub werror_l1_std: f64,
    pub werror_linf_mean: f64,
    pub werror_linf_std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by (method, ε) in first-appearance order; failed rows are skipped.
pub fn summarize(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: HashMap<(String, u64), Vec<&ReportRow>> = HashMap::new();
    for r in rows.iter().filter(|r| r.error.is_none()) {
        let key = (r.method.clone(), r.epsilon.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let (l1, l1_std) = mean_std(&rs.iter().map(|r| r.werror_l1).collect::<Vec<_>>());
            let (linf, linf_std) = mean_std(&rs.iter().map(|r| r.werror_linf).collect::<Vec<_>>());
            SummaryRow {
                method: key.0,
                epsilon: f64::from_bits(key.1),
                seeds: rs.len(),
                werror_l1_mean: l1,
                werror_l1_std: l1_std,
                werror_linf_mean: linf,
                werror_linf_std: linf_std,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,epsilon,seeds,werror_l1_mean,werror_l1_std,werror_linf_mean,werror_linf_std")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            format_real(r.epsilon),
            r.seeds,
            r.werror_l1_mean,
            r.werror_l1_std,
            r.werror_linf_mean,
            r.werror_linf_std
        )?;
    }
    Ok(())
}

/// Merges reports that share a workload. Rows repeating an already seen
/// (method, ε, seed) are dropped, so merging a report with itself changes
/// nothing.
pub fn compare_methods(reports: &[Report]) -> Result<Vec<SummaryRow>> {
    let Some(first) = reports.first() else {
        return Err(Error::Config("compare needs at least one report".into()));
    };
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::new();
    for report in reports {
        if report.workload_hash != first.workload_hash {
            return Err(Error::WorkloadMismatch(first.workload_hash.clone(), report.workload_hash.clone()));
        }
        for r in &report.rows {
            if seen.insert((r.method.clone(), r.epsilon.to_bits(), r.seed)) {
                rows.push(r.clone());
            }
        }
    }
    Ok(summarize(&rows))
}
