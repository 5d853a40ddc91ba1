//! Candidate generators: the `Random_API` / `Variation_API` pair over a
//! foundation model, a seeded mock prior, an HTTP structured-output client
//! and a persistent JSONL cache for one-shot reuse.
//!
//! Requests are built so that only schema information and already-privatized
//! records can reach a generator: [`RandomRequest`] carries no records at all
//! and [`ElitePool`] only accepts datasets tagged [`Provenance::Synthetic`].

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{format_cell, ColumnKind, Dataset, Provenance, Record, TableSchema};

pub mod cache;
pub mod mock;
pub mod remote;

pub use cache::{cache_load, cache_store, read_cache_header, CachedGenerator};
pub use mock::{MockGenerator, MockPriorConfig};
pub use remote::{EndpointConfig, HttpTransport, RemoteGenerator, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    pub top_k: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { top_k: 1, temperature: 1.0 }
    }
}

/// Request for `n` fresh records; built from the schema alone.
#[derive(Debug, Clone)]
pub struct RandomRequest {
    pub schema: Arc<TableSchema>,
    pub n: usize,
    pub params: GenerationParams,
}

impl RandomRequest {
    pub fn new(schema: Arc<TableSchema>, n: usize) -> Self {
        RandomRequest { schema, n, params: GenerationParams::default() }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": "random",
            "schema": schema_description(&self.schema),
            "n": self.n,
            "generation_params": self.params,
        })
    }
}

/// Records that came out of a privatized resampling step.
#[derive(Debug, Clone)]
pub struct ElitePool {
    dataset: Dataset,
}

impl ElitePool {
    pub fn new(dataset: Dataset) -> Result<Self> {
        if dataset.provenance() != Provenance::Synthetic {
            return Err(Error::PrivacyFirewall(format!(
                "elite records must be synthetic, got {}",
                dataset.provenance()
            )));
        }
        if dataset.is_empty() {
            return Err(Error::PrivacyFirewall("elite set is empty".into()));
        }
        Ok(ElitePool { dataset })
    }

    pub fn records(&self) -> &[Record] {
        self.dataset.rows()
    }

    pub fn schema(&self) -> &Arc<TableSchema> {
        self.dataset.schema_arc()
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }
}

/// Request for `n` records similar to an elite set.
#[derive(Debug, Clone)]
pub struct VariationRequest {
    pub elite: ElitePool,
    pub n: usize,
    pub params: GenerationParams,
}

impl VariationRequest {
    pub fn new(elite: ElitePool, n: usize) -> Self {
        VariationRequest { elite, n, params: GenerationParams::default() }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let schema = self.elite.schema();
        serde_json::json!({
            "mode": "variation",
            "schema": schema_description(schema),
            "n": self.n,
            "generation_params": self.params,
            "elite": self.elite.records().iter().map(|r| record_to_json(schema, r)).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorSource {
    MockPrior,
    RemoteModel(String),
    Cache(PathBuf),
}

impl GeneratorSource {
    pub fn label(&self) -> String {
        match self {
            GeneratorSource::MockPrior => "mock".into(),
            GeneratorSource::RemoteModel(id) => format!("remote:{id}"),
            GeneratorSource::Cache(p) => format!("cache:{}", p.display()),
        }
    }
}

/// Schema-validated generator output.
#[derive(Debug, Clone)]
pub struct GeneratorBatch {
    pub records: Dataset,
    pub rejected_count: usize,
    pub source: GeneratorSource,
    pub params: GenerationParams,
    /// Set when the retry budget ran out before `requested` records arrived.
    pub partial: bool,
    pub requested: usize,
}

impl GeneratorBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fails with `RetryBudgetExhausted` unless at least `wanted` records arrived.
    pub fn require(self, wanted: usize) -> Result<Self> {
        if self.records.len() < wanted {
            return Err(Error::RetryBudgetExhausted { got: self.records.len(), wanted });
        }
        Ok(self)
    }
}

/// The two generator entry points used by Private Evolution.
pub trait CandidateGenerator {
    fn random_api(&mut self, req: &RandomRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch>;
    fn variation_api(&mut self, req: &VariationRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch>;
}

impl<G: CandidateGenerator + ?Sized> CandidateGenerator for Box<G> {
    fn random_api(&mut self, req: &RandomRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        (**self).random_api(req, rng)
    }
    fn variation_api(&mut self, req: &VariationRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        (**self).variation_api(req, rng)
    }
}

/// Shared, append-only log of every request handed to a generator.
#[derive(Debug, Clone, Default)]
pub struct RequestLog {
    lines: Arc<Mutex<Vec<String>>>,
}

impl RequestLog {
    pub fn push(&self, request: &serde_json::Value) {
        self.lines.lock().expect("request log poisoned").push(request.to_string());
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().expect("request log poisoned").clone()
    }
}

/// Wraps a generator and records each request before forwarding it.
pub struct LoggingGenerator<G> {
    inner: G,
    log: RequestLog,
}

impl<G> LoggingGenerator<G> {
    pub fn new(inner: G, log: RequestLog) -> Self {
        LoggingGenerator { inner, log }
    }
}

impl<G: CandidateGenerator> CandidateGenerator for LoggingGenerator<G> {
    fn random_api(&mut self, req: &RandomRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        self.log.push(&req.to_json());
        self.inner.random_api(req, rng)
    }
    fn variation_api(&mut self, req: &VariationRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        self.log.push(&req.to_json());
        self.inner.variation_api(req, rng)
    }
}

/// Column names, kinds and domains: everything a generator may see.
pub fn schema_description(schema: &TableSchema) -> serde_json::Value {
    serde_json::to_value(schema).expect("schema serializes")
}

/// Record as a JSON object keyed by column name in schema order.
pub fn record_to_json(schema: &TableSchema, record: &Record) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (col, cell) in schema.columns.iter().zip(&record.values) {
        let value = match (&col.kind, cell) {
            (ColumnKind::Numerical { .. }, crate::schema::Cell::Num(v)) => serde_json::json!(v),
            _ => serde_json::Value::String(format_cell(col, cell)),
        };
        map.insert(col.name.clone(), value);
    }
    serde_json::Value::Object(map)
}

/// Parses a record object; numerical values out of range are clamped,
/// anything else that does not fit the schema is rejected.
pub fn record_from_json(schema: &TableSchema, value: &serde_json::Value) -> std::result::Result<Record, String> {
    let obj = value.as_object().ok_or("record is not an object")?;
    if obj.len() != schema.len() {
        return Err(format!("expected {} fields, found {}", schema.len(), obj.len()));
    }
    let mut values = Vec::with_capacity(schema.len());
    for col in &schema.columns {
        let v = obj.get(&col.name).ok_or_else(|| format!("missing field `{}`", col.name))?;
        let cell = match &col.kind {
            ColumnKind::Categorical { domain } => {
                let s = v.as_str().ok_or_else(|| format!("`{}` is not a string", col.name))?;
                let i = domain
                    .iter()
                    .position(|d| d == s)
                    .ok_or_else(|| format!("unknown value `{s}` for `{}`", col.name))?;
                crate::schema::Cell::Cat(i as u32)
            }
            ColumnKind::Numerical { min, max, .. } => {
                let x = match v {
                    serde_json::Value::Number(n) => n.as_f64(),
                    serde_json::Value::String(s) => s.trim().parse().ok(),
                    _ => None,
                }
                .ok_or_else(|| format!("`{}` is not a number", col.name))?;
                crate::schema::numeric_cell(col, *min, *max, x, crate::schema::ClampPolicy::Clamp, 0)
                    .map_err(|e| e.to_string())?
            }
        };
        values.push(cell);
    }
    Ok(Record::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Cell, ColumnSpec};

    fn schema() -> Arc<TableSchema> {
        Arc::new(
            TableSchema::new(
                "t",
                vec![ColumnSpec::categorical("a", &["x", "y"]), ColumnSpec::numerical("v", 0.0, 1.0, 2)],
            )
            .unwrap(),
        )
    }

    #[test]
    fn elite_pool_requires_synthetic_provenance() {
        let rows = vec![Record::new(vec![Cell::Cat(0), Cell::Num(0.5)])];
        let private = Dataset::new(schema(), rows.clone(), Provenance::Private).unwrap();
        assert!(matches!(ElitePool::new(private), Err(Error::PrivacyFirewall(_))));
        let generated = Dataset::new(schema(), rows.clone(), Provenance::Generated).unwrap();
        assert!(matches!(ElitePool::new(generated), Err(Error::PrivacyFirewall(_))));
        let synth = Dataset::new(schema(), rows, Provenance::Synthetic).unwrap();
        assert_eq!(ElitePool::new(synth).unwrap().len(), 1);
        let empty = Dataset::new(schema(), vec![], Provenance::Synthetic).unwrap();
        assert!(ElitePool::new(empty).is_err());
    }

    #[test]
    fn record_json_validation() {
        let s = schema();
        let ok = serde_json::json!({"a": "y", "v": 1.5});
        assert_eq!(record_from_json(&s, &ok).unwrap().values, vec![Cell::Cat(1), Cell::Num(1.0)]);
        assert!(record_from_json(&s, &serde_json::json!({"a": "z", "v": 0.5})).is_err());
        assert!(record_from_json(&s, &serde_json::json!({"a": "x"})).is_err());
        assert!(record_from_json(&s, &serde_json::json!({"a": "x", "v": "abc"})).is_err());
        assert!(record_from_json(&s, &serde_json::json!({"a": "x", "v": 0.1, "w": 2})).is_err());
        let r = Record::new(vec![Cell::Cat(0), Cell::Num(0.25)]);
        assert_eq!(record_from_json(&s, &record_to_json(&s, &r)).unwrap(), r);
    }

    #[test]
    fn random_request_json_has_no_records() {
        let req = RandomRequest::new(schema(), 5);
        let j = req.to_json();
        assert_eq!(j["mode"], "random");
        assert!(j.get("elite").is_none());
        assert_eq!(j["generation_params"]["top_k"], 1);
        assert_eq!(j["generation_params"]["temperature"], 1.0);
    }
}
