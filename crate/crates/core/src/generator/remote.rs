//! Structured-output HTTP client for a remote foundation model.
//!
//! Each call posts a JSON body holding a prompt built from the schema (plus a
//! bounded slice of elite records for variation), a response schema and the
//! generation parameters. The response body is JSON lines, one record object
//! per line. Invalid records are dropped and re-requested, never repaired.

use std::sync::Arc;
use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    record_from_json, record_to_json, CandidateGenerator, GenerationParams, GeneratorBatch, GeneratorSource,
    RandomRequest, RequestLog, VariationRequest,
};
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, Dataset, Provenance, Record, TableSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    pub model_id: String,
    pub per_call_record_cap: usize,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retry_cap: usize,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_exemplars")]
    pub variation_exemplars: usize,
}

fn default_auth_env() -> String {
    "TABSYNTH_API_TOKEN".into()
}

fn default_exemplars() -> usize {
    10
}

impl EndpointConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: EndpointConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidGeneratorConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_call_record_cap == 0 || self.max_in_flight == 0 || self.variation_exemplars == 0 {
            return Err(Error::InvalidGeneratorConfig(
                "per_call_record_cap, max_in_flight and variation_exemplars must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout(String),
    Unavailable(String),
    Auth(String),
}

/// One request/response exchange with the model endpoint.
pub trait Transport: Send + Sync {
    fn call(&self, body: &serde_json::Value) -> std::result::Result<String, TransportError>;
}

/// Blocking HTTP transport with bearer-token auth.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    token: String,
}

impl HttpTransport {
    pub fn from_config(config: &EndpointConfig) -> Result<Self> {
        let token = std::env::var(&config.auth_env)
            .map_err(|_| Error::AuthFailure(format!("environment variable `{}` is not set", config.auth_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpTransport { agent, url: config.url.clone(), token })
    }
}

impl Transport for HttpTransport {
    fn call(&self, body: &serde_json::Value) -> std::result::Result<String, TransportError> {
        let response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(body);
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(TransportError::Timeout(t.to_string())),
            Err(e) => return Err(TransportError::Unavailable(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            401 | 403 => Err(TransportError::Auth(format!("status {status}"))),
            _ => Err(TransportError::Unavailable(format!("status {status}"))),
        }
    }
}

/// JSON schema of one response record.
pub fn response_schema(schema: &TableSchema) -> serde_json::Value {
    let mut props = serde_json::Map::new();
    for col in &schema.columns {
        let prop = match &col.kind {
            ColumnKind::Categorical { domain } => serde_json::json!({ "type": "string", "enum": domain }),
            ColumnKind::Numerical { min, max, .. } => {
                serde_json::json!({ "type": "number", "minimum": min, "maximum": max })
            }
        };
        props.insert(col.name.clone(), prop);
    }
    let required: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    serde_json::json!({
        "type": "object",
        "properties": props,
        "required": required,
        "additionalProperties": false,
    })
}

fn describe_columns(schema: &TableSchema) -> String {
    schema
        .columns
        .iter()
        .map(|c| match &c.kind {
            ColumnKind::Categorical { domain } => format!("- {} (categorical, one of: {})", c.name, domain.join(", ")),
            ColumnKind::Numerical { min, max, .. } => format!("- {} (number between {} and {})", c.name, min, max),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn random_prompt(schema: &TableSchema, n: usize) -> String {
    format!(
        "Generate {n} realistic records for a table named `{}` with these columns:\n{}\n\
         Return one JSON object per line, keyed by column name.",
        schema.name,
        describe_columns(schema)
    )
}

pub fn variation_prompt(schema: &TableSchema, exemplars: &[serde_json::Value], n: usize) -> String {
    let lines: Vec<String> = exemplars.iter().map(|e| e.to_string()).collect();
    format!(
        "Here are example records from a table named `{}` with these columns:\n{}\nExamples:\n{}\n\
         Generate {n} new records that are similar to the examples. \
         Return one JSON object per line, keyed by column name.",
        schema.name,
        describe_columns(schema),
        lines.join("\n")
    )
}

fn payload_reference(body: &str) -> String {
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("sha256:{}", &digest[..16])
}

/// Parses a JSON-lines body (a single JSON array is also accepted).
///
/// Returns the valid records and the number rejected. A non-empty body with
/// no parseable JSON at all is a `MalformedResponse`.
pub fn parse_response(schema: &TableSchema, body: &str) -> Result<(Vec<Record>, usize)> {
    let trimmed = body.trim();
    let values: Vec<std::result::Result<serde_json::Value, ()>> = if trimmed.starts_with('[') {
        match serde_json::from_str::<Vec<serde_json::Value>>(trimmed) {
            Ok(v) => v.into_iter().map(Ok).collect(),
            Err(_) => vec![Err(())],
        }
    } else {
        trimmed
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|_| ()))
            .collect()
    };
    if !values.is_empty() && values.iter().all(|v| v.is_err()) {
        let reference = payload_reference(body);
        log::warn!("malformed generator response {reference}");
        return Err(Error::MalformedResponse { reference, reason: "no JSON records in body".into() });
    }
    let mut records = Vec::new();
    let mut rejected = 0;
    for v in values {
        match v.map_err(|_| "unparseable line".to_string()).and_then(|v| record_from_json(schema, &v)) {
            Ok(r) => records.push(r),
            Err(reason) => {
                log::debug!("dropping generator record: {reason}");
                rejected += 1;
            }
        }
    }
    Ok((records, rejected))
}

enum CallOutcome {
    Body(String),
    Failed(TransportError),
}

/// Generator backed by a remote structured-output endpoint.
pub struct RemoteGenerator<T: Transport> {
    config: EndpointConfig,
    transport: T,
    schema: Arc<TableSchema>,
    log: Option<RequestLog>,
}

impl<T: Transport> RemoteGenerator<T> {
    pub fn new(config: EndpointConfig, transport: T, schema: Arc<TableSchema>) -> Result<Self> {
        config.validate()?;
        Ok(RemoteGenerator { config, transport, schema, log: None })
    }

    /// Records every outgoing request body.
    pub fn with_log(mut self, log: RequestLog) -> Self {
        self.log = Some(log);
        self
    }

    fn body(&self, prompt: String, n: usize, params: GenerationParams) -> serde_json::Value {
        serde_json::json!({
            "model": self.config.model_id,
            "prompt": prompt,
            "response_schema": { "type": "array", "items": response_schema(&self.schema) },
            "generation_config": {
                "top_k": params.top_k,
                "temperature": params.temperature,
                "candidate_count": 1,
            },
            "n": n,
        })
    }

    fn call_with_retries(&self, body: &serde_json::Value) -> CallOutcome {
        let mut last = TransportError::Unavailable("no attempt made".into());
        for attempt in 0..=self.config.retry_cap {
            match self.transport.call(body) {
                Ok(text) => return CallOutcome::Body(text),
                Err(TransportError::Auth(msg)) => return CallOutcome::Failed(TransportError::Auth(msg)),
                Err(e) => {
                    log::warn!("generator call attempt {} failed: {:?}", attempt + 1, e);
                    last = e;
                }
            }
        }
        CallOutcome::Failed(last)
    }

    /// Runs calls in waves of `max_in_flight`, returning bodies in call order.
    fn run_calls(&self, bodies: &[serde_json::Value]) -> Vec<CallOutcome> {
        let mut outcomes = Vec::with_capacity(bodies.len());
        for wave in bodies.chunks(self.config.max_in_flight) {
            let results: Vec<CallOutcome> = std::thread::scope(|scope| {
                let handles: Vec<_> = wave.iter().map(|b| scope.spawn(move || self.call_with_retries(b))).collect();
                handles.into_iter().map(|h| h.join().expect("generator call thread panicked")).collect()
            });
            outcomes.extend(results);
        }
        outcomes
    }

    /// Collects `n` valid records, issuing calls of at most
    /// `per_call_record_cap` records. `make_prompt(call_index, count)` builds
    /// each call's prompt.
    pub fn remote_generate(
        &self,
        n: usize,
        params: GenerationParams,
        make_prompt: &dyn Fn(usize, usize) -> String,
    ) -> Result<GeneratorBatch> {
        let cap = self.config.per_call_record_cap;
        let mut records: Vec<Record> = Vec::with_capacity(n);
        let mut rejected = 0;
        let mut short_rounds = 0;
        let mut call_index = 0;
        let mut partial = false;
        while records.len() < n {
            let remaining = n - records.len();
            let counts: Vec<usize> = (0..remaining.div_ceil(cap)).map(|i| cap.min(remaining - i * cap)).collect();
            let bodies: Vec<serde_json::Value> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| self.body(make_prompt(call_index + i, c), c, params))
                .collect();
            call_index += bodies.len();
            if let Some(log) = &self.log {
                bodies.iter().for_each(|b| log.push(b));
            }
            let mut got = 0;
            for outcome in self.run_calls(&bodies) {
                match outcome {
                    CallOutcome::Body(text) => match parse_response(&self.schema, &text) {
                        Ok((valid, bad)) => {
                            got += valid.len();
                            rejected += bad;
                            records.extend(valid);
                        }
                        Err(e) => log::warn!("{e}"),
                    },
                    CallOutcome::Failed(TransportError::Auth(msg)) => return Err(Error::AuthFailure(msg)),
                    CallOutcome::Failed(e) => {
                        return Err(Error::GeneratorUnavailable(format!("{e:?} after {} retries", self.config.retry_cap)))
                    }
                }
            }
            if got < remaining {
                short_rounds += 1;
                if short_rounds > self.config.retry_cap {
                    partial = true;
                    break;
                }
            }
        }
        records.truncate(n);
        Ok(GeneratorBatch {
            records: Dataset::new(self.schema.clone(), records, Provenance::Generated)?,
            rejected_count: rejected,
            source: GeneratorSource::RemoteModel(self.config.model_id.clone()),
            params,
            partial,
            requested: n,
        })
    }
}

impl<T: Transport> CandidateGenerator for RemoteGenerator<T> {
    fn random_api(&mut self, req: &RandomRequest, _rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        let schema = req.schema.clone();
        self.remote_generate(req.n, req.params, &|_, count| random_prompt(&schema, count))
    }

    fn variation_api(&mut self, req: &VariationRequest, _rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        let schema = req.elite.schema().clone();
        let elite: Vec<serde_json::Value> = req.elite.records().iter().map(|r| record_to_json(&schema, r)).collect();
        let per_call = self.config.variation_exemplars.min(elite.len());
        self.remote_generate(req.n, req.params, &|call, count| {
            let start = call * per_call;
            let exemplars: Vec<serde_json::Value> =
                (0..per_call).map(|j| elite[(start + j) % elite.len()].clone()).collect();
            variation_prompt(&schema, &exemplars, count)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn schema() -> Arc<TableSchema> {
        Arc::new(
            TableSchema::new(
                "t",
                vec![ColumnSpec::categorical("a", &["x", "y"]), ColumnSpec::numerical("v", 0.0, 1.0, 2)],
            )
            .unwrap(),
        )
    }

    fn config() -> EndpointConfig {
        EndpointConfig {
            url: "http://localhost:0".into(),
            model_id: "test-model".into(),
            per_call_record_cap: 1000,
            timeout_ms: 100,
            max_in_flight: 4,
            retry_cap: 2,
            auth_env: "UNUSED".into(),
            variation_exemplars: 10,
        }
    }

    /// Answers each call with `n` records, some of them invalid.
    struct Echo {
        calls: AtomicUsize,
        bad_every: usize,
    }

    impl Transport for Echo {
        fn call(&self, body: &serde_json::Value) -> std::result::Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let n = body["n"].as_u64().unwrap() as usize;
            let lines: Vec<String> = (0..n)
                .map(|i| {
                    if self.bad_every > 0 && i % self.bad_every == self.bad_every - 1 {
                        r#"{"a":"zz","v":0.5}"#.to_string()
                    } else {
                        format!(r#"{{"a":"x","v":{}}}"#, (i % 10) as f64 / 10.0)
                    }
                })
                .collect();
            Ok(lines.join("\n"))
        }
    }

    struct Down;
    impl Transport for Down {
        fn call(&self, _: &serde_json::Value) -> std::result::Result<String, TransportError> {
            Err(TransportError::Timeout("timed out".into()))
        }
    }

    struct Denied;
    impl Transport for Denied {
        fn call(&self, _: &serde_json::Value) -> std::result::Result<String, TransportError> {
            Err(TransportError::Auth("401".into()))
        }
    }

    struct Empty;
    impl Transport for Empty {
        fn call(&self, _: &serde_json::Value) -> std::result::Result<String, TransportError> {
            Ok(String::new())
        }
    }

    #[test]
    fn large_request_is_split_into_capped_calls() {
        let echo = Echo { calls: AtomicUsize::new(0), bad_every: 0 };
        let g = RemoteGenerator::new(config(), echo, schema()).unwrap();
        let batch = g.remote_generate(131_000, GenerationParams::default(), &|_, c| random_prompt(&schema(), c)).unwrap();
        assert_eq!(batch.len(), 131_000);
        assert!(!batch.partial);
        assert!(g.transport.calls.load(Ordering::SeqCst) >= 131);
    }

    #[test]
    fn invalid_records_are_dropped_and_refetched() {
        let echo = Echo { calls: AtomicUsize::new(0), bad_every: 5 };
        let mut g = RemoteGenerator::new(config(), echo, schema()).unwrap();
        let mut rng = crate::privacy::SeedTree::new(0).stream("r");
        let batch = g.random_api(&RandomRequest::new(schema(), 100), &mut rng).unwrap();
        assert_eq!(batch.len(), 100);
        assert!(batch.rejected_count >= 20);
    }

    #[test]
    fn failure_paths() {
        let g = RemoteGenerator::new(config(), Down, schema()).unwrap();
        let err = g.remote_generate(10, GenerationParams::default(), &|_, _| String::new()).unwrap_err();
        assert!(matches!(err, Error::GeneratorUnavailable(_)), "{err}");
        let g = RemoteGenerator::new(config(), Denied, schema()).unwrap();
        assert!(matches!(
            g.remote_generate(10, GenerationParams::default(), &|_, _| String::new()),
            Err(Error::AuthFailure(_))
        ));
        let g = RemoteGenerator::new(config(), Empty, schema()).unwrap();
        let batch = g.remote_generate(10, GenerationParams::default(), &|_, _| String::new()).unwrap();
        assert!(batch.partial && batch.is_empty());
        assert!(matches!(batch.require(10), Err(Error::RetryBudgetExhausted { got: 0, wanted: 10 })));
    }

    #[test]
    fn response_parsing() {
        let s = schema();
        let (ok, bad) = parse_response(&s, "{\"a\":\"x\",\"v\":0.5}\nnot json\n{\"a\":\"q\",\"v\":0.5}\n").unwrap();
        assert_eq!((ok.len(), bad), (1, 2));
        let (ok, bad) = parse_response(&s, r#"[{"a":"y","v":0.1},{"a":"x","v":2}]"#).unwrap();
        assert_eq!((ok.len(), bad), (2, 0));
        assert!(matches!(parse_response(&s, "garbage"), Err(Error::MalformedResponse { .. })));
    }

    #[test]
    fn prompts_use_schema_only() {
        let p = random_prompt(&schema(), 3);
        assert!(p.contains("one of: x, y") && p.contains("between 0 and 1"));
        let rs = response_schema(&schema());
        assert_eq!(rs["properties"]["a"]["enum"], serde_json::json!(["x", "y"]));
    }
}
