//! JSONL cache of generated records.
//!
//! Line 1 is a header object (format, schema hash, generation parameters,
//! source, timestamp, counts); every following line is one record keyed by
//! column name. The same batch always serializes to the same bytes.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rand::RngCore;

use super::{
    record_from_json, record_to_json, CandidateGenerator, GenerationParams, GeneratorBatch, GeneratorSource,
    RandomRequest, VariationRequest,
};
use crate::error::{Error, Result};
use crate::schema::{Dataset, Provenance, TableSchema};

pub const CACHE_FORMAT: &str = "tabsynth-cache/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheHeader {
    pub format: String,
    pub schema_hash: String,
    pub generation_params: GenerationParams,
    pub source: String,
    /// Seconds since the Unix epoch at generation time.
    pub timestamp: u64,
    pub count: usize,
    pub rejected_count: usize,
}

/// Atomically writes the batch (temp file then rename).
pub fn cache_store(batch: &GeneratorBatch, path: impl AsRef<Path>, timestamp: u64) -> Result<()> {
    let path = path.as_ref();
    let schema = batch.records.schema();
    let header = CacheHeader {
        format: CACHE_FORMAT.into(),
        schema_hash: schema.hash(),
        generation_params: batch.params,
        source: batch.source.label(),
        timestamp,
        count: batch.records.len(),
        rejected_count: batch.rejected_count,
    };
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = |line: String| writeln!(out, "{line}").map_err(|e| Error::io(&tmp, e));
        write(serde_json::to_string(&header)?)?;
        for r in batch.records.rows() {
            write(record_to_json(schema, r).to_string())?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_cache_header(path: impl AsRef<Path>) -> Result<CacheHeader> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&first).map_err(|e| Error::CorruptCache(format!("bad header: {e}")))
}

/// Loads a cache written for `schema`; the schema hash must match.
pub fn cache_load(path: impl AsRef<Path>, schema: Arc<TableSchema>) -> Result<GeneratorBatch> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::CorruptCache("empty file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: CacheHeader =
        serde_json::from_str(&first).map_err(|e| Error::CorruptCache(format!("bad header: {e}")))?;
    if header.format != CACHE_FORMAT {
        return Err(Error::CorruptCache(format!("unknown format `{}`", header.format)));
    }
    let expected = schema.hash();
    if header.schema_hash != expected {
        return Err(Error::SchemaHashMismatch { expected, found: header.schema_hash });
    }
    let mut rows = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::CorruptCache(format!("line {}: {e}", i + 2)))?;
        let record = record_from_json(&schema, &value).map_err(|e| Error::CorruptCache(format!("line {}: {e}", i + 2)))?;
        rows.push(record);
    }
    if rows.len() != header.count {
        return Err(Error::CorruptCache(format!("header says {} records, found {}", header.count, rows.len())));
    }
    let n = rows.len();
    Ok(GeneratorBatch {
        records: Dataset::new(schema, rows, Provenance::Generated)?,
        rejected_count: header.rejected_count,
        source: GeneratorSource::Cache(path.to_path_buf()),
        params: header.generation_params,
        partial: false,
        requested: n,
    })
}

/// Serves a stored batch as random-API output. It cannot vary records, so it
/// only backs one-shot pipelines and the no-DP baseline.
#[derive(Debug, Clone)]
pub struct CachedGenerator {
    batch: GeneratorBatch,
}

impl CachedGenerator {
    pub fn new(batch: GeneratorBatch) -> Self {
        CachedGenerator { batch }
    }

    pub fn load(path: impl AsRef<Path>, schema: Arc<TableSchema>) -> Result<Self> {
        Ok(CachedGenerator { batch: cache_load(path, schema)? })
    }
}

impl CandidateGenerator for CachedGenerator {
    /// The first `n` cached records; fewer if the cache is smaller.
    fn random_api(&mut self, req: &RandomRequest, _rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        let rows: Vec<_> = self.batch.records.rows().iter().take(req.n).cloned().collect();
        let partial = rows.len() < req.n;
        Ok(GeneratorBatch {
            records: Dataset::new(self.batch.records.schema_arc().clone(), rows, Provenance::Generated)?,
            rejected_count: 0,
            source: self.batch.source.clone(),
            params: self.batch.params,
            partial,
            requested: req.n,
        })
    }

    fn variation_api(&mut self, _req: &VariationRequest, _rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        Err(Error::InvalidGeneratorConfig("a cache cannot serve variation requests".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{CandidateGenerator, MockGenerator, MockPriorConfig, RandomRequest};
    use crate::privacy::SeedTree;
    use crate::schema::ColumnSpec;

    fn schema() -> Arc<TableSchema> {
        Arc::new(
            TableSchema::new(
                "t",
                vec![ColumnSpec::categorical("a", &["x", "y"]), ColumnSpec::numerical("v", 0.0, 1.0, 2)],
            )
            .unwrap(),
        )
    }

    fn batch(n: usize) -> GeneratorBatch {
        let mut g = MockGenerator::new(schema(), &MockPriorConfig::default()).unwrap();
        g.random_api(&RandomRequest::new(schema(), n), &mut SeedTree::new(1).stream("g")).unwrap()
    }

    #[test]
    fn store_load_round_trip_and_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let b = batch(50);
        cache_store(&b, &path, 1_700_000_000).unwrap();
        let first = cache_load(&path, schema()).unwrap();
        let second = cache_load(&path, schema()).unwrap();
        assert_eq!(first.records.rows(), b.records.rows());
        assert_eq!(first.records, second.records);
        let bytes = std::fs::read(&path).unwrap();
        cache_store(&first, &path, 1_700_000_000).unwrap();
        // source label changes to cache:..., so compare record lines only
        let again = std::fs::read_to_string(&path).unwrap();
        let orig = String::from_utf8(bytes).unwrap();
        assert_eq!(orig.lines().skip(1).collect::<Vec<_>>(), again.lines().skip(1).collect::<Vec<_>>());
        assert_eq!(read_cache_header(&path).unwrap().count, 50);
    }

    #[test]
    fn schema_hash_mismatch_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        cache_store(&batch(3), &path, 0).unwrap();
        let other = Arc::new(
            TableSchema::new(
                "t",
                vec![ColumnSpec::categorical("a", &["x", "y", "z"]), ColumnSpec::numerical("v", 0.0, 1.0, 2)],
            )
            .unwrap(),
        );
        assert!(matches!(cache_load(&path, other), Err(Error::SchemaHashMismatch { .. })));
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"a\":\"nope\",\"v\":0}\n");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(cache_load(&path, schema()), Err(Error::CorruptCache(_))));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(cache_load(&path, schema()), Err(Error::CorruptCache(_))));
    }

    #[test]
    fn cached_generator_serves_prefix() {
        let b = batch(10);
        let mut g = CachedGenerator::new(b.clone());
        let mut rng = SeedTree::new(0).stream("c");
        let out = g.random_api(&RandomRequest::new(schema(), 4), &mut rng).unwrap();
        assert_eq!(out.records.rows(), &b.records.rows()[..4]);
        let more = g.random_api(&RandomRequest::new(schema(), 20), &mut rng).unwrap();
        assert!(more.partial && more.len() == 10);
        assert!(more.require(20).is_err());
    }
}
