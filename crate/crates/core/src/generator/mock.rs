//! Seeded stand-in for a foundation model with a configurable prior.
//!
//! Variation copies a uniformly chosen elite record and resamples each field
//! from the prior with probability `variation_resample_prob`. This is a
//! tunable similarity knob, not a model of any particular LLM's behaviour.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CandidateGenerator, GenerationParams, GeneratorBatch, GeneratorSource, RandomRequest, VariationRequest};
use crate::error::{Error, Result};
use crate::schema::{bin_index, Cell, ColumnKind, ColumnSpec, Dataset, Provenance, Record, TableSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ColumnPrior {
    /// Distribution over domain values (categorical) or bins (numerical).
    Categorical { probs: Vec<f64> },
    Uniform,
    TruncatedNormal { mean: f64, std: f64 },
}

/// Child column distribution conditioned on the parent's bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependency {
    pub parent: String,
    pub child: String,
    /// One row per parent bin; each row is a distribution over child bins.
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockPriorConfig {
    /// Priors by column name; missing columns are uniform.
    #[serde(default)]
    pub columns: HashMap<String, ColumnPrior>,
    #[serde(default)]
    pub dependencies: Vec<Dependency>,
    #[serde(default = "default_resample_prob")]
    pub variation_resample_prob: f64,
}

fn default_resample_prob() -> f64 {
    0.5
}

impl Default for MockPriorConfig {
    fn default() -> Self {
        MockPriorConfig { columns: HashMap::new(), dependencies: Vec::new(), variation_resample_prob: 0.5 }
    }
}

impl MockPriorConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidGeneratorConfig(e.to_string()))
    }
}

enum Sampler {
    Weighted(Vec<f64>),
    Uniform,
    TruncNormal(Normal<f64>),
}

struct Compiled {
    schema: Arc<TableSchema>,
    /// Sampling order (parents before children).
    order: Vec<usize>,
    marginal: Vec<Sampler>,
    /// For a child column: (parent column, cumulative rows per parent bin).
    conditional: Vec<Option<(usize, Vec<Vec<f64>>)>>,
}

fn cumulative(probs: &[f64], what: &str) -> Result<Vec<f64>> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidGeneratorConfig(format!("{what}: probabilities must be non-negative and sum to 1")));
    }
    let mut acc = 0.0;
    Ok(probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect())
}

fn draw_weighted(cum: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

fn cell_in_bin(col: &ColumnSpec, bin: usize, rng: &mut dyn RngCore) -> Cell {
    match col.kind {
        ColumnKind::Categorical { .. } => Cell::Cat(bin as u32),
        ColumnKind::Numerical { .. } => {
            let (lo, hi) = col.bin_bounds(bin).expect("numerical");
            let v = lo + (hi - lo) * rng.random::<f64>();
            Cell::Num(v.clamp(lo, hi))
        }
    }
}

impl Compiled {
    fn new(schema: Arc<TableSchema>, config: &MockPriorConfig) -> Result<Self> {
        for name in config.columns.keys() {
            if schema.column_index(name).is_none() {
                return Err(Error::InvalidGeneratorConfig(format!("prior for unknown column `{name}`")));
            }
        }
        if !(0.0..=1.0).contains(&config.variation_resample_prob) {
            return Err(Error::InvalidGeneratorConfig("variation_resample_prob must be in [0, 1]".into()));
        }
        let mut marginal = Vec::with_capacity(schema.len());
        for col in &schema.columns {
            let sampler = match config.columns.get(&col.name) {
                None | Some(ColumnPrior::Uniform) => Sampler::Uniform,
                Some(ColumnPrior::Categorical { probs }) => {
                    if probs.len() != col.size() {
                        return Err(Error::InvalidGeneratorConfig(format!(
                            "`{}` prior has {} entries, expected {}",
                            col.name,
                            probs.len(),
                            col.size()
                        )));
                    }
                    Sampler::Weighted(cumulative(probs, &col.name)?)
                }
                Some(ColumnPrior::TruncatedNormal { mean, std }) => {
                    if col.is_categorical() {
                        return Err(Error::InvalidGeneratorConfig(format!("`{}` is categorical", col.name)));
                    }
                    let n = Normal::new(*mean, *std)
                        .map_err(|e| Error::InvalidGeneratorConfig(format!("`{}`: {e}", col.name)))?;
                    Sampler::TruncNormal(n)
                }
            };
            marginal.push(sampler);
        }

        let mut conditional: Vec<Option<(usize, Vec<Vec<f64>>)>> = vec![None; schema.len()];
        for dep in &config.dependencies {
            let p = schema
                .column_index(&dep.parent)
                .ok_or_else(|| Error::InvalidGeneratorConfig(format!("unknown parent `{}`", dep.parent)))?;
            let c = schema
                .column_index(&dep.child)
                .ok_or_else(|| Error::InvalidGeneratorConfig(format!("unknown child `{}`", dep.child)))?;
            if conditional[c].is_some() {
                return Err(Error::InvalidGeneratorConfig(format!("`{}` has more than one parent", dep.child)));
            }
            if dep.table.len() != schema.columns[p].size() {
                return Err(Error::InvalidGeneratorConfig(format!("table for `{}` needs one row per parent bin", dep.child)));
            }
            let rows = dep
                .table
                .iter()
                .map(|row| {
                    if row.len() != schema.columns[c].size() {
                        return Err(Error::InvalidGeneratorConfig(format!("table row width for `{}`", dep.child)));
                    }
                    cumulative(row, &dep.child)
                })
                .collect::<Result<Vec<_>>>()?;
            conditional[c] = Some((p, rows));
        }

        // topological order; a parent chain longer than the column count is a cycle
        let mut order = Vec::with_capacity(schema.len());
        let mut placed = vec![false; schema.len()];
        while order.len() < schema.len() {
            let before = order.len();
            for c in 0..schema.len() {
                if placed[c] {
                    continue;
                }
                let ready = match &conditional[c] {
                    None => true,
                    Some((p, _)) => placed[*p],
                };
                if ready {
                    placed[c] = true;
                    order.push(c);
                }
            }
            if order.len() == before {
                return Err(Error::InvalidGeneratorConfig("dependency graph has a cycle".into()));
            }
        }
        Ok(Compiled { schema, order, marginal, conditional })
    }

    /// Draws column `c` given the (already sampled) parent values in `values`.
    fn draw(&self, c: usize, values: &[Cell], rng: &mut dyn RngCore) -> Cell {
        let col = &self.schema.columns[c];
        if let Some((p, rows)) = &self.conditional[c] {
            let pb = bin_index(&self.schema.columns[*p], &values[*p]);
            let bin = draw_weighted(&rows[pb], rng);
            return cell_in_bin(col, bin, rng);
        }
        match (&self.marginal[c], &col.kind) {
            (Sampler::Weighted(cum), _) => cell_in_bin(col, draw_weighted(cum, rng), rng),
            (Sampler::Uniform, ColumnKind::Categorical { domain }) => Cell::Cat(rng.random_range(0..domain.len()) as u32),
            (Sampler::Uniform, ColumnKind::Numerical { min, max, .. }) => {
                Cell::Num((min + (max - min) * rng.random::<f64>()).clamp(*min, *max))
            }
            (Sampler::TruncNormal(n), ColumnKind::Numerical { min, max, .. }) => {
                for _ in 0..1000 {
                    let v = n.sample(rng);
                    if v >= *min && v <= *max {
                        return Cell::Num(v);
                    }
                }
                Cell::Num(n.mean().clamp(*min, *max))
            }
            (Sampler::TruncNormal(_), ColumnKind::Categorical { .. }) => unreachable!("rejected at compile"),
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Record {
        let mut values = vec![Cell::Cat(0); self.schema.len()];
        for &c in &self.order {
            values[c] = self.draw(c, &values, rng);
        }
        Record::new(values)
    }
}

/// Deterministic mock generator driven by a [`MockPriorConfig`].
pub struct MockGenerator {
    compiled: Compiled,
    resample_prob: f64,
}

impl MockGenerator {
    pub fn new(schema: Arc<TableSchema>, config: &MockPriorConfig) -> Result<Self> {
        Ok(MockGenerator { compiled: Compiled::new(schema, config)?, resample_prob: config.variation_resample_prob })
    }

    fn batch(&self, records: Vec<Record>, params: GenerationParams, requested: usize) -> Result<GeneratorBatch> {
        Ok(GeneratorBatch {
            records: Dataset::new(self.compiled.schema.clone(), records, Provenance::Generated)?,
            rejected_count: 0,
            source: GeneratorSource::MockPrior,
            params,
            partial: false,
            requested,
        })
    }

    fn check_schema(&self, schema: &TableSchema) -> Result<()> {
        if schema != self.compiled.schema.as_ref() {
            return Err(Error::InvalidGeneratorConfig("request schema differs from the generator's schema".into()));
        }
        Ok(())
    }
}

impl CandidateGenerator for MockGenerator {
    fn random_api(&mut self, req: &RandomRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        self.check_schema(&req.schema)?;
        let records = (0..req.n).map(|_| self.compiled.sample(rng)).collect();
        self.batch(records, req.params, req.n)
    }

    fn variation_api(&mut self, req: &VariationRequest, rng: &mut dyn RngCore) -> Result<GeneratorBatch> {
        self.check_schema(req.elite.schema())?;
        let elite = req.elite.records();
        let mut records = Vec::with_capacity(req.n);
        for _ in 0..req.n {
            let mut values = elite[rng.random_range(0..elite.len())].values.clone();
            for &c in &self.compiled.order {
                if self.resample_prob > 0.0 && rng.random::<f64>() < self.resample_prob {
                    values[c] = self.compiled.draw(c, &values, rng);
                }
            }
            records.push(Record::new(values));
        }
        self.batch(records, req.params, req.n)
    }
}
