//! Private Evolution for tabular data with the workload-aware distance.
//!
//! Each iteration: every private record votes for its nearest candidate
//! under [`wdist`](crate::workload::wdist), the vote histogram is released
//! with Gaussian noise at the iteration's scheduled share of ρ, candidates are
//! resampled from the clamped, normalized histogram into an elite set, and the
//! generator produces the next pool from that elite set.
//!
//! The run returns the last elite set rather than the last generator pool,
//! so the released data is always filtered by private votes.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{CandidateGenerator, ElitePool, RandomRequest, VariationRequest};
use crate::privacy::{
    add_gaussian, clamp_normalize, format_real, json_real, noise_for_rho, AccountantLedger, BudgetSchedule,
    PrivacyBudget, SeedTree, HISTOGRAM_SENSITIVITY,
};
use crate::schema::{Dataset, Provenance, Record};
use crate::workload::{column_tv_distances, evaluate, evaluate_records, workload_error, Norm, PredicateMatrix, Workload};

const VOTE_CHUNK: usize = 128;

#[derive(Debug, Clone)]
pub struct PeConfig {
    pub iterations: usize,
    pub n_synth: usize,
    /// Pool size is `ceil(pool_factor · n_synth)`.
    pub pool_factor: f64,
    pub schedule: BudgetSchedule,
    pub budget: PrivacyBudget,
}

impl PeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::ZeroIterations);
        }
        if self.n_synth == 0 {
            return Err(Error::Config("n_synth must be at least 1".into()));
        }
        if !self.pool_factor.is_finite() || self.pool_factor < 1.0 {
            return Err(Error::Config("pool_factor must be >= 1".into()));
        }
        if self.schedule.iterations() != self.iterations {
            return Err(Error::Config(format!(
                "schedule has {} shares for {} iterations",
                self.schedule.iterations(),
                self.iterations
            )));
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        (self.pool_factor * self.n_synth as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteHistogram {
    pub raw: Vec<u64>,
    pub noisy: Vec<f64>,
    pub distribution: Vec<f64>,
}

/// One vote per private record for its nearest candidate (ties to the lowest index).
pub fn vote(s_priv: &Dataset, pool: &PredicateMatrix, workload: &Workload) -> Result<VoteHistogram> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if s_priv.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let partials: Vec<Vec<u64>> = s_priv
        .rows()
        .par_chunks(VOTE_CHUNK)
        .map(|chunk| {
            let mut local = vec![0u64; pool.len()];
            for r in chunk {
                let x = workload.predicate_vector(r);
                local[pool.nearest(&x).expect("non-empty pool")] += 1;
            }
            local
        })
        .collect();
    let mut raw = vec![0u64; pool.len()];
    for p in partials {
        raw.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    Ok(VoteHistogram { raw, noisy: Vec::new(), distribution: Vec::new() })
}

/// Charges `rho` under `label`, then adds Gaussian noise calibrated to the
/// histogram's sensitivity and fills the sampling distribution.
pub fn privatize_votes(
    hist: &mut VoteHistogram,
    rho: f64,
    label: &str,
    ledger: &mut AccountantLedger,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let spec = noise_for_rho(rho, HISTOGRAM_SENSITIVITY)?;
    ledger.charge(label, rho)?;
    let raw: Vec<f64> = hist.raw.iter().map(|&c| c as f64).collect();
    hist.noisy = add_gaussian(&raw, &spec, rng);
    hist.distribution = clamp_normalize(&hist.noisy);
    Ok(())
}

/// `n` i.i.d. draws from the histogram's distribution over the pool.
pub fn resample_elite(hist: &VoteHistogram, pool: &[Record], n: usize, rng: &mut dyn RngCore) -> Result<Vec<Record>> {
    if hist.distribution.len() != pool.len() {
        return Err(Error::LengthMismatch { left: hist.distribution.len(), right: pool.len() });
    }
    let index = WeightedIndex::new(&hist.distribution).map_err(|_| Error::DegenerateFit)?;
    Ok((0..n).map(|_| pool[index.sample(rng)].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// L1 workload error of the elite set against the private data.
    pub workload_error: f64,
    pub column_tv: Vec<f64>,
    #[serde(serialize_with = "ser_real")]
    pub rho_spent: f64,
    pub charges: usize,
    pub pool_size: usize,
    pub elite_size: usize,
}

fn ser_real<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    json_real(*v).serialize(s)
}

/// Per-iteration diagnostics of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeTrace {
    pub columns: Vec<String>,
    pub entries: Vec<TraceEntry>,
}

impl PeTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let tv: Vec<String> = self.columns.iter().map(|c| format!("tv_{c}")).collect();
        writeln!(out, "iteration,workload_error,{},rho_spent", tv.join(","))?;
        for e in &self.entries {
            let tvs: Vec<String> = e.column_tv.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{},{},{},{}", e.iteration, e.workload_error, tvs.join(","), format_real(e.rho_spent))?;
        }
        Ok(())
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(csv_path, e))?;
        let json_path = json_path.as_ref();
        std::fs::write(json_path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(json_path, e))
    }
}

/// Result of [`run_pe`].
#[derive(Debug, Clone)]
pub struct PeOutput {
    pub synthetic: Dataset,
    pub trace: PeTrace,
    pub generator_rejects: usize,
}

/// Runs Private Evolution end to end.
pub fn run_pe(
    s_priv: &Dataset,
    workload: &Workload,
    config: &PeConfig,
    generator: &mut dyn CandidateGenerator,
    ledger: &mut AccountantLedger,
    seeds: &SeedTree,
) -> Result<PeOutput> {
    config.validate()?;
    if s_priv.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let schema: Arc<_> = s_priv.schema_arc().clone();
    let pool_size = config.pool_size();
    let private_answers = evaluate(workload, s_priv)?;

    let mut rng = seeds.stream("pe/random_api");
    let batch = generator.random_api(&RandomRequest::new(schema.clone(), pool_size), &mut rng)?;
    let mut rejects = batch.rejected_count;
    let mut pool = batch.require(pool_size)?.records.into_rows();
    pool.truncate(pool_size);

    let mut entries = Vec::with_capacity(config.iterations);
    let mut elite = Vec::new();
    for t in 1..=config.iterations {
        let matrix = PredicateMatrix::build(workload, &pool);
        let mut hist = vote(s_priv, &matrix, workload)?;
        let rho_t = if config.budget.is_infinite() {
            f64::INFINITY
        } else {
            config.schedule.shares[t - 1] * config.budget.rho
        };
        privatize_votes(&mut hist, rho_t, &format!("pe-iter-{t}"), ledger, &mut seeds.stream(&format!("pe/noise/{t}")))?;
        elite = resample_elite(&hist, &pool, config.n_synth, &mut seeds.stream(&format!("pe/resample/{t}")))?;

        let elite_ds = Dataset::new(schema.clone(), elite.clone(), Provenance::Synthetic)?;
        let answers = evaluate_records(workload, &elite)?;
        entries.push(TraceEntry {
            iteration: t,
            workload_error: workload_error(&private_answers, &answers, Norm::L1)?,
            column_tv: column_tv_distances(s_priv, &elite_ds)?,
            rho_spent: ledger.total_rho(),
            charges: ledger.charges().len(),
            pool_size: pool.len(),
            elite_size: elite.len(),
        });

        if t < config.iterations {
            let req = VariationRequest::new(ElitePool::new(elite_ds)?, pool_size);
            let batch = generator.variation_api(&req, &mut seeds.stream(&format!("pe/variation/{t}")))?;
            rejects += batch.rejected_count;
            pool = batch.require(pool_size)?.records.into_rows();
            pool.truncate(pool_size);
        }
    }

    Ok(PeOutput {
        synthetic: Dataset::new(schema.clone(), elite, Provenance::Synthetic)?,
        trace: PeTrace { columns: schema.columns.iter().map(|c| c.name.clone()).collect(), entries },
        generator_rejects: rejects,
    })
}
