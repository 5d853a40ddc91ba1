//! Reference methods evaluated with the same accounting as the main ones.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::cache_load;
use crate::privacy::{add_gaussian, clamp_normalize, noise_for_rho, AccountantLedger, SeedTree, HISTOGRAM_SENSITIVITY};
use crate::publicfit::measure_noisy;
use crate::schema::{load_dataset, Cell, ClampPolicy, ColumnSpec, Dataset, Provenance, Record, TableSchema};
use crate::workload::{column_histograms, evaluate, workload_error, AnswerVector, Norm, Workload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    DpWorkload,
    Independent,
    UniformPublic { n: usize },
    InDistributionPublic { path: PathBuf },
    GeneratorNoDp,
}

impl BaselineKind {
    pub fn id(&self) -> &'static str {
        match self {
            BaselineKind::DpWorkload => "dp-workload",
            BaselineKind::Independent => "independent",
            BaselineKind::UniformPublic { .. } => "uniform-public",
            BaselineKind::InDistributionPublic { .. } => "in-distribution-public",
            BaselineKind::GeneratorNoDp => "generator-no-dp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineKind::UniformPublic { n: 0 } => Err(Error::Config("uniform_public needs n >= 1".into())),
            BaselineKind::InDistributionPublic { path } if path.as_os_str().is_empty() => {
                Err(Error::Config("in_distribution_public needs a path".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Answers the workload directly with one Gaussian release; no dataset.
pub fn dp_workload(
    s_priv: &Dataset,
    workload: &Workload,
    rho: f64,
    ledger: &mut AccountantLedger,
    rng: &mut dyn RngCore,
) -> Result<AnswerVector> {
    let noisy = measure_noisy(s_priv, workload, rho, "dp-workload", ledger, rng)?;
    Ok(AnswerVector { values: noisy.values, n: s_priv.len() })
}

#[derive(Debug, Clone)]
pub struct IndependentOutput {
    pub synthetic: Dataset,
    /// Per-column sampling distributions (noisy, clamped and normalized).
    pub marginals: Vec<Vec<f64>>,
}

/// Noisy 1-way marginals (ρ split evenly over columns) and sampling from
/// their product. Numerical cells are uniform within the drawn bin.
pub fn independent_baseline(
    s_priv: &Dataset,
    n_synth: usize,
    rho: f64,
    ledger: &mut AccountantLedger,
    seeds: &SeedTree,
) -> Result<IndependentOutput> {
    let schema = s_priv.schema_arc().clone();
    let exact = column_histograms(&schema, s_priv.rows())?;
    let per_column = if rho.is_infinite() { rho } else { rho / schema.len() as f64 };
    let spec = noise_for_rho(per_column, HISTOGRAM_SENSITIVITY / s_priv.len() as f64)?;
    let mut noise_rng = seeds.stream("independent/noise");
    let mut marginals = Vec::with_capacity(schema.len());
    for (col, hist) in schema.columns.iter().zip(&exact) {
        ledger.charge(format!("independent-{}", col.name), per_column)?;
        marginals.push(clamp_normalize(&add_gaussian(hist, &spec, &mut noise_rng)));
    }

    let samplers = marginals
        .iter()
        .map(|m| WeightedIndex::new(m).map_err(|_| Error::DegenerateFit))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeds.stream("independent/sample");
    let rows = (0..n_synth)
        .map(|_| {
            let values = schema
                .columns
                .iter()
                .zip(&samplers)
                .map(|(col, s)| cell_in_bin(col, s.sample(&mut rng), &mut rng))
                .collect();
            Record::new(values)
        })
        .collect();
    Ok(IndependentOutput { synthetic: Dataset::new(schema, rows, Provenance::Synthetic)?, marginals })
}

/// A cell falling in `bin`: the category itself, or a uniform value in the bin.
pub fn cell_in_bin<R: Rng + ?Sized>(col: &ColumnSpec, bin: usize, rng: &mut R) -> Cell {
    match col.bin_bounds(bin) {
        Some((lo, hi)) => Cell::Num(rng.random_range(lo..hi)),
        None => Cell::Cat(bin as u32),
    }
}

/// `n` records uniform over the binned domain.
pub fn uniform_public<R: Rng + ?Sized>(schema: Arc<TableSchema>, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("uniform_public needs n >= 1".into()));
    }
    let rows = (0..n)
        .map(|_| {
            Record::new(
                schema
                    .columns
                    .iter()
                    .map(|col| {
                        let bin = rng.random_range(0..col.size());
                        cell_in_bin(col, bin, rng)
                    })
                    .collect(),
            )
        })
        .collect();
    Dataset::new(schema, rows, Provenance::Public)
}

/// Loads a user-supplied public split drawn from the private distribution.
pub fn in_distribution_public(path: impl AsRef<Path>, schema: Arc<TableSchema>) -> Result<Dataset> {
    load_dataset(path, schema, ClampPolicy::Clamp, Provenance::Public)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkloadErrors {
    pub l1: f64,
    pub linf: f64,
}

/// Workload error of `candidate` against `s_priv` in both norms.
pub fn errors_against(workload: &Workload, s_priv: &Dataset, candidate: &AnswerVector) -> Result<WorkloadErrors> {
    let truth = evaluate(workload, s_priv)?;
    Ok(WorkloadErrors {
        l1: workload_error(&truth, candidate, Norm::L1)?,
        linf: workload_error(&truth, candidate, Norm::Linf)?,
    })
}

/// Error of raw cached generator output, with no privacy mechanism at all.
pub fn generator_no_dp(cache: impl AsRef<Path>, workload: &Workload, s_priv: &Dataset) -> Result<WorkloadErrors> {
    let batch = cache_load(cache, s_priv.schema_arc().clone())?;
    errors_against(workload, s_priv, &evaluate(workload, &batch.records)?)
}
