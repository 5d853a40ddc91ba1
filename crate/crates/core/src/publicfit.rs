//! One-shot pipelines that treat generator output as public data.
//!
//! The shared subroutine is [`fit_weights`]: non-negative least squares over
//! weights on public records so that the weighted predicate sum matches noisy
//! private answers. The mechanisms on top differ in which statistics they
//! measure privately:
//!
//! * [`gemini_inference`]: the whole workload, once.
//! * [`mwem_refine`]: multiplicative weights over the public support with
//!   exponential-mechanism query selection.
//! * [`mst_lite`]: 1-way marginals plus a noisy maximum spanning tree of 2-way
//!   marginals (selection simplified; generation replaced by the fit).
//! * [`jam_lite`]: per-marginal choice between public and private answers,
//!   made from a noisy discrepancy (a reconstruction, not the reference JAM).
//!
//! After a mechanism's last ledger charge only noisy answers and public
//! records are read.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::privacy::{add_gaussian, json_real, noise_for_rho, AccountantLedger, NoiseSpec, SeedTree};
use crate::schema::{Dataset, Provenance};
use crate::workload::{evaluate, marginal_workload_from_subsets, PredicateMatrix, Workload};

/// Noisy fractional answers to a workload.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyAnswers {
    pub values: Vec<f64>,
    pub workload_hash: String,
    pub noise: NoiseSpec,
    pub label: String,
}

/// Measures the whole workload with one Gaussian release costing `rho`.
pub fn measure_noisy(
    s_priv: &Dataset,
    workload: &Workload,
    rho: f64,
    label: &str,
    ledger: &mut AccountantLedger,
    rng: &mut dyn RngCore,
) -> Result<NoisyAnswers> {
    if s_priv.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sensitivity = workload.count_l2_sensitivity() / s_priv.len() as f64;
    let noise = noise_for_rho(rho, sensitivity)?;
    ledger.charge(label, rho)?;
    let exact = evaluate(workload, s_priv)?;
    Ok(NoisyAnswers {
        values: add_gaussian(&exact.values, &noise, rng),
        workload_hash: workload.hash(),
        noise,
        label: label.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when the projected-gradient norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tolerance: 1e-8, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// `‖A·w − ỹ‖₂` at the unnormalized solution.
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
}

/// Distribution over public records.
#[derive(Debug, Clone)]
pub struct PublicWeights {
    /// Normalized weights (sum 1).
    pub weights: Vec<f64>,
    /// Unnormalized solver output.
    pub raw: Vec<f64>,
    pub support: Arc<Dataset>,
    pub diagnostics: FitDiagnostics,
}

impl PublicWeights {
    /// `Σ_x w_x · Q(x)` under the normalized weights.
    pub fn answers(&self, workload: &Workload) -> Vec<f64> {
        PredicateMatrix::build(workload, self.support.rows()).weighted_sum(&self.weights, workload.len())
    }
}

fn objective(matrix: &PredicateMatrix, w: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let mut r = matrix.weighted_sum(w, y.len());
    r.iter_mut().zip(y).for_each(|(a, b)| *a -= b);
    (r.iter().map(|v| v * v).sum(), r)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient for `min_{w ≥ 0} ‖A·w − y‖₂²`, where row `x` of
/// `matrix` is column `x` of `A`.
///
/// Steps start from a Barzilai-Borwein estimate and are halved until the
/// sufficient-decrease condition holds, so the objective never increases.
pub fn nnls_projected_gradient(matrix: &PredicateMatrix, y: &[f64], options: &FitOptions) -> (Vec<f64>, FitDiagnostics) {
    let m = matrix.len();
    let mut w = vec![1.0 / m as f64; m];
    let (mut f, mut r) = objective(matrix, &w, y);
    let mut g: Vec<f64> = matrix.dot_each(&r).into_iter().map(|v| 2.0 * v).collect();
    // 1/L with L bounded by 2·‖A‖_F²
    let frob: f64 = matrix.rows().iter().flat_map(|row| row.iter().map(|e| e.1 * e.1)).sum();
    let mut step = 1.0 / (2.0 * frob.max(1e-300));
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        let pg: f64 = w
            .iter()
            .zip(&g)
            .map(|(wi, gi)| {
                let d = (wi - gi).max(0.0) - wi;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        if pg <= options.tolerance || f == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| (wi - step * gi).max(0.0)).collect();
            let delta: Vec<f64> = candidate.iter().zip(&w).map(|(c, wi)| c - wi).collect();
            let (fc, rc) = objective(matrix, &candidate, y);
            let bound = f + dot(&g, &delta) + dot(&delta, &delta) / (2.0 * step);
            if fc <= bound && fc <= f {
                accepted = Some((candidate, delta, fc, rc));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, delta, fc, rc)) = accepted else {
            // no decrease possible at machine precision
            converged = true;
            break;
        };
        assert!(fc <= f, "objective increased: {f} -> {fc}");
        let g_new: Vec<f64> = matrix.dot_each(&rc).into_iter().map(|v| 2.0 * v).collect();
        let dg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&delta, &dg);
        step = if sy > 0.0 { (dot(&delta, &delta) / sy).clamp(1e-12, 1e12) } else { step * 2.0 };
        w = candidate;
        f = fc;
        r = rc;
        g = g_new;
    }

    let degenerate = w.iter().all(|&v| v == 0.0);
    let residual = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (w, FitDiagnostics { residual, objective: f, iterations, converged, degenerate })
}

/// Fits non-negative weights over `public` to the answers `y`.
pub fn fit_weights(public: &Dataset, workload: &Workload, y: &[f64], options: &FitOptions) -> Result<PublicWeights> {
    if public.is_empty() {
        return Err(Error::EmptyPublicSet);
    }
    if y.len() != workload.len() {
        return Err(Error::LengthMismatch { left: y.len(), right: workload.len() });
    }
    let matrix = PredicateMatrix::build(workload, public.rows());
    let (raw, diagnostics) = nnls_projected_gradient(&matrix, y, options);
    if diagnostics.degenerate {
        return Err(Error::DegenerateFit);
    }
    let total: f64 = raw.iter().sum();
    Ok(PublicWeights {
        weights: raw.iter().map(|v| v / total).collect(),
        raw,
        support: Arc::new(public.clone()),
        diagnostics,
    })
}

/// `n` i.i.d. draws from the weight distribution over the public records.
pub fn sample_from_weights(weights: &PublicWeights, n: usize, rng: &mut dyn RngCore) -> Result<Dataset> {
    let schema = weights.support.schema_arc().clone();
    if n == 0 {
        return Dataset::new(schema, vec![], Provenance::Synthetic);
    }
    let index = WeightedIndex::new(&weights.weights).map_err(|_| Error::DegenerateFit)?;
    let rows = weights.support.rows();
    let out = (0..n).map(|_| rows[index.sample(rng)].clone()).collect();
    Dataset::new(schema, out, Provenance::Synthetic)
}

/// Released data plus the fitted distribution it was sampled from.
#[derive(Debug, Clone)]
pub struct MechanismOutput {
    pub synthetic: Dataset,
    pub weights: PublicWeights,
}

/// Measures the full workload, fits weights over the public records, samples.
#[allow(clippy::too_many_arguments)]
pub fn gemini_inference(
    public: &Dataset,
    workload: &Workload,
    s_priv: &Dataset,
    n_synth: usize,
    rho: f64,
    ledger: &mut AccountantLedger,
    seeds: &SeedTree,
    options: &FitOptions,
) -> Result<MechanismOutput> {
    if public.is_empty() {
        return Err(Error::EmptyPublicSet);
    }
    let noisy = measure_noisy(s_priv, workload, rho, "gemini-inference", ledger, &mut seeds.stream("gi/measure"))?;
    let weights = fit_weights(public, workload, &noisy.values, options)?;
    let synthetic = sample_from_weights(&weights, n_synth, &mut seeds.stream("gi/sample"))?;
    Ok(MechanismOutput { synthetic, weights })
}

/// `fraction · rho`, keeping an infinite budget infinite.
fn share(rho: f64, fraction: f64) -> f64 {
    if rho.is_infinite() {
        f64::INFINITY
    } else {
        fraction * rho
    }
}

fn gumbel(rng: &mut dyn RngCore) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Exponential mechanism over `scores` with score sensitivity `sensitivity`,
/// costing `rho` (an ε-DP selection is ε²/8-zCDP). Infinite `rho` is argmax
/// with ties to the lowest index.
pub fn exponential_mechanism(scores: &[f64], sensitivity: f64, rho: f64, rng: &mut dyn RngCore) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    if rho.is_infinite() {
        for (i, &s) in scores.iter().enumerate() {
            if s > best.0 {
                best = (s, i);
            }
        }
        return best.1;
    }
    let epsilon = (8.0 * rho).sqrt();
    for (i, &s) in scores.iter().enumerate() {
        let v = epsilon * s / (2.0 * sensitivity) + gumbel(rng);
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// Simplified MWEM over the public support, starting from uniform weights.
///
/// Each round spends half its ρ on exponential-mechanism selection of the
/// worst-approximated query and half on measuring it, then applies
/// `w_x ∝ w_x · exp(ψ_q(x)·(ỹ_q − q(w))/2)`.
#[allow(clippy::too_many_arguments)]
pub fn mwem_refine(
    public: &Dataset,
    workload: &Workload,
    s_priv: &Dataset,
    rounds: usize,
    rho: f64,
    ledger: &mut AccountantLedger,
    seeds: &SeedTree,
) -> Result<PublicWeights> {
    if rounds == 0 {
        return Err(Error::ZeroIterations);
    }
    if public.is_empty() {
        return Err(Error::EmptyPublicSet);
    }
    let n = s_priv.len() as f64;
    let truth = evaluate(workload, s_priv)?.values;
    let matrix = PredicateMatrix::build(workload, public.rows());
    let mut w = vec![1.0 / matrix.len() as f64; matrix.len()];
    let half = rho / (2.0 * rounds as f64);
    let mut rng = seeds.stream("mwem");

    for round in 1..=rounds {
        let current = matrix.weighted_sum(&w, workload.len());
        let scores: Vec<f64> = current.iter().zip(&truth).map(|(a, b)| (a - b).abs()).collect();
        let max_bound = workload.queries().iter().map(|q| q.bound).fold(0.0, f64::max);
        ledger.charge(format!("mwem-select-{round}"), half)?;
        let q = exponential_mechanism(&scores, max_bound / n, half, &mut rng);

        let spec = noise_for_rho(half, workload.queries()[q].bound / n)?;
        ledger.charge(format!("mwem-measure-{round}"), half)?;
        let measured = add_gaussian(&[truth[q]], &spec, &mut rng)[0];

        let gap = measured - current[q];
        for (wx, row) in w.iter_mut().zip(matrix.rows()) {
            let psi = row.iter().find(|e| e.0 as usize == q).map_or(0.0, |e| e.1);
            *wx *= (psi * gap / 2.0).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }

    let fitted = matrix.weighted_sum(&w, workload.len());
    let residual = fitted.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(PublicWeights {
        weights: w.clone(),
        raw: w,
        support: Arc::new(public.clone()),
        // residual against exact answers is diagnostic only and never released
        diagnostics: FitDiagnostics { residual, objective: residual * residual, iterations: rounds, converged: true, degenerate: false },
    })
}

/// Budget fractions of [`mst_lite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MstSplit {
    pub select: f64,
    pub one_way: f64,
    pub two_way: f64,
}

impl MstSplit {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.select, self.one_way, self.two_way];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) || parts.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Config(format!("mst split {parts:?} must be positive and sum to at most 1")));
        }
        Ok(())
    }
}

impl Default for MstSplit {
    fn default() -> Self {
        MstSplit { select: 0.1, one_way: 0.45, two_way: 0.45 }
    }
}

#[derive(Debug, Clone)]
pub struct MstOutput {
    pub output: MechanismOutput,
    /// Selected column pairs, in selection order.
    pub tree: Vec<(usize, usize)>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// `‖M_ij − p_i ⊗ p_j‖₁`: how far a pair's joint table is from independence.
pub fn pair_dependence(joint: &[f64], left: &[f64], right: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, pa) in left.iter().enumerate() {
        for (b, pb) in right.iter().enumerate() {
            total += (joint[a * right.len() + b] - pa * pb).abs();
        }
    }
    total
}

/// MST with public-data generation: noisy 1-way marginals, a noisy maximum
/// spanning tree over pair dependence scores, noisy 2-way marginals on the
/// tree edges, then a weight fit over `public`.
#[allow(clippy::too_many_arguments)]
pub fn mst_lite(
    s_priv: &Dataset,
    public: &Dataset,
    n_synth: usize,
    rho: f64,
    split: MstSplit,
    ledger: &mut AccountantLedger,
    seeds: &SeedTree,
    options: &FitOptions,
) -> Result<MstOutput> {
    let schema = s_priv.schema_arc().clone();
    split.validate()?;
    let d = schema.len();
    if d < 2 {
        return Err(Error::Config("mst-lite needs at least 2 columns".into()));
    }
    if public.is_empty() {
        return Err(Error::EmptyPublicSet);
    }
    let n = s_priv.len() as f64;
    let singles: Vec<Vec<usize>> = (0..d).map(|c| vec![c]).collect();
    let one_way = marginal_workload_from_subsets(schema.clone(), singles.clone())?;
    let noisy_one = measure_noisy(s_priv, &one_way, share(rho, split.one_way), "mst-oneway", ledger, &mut seeds.stream("mst/oneway"))?;
    let groups = one_way.marginal_groups();
    let marginals: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| crate::privacy::clamp_normalize(&noisy_one.values[g.clone()]))
        .collect();

    let pairs = crate::workload::combinations(d, 2);
    let pair_workload = marginal_workload_from_subsets(schema.clone(), pairs.clone())?;
    let pair_groups = pair_workload.marginal_groups();
    let mut parent: Vec<usize> = (0..d).collect();
    let mut tree = Vec::with_capacity(d - 1);
    let edge_rho = share(rho, split.select / (d - 1) as f64);
    let mut select_rng = seeds.stream("mst/select");
    // exact pair tables are only used inside the exponential mechanism
    let joint = evaluate(&pair_workload, s_priv)?.values;
    for step in 1..d {
        let candidates: Vec<usize> = (0..pairs.len())
            .filter(|&p| find(&mut parent, pairs[p][0]) != find(&mut parent, pairs[p][1]))
            .collect();
        let chosen = if candidates.len() == 1 {
            candidates[0]
        } else {
            let scores: Vec<f64> = candidates
                .iter()
                .map(|&p| {
                    let (i, j) = (pairs[p][0], pairs[p][1]);
                    pair_dependence(&joint[pair_groups[p].clone()], &marginals[i], &marginals[j])
                })
                .collect();
            ledger.charge(format!("mst-select-{step}"), edge_rho)?;
            candidates[exponential_mechanism(&scores, 2.0 / n, edge_rho, &mut select_rng)]
        };
        let (i, j) = (pairs[chosen][0], pairs[chosen][1]);
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        parent[ri] = rj;
        tree.push((i, j));
    }

    let edges: Vec<Vec<usize>> = tree.iter().map(|&(i, j)| vec![i, j]).collect();
    let two_way = marginal_workload_from_subsets(schema.clone(), edges.clone())?;
    let noisy_two = measure_noisy(s_priv, &two_way, share(rho, split.two_way), "mst-twoway", ledger, &mut seeds.stream("mst/twoway"))?;

    let mut all = singles;
    all.extend(edges);
    let fit_workload = marginal_workload_from_subsets(schema, all)?;
    let mut y = noisy_one.values;
    y.extend(noisy_two.values);
    let weights = fit_weights(public, &fit_workload, &y, options)?;
    let synthetic = sample_from_weights(&weights, n_synth, &mut seeds.stream("mst/sample"))?;
    Ok(MstOutput { output: MechanismOutput { synthetic, weights }, tree })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementSource {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub descriptor: String,
    pub columns: Vec<usize>,
    pub source: MeasurementSource,
    pub d_hat: f64,
    #[serde(serialize_with = "ser_real")]
    pub expected_private_error: f64,
    /// Fraction of the total budget spent measuring this marginal privately.
    pub budget_share: f64,
}

fn ser_real<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    json_real(*v).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementPlan {
    pub entries: Vec<PlanEntry>,
}

impl MeasurementPlan {
    pub fn public_count(&self) -> usize {
        self.entries.iter().filter(|e| e.source == MeasurementSource::Public).count()
    }

    pub fn private_count(&self) -> usize {
        self.entries.len() - self.public_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JamOptions {
    /// Fraction of ρ spent on the noisy discrepancies.
    pub select_fraction: f64,
}

impl JamOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.select_fraction > 0.0 && self.select_fraction < 1.0) {
            return Err(Error::Config(format!("jam select fraction {} must lie in (0, 1)", self.select_fraction)));
        }
        Ok(())
    }
}

impl Default for JamOptions {
    fn default() -> Self {
        JamOptions { select_fraction: 0.1 }
    }
}

/// JAM-lite: per marginal, compare a noisy public/private discrepancy with
/// the expected error of measuring it privately and take the cheaper source.
///
/// `d̂_m = ‖m(priv) − m(public)‖₁ + noise` and
/// `E_priv = σ_m·sqrt(2/π)·cells_m`, where `σ_m` is the per-cell noise if
/// every marginal were measured privately with the remaining budget.
#[allow(clippy::too_many_arguments)]
pub fn jam_lite(
    s_priv: &Dataset,
    public: &Dataset,
    marginals: &Workload,
    n_synth: usize,
    rho: f64,
    jam: JamOptions,
    ledger: &mut AccountantLedger,
    seeds: &SeedTree,
    options: &FitOptions,
) -> Result<(MeasurementPlan, MechanismOutput)> {
    if !marginals.is_marginal() || marginals.block_count() == 0 {
        return Err(Error::Config("jam-lite needs a non-empty marginal set".into()));
    }
    if public.is_empty() {
        return Err(Error::EmptyPublicSet);
    }
    let n = s_priv.len() as f64;
    let groups = marginals.marginal_groups();
    let subsets = marginals.marginal_subsets();
    let count = groups.len() as f64;

    let private = evaluate(marginals, s_priv)?.values;
    let public_answers = evaluate(marginals, public)?.values;
    let discrepancies: Vec<f64> = groups
        .iter()
        .map(|g| g.clone().map(|i| (private[i] - public_answers[i]).abs()).sum())
        .collect();

    jam.validate()?;
    let select_rho = share(rho, jam.select_fraction);
    let measure_rho = share(rho, 1.0 - jam.select_fraction);
    let select_noise = noise_for_rho(select_rho, 2.0 * count.sqrt() / n)?;
    ledger.charge("jam-select", select_rho)?;
    let d_hat = add_gaussian(&discrepancies, &select_noise, &mut seeds.stream("jam/select"));
    let prospective = noise_for_rho(measure_rho, (2.0 * count).sqrt() / n)?.sigma;

    let mut entries = Vec::with_capacity(groups.len());
    for (m, g) in groups.iter().enumerate() {
        let expected = prospective * (2.0 / std::f64::consts::PI).sqrt() * g.len() as f64;
        let source = if d_hat[m] < expected { MeasurementSource::Public } else { MeasurementSource::Private };
        let names: Vec<&str> = subsets[m].iter().map(|&c| marginals.schema().columns[c].name.as_str()).collect();
        entries.push(PlanEntry {
            descriptor: format!("marginal({})", names.join(",")),
            columns: subsets[m].clone(),
            source,
            d_hat: d_hat[m],
            expected_private_error: expected,
            budget_share: 0.0,
        });
    }
    let chosen: Vec<usize> = (0..entries.len()).filter(|&m| entries[m].source == MeasurementSource::Private).collect();
    for &m in &chosen {
        entries[m].budget_share = (1.0 - jam.select_fraction) / chosen.len() as f64;
    }
    let plan = MeasurementPlan { entries };

    let mut y = public_answers;
    if !chosen.is_empty() {
        let sub = marginals.select_marginals(&chosen)?;
        let noisy = measure_noisy(s_priv, &sub, measure_rho, "jam-measure", ledger, &mut seeds.stream("jam/measure"))?;
        let mut cursor = 0;
        for &m in &chosen {
            for i in groups[m].clone() {
                y[i] = noisy.values[cursor];
                cursor += 1;
            }
        }
    }
    let weights = fit_weights(public, marginals, &y, options)?;
    let synthetic = sample_from_weights(&weights, n_synth, &mut seeds.stream("jam/sample"))?;
    Ok((plan, MechanismOutput { synthetic, weights }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::PrivacyBudget;
    use crate::schema::{Cell, ColumnSpec, Record, TableSchema};
    use crate::workload::build_marginal_workload;

    fn binary(cols: usize) -> Arc<TableSchema> {
        Arc::new(
            TableSchema::new("b", (0..cols).map(|i| ColumnSpec::categorical(format!("c{i}"), &["0", "1"])).collect())
                .unwrap(),
        )
    }

    fn ds(schema: &Arc<TableSchema>, rows: &[&[u32]], p: Provenance) -> Dataset {
        let rows = rows.iter().map(|r| Record::new(r.iter().map(|&c| Cell::Cat(c)).collect())).collect();
        Dataset::new(schema.clone(), rows, p).unwrap()
    }

    #[test]
    fn separable_fit_recovers_targets() {
        let s = binary(1);
        let w = build_marginal_workload(s.clone(), 1, None).unwrap();
        let public = ds(&s, &[&[0], &[1]], Provenance::Public);
        let fit = fit_weights(&public, &w, &[0.3, 0.7], &FitOptions::default()).unwrap();
        assert!((fit.weights[0] - 0.3).abs() <= 1e-8 && (fit.weights[1] - 0.7).abs() <= 1e-8);
        assert!(fit.diagnostics.residual <= 1e-8);
    }

    #[test]
    fn identical_public_records_project_onto_one_column() {
        let s = binary(2);
        let w = build_marginal_workload(s.clone(), 1, None).unwrap();
        let public = ds(&s, &[&[0, 1], &[0, 1], &[0, 1]], Provenance::Public);
        let y = [0.5, 0.2, 0.1, 0.6];
        let fit = fit_weights(&public, &w, &y, &FitOptions::default()).unwrap();
        // column a = (1,0,0,1): scale = a·y/‖a‖² = 1.1/2
        let scale: f64 = fit.raw.iter().sum();
        assert!((scale - 0.55).abs() < 1e-9, "{scale}");
        let fitted = PredicateMatrix::build(&w, public.rows()).weighted_sum(&fit.raw, 4);
        for (f, e) in fitted.iter().zip([0.55, 0.0, 0.0, 0.55]) {
            assert!((f - e).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_errors() {
        let s = binary(1);
        let w = build_marginal_workload(s.clone(), 1, None).unwrap();
        let empty = Dataset::new(s.clone(), vec![], Provenance::Public).unwrap();
        assert!(matches!(fit_weights(&empty, &w, &[0.5, 0.5], &FitOptions::default()), Err(Error::EmptyPublicSet)));
        let public = ds(&s, &[&[0]], Provenance::Public);
        assert!(matches!(fit_weights(&public, &w, &[-0.5, 0.1], &FitOptions::default()), Err(Error::DegenerateFit)));
        assert!(matches!(fit_weights(&public, &w, &[0.5], &FitOptions::default()), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn sampling_from_weights() {
        let s = binary(2);
        let public = ds(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], Provenance::Public);
        let mk = |w: Vec<f64>| PublicWeights {
            raw: w.clone(),
            weights: w,
            support: Arc::new(public.clone()),
            diagnostics: FitDiagnostics { residual: 0.0, objective: 0.0, iterations: 0, converged: true, degenerate: false },
        };
        let point = sample_from_weights(&mk(vec![0.0, 0.0, 1.0, 0.0]), 30, &mut SeedTree::new(0).stream("s")).unwrap();
        assert!(point.rows().iter().all(|r| *r == public.rows()[2]));
        assert_eq!(point.provenance(), Provenance::Synthetic);
        let uni = sample_from_weights(&mk(vec![0.25; 4]), 10_000, &mut SeedTree::new(1).stream("s")).unwrap();
        for p in public.rows() {
            let f = uni.rows().iter().filter(|r| *r == p).count() as f64 / 1e4;
            assert!((f - 0.25).abs() <= 0.02);
        }
        assert!(sample_from_weights(&mk(vec![0.25; 4]), 0, &mut SeedTree::new(1).stream("s")).unwrap().is_empty());
        assert!(matches!(
            sample_from_weights(&mk(vec![0.0; 4]), 3, &mut SeedTree::new(1).stream("s")),
            Err(Error::DegenerateFit)
        ));
    }

    #[test]
    fn measure_noisy_paths() {
        let s = binary(1);
        let w = build_marginal_workload(s.clone(), 1, None).unwrap();
        let rows: Vec<&[u32]> = (0..100).map(|i| if i < 30 { &[0u32][..] } else { &[1u32][..] }).collect();
        let private = ds(&s, &rows, Provenance::Private);
        let mut ledger = AccountantLedger::new(f64::INFINITY, 1e-6);
        let exact = measure_noisy(&private, &w, f64::INFINITY, "m", &mut ledger, &mut SeedTree::new(0).stream("m")).unwrap();
        assert_eq!(exact.values, vec![0.3, 0.7]);
        let mut l1 = AccountantLedger::new(1.0, 1e-6);
        let a = measure_noisy(&private, &w, 0.5, "m", &mut l1, &mut SeedTree::new(4).stream("m")).unwrap();
        let b = measure_noisy(&private, &w, 0.5, "m", &mut l1, &mut SeedTree::new(4).stream("m")).unwrap();
        assert_eq!(a, b);
        assert!((a.noise.sensitivity - 2f64.sqrt() / 100.0).abs() < 1e-15);
        assert_eq!(l1.charges().len(), 2);
    }

    #[test]
    fn mwem_update_reduces_selected_error() {
        let s = binary(2);
        let w = build_marginal_workload(s.clone(), 2, None).unwrap();
        let public = ds(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], Provenance::Public);
        let rows: Vec<&[u32]> = (0..40).map(|i| if i < 30 { &[1u32, 1][..] } else { &[0u32, 0][..] }).collect();
        let private = ds(&s, &rows, Provenance::Private);
        let truth = evaluate(&w, &private).unwrap().values;
        let uniform = [0.25; 4];
        // exact selection: the worst query under uniform weights is cell (1,1)
        let q = exponential_mechanism(
            &uniform.iter().zip(&truth).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>(),
            1.0,
            f64::INFINITY,
            &mut SeedTree::new(0).stream("x"),
        );
        let mut ledger = AccountantLedger::new(f64::INFINITY, 1e-6);
        let fit = mwem_refine(&public, &w, &private, 1, f64::INFINITY, &mut ledger, &SeedTree::new(0)).unwrap();
        let after = fit.answers(&w);
        assert!((after[q] - truth[q]).abs() < (uniform[q] - truth[q]).abs());
        assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(ledger.charges().len(), 2);
    }

    #[test]
    fn mwem_converges_on_full_support() {
        let s = binary(2);
        let w = crate::workload::build_marginals_up_to(s.clone(), 2).unwrap();
        let public = ds(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], Provenance::Public);
        let rows: Vec<&[u32]> = (0..100)
            .map(|i| match i % 10 {
                0..=5 => &[1u32, 1][..],
                6 | 7 => &[0u32, 1][..],
                8 => &[1u32, 0][..],
                _ => &[0u32, 0][..],
            })
            .collect();
        let private = ds(&s, &rows, Provenance::Private);
        let mut ledger = AccountantLedger::new(f64::INFINITY, 1e-6);
        let fit = mwem_refine(&public, &w, &private, 2000, f64::INFINITY, &mut ledger, &SeedTree::new(1)).unwrap();
        for v in &fit.weights {
            assert!(*v >= 0.0);
        }
        let truth = evaluate(&w, &private).unwrap().values;
        let err = crate::workload::vector_error(&fit.answers(&w), &truth, crate::workload::Norm::L1).unwrap();
        assert!(err <= 0.01, "{err}");
    }

    #[test]
    fn mst_two_columns_is_forced_tree() {
        let s = binary(2);
        let public = ds(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], Provenance::Public);
        let rows: Vec<&[u32]> = (0..20).map(|i| if i % 3 == 0 { &[1u32, 1][..] } else { &[0u32, 1][..] }).collect();
        let private = ds(&s, &rows, Provenance::Private);
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let mut ledger = b.ledger();
        let out = mst_lite(&private, &public, 50, b.rho, MstSplit::default(), &mut ledger, &SeedTree::new(0), &FitOptions::default())
            .unwrap();
        assert_eq!(out.tree, vec![(0, 1)]);
        let labels: Vec<&str> = ledger.charges().iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, vec!["mst-oneway", "mst-twoway"]);
        assert_eq!(out.output.synthetic.len(), 50);
    }

    #[test]
    fn jam_infinite_budget_always_private() {
        let s = binary(2);
        let w = build_marginal_workload(s.clone(), 1, None).unwrap();
        let public = ds(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], Provenance::Public);
        let private = ds(&s, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], Provenance::Private);
        let mut ledger = AccountantLedger::new(f64::INFINITY, 1e-6);
        let (plan, _) = jam_lite(
            &private,
            &public,
            &w,
            10,
            f64::INFINITY,
            JamOptions::default(),
            &mut ledger,
            &SeedTree::new(0),
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(plan.private_count(), 2);
    }
}
