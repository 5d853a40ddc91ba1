//! Linear-query workloads, workload error and the workload-aware record distance.
//!
//! Every query is a bounded per-record predicate `ψ`; a query's answer on a
//! dataset is the fraction `(1/n)·Σ ψ(x)`. Predicates are organised in blocks
//! so a record's predicate vector can be produced sparsely: a marginal block
//! contributes exactly one indicator, a grouped-numeric block one scaled value
//! per numerical column.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::{bin_index, Cell, ColumnKind, Dataset, Record, TableSchema};

/// Records per parallel work unit. Fixed so reductions do not depend on the
/// thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    Linf,
}

/// What a query computes on one record.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// Indicator that the record's bins on `columns` equal `bins`.
    MarginalCell { columns: Vec<usize>, bins: Vec<usize> },
    /// Indicator of the categorical group times the min-max scaled value of `column`.
    GroupedNumeric { group_columns: Vec<usize>, group: Vec<usize>, column: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuery {
    pub predicate: Predicate,
    pub descriptor: String,
    /// Upper bound on `|ψ(x)|` over valid records.
    pub bound: f64,
}

impl LinearQuery {
    pub fn eval(&self, schema: &TableSchema, record: &Record) -> f64 {
        match &self.predicate {
            Predicate::MarginalCell { columns, bins } => {
                let hit = columns
                    .iter()
                    .zip(bins)
                    .all(|(&c, &b)| bin_index(&schema.columns[c], &record.values[c]) == b);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Predicate::GroupedNumeric { group_columns, group, column } => {
                let hit = group_columns
                    .iter()
                    .zip(group)
                    .all(|(&c, &b)| bin_index(&schema.columns[c], &record.values[c]) == b);
                if hit {
                    scaled_value(schema, *column, &record.values[*column])
                } else {
                    0.0
                }
            }
        }
    }
}

fn scaled_value(schema: &TableSchema, column: usize, cell: &Cell) -> f64 {
    match (&schema.columns[column].kind, cell) {
        (ColumnKind::Numerical { min, max, .. }, Cell::Num(v)) => (v - min) / (max - min),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WorkloadKind {
    Marginal { subsets: Vec<Vec<usize>> },
    GroupedNumeric { group_columns: Vec<usize>, numeric_columns: Vec<usize> },
}

/// Contiguous run of queries sharing a structure.
#[derive(Debug, Clone, PartialEq)]
enum Block {
    Marginal { columns: Vec<usize>, sizes: Vec<usize>, offset: usize },
    Grouped { group_columns: Vec<usize>, sizes: Vec<usize>, numeric: Vec<usize>, offset: usize },
}

impl Block {
    fn len(&self) -> usize {
        match self {
            Block::Marginal { sizes, .. } => sizes.iter().product(),
            Block::Grouped { sizes, numeric, .. } => sizes.iter().product::<usize>() * numeric.len(),
        }
    }
}

fn mixed_radix(schema: &TableSchema, record: &Record, columns: &[usize], sizes: &[usize]) -> usize {
    columns
        .iter()
        .zip(sizes)
        .fold(0, |acc, (&c, &s)| acc * s + bin_index(&schema.columns[c], &record.values[c]))
}

fn cell_tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |b| {
                    let mut p = prefix.clone();
                    p.push(b);
                    p
                })
            })
            .collect();
    }
    out
}

/// Sparse predicate vector `(query index, ψ value)`, sorted by index.
pub type SparseVec = Vec<(u32, f64)>;

/// An ordered, non-empty set of linear queries over one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    schema: Arc<TableSchema>,
    queries: Vec<LinearQuery>,
    kind: WorkloadKind,
    blocks: Vec<Block>,
}

impl Workload {
    fn from_blocks(schema: Arc<TableSchema>, kind: WorkloadKind, blocks: Vec<Block>) -> Result<Self> {
        let mut queries = Vec::new();
        for block in &blocks {
            match block {
                Block::Marginal { columns, sizes, .. } => {
                    let names: Vec<&str> = columns.iter().map(|&c| schema.columns[c].name.as_str()).collect();
                    for bins in cell_tuples(sizes) {
                        let labels: Vec<String> = columns
                            .iter()
                            .zip(&bins)
                            .map(|(&c, &b)| bin_label(&schema, c, b))
                            .collect();
                        queries.push(LinearQuery {
                            descriptor: format!("marginal({})[{}]", names.join(","), labels.join(",")),
                            predicate: Predicate::MarginalCell { columns: columns.clone(), bins },
                            bound: 1.0,
                        });
                    }
                }
                Block::Grouped { group_columns, sizes, numeric, .. } => {
                    let names: Vec<&str> = group_columns.iter().map(|&c| schema.columns[c].name.as_str()).collect();
                    for group in cell_tuples(sizes) {
                        let labels: Vec<String> = group_columns
                            .iter()
                            .zip(&group)
                            .map(|(&c, &b)| bin_label(&schema, c, b))
                            .collect();
                        for &j in numeric {
                            queries.push(LinearQuery {
                                descriptor: format!(
                                    "grouped({})[{}]:{}",
                                    names.join(","),
                                    labels.join(","),
                                    schema.columns[j].name
                                ),
                                predicate: Predicate::GroupedNumeric {
                                    group_columns: group_columns.clone(),
                                    group: group.clone(),
                                    column: j,
                                },
                                bound: 1.0,
                            });
                        }
                    }
                }
            }
        }
        if queries.is_empty() {
            return Err(Error::Config("workload has no queries".into()));
        }
        let mut seen = HashSet::new();
        for q in &queries {
            if !seen.insert(q.descriptor.as_str()) {
                return Err(Error::Config(format!("duplicate query descriptor {}", q.descriptor)));
            }
        }
        Ok(Workload { schema, queries, kind, blocks })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<TableSchema> {
        &self.schema
    }

    pub fn queries(&self) -> &[LinearQuery] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn kind(&self) -> &WorkloadKind {
        &self.kind
    }

    pub fn is_marginal(&self) -> bool {
        matches!(self.kind, WorkloadKind::Marginal { .. })
    }

    /// Number of marginal tables (marginal workloads) or predicate blocks.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Query index ranges of each marginal table; empty for non-marginal workloads.
    pub fn marginal_groups(&self) -> Vec<Range<usize>> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Marginal { offset, .. } => Some(*offset..*offset + b.len()),
                Block::Grouped { .. } => None,
            })
            .collect()
    }

    /// Column subsets of the marginal tables, in block order.
    pub fn marginal_subsets(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Marginal { columns, .. } => Some(columns.clone()),
                Block::Grouped { .. } => None,
            })
            .collect()
    }

    /// Identity of the workload for cross-report comparisons.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.hash().as_bytes());
        for q in &self.queries {
            h.update(q.descriptor.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Sparse predicate vector of one record.
    pub fn predicate_vector(&self, record: &Record) -> SparseVec {
        let mut out = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            match block {
                Block::Marginal { columns, sizes, offset } => {
                    let cell = mixed_radix(&self.schema, record, columns, sizes);
                    out.push(((offset + cell) as u32, 1.0));
                }
                Block::Grouped { group_columns, sizes, numeric, offset } => {
                    let g = mixed_radix(&self.schema, record, group_columns, sizes);
                    for (j, &col) in numeric.iter().enumerate() {
                        let v = scaled_value(&self.schema, col, &record.values[col]);
                        if v != 0.0 {
                            out.push(((offset + g * numeric.len() + j) as u32, v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Dense predicate vector of one record.
    pub fn predicate_dense(&self, record: &Record) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, v) in self.predicate_vector(record) {
            out[i as usize] = v;
        }
        out
    }

    /// Replace-one ℓ2 sensitivity of the raw-count answer vector.
    ///
    /// For marginal workloads a record moves one cell per table, giving
    /// `sqrt(2·tables)`; otherwise the generic `sqrt(Σ bound²)`. Divide by `n`
    /// for fractional answers.
    pub fn count_l2_sensitivity(&self) -> f64 {
        if self.is_marginal() {
            (2.0 * self.blocks.len() as f64).sqrt()
        } else {
            let generic: f64 = self.queries.iter().map(|q| q.bound * q.bound).sum::<f64>().sqrt();
            let structured: f64 = self
                .blocks
                .iter()
                .map(|b| match b {
                    Block::Grouped { numeric, .. } => 2.0 * numeric.len() as f64,
                    Block::Marginal { .. } => 2.0,
                })
                .sum::<f64>()
                .sqrt();
            generic.min(structured)
        }
    }

    /// Sub-workload made of the given marginal tables (by block index).
    pub fn select_marginals(&self, blocks: &[usize]) -> Result<Workload> {
        let subsets = self.marginal_subsets();
        let chosen = blocks
            .iter()
            .map(|&b| subsets.get(b).cloned().ok_or(Error::DuplicateSubset(vec![b])))
            .collect::<Result<Vec<_>>>()?;
        marginal_workload_from_subsets(self.schema.clone(), chosen)
    }
}

fn bin_label(schema: &TableSchema, column: usize, bin: usize) -> String {
    match &schema.columns[column].kind {
        ColumnKind::Categorical { domain } => domain[bin].clone(),
        ColumnKind::Numerical { .. } => format!("bin{bin}"),
    }
}

/// One indicator query per cell of each k-way marginal; all `(d choose k)`
/// subsets when `subsets` is `None`.
pub fn build_marginal_workload(
    schema: Arc<TableSchema>,
    k: usize,
    subsets: Option<Vec<Vec<usize>>>,
) -> Result<Workload> {
    let d = schema.len();
    if k == 0 || k > d {
        return Err(Error::KTooLarge { k, columns: d });
    }
    let subsets = match subsets {
        Some(s) => {
            if let Some(bad) = s.iter().find(|s| s.len() != k) {
                return Err(Error::DuplicateSubset(bad.clone()));
            }
            s
        }
        None => combinations(d, k),
    };
    marginal_workload_from_subsets(schema, subsets)
}

/// All marginals of sizes `1..=k`.
pub fn build_marginals_up_to(schema: Arc<TableSchema>, k: usize) -> Result<Workload> {
    let d = schema.len();
    if k == 0 || k > d {
        return Err(Error::KTooLarge { k, columns: d });
    }
    let subsets = (1..=k).flat_map(|j| combinations(d, j)).collect();
    marginal_workload_from_subsets(schema, subsets)
}

/// Marginal workload over explicit column subsets of any size.
pub fn marginal_workload_from_subsets(schema: Arc<TableSchema>, subsets: Vec<Vec<usize>>) -> Result<Workload> {
    let d = schema.len();
    let mut seen = HashSet::new();
    let mut blocks = Vec::with_capacity(subsets.len());
    let mut offset = 0;
    for subset in &subsets {
        let mut sorted = subset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if subset.is_empty() || sorted.len() != subset.len() || sorted.iter().any(|&c| c >= d) {
            return Err(Error::DuplicateSubset(subset.clone()));
        }
        if subset.len() > d {
            return Err(Error::KTooLarge { k: subset.len(), columns: d });
        }
        if !seen.insert(sorted) {
            return Err(Error::DuplicateSubset(subset.clone()));
        }
        let sizes: Vec<usize> = subset.iter().map(|&c| schema.columns[c].size()).collect();
        let block = Block::Marginal { columns: subset.clone(), sizes, offset };
        offset += block.len();
        blocks.push(block);
    }
    Workload::from_blocks(schema, WorkloadKind::Marginal { subsets }, blocks)
}

/// For each combination of the categorical columns and each numerical column,
/// the group-restricted min-max scaled value.
pub fn build_grouped_numeric_workload(
    schema: Arc<TableSchema>,
    group_columns: &[usize],
    numeric_columns: &[usize],
) -> Result<Workload> {
    if group_columns.is_empty() || numeric_columns.is_empty() {
        return Err(Error::Config("grouped workload needs categorical and numerical columns".into()));
    }
    for &c in group_columns {
        let col = schema.columns.get(c).ok_or(Error::DuplicateSubset(vec![c]))?;
        if !col.is_categorical() {
            return Err(Error::WrongColumnKind(col.name.clone()));
        }
    }
    for &c in numeric_columns {
        let col = schema.columns.get(c).ok_or(Error::DuplicateSubset(vec![c]))?;
        if col.is_categorical() {
            return Err(Error::WrongColumnKind(col.name.clone()));
        }
    }
    let sizes = group_columns.iter().map(|&c| schema.columns[c].size()).collect();
    let block = Block::Grouped {
        group_columns: group_columns.to_vec(),
        sizes,
        numeric: numeric_columns.to_vec(),
        offset: 0,
    };
    let kind = WorkloadKind::GroupedNumeric {
        group_columns: group_columns.to_vec(),
        numeric_columns: numeric_columns.to_vec(),
    };
    Workload::from_blocks(schema, kind, vec![block])
}

/// Lexicographic k-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Workload answers as dataset fractions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerVector {
    pub values: Vec<f64>,
    /// Record count the answers were computed from.
    pub n: usize,
}

impl AnswerVector {
    /// Raw counts `n · value`.
    pub fn counts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.n as f64).collect()
    }

    /// `(descriptor, answer)` pairs for reports.
    pub fn to_json(&self, workload: &Workload) -> serde_json::Value {
        let pairs: Vec<serde_json::Value> = workload
            .queries()
            .iter()
            .zip(&self.values)
            .map(|(q, v)| serde_json::json!({ "descriptor": q.descriptor, "answer": v }))
            .collect();
        serde_json::Value::Array(pairs)
    }
}

/// Sums predicate vectors over rows in fixed-size chunks, merged in order.
fn summed_predicates(workload: &Workload, rows: &[Record]) -> Vec<f64> {
    let k = workload.len();
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; k];
            for r in chunk {
                for (i, v) in workload.predicate_vector(r) {
                    acc[i as usize] += v;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; k];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

pub fn evaluate(workload: &Workload, dataset: &Dataset) -> Result<AnswerVector> {
    evaluate_records(workload, dataset.rows())
}

pub fn evaluate_records(workload: &Workload, rows: &[Record]) -> Result<AnswerVector> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = rows.len();
    let values = summed_predicates(workload, rows).into_iter().map(|s| s / n as f64).collect();
    Ok(AnswerVector { values, n })
}

pub fn workload_error(a: &AnswerVector, b: &AnswerVector, norm: Norm) -> Result<f64> {
    vector_error(&a.values, &b.values, norm)
}

pub fn vector_error(a: &[f64], b: &[f64], norm: Norm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    Ok(match norm {
        Norm::L1 => diffs.sum(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    })
}

/// ℓ1 distance between two sparse vectors sorted by index.
pub fn sparse_l1(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                acc += a[i].1.abs();
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                acc += b[j].1.abs();
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                acc += (a[i].1 - b[j].1).abs();
                i += 1;
                j += 1;
            }
        }
    }
    acc + a[i..].iter().map(|e| e.1.abs()).sum::<f64>() + b[j..].iter().map(|e| e.1.abs()).sum::<f64>()
}

/// Workload-aware distance `Σ_i |ψ_i(x) − ψ_i(c)|`.
pub fn wdist(x: &Record, c: &Record, workload: &Workload) -> f64 {
    sparse_l1(&workload.predicate_vector(x), &workload.predicate_vector(c))
}

/// Predicate vectors of a candidate pool, computed once and shared across
/// all private records.
#[derive(Debug, Clone)]
pub struct PredicateMatrix {
    rows: Vec<SparseVec>,
}

impl PredicateMatrix {
    pub fn build(workload: &Workload, records: &[Record]) -> Self {
        let rows = records.par_iter().map(|r| workload.predicate_vector(r)).collect();
        PredicateMatrix { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[SparseVec] {
        &self.rows
    }

    /// Index of the closest row to `x`; ties go to the lowest index.
    pub fn nearest(&self, x: &[(u32, f64)]) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let d = sparse_l1(x, row);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
                if d == 0.0 {
                    break;
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// `Σ_x w_x · Q(x)` as a dense vector of length `k`.
    pub fn weighted_sum(&self, weights: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        for (row, &w) in self.rows.iter().zip(weights) {
            if w != 0.0 {
                for &(i, v) in row {
                    out[i as usize] += w * v;
                }
            }
        }
        out
    }

    /// `Q(x) · r` for every row.
    pub fn dot_each(&self, r: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(i, v)| v * r[i as usize]).sum()).collect()
    }
}

pub fn nearest_candidate(x: &Record, pool: &[Record], workload: &Workload) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let px = workload.predicate_vector(x);
    let best = pool
        .par_iter()
        .enumerate()
        .map(|(i, c)| (sparse_l1(&px, &workload.predicate_vector(c)), i))
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("non-empty pool");
    Ok(best.1)
}

/// Total-variation distance of each column's binned 1-way marginal.
pub fn column_tv_distances(a: &Dataset, b: &Dataset) -> Result<Vec<f64>> {
    let schema = a.schema();
    let ha = column_histograms(schema, a.rows())?;
    let hb = column_histograms(schema, b.rows())?;
    Ok(ha.iter().zip(&hb).map(|(x, y)| 0.5 * x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>()).collect())
}

/// Normalized binned 1-way histograms for every column.
pub fn column_histograms(schema: &TableSchema, rows: &[Record]) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hists: Vec<Vec<f64>> = schema.columns.iter().map(|c| vec![0.0; c.size()]).collect();
    for r in rows {
        for (c, (col, cell)) in schema.columns.iter().zip(&r.values).enumerate() {
            hists[c][bin_index(col, cell)] += 1.0;
        }
    }
    let n = rows.len() as f64;
    for h in &mut hists {
        h.iter_mut().for_each(|v| *v /= n);
    }
    Ok(hists)
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "workload({} queries, {} blocks)", self.queries.len(), self.blocks.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnSpec, Provenance};

    fn binary2() -> Arc<TableSchema> {
        Arc::new(
            TableSchema::new(
                "b",
                vec![ColumnSpec::categorical("a", &["0", "1"]), ColumnSpec::categorical("b", &["0", "1"])],
            )
            .unwrap(),
        )
    }

    fn rec(cells: &[u32]) -> Record {
        Record::new(cells.iter().map(|&c| Cell::Cat(c)).collect())
    }

    fn sizes448() -> Arc<TableSchema> {
        Arc::new(
            TableSchema::new(
                "s",
                vec![
                    ColumnSpec::categorical("a", &["0", "1", "2", "3"]),
                    ColumnSpec::categorical("b", &["0", "1", "2", "3"]),
                    ColumnSpec::numerical("c", 0.0, 8.0, 8),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn marginal_query_counts() {
        let w = build_marginal_workload(sizes448(), 2, None).unwrap();
        assert_eq!(w.len(), 80);
        let single = Arc::new(TableSchema::new("x", vec![ColumnSpec::categorical("a", &["0", "1"])]).unwrap());
        assert_eq!(build_marginal_workload(single, 1, None).unwrap().len(), 2);
        assert!(matches!(build_marginal_workload(binary2(), 3, None), Err(Error::KTooLarge { k: 3, columns: 2 })));
        assert!(matches!(
            build_marginal_workload(binary2(), 1, Some(vec![vec![0], vec![0]])),
            Err(Error::DuplicateSubset(_))
        ));
        assert!(matches!(
            build_marginal_workload(sizes448(), 2, Some(vec![vec![0, 1], vec![1, 0]])),
            Err(Error::DuplicateSubset(_))
        ));
        assert!(matches!(
            build_marginal_workload(sizes448(), 2, Some(vec![vec![0, 0]])),
            Err(Error::DuplicateSubset(_))
        ));
    }

    #[test]
    fn grouped_numeric_queries() {
        let schema = Arc::new(
            TableSchema::new(
                "g",
                vec![ColumnSpec::categorical("g", &["x", "y"]), ColumnSpec::numerical("v", 2.0, 12.0, 4)],
            )
            .unwrap(),
        );
        let w = build_grouped_numeric_workload(schema.clone(), &[0], &[1]).unwrap();
        assert_eq!(w.len(), 2);
        let at_min = Record::new(vec![Cell::Cat(0), Cell::Num(2.0)]);
        assert_eq!(w.predicate_dense(&at_min), vec![0.0, 0.0]);
        let r = Record::new(vec![Cell::Cat(1), Cell::Num(7.0)]);
        assert_eq!(w.predicate_dense(&r), vec![0.0, 0.5]);
        assert_eq!(w.queries()[0].eval(&schema, &r), 0.0);
        let a = Record::new(vec![Cell::Cat(0), Cell::Num(4.0)]);
        let b = Record::new(vec![Cell::Cat(0), Cell::Num(9.0)]);
        assert!((wdist(&a, &b, &w) - 0.5).abs() < 1e-12);
        assert!(matches!(build_grouped_numeric_workload(schema.clone(), &[1], &[1]), Err(Error::WrongColumnKind(_))));
        assert!(matches!(build_grouped_numeric_workload(schema, &[0], &[0]), Err(Error::WrongColumnKind(_))));
    }

    #[test]
    fn sparse_matches_query_eval() {
        let schema = sizes448();
        let w = build_marginals_up_to(schema.clone(), 2).unwrap();
        let r = Record::new(vec![Cell::Cat(2), Cell::Cat(3), Cell::Num(5.5)]);
        let dense: Vec<f64> = w.queries().iter().map(|q| q.eval(&schema, &r)).collect();
        assert_eq!(w.predicate_dense(&r), dense);
    }

    #[test]
    fn evaluate_fractions() {
        let schema = Arc::new(TableSchema::new("x", vec![ColumnSpec::categorical("a", &["0", "1"])]).unwrap());
        let w = build_marginal_workload(schema.clone(), 1, None).unwrap();
        let one = Dataset::new(schema.clone(), vec![rec(&[1])], Provenance::Private).unwrap();
        assert_eq!(evaluate(&w, &one).unwrap().values, vec![0.0, 1.0]);
        let rows = (0..10).map(|i| rec(&[u32::from(i >= 3)])).collect();
        let ten = Dataset::new(schema.clone(), rows, Provenance::Private).unwrap();
        let ans = evaluate(&w, &ten).unwrap();
        assert!((ans.values[0] - 0.3).abs() < 1e-12);
        assert_eq!(ans.counts(), vec![3.0, 7.0]);
        assert_eq!(ans, evaluate(&w, &ten.clone()).unwrap());
        assert!(matches!(evaluate_records(&w, &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn errors_between_opposite_records() {
        let schema = Arc::new(TableSchema::new("x", vec![ColumnSpec::categorical("a", &["0", "1"])]).unwrap());
        let w = build_marginal_workload(schema.clone(), 1, None).unwrap();
        let a = evaluate_records(&w, &[rec(&[0])]).unwrap();
        let b = evaluate_records(&w, &[rec(&[1])]).unwrap();
        assert_eq!(workload_error(&a, &a, Norm::L1).unwrap(), 0.0);
        assert_eq!(workload_error(&a, &b, Norm::L1).unwrap(), 2.0);
        assert_eq!(workload_error(&a, &b, Norm::Linf).unwrap(), 1.0);
        let short = AnswerVector { values: vec![0.0], n: 1 };
        assert!(matches!(workload_error(&a, &short, Norm::L1), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn wdist_examples() {
        let w = build_marginal_workload(binary2(), 1, None).unwrap();
        assert_eq!(wdist(&rec(&[0, 1]), &rec(&[0, 1]), &w), 0.0);
        assert_eq!(wdist(&rec(&[0, 1]), &rec(&[0, 0]), &w), 2.0);
    }

    #[test]
    fn nearest_candidate_ties_and_edges() {
        let w = build_marginal_workload(binary2(), 1, None).unwrap();
        let x = rec(&[1, 1]);
        let pool = vec![rec(&[0, 0]), rec(&[0, 0]), rec(&[0, 0]), rec(&[1, 1]), rec(&[0, 0])];
        assert_eq!(nearest_candidate(&x, &pool, &w).unwrap(), 3);
        let tie = vec![rec(&[0, 0]), rec(&[1, 0]), rec(&[0, 0]), rec(&[0, 0]), rec(&[0, 1])];
        assert_eq!(nearest_candidate(&x, &tie, &w).unwrap(), 1);
        assert_eq!(nearest_candidate(&x, &tie[..1], &w).unwrap(), 0);
        assert!(matches!(nearest_candidate(&x, &[], &w), Err(Error::EmptyPool)));
        let m = PredicateMatrix::build(&w, &tie);
        assert_eq!(m.nearest(&w.predicate_vector(&x)), Some(1));
    }

    #[test]
    fn marginal_sensitivity() {
        let w = build_marginal_workload(binary2(), 1, Some(vec![vec![0]])).unwrap();
        assert!((w.count_l2_sensitivity() - 2f64.sqrt()).abs() < 1e-15);
        let w2 = build_marginals_up_to(sizes448(), 2).unwrap();
        assert!((w2.count_l2_sensitivity() - 12f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn combinations_lexicographic() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(4, 4).len(), 1);
    }
}
