//! Relation-refinement feasibility studies.
//!
//! Textual concept embeddings are fused with concept-dependent random
//! vectors, optionally distorted, passed through a [`Refiner`], and the
//! triplet verdicts before and after refinement are compared.

mod refiner;

pub use refiner::{
    toy_attention_refine, AttentionLayer, AttentionRefiner, AttentionWeights, ExternalRefiner,
    IdentityRefiner, Refiner, DEFAULT_EXTERNAL_TIMEOUT,
};

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedstore::{normalize, EmbeddingTable};
use crate::error::{Error, Result};
use crate::matrix::{cosine, dot, norm, Matrix};
use crate::seed;

/// Two related concepts plus a less related outlier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub paired: (String, String),
    pub outlier: String,
}

impl Triplet {
    pub fn new(a: &str, b: &str, outlier: &str) -> Self {
        Self {
            paired: (a.to_string(), b.to_string()),
            outlier: outlier.to_string(),
        }
    }

    pub fn validate(&self, table: &EmbeddingTable) -> Result<()> {
        let (a, b, o) = (&self.paired.0, &self.paired.1, &self.outlier);
        if a == b || a == o || b == o {
            return Err(Error::InvalidArgument(format!(
                "triplet ({a}, {b}, {o}) repeats a label"
            )));
        }
        for l in [a, b, o] {
            table.row_by_label(l)?;
        }
        Ok(())
    }
}

pub fn load_triplets(path: &std::path::Path) -> Result<Vec<Triplet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripletVerdict {
    pub reasonable: bool,
    pub paired_sim: f64,
    pub max_unpaired_sim: f64,
}

/// Reasonable iff the paired similarity strictly exceeds both
/// pair-to-outlier similarities. Rows are compared by cosine, so scaling a
/// row never changes a verdict.
pub fn classify_triplet(table: &EmbeddingTable, t: &Triplet) -> Result<TripletVerdict> {
    let a = table.row_by_label(&t.paired.0)?;
    let b = table.row_by_label(&t.paired.1)?;
    let o = table.row_by_label(&t.outlier)?;
    Ok(verdict(a, b, o))
}

fn verdict(a: &[f64], b: &[f64], o: &[f64]) -> TripletVerdict {
    let paired_sim = cosine(a, b);
    let max_unpaired_sim = cosine(a, o).max(cosine(b, o));
    TripletVerdict {
        reasonable: paired_sim > max_unpaired_sim,
        paired_sim,
        max_unpaired_sim,
    }
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// One unit vector per label, a function of `(label, seed)` only.
pub fn synth_nontextual(labels: &[String], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dim must be at least 2, got {dim}")));
    }
    let rows: Vec<f64> = labels
        .par_iter()
        .flat_map_iter(|l| unit_gaussian(&mut seed::rng_for(seed, l.as_bytes()), dim))
        .collect();
    EmbeddingTable::new(labels.to_vec(), Matrix::from_vec(labels.len(), dim, rows)?)
}

/// Zero each entry independently with probability `p`. Rows are not renormalized.
pub fn distort(table: &EmbeddingTable, p: f64, seed: u64) -> Result<EmbeddingTable> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p must lie in [0, 1], got {p}")));
    }
    if p == 0.0 {
        return Ok(table.clone());
    }
    let dim = table.dim();
    let mut m = table.matrix().clone();
    m.as_mut_slice()
        .par_chunks_mut(dim)
        .zip(table.labels().par_iter())
        .for_each(|(row, label)| {
            let mut rng = seed::rng_for(seed, label.as_bytes());
            for v in row {
                if rng.random::<f64>() < p {
                    *v = 0.0;
                }
            }
        });
    table.with_matrix(m)
}

/// `(1 − α)·text + α·nontext`, row by row.
pub fn fuse(text: &EmbeddingTable, nontext: &EmbeddingTable, alpha: f64) -> Result<EmbeddingTable> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if text.labels() != nontext.labels() {
        return Err(Error::Shape("fusion inputs have different labels".into()));
    }
    if text.dim() != nontext.dim() {
        return Err(Error::Shape(format!(
            "fusion inputs have dims {} and {}",
            text.dim(),
            nontext.dim()
        )));
    }
    let data = text
        .matrix()
        .as_slice()
        .iter()
        .zip(nontext.matrix().as_slice())
        .map(|(t, n)| (1.0 - alpha) * t + alpha * n)
        .collect();
    text.with_matrix(Matrix::from_vec(text.len(), text.dim(), data)?)
}

/// Correlation of the base pairs drawn by [`expectation_scaling_check`].
pub const BASE_CORRELATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingResult {
    pub alpha: f64,
    pub empirical_ratio: f64,
    pub predicted: f64,
    pub mean_base_sim: f64,
    pub mean_fused_sim: f64,
}

/// Monte-Carlo check that fusing with independent random vectors scales
/// the expected similarity of a concept pair by `(1 − α)²`.
///
/// Base pairs are `c1` and `c2 = normalize(ρ·c1 + √(1−ρ²)·ε)` with unit
/// random `c1`, `ε` and `ρ = 0.5`; each concept gets an independent unit
/// random partner for fusion. Similarities are raw inner products.
pub fn expectation_scaling_check(dim: usize, alpha: f64, n_pairs: usize, seed: u64) -> Result<ScalingResult> {
    if n_pairs < 1000 {
        return Err(Error::InvalidArgument(format!(
            "n_pairs must be at least 1000, got {n_pairs}"
        )));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dim must be at least 2, got {dim}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let rho = BASE_CORRELATION;
    let tail = (1.0 - rho * rho).sqrt();
    let sims: Vec<(f64, f64)> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive_index(seed, i as u64));
            let c1 = unit_gaussian(&mut rng, dim);
            let eps = unit_gaussian(&mut rng, dim);
            let mut c2: Vec<f64> = c1.iter().zip(&eps).map(|(a, e)| rho * a + tail * e).collect();
            let n = norm(&c2);
            c2.iter_mut().for_each(|v| *v /= n);
            let r1 = unit_gaussian(&mut rng, dim);
            let r2 = unit_gaussian(&mut rng, dim);
            let f1: Vec<f64> = c1.iter().zip(&r1).map(|(c, r)| (1.0 - alpha) * c + alpha * r).collect();
            let f2: Vec<f64> = c2.iter().zip(&r2).map(|(c, r)| (1.0 - alpha) * c + alpha * r).collect();
            (dot(&c1, &c2), dot(&f1, &f2))
        })
        .collect();
    let n = n_pairs as f64;
    let mean_base_sim = sims.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_fused_sim = sims.iter().map(|s| s.1).sum::<f64>() / n;
    if mean_base_sim.abs() < 1e-3 {
        return Err(Error::DegenerateBaseSimilarity(mean_base_sim));
    }
    Ok(ScalingResult {
        alpha,
        empirical_ratio: mean_fused_sim / mean_base_sim,
        predicted: (1.0 - alpha) * (1.0 - alpha),
        mean_base_sim,
        mean_fused_sim,
    })
}

/// Transition counts for one `(α, p)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub alpha: f64,
    pub p: f64,
    pub n_triplets: usize,
    pub n_unreasonable_before: usize,
    pub n_improved: usize,
    pub n_deteriorated: usize,
    pub improved_proportion: f64,
    pub deteriorated_proportion: f64,
}

fn cell_name(alpha: f64, p: f64) -> String {
    format!("alpha={alpha},p={p}")
}

fn contract_violation(input: &EmbeddingTable, output: &EmbeddingTable) -> Option<String> {
    if output.len() != input.len() {
        return Some(format!("row count changed from {} to {}", input.len(), output.len()));
    }
    if output.dim() != input.dim() {
        return Some(format!("dim changed from {} to {}", input.dim(), output.dim()));
    }
    if let Some(i) = (0..input.len()).find(|&i| input.labels()[i] != output.labels()[i]) {
        return Some(format!(
            "label order changed at row {i}: expected {:?}, found {:?}",
            input.labels()[i],
            output.labels()[i]
        ));
    }
    None
}

fn classify_all(table: &EmbeddingTable, idx: &[[usize; 3]]) -> Vec<bool> {
    idx.iter()
        .map(|&[a, b, o]| verdict(table.row(a), table.row(b), table.row(o)).reasonable)
        .collect()
}

/// Run the fuse → classify → refine → classify pipeline over an `(α, p)` grid.
///
/// Each concept keeps one random vector across the grid; the distortion
/// mask depends only on `p`. Fused tables are rounded to `f32`, the
/// precision of the exchange format, before classification, so in-process
/// and external refiners see identical inputs.
pub fn run_refine_study(
    text: &EmbeddingTable,
    triplets: &[Triplet],
    refiner: &dyn Refiner,
    alphas: &[f64],
    ps: &[f64],
    seed: u64,
) -> Result<Vec<RefineReport>> {
    for t in triplets {
        t.validate(text)?;
    }
    let idx: Vec<[usize; 3]> = triplets
        .iter()
        .map(|t| {
            [
                text.index_of(&t.paired.0).expect("validated"),
                text.index_of(&t.paired.1).expect("validated"),
                text.index_of(&t.outlier).expect("validated"),
            ]
        })
        .collect();
    let text_n = normalize(text)?;
    let nontext = synth_nontextual(text.labels(), text.dim(), seed)?;
    let cells: Vec<(f64, usize, f64)> = alphas
        .iter()
        .flat_map(|&a| ps.iter().enumerate().map(move |(pi, &p)| (a, pi, p)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha, pi, p)| {
            let cell = cell_name(alpha, p);
            let distorted = distort(&nontext, p, seed::derive(seed, format!("distort:{pi}").as_bytes()))?;
            let fused = fuse(&text_n, &distorted, alpha)?.quantize_f32();
            let before = classify_all(&fused, &idx);
            let refined = refiner.refine(&fused).map_err(|e| Error::RefinerFailed {
                cell: cell.clone(),
                reason: e.to_string(),
            })?;
            if let Some(reason) = contract_violation(&fused, &refined) {
                return Err(Error::RefinerContract { cell, reason });
            }
            let after = classify_all(&refined, &idx);
            let n_unreasonable_before = before.iter().filter(|r| !**r).count();
            let n_improved = before.iter().zip(&after).filter(|(b, a)| !**b && **a).count();
            let n_deteriorated = before.iter().zip(&after).filter(|(b, a)| **b && !**a).count();
            let n_reasonable = triplets.len() - n_unreasonable_before;
            let ratio = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
            Ok(RefineReport {
                alpha,
                p,
                n_triplets: triplets.len(),
                n_unreasonable_before,
                n_improved,
                n_deteriorated,
                improved_proportion: ratio(n_improved, n_unreasonable_before),
                deteriorated_proportion: ratio(n_deteriorated, n_reasonable),
            })
        })
        .collect()
}

/// Embeddings for a triplet list with a known share of unreasonable triplets.
///
/// Every label starts from its own random unit vector. For each triplet the
/// second paired concept is then rebuilt around the first: close to it for
/// reasonable triplets (cosine ≈ 0.86), anti-aligned for unreasonable ones
/// (cosine ≈ −0.4, below any random outlier similarity). Exactly
/// `round(fraction · n)` triplets, chosen by a seeded shuffle, are made
/// unreasonable. Second paired labels must not appear anywhere else.
pub fn synth_triplet_geometry(
    triplets: &[Triplet],
    dim: usize,
    unreasonable_fraction: f64,
    seed: u64,
) -> Result<(EmbeddingTable, Vec<bool>)> {
    if !(0.0..=1.0).contains(&unreasonable_fraction) {
        return Err(Error::InvalidArgument("fraction must lie in [0, 1]".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for t in triplets {
        for l in [&t.paired.0, &t.paired.1, &t.outlier] {
            if seen.insert(l.clone()) {
                labels.push(l.clone());
            }
        }
    }
    let mut counts = std::collections::HashMap::new();
    for t in triplets {
        for l in [&t.paired.0, &t.paired.1, &t.outlier] {
            *counts.entry(l.as_str()).or_insert(0usize) += 1;
        }
    }
    if let Some(t) = triplets.iter().find(|t| counts[t.paired.1.as_str()] != 1) {
        return Err(Error::InvalidArgument(format!(
            "second paired label {:?} must appear in exactly one triplet",
            t.paired.1
        )));
    }
    let base = synth_nontextual(&labels, dim, seed)?;
    let mut m = base.matrix().clone();
    let n_bad = (unreasonable_fraction * triplets.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut seed::rng_for(seed, b"unreasonable"));
    let mut unreasonable = vec![false; triplets.len()];
    for &i in &order[..n_bad] {
        unreasonable[i] = true;
    }
    for (i, t) in triplets.iter().enumerate() {
        let a = base.row_by_label(&t.paired.0)?.to_vec();
        let noise = unit_gaussian(&mut seed::rng_for(seed, format!("pair:{i}").as_bytes()), dim);
        let (wa, wn) = if unreasonable[i] { (-0.4, 0.84f64.sqrt()) } else { (1.0, 0.6) };
        let mut b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| wa * x + wn * e).collect();
        let n = norm(&b);
        b.iter_mut().for_each(|v| *v /= n);
        let bi = base.index_of(&t.paired.1).expect("collected");
        m.row_mut(bi).copy_from_slice(&b);
    }
    Ok((base.with_matrix(m)?, unreasonable))
}
