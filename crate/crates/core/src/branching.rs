//! Multi-type Galton-Watson offspring laws, the spectral data of the mean
//! matrix, and exact laws of generation totals.
//!
//! Types are indexed `0..Q`; the last index `Q − 1` is always the
//! heavy-tailed type.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;
const PF_MAX_ITER: usize = 100_000;

/// Offspring law of one parent type. Every support vector has length `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OffspringDist {
    /// Always the same offspring vector.
    Deterministic { counts: Vec<u32> },
    /// Independent counts per child type; `pmfs[q][k - 1] = P(k children of type q)`.
    IndependentPerType { pmfs: Vec<Vec<f64>> },
    /// Arbitrary finite joint law.
    ExplicitTable { table: Vec<(Vec<u32>, f64)> },
}

impl OffspringDist {
    fn dimension(&self) -> usize {
        match self {
            OffspringDist::Deterministic { counts } => counts.len(),
            OffspringDist::IndependentPerType { pmfs } => pmfs.len(),
            OffspringDist::ExplicitTable { table } => table.first().map_or(0, |(v, _)| v.len()),
        }
    }

    /// Joint support with probabilities (zero-probability vectors omitted).
    pub fn support(&self) -> Vec<(Vec<u32>, f64)> {
        match self {
            OffspringDist::Deterministic { counts } => vec![(counts.clone(), 1.0)],
            OffspringDist::ExplicitTable { table } => {
                table.iter().filter(|(_, p)| *p > 0.0).cloned().collect()
            }
            OffspringDist::IndependentPerType { pmfs } => {
                let mut out: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
                for pmf in pmfs {
                    let mut next = Vec::new();
                    for (prefix, p) in &out {
                        for (i, &pk) in pmf.iter().enumerate() {
                            if pk > 0.0 {
                                let mut v = prefix.clone();
                                v.push(i as u32 + 1);
                                next.push((v, p * pk));
                            }
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }

    /// `pmf[k] = P(k children of type q)`.
    pub fn marginal(&self, q: usize) -> Vec<f64> {
        let mut pmf = Vec::new();
        for (v, p) in self.support() {
            let k = v[q] as usize;
            if pmf.len() <= k {
                pmf.resize(k + 1, 0.0);
            }
            pmf[k] += p;
        }
        pmf
    }
}

/// Raw model definition as read from a config file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingSpec {
    pub offspring: Vec<OffspringDist>,
    pub root_distribution: Vec<f64>,
}

#[derive(Debug, Clone)]
enum ParentSampler {
    Fixed(Vec<u32>),
    Independent(Vec<WeightedIndex<f64>>),
    Table(WeightedIndex<f64>, Vec<Vec<u32>>),
}

/// A validated supercritical, leafless, finite-support branching model.
#[derive(Debug, Clone)]
pub struct BranchingModel {
    spec: BranchingSpec,
    samplers: Vec<ParentSampler>,
    root_sampler: WeightedIndex<f64>,
    spectral: SpectralData,
}

/// Perron-Frobenius data of the mean matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub mean_matrix: Vec<Vec<f64>>,
    pub rho: f64,
    /// Left eigenvector, `ς·1 = 1`.
    pub sigma: Vec<f64>,
    /// Right eigenvector, `ς·ϑ = 1`.
    pub theta: Vec<f64>,
}

impl BranchingModel {
    pub fn new(spec: BranchingSpec) -> Result<Self> {
        let report = validate_model(&spec);
        if !report.accepted {
            return Err(Error::InvalidModel(report.problems.join("; ")));
        }
        let samplers = spec
            .offspring
            .iter()
            .map(|dist| -> Result<ParentSampler> {
                Ok(match dist {
                    OffspringDist::Deterministic { counts } => ParentSampler::Fixed(counts.clone()),
                    OffspringDist::IndependentPerType { pmfs } => ParentSampler::Independent(
                        pmfs.iter()
                            .map(|p| WeightedIndex::new(p).map_err(|e| Error::InvalidModel(e.to_string())))
                            .collect::<Result<_>>()?,
                    ),
                    OffspringDist::ExplicitTable { table } => {
                        let kept: Vec<_> = table.iter().filter(|(_, p)| *p > 0.0).collect();
                        let wi = WeightedIndex::new(kept.iter().map(|(_, p)| *p))
                            .map_err(|e| Error::InvalidModel(e.to_string()))?;
                        ParentSampler::Table(wi, kept.iter().map(|(v, _)| v.clone()).collect())
                    }
                })
            })
            .collect::<Result<_>>()?;
        let root_sampler = WeightedIndex::new(&spec.root_distribution)
            .map_err(|e| Error::InvalidModel(e.to_string()))?;
        let spectral = report.spectral.expect("accepted reports carry spectral data");
        Ok(Self {
            spec,
            samplers,
            root_sampler,
            spectral,
        })
    }

    pub fn num_types(&self) -> usize {
        self.spec.offspring.len()
    }

    /// Index of the heavy-tailed type.
    pub fn heavy_type(&self) -> usize {
        self.num_types() - 1
    }

    pub fn spec(&self) -> &BranchingSpec {
        &self.spec
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn rho(&self) -> f64 {
        self.spectral.rho
    }

    pub fn offspring(&self, parent: usize) -> &OffspringDist {
        &self.spec.offspring[parent]
    }

    pub fn max_offspring(&self) -> u32 {
        self.spec
            .offspring
            .iter()
            .flat_map(|d| d.support())
            .flat_map(|(v, _)| v)
            .max()
            .unwrap_or(0)
    }

    pub fn sample_root<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.root_sampler.sample(rng)
    }

    /// Draws an offspring vector for a parent of type `parent` into `out`.
    pub fn sample_offspring_into<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R, out: &mut [u32]) {
        match &self.samplers[parent] {
            ParentSampler::Fixed(v) => out.copy_from_slice(v),
            ParentSampler::Independent(per_type) => {
                for (slot, wi) in out.iter_mut().zip(per_type) {
                    *slot = wi.sample(rng) as u32 + 1;
                }
            }
            ParentSampler::Table(wi, vectors) => out.copy_from_slice(&vectors[wi.sample(rng)]),
        }
    }

    pub fn sample_offspring<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R) -> Vec<u32> {
        let mut out = vec![0; self.num_types()];
        self.sample_offspring_into(parent, rng, &mut out);
        out
    }

    /// Per-type counts at generation `m` of a tree rooted at `root`, by
    /// forward simulation of the count vector.
    pub fn simulate_generation_counts<R: Rng + ?Sized>(
        &self,
        root: usize,
        m: usize,
        cap: usize,
        rng: &mut R,
    ) -> Result<Vec<u64>> {
        let q = self.num_types();
        let mut counts = vec![0u64; q];
        counts[root] = 1;
        let mut buf = vec![0u32; q];
        for generation in 1..=m {
            let mut next = vec![0u64; q];
            for (parent, &n) in counts.iter().enumerate() {
                for _ in 0..n {
                    self.sample_offspring_into(parent, rng, &mut buf);
                    for (slot, &k) in next.iter_mut().zip(&buf) {
                        *slot += k as u64;
                    }
                }
            }
            let total: u64 = next.iter().sum();
            if total as usize > cap {
                return Err(Error::PopulationCap {
                    generation,
                    population: total as usize,
                    cap,
                });
            }
            counts = next;
        }
        Ok(counts)
    }
}

/// Mean matrix `M[p][q] = E[children of type q | parent of type p]`.
pub fn mean_matrix(offspring: &[OffspringDist]) -> Vec<Vec<f64>> {
    offspring
        .iter()
        .map(|dist| {
            let mut row = vec![0.0; dist.dimension()];
            for (v, p) in dist.support() {
                for (slot, k) in row.iter_mut().zip(v) {
                    *slot += p * k as f64;
                }
            }
            row
        })
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    (0..m.len())
        .map(|j| v.iter().zip(m).map(|(a, row)| a * row[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dominant eigenvector by power iteration, normalized to unit sum.
fn power_iterate<F>(dim: usize, apply: F, tol: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut v = vec![1.0 / dim as f64; dim];
    let mut prev_lambda = f64::NAN;
    for _ in 0..PF_MAX_ITER {
        let w = apply(&v);
        let s: f64 = w.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidModel("mean matrix annihilates the positive cone".into()));
        }
        let lambda = s; // v sums to one
        let next: Vec<f64> = w.iter().map(|x| x / s).collect();
        let shift = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if (lambda - prev_lambda).abs() <= tol * lambda && shift <= tol {
            return Ok(v);
        }
        prev_lambda = lambda;
    }
    Err(Error::NoConvergence {
        iterations: PF_MAX_ITER,
    })
}

/// Perron-Frobenius eigenvalue and eigenvectors of a nonnegative matrix.
pub fn perron_frobenius(m: &[Vec<f64>], tol: f64) -> Result<SpectralData> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let dim = m.len();
    if dim == 0 || m.iter().any(|row| row.len() != dim) {
        return Err(Error::InvalidParameter("mean matrix must be square and nonempty".into()));
    }
    for (row, r) in m.iter().enumerate() {
        for (col, &x) in r.iter().enumerate() {
            if x < 0.0 || !x.is_finite() {
                return Err(Error::NegativeEntry { row, col });
            }
        }
    }
    let right = power_iterate(dim, |v| mat_vec(m, v), tol)?;
    let sigma = power_iterate(dim, |v| vec_mat(v, m), tol)?;
    if right.iter().chain(&sigma).any(|&x| x <= 0.0) {
        return Err(Error::InvalidModel("mean matrix is not primitive".into()));
    }
    let norm = dot(&sigma, &right);
    let theta: Vec<f64> = right.iter().map(|x| x / norm).collect();
    let rho = dot(&sigma, &mat_vec(m, &theta)) / dot(&sigma, &theta);
    Ok(SpectralData {
        mean_matrix: m.to_vec(),
        rho,
        sigma,
        theta,
    })
}

/// Outcome of the model checks. `accepted` gates simulation.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub num_types: usize,
    pub no_leaf: bool,
    /// `max k·log k` over all offspring components in the support.
    pub zlogz_bound: f64,
    pub positively_regular: bool,
    pub rho: Option<f64>,
    pub supercritical: bool,
    pub spectral: Option<SpectralData>,
    pub problems: Vec<String>,
    pub accepted: bool,
}

/// Structural checks, Kesten-Stigum moment bound, positive regularity and
/// supercriticality.
pub fn validate_model(spec: &BranchingSpec) -> ValidationReport {
    let q = spec.offspring.len();
    let mut problems = Vec::new();
    if q == 0 {
        problems.push("model has no types".to_string());
    }
    if spec.root_distribution.len() != q {
        problems.push(format!(
            "root distribution has {} entries for {q} types",
            spec.root_distribution.len()
        ));
    }
    if spec.root_distribution.iter().any(|&p| p < 0.0)
        || (spec.root_distribution.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
    {
        problems.push("root distribution is not a probability vector".to_string());
    }

    let mut no_leaf = true;
    let mut zlogz_bound: f64 = 0.0;
    for (parent, dist) in spec.offspring.iter().enumerate() {
        if dist.dimension() != q {
            problems.push(format!("parent type {parent}: offspring vectors must have length {q}"));
            continue;
        }
        let total: f64 = match dist {
            OffspringDist::Deterministic { .. } => 1.0,
            OffspringDist::IndependentPerType { pmfs } => {
                for (child, pmf) in pmfs.iter().enumerate() {
                    let s: f64 = pmf.iter().sum();
                    if pmf.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > PROB_TOL {
                        problems.push(format!("parent type {parent}, child type {child}: pmf sums to {s}"));
                    }
                }
                1.0
            }
            OffspringDist::ExplicitTable { table } => {
                if table.iter().any(|(v, p)| v.len() != q || *p < 0.0) {
                    problems.push(format!("parent type {parent}: malformed offspring table"));
                }
                table.iter().map(|(_, p)| p).sum()
            }
        };
        if (total - 1.0).abs() > PROB_TOL {
            problems.push(format!("parent type {parent}: probabilities sum to {total}"));
        }
        for (v, _) in dist.support() {
            if let Some(child) = v.iter().position(|&k| k == 0) {
                no_leaf = false;
                problems.push(format!(
                    "parent type {parent}: leaf in support, vector {v:?} has no child of type {child}"
                ));
            }
            for &k in &v {
                if k > 1 {
                    zlogz_bound = zlogz_bound.max(k as f64 * (k as f64).ln());
                }
            }
        }
    }

    let structural_ok = problems.is_empty();
    let mut spectral = None;
    let mut positively_regular = false;
    if structural_ok {
        let m = mean_matrix(&spec.offspring);
        positively_regular = m.iter().flatten().all(|&x| x >= 1.0);
        match perron_frobenius(&m, 1e-13) {
            Ok(s) => spectral = Some(s),
            Err(e) => problems.push(format!("spectral decomposition failed: {e}")),
        }
    }
    let rho = spectral.as_ref().map(|s| s.rho);
    let supercritical = rho.is_some_and(|r| r > 1.0 + 1e-9);
    if let Some(r) = rho {
        if !supercritical {
            problems.push(format!("rho = {r} is not supercritical"));
        }
    }
    if structural_ok && !positively_regular {
        problems.push("mean matrix has an entry below 1".to_string());
    }
    let accepted = problems.is_empty();
    ValidationReport {
        num_types: q,
        no_leaf,
        zlogz_bound,
        positively_regular,
        rho,
        supercritical,
        spectral,
        problems,
        accepted,
    }
}

/// Exact law of the total generation-`m` population, truncated at `cap`:
/// `pmf[t] = P(total = t)` for `t < cap`, the rest in `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub pmf: Vec<f64>,
    pub overflow: f64,
}

impl GenerationRow {
    pub fn retained(&self) -> f64 {
        1.0 - self.overflow
    }
}

fn convolve_truncated(a: &[f64], b: &[f64], cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; cap];
    let bounds = |v: &[f64]| -> Option<(usize, usize)> {
        let lo = v.iter().position(|&x| x > 0.0)?;
        let hi = v.iter().rposition(|&x| x > 0.0)?;
        Some((lo, hi))
    };
    let (Some((alo, ahi)), Some((blo, bhi))) = (bounds(a), bounds(b)) else {
        return out;
    };
    for i in alo..=ahi {
        let ai = a[i];
        if ai == 0.0 || i + blo >= cap {
            continue;
        }
        let jmax = bhi.min(cap - 1 - i);
        for j in blo..=jmax {
            out[i + j] += ai * b[j];
        }
    }
    out
}

/// Rows `0..=m_max` of the total-population law for every root type,
/// computed by decomposing at the root: the generation-`(m+1)` total from a
/// type-`p` root is the sum, over the root's children, of independent
/// generation-`m` totals rooted at each child's type.
fn total_law_rows(model: &BranchingModel, m_max: usize, cap: usize) -> Vec<Vec<Vec<f64>>> {
    let q = model.num_types();
    let supports: Vec<Vec<(Vec<u32>, f64)>> = (0..q).map(|p| model.offspring(p).support()).collect();
    let max_k: Vec<usize> = (0..q)
        .map(|c| {
            supports
                .iter()
                .flatten()
                .map(|(v, _)| v[c] as usize)
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut point_mass = vec![0.0; cap];
    if cap > 1 {
        point_mass[1] = 1.0;
    }
    // rows[m][p] = law of the generation-m total from a type-p root
    let mut rows: Vec<Vec<Vec<f64>>> = vec![vec![point_mass; q]];
    for _ in 0..m_max {
        let current = rows.last().unwrap();
        // powers[c][k] = k-fold convolution of the type-c law
        let powers: Vec<Vec<Vec<f64>>> = (0..q)
            .map(|c| {
                let mut pw = vec![Vec::new(), current[c].clone()];
                for k in 2..=max_k[c] {
                    let next = convolve_truncated(&pw[k - 1], &current[c], cap);
                    pw.push(next);
                }
                pw
            })
            .collect();
        let next: Vec<Vec<f64>> = (0..q)
            .map(|p| {
                let mut acc = vec![0.0; cap];
                for (v, prob) in &supports[p] {
                    let mut law = powers[0][v[0] as usize].clone();
                    for c in 1..q {
                        law = convolve_truncated(&law, &powers[c][v[c] as usize], cap);
                    }
                    for (slot, x) in acc.iter_mut().zip(law) {
                        *slot += prob * x;
                    }
                }
                acc
            })
            .collect();
        rows.push(next);
    }
    rows
}

fn row_from(generation: usize, pmf: Vec<f64>) -> GenerationRow {
    let retained: f64 = pmf.iter().sum();
    GenerationRow {
        generation,
        pmf,
        overflow: (1.0 - retained).max(0.0),
    }
}

/// Exact law of `Σ_q Z_m(q)` for a tree rooted at the heavy type. Fails if
/// `cap` retains less than 99% of the mass.
pub fn generation_total_pmf(model: &BranchingModel, m: usize, cap: usize) -> Result<GenerationRow> {
    if cap < 1 {
        return Err(Error::InvalidParameter("cap must be at least 1".into()));
    }
    let rows = total_law_rows(model, m, cap);
    let row = row_from(m, rows[m][model.heavy_type()].clone());
    if row.retained() < 0.99 {
        return Err(Error::CapTooSmall {
            generation: m,
            cap,
            retained: row.retained(),
        });
    }
    Ok(row)
}

/// Rows of the total-population law for a heavy-type root. Rows are kept
/// while the cap retains at least 99% of the mass; deeper generations are
/// left to simulation.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationLawTable {
    pub cap: usize,
    pub requested_depth: usize,
    pub rows: Vec<GenerationRow>,
}

impl GenerationLawTable {
    pub fn build(model: &BranchingModel, m_max: usize, cap: usize) -> Self {
        let rows = total_law_rows(model, m_max, cap);
        let heavy = model.heavy_type();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(m, per_root)| row_from(m, per_root[heavy].clone()))
            .take_while(|row| row.retained() >= 0.99)
            .collect();
        Self {
            cap,
            requested_depth: m_max,
            rows,
        }
    }

    pub fn row(&self, m: usize) -> Option<&GenerationRow> {
        self.rows.get(m)
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }
}
