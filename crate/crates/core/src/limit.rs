//! Direct sampling of the limiting Cox cluster process.
//!
//! Given `W`, the limit is `Σ_l Σ_{k ≤ G_l} T_{lk} δ_{s ξ_{lk}}` with
//! `s = (W / (ρ − 1))^{1/α}`, `ξ_l` the points of a Poisson random measure
//! with intensity `λ`, `G_l` the heavy-type offspring count of a
//! `ς`-distributed parent, and `T_l` i.i.d. copies of `Δ_M` given a shared
//! geometric `M`. Only `λ`-points whose largest coordinate exceeds `δ`
//! (before scaling by `s`) are generated.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::Serialize;

use crate::branching::{BranchingModel, GenerationLawTable};
use crate::displacement::{limit_rectangle_mass, pareto_magnitude, with_sign, JointLawQ};
use crate::error::{Error, Result};
use crate::pp_stats::{mean_and_stderr, PointMeasure};
use crate::rng::{stream, Purpose};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_TABLE_CAP: usize = 2048;
/// Tail mass of `M` left out of the sampled range.
pub const GEOMETRIC_RESIDUAL: f64 = 1e-6;
const SIMULATION_CAP: usize = 100_000_000;

/// Where `W` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WSource {
    /// `W ≡ 1`.
    Degenerate,
    /// Resampled uniformly from the given values.
    Empirical(Vec<f64>),
}

impl WSource {
    fn validate(&self) -> Result<()> {
        if let WSource::Empirical(ws) = self {
            if ws.is_empty() {
                return Err(Error::InvalidParameter("empirical W source is empty".into()));
            }
            if let Some(w) = ws.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                return Err(Error::InvalidParameter(format!("W samples must be positive, got {w}")));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WSource::Degenerate => 1.0,
            WSource::Empirical(ws) => ws[rng.random_range(0..ws.len())],
        }
    }

    /// Exact expectation of `g(W)` under the source.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        match self {
            WSource::Degenerate => g(1.0),
            WSource::Empirical(ws) => ws.iter().map(|&w| g(w)).sum::<f64>() / ws.len() as f64,
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            WSource::Degenerate => vec![1.0],
            WSource::Empirical(ws) => ws.clone(),
        }
    }
}

/// Everything needed to sample the limit.
#[derive(Debug, Clone)]
pub struct LimitParams {
    bmodel: BranchingModel,
    joint: JointLawQ,
    alpha: f64,
    beta: f64,
    /// `g_pmf[g] = P(G = g)`.
    g_pmf: Vec<f64>,
    mean_g: f64,
    parent_type: WeightedIndex<f64>,
    g_given_type: Vec<WeightedIndex<f64>>,
    g_size_biased: WeightedIndex<f64>,
    table: GenerationLawTable,
    /// One sampler per table row; the last index is the overflow bucket.
    rows: Vec<WeightedIndex<f64>>,
    m_max: usize,
    w: WSource,
}

impl LimitParams {
    pub fn new(bmodel: &BranchingModel, joint: &JointLawQ, w: WSource, table_cap: usize) -> Result<Self> {
        joint.validate()?;
        w.validate()?;
        let (alpha, beta) = joint.marginal().tail_parameters()?;
        let rho = bmodel.rho();
        let sigma = &bmodel.spectral().sigma;
        let heavy = bmodel.heavy_type();
        let marginals: Vec<Vec<f64>> = (0..bmodel.num_types())
            .map(|q| bmodel.offspring(q).marginal(heavy))
            .collect();
        let len = marginals.iter().map(Vec::len).max().unwrap_or(0);
        let mut g_pmf = vec![0.0; len];
        for (s, pmf) in sigma.iter().zip(&marginals) {
            for (g, p) in pmf.iter().enumerate() {
                g_pmf[g] += s * p;
            }
        }
        if joint.max_block() < len - 1 {
            return Err(Error::BlockTooLarge {
                ty: heavy,
                requested: len - 1,
                available: joint.max_block(),
            });
        }
        let invalid = |e| Error::InvalidModel(format!("cluster size law: {e}"));
        let mean_g = g_pmf.iter().enumerate().map(|(g, p)| g as f64 * p).sum();
        let g_given_type = marginals
            .iter()
            .map(|pmf| WeightedIndex::new(pmf).map_err(invalid))
            .collect::<Result<_>>()?;
        let biased: Vec<f64> = g_pmf.iter().enumerate().map(|(g, p)| g as f64 * p).collect();
        let m_max = (GEOMETRIC_RESIDUAL.ln() / -rho.ln()).ceil() as usize;
        let table = GenerationLawTable::build(bmodel, m_max, table_cap);
        let rows = table
            .rows
            .iter()
            .map(|row| {
                let mut weights = row.pmf.clone();
                weights.push(row.overflow);
                WeightedIndex::new(weights).map_err(invalid)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            bmodel: bmodel.clone(),
            joint: joint.clone(),
            alpha,
            beta,
            g_pmf,
            mean_g,
            parent_type: WeightedIndex::new(sigma).map_err(invalid)?,
            g_given_type,
            g_size_biased: WeightedIndex::new(biased).map_err(invalid)?,
            table,
            rows,
            m_max,
            w,
        })
    }

    pub fn rho(&self) -> f64 {
        self.bmodel.rho()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn joint(&self) -> &JointLawQ {
        &self.joint
    }

    pub fn w_source(&self) -> &WSource {
        &self.w
    }

    pub fn g_pmf(&self) -> &[f64] {
        &self.g_pmf
    }

    pub fn mean_g(&self) -> f64 {
        self.mean_g
    }

    pub fn table(&self) -> &GenerationLawTable {
        &self.table
    }

    /// Largest `M` sampled; `P(M > m_max) < 1e-6`.
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Same model with `W` replaced.
    pub fn with_w(&self, w: WSource) -> Result<Self> {
        w.validate()?;
        Ok(Self { w, ..self.clone() })
    }

    /// `s = (W / (ρ − 1))^{1/α}`.
    pub fn scale_for(&self, w: f64) -> f64 {
        (w / (self.rho() - 1.0)).powf(1.0 / self.alpha)
    }
}

/// `P(M = m) = (ρ − 1) ρ^{-(m+1)}`, resampled above `m_max`.
pub fn sample_m<R: Rng + ?Sized>(params: &LimitParams, rng: &mut R) -> usize {
    let log_rho = params.rho().ln();
    loop {
        let u = 1.0 - rng.random::<f64>();
        let m = (-u.ln() / log_rho).floor() as usize;
        if m <= params.m_max {
            return m;
        }
    }
}

/// One draw of `Δ_m`. Rows in the table are sampled exactly; an overflow
/// draw is completed by simulating until the total reaches the cap, and
/// generations past the table are simulated outright.
pub fn sample_delta<R: Rng + ?Sized>(params: &LimitParams, m: usize, rng: &mut R) -> Result<u64> {
    let heavy = params.bmodel.heavy_type();
    let simulate = |rng: &mut R| -> Result<u64> {
        Ok(params
            .bmodel
            .simulate_generation_counts(heavy, m, SIMULATION_CAP, rng)?
            .iter()
            .sum())
    };
    let Some(sampler) = params.rows.get(m) else {
        return simulate(rng);
    };
    let t = sampler.sample(rng);
    if t < params.table.cap {
        return Ok(t as u64);
    }
    loop {
        let t = simulate(rng)?;
        if t >= params.table.cap as u64 {
            return Ok(t);
        }
    }
}

/// Draws `q ~ ς`, then `G` from the type-`Q` offspring count of a type-`q`
/// parent.
pub fn sample_g<R: Rng + ?Sized>(params: &LimitParams, rng: &mut R) -> usize {
    let q = params.parent_type.sample(rng);
    params.g_given_type[q].sample(rng)
}

/// `(M, (T_1..T_i))`: a shared geometric `M`, then i.i.d. `Δ_M`.
pub fn sample_t<R: Rng + ?Sized>(params: &LimitParams, count: usize, rng: &mut R) -> Result<(usize, Vec<u64>)> {
    if count < 1 {
        return Err(Error::InvalidParameter("need at least one multiplicity".into()));
    }
    let m = sample_m(params, rng);
    let t = (0..count).map(|_| sample_delta(params, m, rng)).collect::<Result<_>>()?;
    Ok((m, t))
}

/// `±δ U^{-1/α}`, positive with probability `β`.
fn signed_pareto<R: Rng + ?Sized>(rng: &mut R, alpha: f64, delta: f64, beta: f64) -> f64 {
    let magnitude = pareto_magnitude(rng, alpha, delta);
    with_sign(rng, magnitude, beta)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Points of the PRM with intensity `λ` restricted to the first `width`
/// coordinates and to `{max_k |x_k| > δ}`, each returned as its first
/// `width` coordinates.
pub fn sample_prm<R: Rng + ?Sized>(joint: &JointLawQ, delta: f64, width: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if width < 1 {
        return Err(Error::InvalidParameter("width must be at least 1".into()));
    }
    let (alpha, beta) = joint.marginal().tail_parameters()?;
    match joint {
        JointLawQ::IidAxes { .. } => {
            let count = poisson(width as f64 * delta.powf(-alpha), rng);
            Ok((0..count)
                .map(|_| {
                    let mut x = vec![0.0; width];
                    let axis = rng.random_range(0..width);
                    x[axis] = signed_pareto(rng, alpha, delta, beta);
                    x
                })
                .collect())
        }
        JointLawQ::DependentRay { coefficients, .. } => {
            if width > coefficients.len() {
                return Err(Error::BlockTooLarge {
                    ty: usize::MAX,
                    requested: width,
                    available: coefficients.len(),
                });
            }
            let count = poisson(delta.powf(-alpha), rng);
            Ok((0..count)
                .map(|_| {
                    let y = signed_pareto(rng, alpha, delta, beta);
                    coefficients[..width].iter().map(|c| c * y).collect()
                })
                .collect())
        }
    }
}

/// One cluster: `Σ_k T_k δ_{scale ξ_k}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSample {
    pub g: usize,
    pub m: usize,
    pub t: Vec<u64>,
    pub xi: Vec<f64>,
    pub scale: f64,
}

impl ClusterSample {
    /// Atoms with a nonzero location.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.xi
            .iter()
            .zip(&self.t)
            .filter(|(x, _)| **x != 0.0)
            .map(|(x, &t)| (self.scale * x, t))
    }
}

/// A draw of the limit, restricted to `|x| > resolution`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NStarSample {
    pub w: f64,
    pub scale: f64,
    pub resolution: f64,
    pub clusters: Vec<ClusterSample>,
}

impl NStarSample {
    pub fn measure(&self) -> PointMeasure {
        PointMeasure::from_weighted(self.clusters.iter().flat_map(|c| c.atoms())).expect("finite locations")
    }

    /// Fails unless `threshold` clears the truncation.
    pub fn check_resolved(&self, threshold: f64) -> Result<()> {
        if threshold > self.resolution {
            Ok(())
        } else {
            Err(Error::Unresolved {
                threshold,
                resolution: self.resolution,
            })
        }
    }

    pub fn counts_above(&self, x: f64) -> Result<u64> {
        self.check_resolved(x)?;
        Ok(self
            .clusters
            .iter()
            .flat_map(|c| c.atoms())
            .filter(|&(loc, _)| loc > x)
            .map(|(_, t)| t)
            .sum())
    }

    pub fn max_location(&self) -> Option<f64> {
        self.clusters
            .iter()
            .flat_map(|c| c.atoms())
            .map(|(loc, _)| loc)
            .max_by(f64::total_cmp)
    }
}

/// Clusters with some coordinate above `δ`, before scaling by `s`.
///
/// For the axes measure a point lands on axis `i` and only counts when
/// `i ≤ G`; thinning leaves `Poisson(E[G] δ^{-α})` clusters with
/// size-biased `G` and the axis uniform in `1..=G`.
pub fn sample_clusters<R: Rng + ?Sized>(params: &LimitParams, delta: f64, scale: f64, rng: &mut R) -> Result<Vec<ClusterSample>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let (alpha, beta) = (params.alpha, params.beta);
    match &params.joint {
        JointLawQ::IidAxes { .. } => {
            let count = poisson(params.mean_g * delta.powf(-alpha), rng);
            (0..count)
                .map(|_| {
                    let g = params.g_size_biased.sample(rng);
                    let (m, t) = sample_t(params, g, rng)?;
                    let mut xi = vec![0.0; g];
                    let axis = rng.random_range(0..g);
                    xi[axis] = signed_pareto(rng, alpha, delta, beta);
                    Ok(ClusterSample { g, m, t, xi, scale })
                })
                .collect()
        }
        JointLawQ::DependentRay { coefficients, .. } => {
            let count = poisson(delta.powf(-alpha), rng);
            (0..count)
                .map(|_| {
                    let g = sample_g(params, rng);
                    let (m, t) = sample_t(params, g, rng)?;
                    let y = signed_pareto(rng, alpha, delta, beta);
                    let xi = coefficients[..g].iter().map(|c| c * y).collect();
                    Ok(ClusterSample { g, m, t, xi, scale })
                })
                .collect()
        }
    }
}

/// One draw of the limit point process.
pub fn sample_n_star<R: Rng + ?Sized>(params: &LimitParams, delta: f64, rng: &mut R) -> Result<NStarSample> {
    let w = params.w.sample(rng);
    let scale = params.scale_for(w);
    let clusters = sample_clusters(params, delta, scale, rng)?;
    Ok(NStarSample {
        w,
        scale,
        resolution: delta * scale,
        clusters,
    })
}

/// Draws `0..count` in parallel, draw `i` from its own stream, mapped by `f`.
pub fn sample_n_star_many<T, F>(params: &LimitParams, delta: f64, count: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, NStarSample) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64, Purpose::LimitSample);
            f(i, sample_n_star(params, delta, &mut rng)?)
        })
        .collect()
}

/// `κ_λ` by summing `λ` over every sign pattern with at least one
/// coordinate above 1, weighted by the law of `G`.
pub fn kappa_lambda(params: &LimitParams) -> Result<f64> {
    let mut total = 0.0;
    for (g, &p) in params.g_pmf.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        if g > 20 {
            return Err(Error::InvalidParameter(format!("cluster size {g} too large to enumerate")));
        }
        let mut inner = 0.0;
        for mask in 1u32..(1 << g) {
            let pattern: Vec<bool> = (0..g).map(|j| mask >> j & 1 == 1).collect();
            inner += limit_rectangle_mass(&params.joint, &pattern)?;
        }
        total += p * inner;
    }
    Ok(total / (params.rho() - 1.0))
}

/// Closed forms: `β E[G] / (ρ − 1)` on the axes, `β / (ρ − 1)` on a ray.
pub fn kappa_lambda_closed_form(params: &LimitParams) -> f64 {
    let per_cluster = match params.joint {
        JointLawQ::IidAxes { .. } => params.beta * params.mean_g,
        JointLawQ::DependentRay { .. } => params.beta,
    };
    per_cluster / (params.rho() - 1.0)
}

/// `E[exp(−κ W x^{-α})]`.
pub fn limit_max_cdf(params: &LimitParams, kappa: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("x must be positive, got {x}")));
    }
    let rate = kappa * x.powf(-params.alpha);
    Ok(params.w.expect(|w| (-rate * w).exp()))
}

/// `P(H = y)` for `y < len`: the mixture `Σ_m P(M = m) P(Δ_m = y)` over the
/// table rows, with whatever lies outside (overflow, deeper rows) returned
/// as the second value.
pub fn h_pmf(params: &LimitParams, len: usize) -> (Vec<f64>, f64) {
    let rho = params.rho();
    let mut pmf = vec![0.0; len];
    // M is resampled above m_max, so its law is renormalized there
    let norm = 1.0 - rho.powi(-(params.m_max as i32 + 1));
    for (m, row) in params.table.rows.iter().enumerate() {
        let weight = (rho - 1.0) * rho.powi(-(m as i32 + 1)) / norm;
        for (slot, p) in pmf.iter_mut().zip(&row.pmf) {
            *slot += weight * p;
        }
    }
    let retained: f64 = pmf.iter().sum();
    (pmf, (1.0 - retained).max(0.0))
}

/// Monte Carlo sizes for [`laplace_functional_limit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaplaceMc {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub value: f64,
    pub stderr: f64,
    /// `I` in `E[exp(−W I)]`.
    pub integral: f64,
    pub integral_stderr: f64,
}

/// `E[exp(−N_*(f))] = E[exp(−W I)]` where `I = ζ^{-α} E[...] / (ρ − 1)`,
/// the expectation taken over `M`, `G`, `Δ_M` and a `λ`-point restricted to
/// `|x| > ζ`. `f` must vanish on `|x| ≤ ζ`.
pub fn laplace_functional_limit<F>(params: &LimitParams, f: F, zeta: f64, mc: LaplaceMc) -> Result<LaplaceEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(zeta > 0.0) {
        return Err(Error::InvalidParameter(format!("test function support must avoid 0, got zeta={zeta}")));
    }
    if mc.samples < 2 {
        return Err(Error::InvalidParameter("need at least two Monte Carlo samples".into()));
    }
    let (alpha, beta) = (params.alpha, params.beta);
    let terms: Vec<f64> = (0..mc.samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = stream(mc.seed, i as u64, Purpose::Laplace);
            let g = sample_g(params, &mut rng);
            let (_, t) = sample_t(params, g, &mut rng)?;
            let y = signed_pareto(&mut rng, alpha, zeta, beta);
            Ok(match &params.joint {
                JointLawQ::IidAxes { .. } => g as f64 * -(-(t[0] as f64) * f(y)).exp_m1(),
                JointLawQ::DependentRay { coefficients, .. } => {
                    let s: f64 = t.iter().zip(coefficients).map(|(&tk, c)| tk as f64 * f(c * y)).sum();
                    -(-s).exp_m1()
                }
            })
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_stderr(&terms);
    let factor = zeta.powf(-alpha) / (params.rho() - 1.0);
    let integral = factor * mean;
    let integral_stderr = factor * se;
    let ws = params.w.values();
    let values: Vec<f64> = ws.iter().map(|w| (-w * integral).exp()).collect();
    let value = values.iter().sum::<f64>() / values.len() as f64;
    let slope = ws.iter().zip(&values).map(|(w, v)| w * v).sum::<f64>() / ws.len() as f64;
    let w_part = if values.len() > 1 { mean_and_stderr(&values).1 } else { 0.0 };
    Ok(LaplaceEstimate {
        value,
        stderr: (slope * integral_stderr).hypot(w_part),
        integral,
        integral_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::{BranchingSpec, OffspringDist};
    use crate::displacement::TailLaw;
    use crate::pp_stats::total_variation;

    fn model(offspring: Vec<OffspringDist>, root: Vec<f64>) -> BranchingModel {
        BranchingModel::new(BranchingSpec {
            offspring,
            root_distribution: root,
        })
        .unwrap()
    }

    fn binary() -> BranchingModel {
        model(vec![OffspringDist::Deterministic { counts: vec![2] }], vec![1.0])
    }

    fn axes(beta: f64) -> JointLawQ {
        JointLawQ::IidAxes {
            marginal: TailLaw::TwoSidedPareto { alpha: 1.0, beta, scale: 1.0 },
        }
    }

    fn ray(c: Vec<f64>) -> JointLawQ {
        JointLawQ::DependentRay {
            marginal: TailLaw::TwoSidedPareto { alpha: 1.0, beta: 1.0, scale: 1.0 },
            coefficients: c,
        }
    }

    #[test]
    fn g_law_examples() {
        let p = LimitParams::new(&binary(), &axes(1.0), WSource::Degenerate, 64).unwrap();
        let mut rng = stream(1, 0, Purpose::Test(30));
        assert!((0..100).all(|_| sample_g(&p, &mut rng) == 2));

        // symmetric two-type model: ς = (1/2, 1/2)
        let two = model(
            vec![
                OffspringDist::Deterministic { counts: vec![3, 1] },
                OffspringDist::Deterministic { counts: vec![1, 3] },
            ],
            vec![0.5, 0.5],
        );
        let p = LimitParams::new(&two, &axes(1.0), WSource::Degenerate, 256).unwrap();
        assert!((p.g_pmf()[1] - 0.5).abs() < 1e-12 && (p.g_pmf()[3] - 0.5).abs() < 1e-12);
        let mut counts = vec![0u64; 4];
        for _ in 0..100_000 {
            counts[sample_g(&p, &mut rng)] += 1;
        }
        assert!(total_variation(&counts, p.g_pmf()) <= 0.01);
    }

    #[test]
    fn t_law_for_binary_tree() {
        let p = LimitParams::new(&binary(), &axes(1.0), WSource::Degenerate, 64).unwrap();
        assert_eq!(p.m_max(), 20);
        let weights: f64 = (0..200).map(|m| 0.5f64.powi(m + 1)).sum();
        assert!((weights - 1.0).abs() < 1e-15);
        let mut rng = stream(2, 0, Purpose::Test(30));
        let mut hits = vec![0u64; 8];
        let draws = 20_000;
        for _ in 0..draws {
            let (m, t) = sample_t(&p, 2, &mut rng).unwrap();
            assert!(t.iter().all(|&x| x == 1 << m));
            if m < 8 {
                hits[m] += 1;
            }
        }
        for (m, &h) in hits.iter().enumerate() {
            let prob = 0.5f64.powi(m as i32 + 1);
            let se = (prob * (1.0 - prob) / draws as f64).sqrt();
            assert!((h as f64 / draws as f64 - prob).abs() < 4.0 * se + 1e-9);
        }
    }

    #[test]
    fn prm_examples() {
        let mut rng = stream(3, 0, Purpose::Test(30));
        let j = axes(1.0);
        let reps = 100_000;
        let counts: Vec<f64> = (0..reps)
            .map(|_| sample_prm(&j, 1.0, 1, &mut rng).unwrap().len() as f64)
            .collect();
        let (mean, se) = mean_and_stderr(&counts);
        assert!((mean - 1.0).abs() < 3.0 * se);

        for _ in 0..200 {
            for x in sample_prm(&j, 0.3, 3, &mut rng).unwrap() {
                assert!(x.iter().any(|v| v.abs() > 0.3));
                assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 1);
            }
            for x in sample_prm(&ray(vec![1.0, 0.5]), 0.3, 2, &mut rng).unwrap() {
                assert!(x[0].abs() > 0.3);
                assert_eq!(x[1] / x[0], 0.5);
            }
        }
        assert!(sample_prm(&j, 0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn kappa_examples() {
        let p = LimitParams::new(&binary(), &axes(1.0), WSource::Degenerate, 64).unwrap();
        assert!((kappa_lambda(&p).unwrap() - 2.0).abs() < 1e-12);
        assert!((kappa_lambda_closed_form(&p) - 2.0).abs() < 1e-12);
        let p0 = LimitParams::new(&binary(), &axes(0.0), WSource::Degenerate, 64).unwrap();
        assert_eq!(kappa_lambda(&p0).unwrap(), 0.0);

        let branching = model(
            vec![OffspringDist::IndependentPerType { pmfs: vec![vec![0.5, 0.0, 0.5]] }],
            vec![1.0],
        );
        let pr = LimitParams::new(&branching, &ray(vec![1.0, 0.5, 0.25]), WSource::Degenerate, 64).unwrap();
        assert!((kappa_lambda(&pr).unwrap() - 1.0).abs() < 1e-12);
        assert!((kappa_lambda_closed_form(&pr) - 1.0).abs() < 1e-12);
        assert!(LimitParams::new(&branching, &ray(vec![1.0, 0.5]), WSource::Degenerate, 64).is_err());
    }

    #[test]
    fn max_cdf_examples() {
        let p = LimitParams::new(&binary(), &axes(1.0), WSource::Degenerate, 64).unwrap();
        assert!((limit_max_cdf(&p, 2.0, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let e = p.with_w(WSource::Empirical(vec![0.5, 1.0, 2.5])).unwrap();
        let mut last = 0.0;
        for k in -6..=12 {
            let v = limit_max_cdf(&e, 2.0, 2f64.powi(k)).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(last > 0.999);
        assert!(limit_max_cdf(&e, 2.0, 1e-6).unwrap() < 1e-6);
        assert!(limit_max_cdf(&p, 2.0, 0.0).is_err());
    }

    #[test]
    fn n_star_structure() {
        let branching = model(
            vec![OffspringDist::IndependentPerType { pmfs: vec![vec![0.5, 0.0, 0.5]] }],
            vec![1.0],
        );
        let p = LimitParams::new(&branching, &axes(0.7), WSource::Empirical(vec![0.3, 1.7]), 256).unwrap();
        let mut rng = stream(4, 0, Purpose::Test(30));
        for _ in 0..100 {
            let s = sample_n_star(&p, 0.05, &mut rng).unwrap();
            for c in &s.clusters {
                assert!(c.t.iter().all(|&t| t >= 1));
                assert_eq!(c.atoms().count(), 1);
            }
            assert!(s.counts_above(s.resolution).is_err());
        }
    }

    #[test]
    fn scaling_w_scales_locations() {
        let p = LimitParams::new(&binary(), &axes(0.5), WSource::Empirical(vec![0.4, 1.3]), 64).unwrap();
        let c: f64 = 3.0;
        let q = p.with_w(WSource::Empirical(vec![0.4 * c, 1.3 * c])).unwrap();
        let a = sample_n_star(&p, 0.05, &mut stream(5, 0, Purpose::Test(30))).unwrap();
        let b = sample_n_star(&q, 0.05, &mut stream(5, 0, Purpose::Test(30))).unwrap();
        let (ma, mb) = (a.measure(), b.measure());
        assert_eq!(ma.atoms().len(), mb.atoms().len());
        for ((x, s), (y, t)) in ma.atoms().iter().zip(mb.atoms()) {
            assert_eq!(s, t);
            assert!((x * c - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn zero_test_function_gives_one() {
        let p = LimitParams::new(&binary(), &axes(1.0), WSource::Empirical(vec![0.5, 2.0]), 64).unwrap();
        let est = laplace_functional_limit(&p, |_| 0.0, 0.5, LaplaceMc { samples: 100, seed: 1 }).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(laplace_functional_limit(&p, |_| 0.0, 0.0, LaplaceMc { samples: 100, seed: 1 }).is_err());
    }

    #[test]
    fn h_pmf_for_binary_tree() {
        let p = LimitParams::new(&binary(), &axes(1.0), WSource::Degenerate, 64).unwrap();
        let (pmf, rest) = h_pmf(&p, 64);
        for m in 0..6 {
            let expected = 0.5f64.powi(m + 1) / (1.0 - 0.5f64.powi(21));
            assert!((pmf[1 << m] - expected).abs() < 1e-15);
        }
        assert!((pmf.iter().sum::<f64>() + rest - 1.0).abs() < 1e-12);
    }
}
