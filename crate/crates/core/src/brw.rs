//! Generation-at-a-time simulation of the branching random walk.
//!
//! Only the current generation is kept. Each particle carries the part of
//! its ancestry the extremal statistics need: the heavy-type displacements
//! above the record threshold, and per-type peak ancestral displacement
//! moduli (the top two for the heavy type) for the one-large-jump events.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;

use crate::branching::BranchingModel;
use crate::displacement::{DisplacementModel, ScalingSequence};
use crate::error::{Error, Result};
use crate::pp_stats::PointMeasure;
use crate::rng::{stream, Purpose};

pub const DEFAULT_POPULATION_CAP: usize = 2_000_000;
pub const DEFAULT_RECORD_FRACTION: f64 = 0.01;

/// Per-run constants of a replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaConfig {
    pub n: usize,
    pub bn: f64,
    /// Heavy-type displacements with modulus above this (absolute units)
    /// are kept in the particle's record.
    pub record_threshold: f64,
    pub population_cap: usize,
}

impl ReplicaConfig {
    /// `b_n` from the heavy marginal; record threshold `η · b_n`.
    pub fn new(
        bmodel: &BranchingModel,
        dmodel: &DisplacementModel,
        n: usize,
        eta: f64,
        population_cap: usize,
    ) -> Result<Self> {
        check_compatible(bmodel, dmodel)?;
        if n == 0 {
            return Err(Error::InvalidParameter("generation must be at least 1".into()));
        }
        if !(eta > 0.0) {
            return Err(Error::InvalidParameter(format!("record fraction must be positive, got {eta}")));
        }
        let bn = ScalingSequence::new(bmodel.rho(), *dmodel.heavy.marginal())?.bn(n);
        Ok(Self {
            n,
            bn,
            record_threshold: eta * bn,
            population_cap,
        })
    }
}

/// The two models must agree on `Q`, and a ray law must cover the largest
/// heavy-type sibling block.
pub fn check_compatible(bmodel: &BranchingModel, dmodel: &DisplacementModel) -> Result<()> {
    if bmodel.num_types() != dmodel.num_types() {
        return Err(Error::InvalidModel(format!(
            "branching model has {} types, displacement model {}",
            bmodel.num_types(),
            dmodel.num_types()
        )));
    }
    let heavy = bmodel.heavy_type();
    let largest = (0..bmodel.num_types())
        .flat_map(|p| bmodel.offspring(p).support())
        .map(|(v, _)| v[heavy] as usize)
        .max()
        .unwrap_or(0);
    if largest > dmodel.heavy.max_block() {
        return Err(Error::BlockTooLarge {
            ty: heavy,
            requested: largest,
            available: dmodel.heavy.max_block(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub ty: usize,
    pub position: f64,
    /// Ancestral heavy-type displacements above the record threshold.
    pub heavy_record: SmallVec<[f64; 2]>,
    /// `peaks[p]` for `p < Q − 1`: largest ancestral `|X|` of type `p`;
    /// `peaks[Q − 1]`, `peaks[Q]`: the two largest heavy-type `|X|`.
    pub peaks: SmallVec<[f64; 4]>,
}

impl Particle {
    pub fn root(ty: usize, num_types: usize) -> Self {
        Self {
            ty,
            position: 0.0,
            heavy_record: SmallVec::new(),
            peaks: SmallVec::from_elem(0.0, num_types + 1),
        }
    }

    /// Number of ancestral displacements of type `ty` with modulus above
    /// `level`, saturating at 1 for light types and 2 for the heavy type.
    pub fn exceedances(&self, ty: usize, level: f64) -> u32 {
        let heavy = self.peaks.len() - 2;
        if ty < heavy {
            (self.peaks[ty] > level) as u32
        } else {
            (self.peaks[heavy] > level) as u32 + (self.peaks[heavy + 1] > level) as u32
        }
    }

    fn child(&self, ty: usize, displacement: f64, heavy: usize, record_threshold: f64) -> Self {
        let mut child = Self {
            ty,
            position: self.position + displacement,
            heavy_record: self.heavy_record.clone(),
            peaks: self.peaks.clone(),
        };
        let modulus = displacement.abs();
        if ty == heavy {
            if modulus > record_threshold {
                child.heavy_record.push(displacement);
            }
            if modulus > child.peaks[heavy] {
                child.peaks[heavy + 1] = child.peaks[heavy];
                child.peaks[heavy] = modulus;
            } else if modulus > child.peaks[heavy + 1] {
                child.peaks[heavy + 1] = modulus;
            }
        } else if modulus > child.peaks[ty] {
            child.peaks[ty] = modulus;
        }
        child
    }
}

/// Draws one parent's offspring vector and displacement blocks, calling
/// `emit(child_type, displacement)` in birth order (child types ascending,
/// block order within a type). Explicit trees use the same routine so both
/// representations consume random numbers identically.
pub(crate) fn spawn_children<R, F>(
    parent_ty: usize,
    bmodel: &BranchingModel,
    dmodel: &DisplacementModel,
    rng: &mut R,
    offspring: &mut [u32],
    block: &mut Vec<f64>,
    mut emit: F,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(usize, f64),
{
    bmodel.sample_offspring_into(parent_ty, rng, offspring);
    for (ty, &k) in offspring.iter().enumerate() {
        block.resize(k as usize, 0.0);
        dmodel.sample_block_into(ty, rng, block)?;
        for &x in block.iter() {
            emit(ty, x);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationState {
    pub generation: usize,
    pub particles: Vec<Particle>,
    pub counts: Vec<u64>,
}

impl GenerationState {
    pub fn root(ty: usize, num_types: usize) -> Self {
        let mut counts = vec![0; num_types];
        counts[ty] = 1;
        Self {
            generation: 0,
            particles: vec![Particle::root(ty, num_types)],
            counts,
        }
    }

    pub fn population(&self) -> usize {
        self.particles.len()
    }
}

/// Advances one generation.
pub fn step_generation<R: Rng + ?Sized>(
    state: &GenerationState,
    bmodel: &BranchingModel,
    dmodel: &DisplacementModel,
    cfg: &ReplicaConfig,
    rng: &mut R,
) -> Result<GenerationState> {
    let q = bmodel.num_types();
    let heavy = q - 1;
    let generation = state.generation + 1;
    let mut particles = Vec::with_capacity(state.particles.len() * 2);
    let mut counts = vec![0u64; q];
    let mut offspring = vec![0u32; q];
    let mut block = Vec::new();
    for parent in &state.particles {
        spawn_children(parent.ty, bmodel, dmodel, rng, &mut offspring, &mut block, |ty, x| {
            particles.push(parent.child(ty, x, heavy, cfg.record_threshold));
            counts[ty] += 1;
        })?;
        if particles.len() > cfg.population_cap {
            return Err(Error::PopulationCap {
                generation,
                population: particles.len(),
                cap: cfg.population_cap,
            });
        }
    }
    Ok(GenerationState {
        generation,
        particles,
        counts,
    })
}

/// Everything a replica reports about generation `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult {
    pub n: usize,
    pub bn: f64,
    /// `N_n`: every particle at `S_v / b_n`.
    pub points: PointMeasure,
    /// `Ñ_n` restricted to `|x| > record_threshold / b_n`.
    pub single_jump: PointMeasure,
    /// `M_n` in absolute units.
    pub max_position: f64,
    pub total: u64,
    pub counts: Vec<u64>,
    /// `|D_n| / ρ^n`.
    pub w_hat: f64,
    /// Peaks over all leaves, laid out as [`Particle::peaks`].
    pub leaf_peaks: Vec<f64>,
}

impl ReplicaResult {
    pub fn max_over_bn(&self) -> f64 {
        self.max_position / self.bn
    }
}

/// Simulates one replica to generation `cfg.n`.
pub fn run_replica<R: Rng + ?Sized>(
    bmodel: &BranchingModel,
    dmodel: &DisplacementModel,
    cfg: &ReplicaConfig,
    rng: &mut R,
) -> Result<ReplicaResult> {
    let q = bmodel.num_types();
    let mut state = GenerationState::root(bmodel.sample_root(rng), q);
    for _ in 0..cfg.n {
        state = step_generation(&state, bmodel, dmodel, cfg, rng)?;
    }
    Ok(summarize(state, bmodel.rho(), cfg))
}

fn summarize(state: GenerationState, rho: f64, cfg: &ReplicaConfig) -> ReplicaResult {
    let bn = cfg.bn;
    let mut leaf_peaks = vec![0.0f64; state.counts.len() + 1];
    let mut max_position = f64::NEG_INFINITY;
    for p in &state.particles {
        max_position = max_position.max(p.position);
        for (acc, &v) in leaf_peaks.iter_mut().zip(&p.peaks) {
            *acc = acc.max(v);
        }
    }
    let points = PointMeasure::from_points(state.particles.iter().map(|p| p.position / bn))
        .expect("positions are finite");
    let single_jump = PointMeasure::from_points(
        state
            .particles
            .iter()
            .flat_map(|p| p.heavy_record.iter().map(|x| x / bn)),
    )
    .expect("displacements are finite");
    let total = state.particles.len() as u64;
    ReplicaResult {
        n: cfg.n,
        bn,
        points,
        single_jump,
        max_position,
        total,
        w_hat: total as f64 / rho.powi(cfg.n as i32),
        counts: state.counts,
        leaf_peaks,
    }
}

/// Flags `A_n^{(p)}(θ)` violated, per type: for light types, some leaf has an
/// ancestral type-`p` displacement with modulus above `θ b_n / n`; for the
/// heavy type, some leaf has at least two such heavy ancestors.
pub fn one_jump_events(result: &ReplicaResult, theta: f64, zeta: f64) -> Result<Vec<bool>> {
    if !(theta > 0.0 && theta < zeta / 2.0) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, zeta/2), got {theta}")));
    }
    let level = theta * result.bn / result.n as f64;
    let heavy = result.leaf_peaks.len() - 2;
    Ok((0..=heavy)
        .map(|p| {
            if p < heavy {
                result.leaf_peaks[p] > level
            } else {
                result.leaf_peaks[heavy + 1] > level
            }
        })
        .collect())
}

/// Runs replicas `0..count` in parallel, mapping each result through `f`.
/// Output order is replica order, independent of scheduling.
pub fn run_replicas<T, F>(
    bmodel: &BranchingModel,
    dmodel: &DisplacementModel,
    cfg: &ReplicaConfig,
    count: usize,
    seed: u64,
    f: F,
) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize, ReplicaResult) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64, Purpose::Replica);
            run_replica(bmodel, dmodel, cfg, &mut rng).map(|r| f(i, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootChoice {
    FromDistribution,
    Fixed(usize),
}

/// Samples `|D_depth| / ρ^depth` from plain trees (no displacements).
pub fn estimate_w(
    bmodel: &BranchingModel,
    depth: usize,
    reps: usize,
    root: RootChoice,
    seed: u64,
    population_cap: usize,
) -> Result<Vec<f64>> {
    let rho = bmodel.rho();
    if rho.powi(depth as i32) > 1e6 {
        return Err(Error::InvalidParameter(format!(
            "rho^depth = {} exceeds 1e6",
            rho.powi(depth as i32)
        )));
    }
    if let RootChoice::Fixed(ty) = root {
        if ty >= bmodel.num_types() {
            return Err(Error::InvalidParameter(format!("root type {ty} out of range")));
        }
    }
    let norm = rho.powi(depth as i32);
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64, Purpose::KestenStigum);
            let ty = match root {
                RootChoice::FromDistribution => bmodel.sample_root(&mut rng),
                RootChoice::Fixed(ty) => ty,
            };
            let counts = bmodel.simulate_generation_counts(ty, depth, population_cap, &mut rng)?;
            Ok(counts.iter().sum::<u64>() as f64 / norm)
        })
        .collect()
}
