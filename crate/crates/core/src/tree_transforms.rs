//! Explicit genealogies and the cut / prune / regularize transforms.
//!
//! Trees here are stored in full, so they are only for small `n`. Cutting
//! at generation `n − K` keeps, for every leaf, its type-`Q` ancestors at
//! generations `n − K + 1..=n`; pruning keeps at most `B` children of each
//! type; regularizing pads every node to exactly `B` children of each type
//! with zero-weight nodes.

use std::ops::Range;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::{perron_frobenius, BranchingModel};
use crate::brw::{check_compatible, spawn_children};
use crate::displacement::DisplacementModel;
use crate::error::{Error, Result};
use crate::pp_stats::{mean_and_stderr, HatFunction, PointMeasure};
use crate::rng::{stream, Purpose};

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub ty: usize,
    /// Zero for the root.
    pub displacement: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub generation: usize,
}

/// A full genealogy to depth `n`, stored generation by generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitTree {
    nodes: Vec<TreeNode>,
    generations: Vec<Range<usize>>,
}

impl ExplicitTree {
    /// Grows a tree consuming random numbers exactly as the streaming
    /// simulator does, so the same stream yields the same walk.
    pub fn grow<R: Rng + ?Sized>(
        bmodel: &BranchingModel,
        dmodel: &DisplacementModel,
        n: usize,
        node_cap: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_compatible(bmodel, dmodel)?;
        let root = bmodel.sample_root(rng);
        let mut nodes = vec![TreeNode {
            ty: root,
            displacement: 0.0,
            parent: None,
            children: Vec::new(),
            generation: 0,
        }];
        let mut generations = vec![0..1];
        let mut offspring = vec![0u32; bmodel.num_types()];
        let mut block = Vec::new();
        let mut kids = Vec::new();
        for generation in 1..=n {
            let start = nodes.len();
            for parent in generations[generation - 1].clone() {
                kids.clear();
                spawn_children(nodes[parent].ty, bmodel, dmodel, rng, &mut offspring, &mut block, |ty, x| {
                    kids.push((ty, x))
                })?;
                for &(ty, displacement) in &kids {
                    let id = nodes.len();
                    nodes.push(TreeNode {
                        ty,
                        displacement,
                        parent: Some(parent),
                        children: Vec::new(),
                        generation,
                    });
                    nodes[parent].children.push(id);
                }
                if nodes.len() > node_cap {
                    return Err(Error::PopulationCap {
                        generation,
                        population: nodes.len(),
                        cap: node_cap,
                    });
                }
            }
            generations.push(start..nodes.len());
        }
        Ok(Self { nodes, generations })
    }

    pub fn depth(&self) -> usize {
        self.generations.len() - 1
    }

    pub fn root_type(&self) -> usize {
        self.nodes[0].ty
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn generation(&self, g: usize) -> Range<usize> {
        self.generations[g].clone()
    }

    /// Positions of every node, accumulated from the root downwards.
    pub fn positions(&self) -> Vec<f64> {
        let mut pos = vec![0.0; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            pos[id] = pos[node.parent.expect("non-root has a parent")] + node.displacement;
        }
        pos
    }

    /// `S_v` recomputed from the stored edge displacements along the
    /// ancestral line, summed root to leaf.
    pub fn path_sum(&self, v: usize) -> f64 {
        let mut line = Vec::new();
        let mut u = v;
        while let Some(p) = self.nodes[u].parent {
            line.push(u);
            u = p;
        }
        line.iter().rev().fold(0.0, |s, &u| s + self.nodes[u].displacement)
    }

    pub fn leaf_positions(&self) -> Vec<f64> {
        let pos = self.positions();
        pos[self.generation(self.depth())].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestNode {
    pub ty: usize,
    pub displacement: f64,
    /// Distance from the subtree root.
    pub level: usize,
    pub children: Vec<usize>,
    /// `A_u`: level-`K` descendants of `u` (itself included at level `K`).
    pub weight: u64,
    /// Inserted by regularization.
    pub added: bool,
}

/// Children are always stored after their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Subtree {
    pub root_type: usize,
    pub nodes: Vec<ForestNode>,
}

impl Subtree {
    fn assign_weights(&mut self, k: usize) {
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            let w = if node.added {
                0
            } else if node.level == k {
                1
            } else {
                node.children.iter().map(|&c| self.nodes[c].weight).sum()
            };
            self.nodes[i].weight = w;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub k: usize,
    pub num_types: usize,
    pub trees: Vec<Subtree>,
}

pub type CutForest = Forest;
pub type WeightedForest = Forest;

impl Forest {
    /// `Σ_u A_u δ_{X_u / b_n}` over heavy-type nodes below the subtree roots.
    pub fn measure(&self, bn: f64) -> PointMeasure {
        let heavy = self.num_types - 1;
        PointMeasure::from_weighted(
            self.trees
                .iter()
                .flat_map(|t| t.nodes.iter().skip(1))
                .filter(|u| u.ty == heavy)
                .map(|u| (u.displacement / bn, u.weight)),
        )
        .expect("displacements are finite")
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

/// Cuts at generation `n − K` and returns the forest with `Ñ_n^{(K)}`.
pub fn cut_forest(tree: &ExplicitTree, k: usize, bn: f64) -> Result<(CutForest, PointMeasure)> {
    let n = tree.depth();
    if k < 1 || k > n {
        return Err(Error::InvalidParameter(format!("cut depth {k} outside 1..={n}")));
    }
    let num_types = tree.nodes.iter().map(|u| u.ty).max().unwrap_or(0) + 1;
    let trees = tree
        .generation(n - k)
        .map(|r| {
            let mut nodes = Vec::new();
            let mut queue = vec![(r, 0usize)];
            let mut head = 0;
            while head < queue.len() {
                let (src, level) = queue[head];
                let id = head;
                head += 1;
                let first_child = queue.len();
                for &c in &tree.nodes[src].children {
                    queue.push((c, level + 1));
                }
                nodes.push(ForestNode {
                    ty: tree.nodes[src].ty,
                    displacement: tree.nodes[src].displacement,
                    level,
                    children: (first_child..queue.len()).collect(),
                    weight: 0,
                    added: false,
                });
                debug_assert_eq!(nodes.len(), id + 1);
            }
            let mut sub = Subtree {
                root_type: tree.nodes[r].ty,
                nodes,
            };
            sub.assign_weights(k);
            sub
        })
        .collect();
    let forest = Forest { k, num_types, trees };
    let measure = forest.measure(bn);
    Ok((forest, measure))
}

/// Which `B` children of each type survive pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    #[default]
    BirthOrder,
    Uniform,
}

/// Keeps at most `B` children of each type at every node and recomputes the
/// weights. The returned measure is `Ñ_n^{(K,B)}`.
pub fn prune_forest<R: Rng + ?Sized>(
    forest: &CutForest,
    b: usize,
    rule: PruneRule,
    bn: f64,
    rng: &mut R,
) -> Result<(WeightedForest, PointMeasure)> {
    if b < 1 {
        return Err(Error::InvalidParameter("fan-out must be at least 1".into()));
    }
    let trees = forest
        .trees
        .iter()
        .map(|t| {
            let mut nodes: Vec<ForestNode> = Vec::with_capacity(t.nodes.len());
            let mut sources = vec![0usize];
            let mut head = 0;
            while head < sources.len() {
                let src = &t.nodes[sources[head]];
                let first_child = sources.len();
                for ty in 0..forest.num_types {
                    let of_type: Vec<usize> = src.children.iter().copied().filter(|&c| t.nodes[c].ty == ty).collect();
                    if of_type.len() <= b {
                        sources.extend(of_type);
                        continue;
                    }
                    match rule {
                        PruneRule::BirthOrder => sources.extend(&of_type[..b]),
                        PruneRule::Uniform => {
                            let mut picked = index::sample(rng, of_type.len(), b).into_vec();
                            picked.sort_unstable();
                            sources.extend(picked.into_iter().map(|i| of_type[i]));
                        }
                    }
                }
                nodes.push(ForestNode {
                    children: (first_child..sources.len()).collect(),
                    weight: 0,
                    ..src.clone()
                });
                head += 1;
            }
            let mut sub = Subtree {
                root_type: t.root_type,
                nodes,
            };
            sub.assign_weights(forest.k);
            sub
        })
        .collect();
    let pruned = Forest {
        k: forest.k,
        num_types: forest.num_types,
        trees,
    };
    let measure = pruned.measure(bn);
    Ok((pruned, measure))
}

/// Pads every node above level `K` to exactly `B` children of each type.
/// Padding children of type `q` take coordinates `c+1..=B` of a fresh block
/// of `B` type-`q` displacements, `c` being the existing count; they and
/// everything below them get weight 0.
pub fn regularize_forest<R: Rng + ?Sized>(
    pruned: &WeightedForest,
    b: usize,
    dmodel: &DisplacementModel,
    rng: &mut R,
) -> Result<WeightedForest> {
    if b < 1 {
        return Err(Error::InvalidParameter("fan-out must be at least 1".into()));
    }
    if dmodel.num_types() != pruned.num_types {
        return Err(Error::InvalidModel("displacement model does not match the forest".into()));
    }
    let k = pruned.k;
    let mut trees = Vec::with_capacity(pruned.trees.len());
    for t in &pruned.trees {
        let mut nodes = vec![ForestNode {
            children: Vec::new(),
            weight: 0,
            ..t.nodes[0].clone()
        }];
        let mut sources: Vec<Option<usize>> = vec![Some(0)];
        let mut head = 0;
        while head < nodes.len() {
            let level = nodes[head].level;
            if level < k {
                let mut children = Vec::new();
                for ty in 0..pruned.num_types {
                    let existing: Vec<usize> = match sources[head] {
                        Some(s) => t.nodes[s].children.iter().copied().filter(|&c| t.nodes[c].ty == ty).collect(),
                        None => Vec::new(),
                    };
                    if existing.len() > b {
                        return Err(Error::InvalidParameter(format!(
                            "node has {} children of type {ty}, more than {b}",
                            existing.len()
                        )));
                    }
                    for &c in &existing {
                        children.push(nodes.len());
                        nodes.push(ForestNode {
                            children: Vec::new(),
                            weight: 0,
                            ..t.nodes[c].clone()
                        });
                        sources.push(Some(c));
                    }
                    if existing.len() < b {
                        let block = dmodel.sample_displacement_block(ty, b, rng)?;
                        for &x in &block[existing.len()..] {
                            children.push(nodes.len());
                            nodes.push(ForestNode {
                                ty,
                                displacement: x,
                                level: level + 1,
                                children: Vec::new(),
                                weight: 0,
                                added: true,
                            });
                            sources.push(None);
                        }
                    }
                }
                nodes[head].children = children;
            }
            head += 1;
        }
        let mut sub = Subtree {
            root_type: t.root_type,
            nodes,
        };
        sub.assign_weights(k);
        trees.push(sub);
    }
    Ok(Forest {
        k,
        num_types: pruned.num_types,
        trees,
    })
}

/// `M(B)` with entries `E[min(Z_1^{(p)}(q), B)]`, and its Perron root.
pub fn truncated_mean_matrix(bmodel: &BranchingModel, b: u32) -> Result<(Vec<Vec<f64>>, f64)> {
    if b < 1 {
        return Err(Error::InvalidParameter("fan-out must be at least 1".into()));
    }
    let q = bmodel.num_types();
    let m: Vec<Vec<f64>> = (0..q)
        .map(|p| {
            let mut row = vec![0.0; q];
            for (v, prob) in bmodel.offspring(p).support() {
                for (slot, &k) in row.iter_mut().zip(&v) {
                    *slot += prob * k.min(b) as f64;
                }
            }
            row
        })
        .collect();
    let rho = perron_frobenius(&m, 1e-12)?.rho;
    Ok((m, rho))
}

/// One line of the convergence study. `b` is `None` for the cut gap
/// `|Ñ_n(f) − Ñ_n^{(K)}(f)|` and `Some(B)` for the prune gap
/// `|Ñ_n^{(K)}(f) − Ñ_n^{(K,B)}(f)|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub k: usize,
    pub b: Option<usize>,
    pub f_id: usize,
    pub mean_abs_gap: f64,
    pub stderr: f64,
}

pub fn gap_rows_to_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("n,K,B,f_id,mean_abs_gap,stderr\n");
    for r in rows {
        let b = r.b.map(|b| b.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{},{}\n", r.n, r.k, b, r.f_id, r.mean_abs_gap, r.stderr));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapStudy<'a> {
    pub n: usize,
    pub ks: &'a [usize],
    pub bs: &'a [usize],
    pub hats: &'a [HatFunction],
    pub trees: usize,
    pub rule: PruneRule,
    pub node_cap: usize,
}

/// Mean absolute cut and prune gaps over independent explicit trees.
pub fn convergence_study(
    bmodel: &BranchingModel,
    dmodel: &DisplacementModel,
    bn: f64,
    study: &GapStudy,
    seed: u64,
) -> Result<Vec<GapRow>> {
    let nk = study.ks.len();
    let nb = study.bs.len();
    let nf = study.hats.len();
    // per tree: [cut gaps (K, f)] ++ [prune gaps (K, B, f)]
    let per_tree: Vec<Vec<f64>> = (0..study.trees)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = stream(seed, i as u64, Purpose::Tree);
            let tree = ExplicitTree::grow(bmodel, dmodel, study.n, study.node_cap, &mut rng)?;
            let mut prune_rng = stream(seed, i as u64, Purpose::Prune);
            let (_, full) = cut_forest(&tree, study.n, bn)?;
            let mut cut_gaps = Vec::with_capacity(nk * nf);
            let mut prune_gaps = Vec::with_capacity(nk * nb * nf);
            for &k in study.ks {
                let (forest, cut) = cut_forest(&tree, k, bn)?;
                for f in study.hats {
                    cut_gaps.push((full.integrate(f) - cut.integrate(f)).abs());
                }
                for &b in study.bs {
                    let (_, pruned) = prune_forest(&forest, b, study.rule, bn, &mut prune_rng)?;
                    for f in study.hats {
                        prune_gaps.push((cut.integrate(f) - pruned.integrate(f)).abs());
                    }
                }
            }
            cut_gaps.extend(prune_gaps);
            Ok(cut_gaps)
        })
        .collect::<Result<_>>()?;
    let column = |j: usize| -> (f64, f64) {
        let xs: Vec<f64> = per_tree.iter().map(|v| v[j]).collect();
        mean_and_stderr(&xs)
    };
    let mut rows = Vec::new();
    for (ki, &k) in study.ks.iter().enumerate() {
        for f_id in 0..nf {
            let (mean_abs_gap, stderr) = column(ki * nf + f_id);
            rows.push(GapRow { n: study.n, k, b: None, f_id, mean_abs_gap, stderr });
        }
    }
    for (ki, &k) in study.ks.iter().enumerate() {
        for (bi, &b) in study.bs.iter().enumerate() {
            for f_id in 0..nf {
                let (mean_abs_gap, stderr) = column(nk * nf + (ki * nb + bi) * nf + f_id);
                rows.push(GapRow { n: study.n, k, b: Some(b), f_id, mean_abs_gap, stderr });
            }
        }
    }
    Ok(rows)
}
