//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branching::{BranchingModel, BranchingSpec};
use crate::brw::{check_compatible, DEFAULT_POPULATION_CAP, DEFAULT_RECORD_FRACTION};
use crate::displacement::{DisplacementModel, JointLawQ, TailLaw};
use crate::error::{Error, Result};
use crate::limit::{DEFAULT_DELTA, DEFAULT_TABLE_CAP};
use crate::pp_stats::HatFunction;
use crate::tree_transforms::{PruneRule, DEFAULT_NODE_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementSpec {
    #[serde(default)]
    pub light: Vec<TailLaw>,
    pub heavy: JointLawQ,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WMode {
    #[default]
    Empirical,
    Degenerate,
}

/// A hat function `(ζ, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatSpec {
    pub zeta: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub n: usize,
    pub replicas: usize,
    pub delta: f64,
    pub zeta: f64,
    pub theta: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub n_grid: Vec<usize>,
    pub k_list: Vec<usize>,
    pub b_list: Vec<usize>,
    pub trees: usize,
    pub prune_rule: PruneRule,
    pub node_cap: usize,
    pub population_cap: usize,
    /// Largest tolerated fraction of replicas aborted at the population cap.
    pub abort_tolerance: f64,
    pub w_mode: WMode,
    pub w_depth: usize,
    pub w_samples: usize,
    pub limit_samples: usize,
    pub laplace_samples: usize,
    pub table_cap: usize,
    pub x_grid: Vec<f64>,
    pub hats: Vec<HatSpec>,
    /// `b_1^α` in the superposition test; `b_2^α = 1 − b_1^α`.
    pub superpose_weight: f64,
    /// N_* draws written out as point lists.
    pub dump_samples: usize,
    pub dump_points: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            n: 10,
            replicas: 1000,
            delta: DEFAULT_DELTA,
            zeta: 0.5,
            theta: 0.2,
            eta: DEFAULT_RECORD_FRACTION,
            epsilon: 0.1,
            n_grid: vec![8, 10, 12, 14],
            k_list: vec![2, 4, 6, 8],
            b_list: vec![1, 2, 3],
            trees: 2000,
            prune_rule: PruneRule::BirthOrder,
            node_cap: DEFAULT_NODE_CAP,
            population_cap: DEFAULT_POPULATION_CAP,
            abort_tolerance: 0.0,
            w_mode: WMode::Empirical,
            w_depth: 14,
            w_samples: 10_000,
            limit_samples: 5000,
            laplace_samples: 100_000,
            table_cap: DEFAULT_TABLE_CAP,
            x_grid: vec![0.5, 1.0, 2.0, 4.0],
            hats: vec![HatSpec { zeta: 0.5, height: 1.0 }],
            superpose_weight: 0.5,
            dump_samples: 20,
            dump_points: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: BranchingSpec,
    pub displacement: DisplacementSpec,
    #[serde(default)]
    pub run: RunSpec,
    /// Not part of the hash: where artifacts go does not change them.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

/// Validated models built from a config.
#[derive(Debug, Clone)]
pub struct Models {
    pub branching: BranchingModel,
    pub displacement: DisplacementModel,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn models(&self) -> Result<Models> {
        let branching = BranchingModel::new(self.model.clone())?;
        let d = &self.displacement;
        let displacement = DisplacementModel::new(d.light.clone(), d.heavy.clone(), d.gamma)?;
        check_compatible(&branching, &displacement)?;
        Ok(Models {
            branching,
            displacement,
        })
    }

    pub fn hats(&self) -> Result<Vec<HatFunction>> {
        self.run.hats.iter().map(|h| HatFunction::new(h.zeta, h.height)).collect()
    }

    /// Checks the run block on its own.
    pub fn validate_run(&self) -> Result<()> {
        let r = &self.run;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if r.n == 0 || r.n_grid.contains(&0) {
            return bad("generations must be at least 1");
        }
        if !(r.delta > 0.0 && r.zeta > 0.0 && r.eta > 0.0 && r.epsilon > 0.0) {
            return bad("delta, zeta, eta and epsilon must be positive");
        }
        if !(r.theta > 0.0 && r.theta < r.zeta / 2.0) {
            return bad("theta must lie in (0, zeta/2)");
        }
        if !(0.0..=1.0).contains(&r.abort_tolerance) {
            return bad("abort_tolerance must lie in [0, 1]");
        }
        if !(r.superpose_weight > 0.0 && r.superpose_weight < 1.0) {
            return bad("superpose_weight must lie in (0, 1)");
        }
        if r.k_list.contains(&0) || r.b_list.contains(&0) {
            return bad("K and B must be at least 1");
        }
        if r.x_grid.iter().any(|x| !(*x > 0.0)) {
            return bad("x_grid entries must be positive");
        }
        self.hats()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[model]
root_distribution = [1.0]

[[model.offspring]]
family = "independent_per_type"
pmfs = [[0.5, 0.0, 0.5]]

[displacement.heavy]
joint = "iid_axes"
marginal = { family = "two_sided_pareto", alpha = 1.0, beta = 1.0, scale = 1.0 }

[run]
n = 6
replicas = 10
"#;

    #[test]
    fn parses_and_hashes() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.run.n, 6);
        assert_eq!(cfg.run.zeta, 0.5);
        cfg.validate_run().unwrap();
        let models = cfg.models().unwrap();
        assert!((models.branching.rho() - 2.0).abs() < 1e-12);

        let mut other = cfg.clone();
        other.output_dir = Some("elsewhere".into());
        assert_eq!(cfg.hash(), other.hash());
        other.seed = 8;
        assert_ne!(cfg.hash(), other.hash());

        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_runs() {
        assert!(ExperimentConfig::from_toml(&format!("{SAMPLE}\nbogus = 1\n")).is_err());
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.run.theta = 0.3;
        assert!(cfg.validate_run().is_err());
    }
}
