//! Experiment drivers shared by the command-line tool and the tests.
//!
//! Each driver returns a typed report; the `render_*` helpers turn reports
//! into artifacts stamped with the config hash and seed.

use serde::Serialize;

use crate::branching::{validate_model, ValidationReport};
use crate::brw::{estimate_w, one_jump_events, run_replicas, ReplicaConfig, RootChoice};
use crate::config::{ExperimentConfig, Models, WMode};
use crate::displacement::{DisplacementModel, JointLawQ, ScalingSequence};
use crate::error::{Error, Result};
use crate::limit::{
    h_pmf, kappa_lambda, kappa_lambda_closed_form, laplace_functional_limit, limit_max_cdf, sample_n_star_many,
    LaplaceMc, LimitParams, NStarSample, WSource,
};
use crate::pp_stats::{ks_two_sample, ks_vs_cdf, mean_and_stderr, total_variation, HatFunction, PointMeasure};
use crate::rng::derive_seed;
use crate::tree_transforms::{convergence_study, gap_rows_to_csv, GapRow, GapStudy};

mod salt {
    pub const W: u64 = 1;
    pub const LIMIT: u64 = 2;
    pub const LAPLACE: u64 = 3;
    pub const SECOND: u64 = 4;
    pub const ONEJUMP: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    pub fn csv_header(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }

    pub fn json<T: Serialize>(&self, report: &T) -> String {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            config_hash: &'a str,
            seed: u64,
            report: &'a T,
        }
        let mut s = serde_json::to_string_pretty(&Stamped {
            config_hash: &self.config_hash,
            seed: self.seed,
            report,
        })
        .expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: &str, contents: String) -> Self {
        Self {
            name: name.to_string(),
            contents,
        }
    }
}

/// Artifacts plus whether the population-cap abort tolerance was exceeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub too_many_aborts: bool,
}

/// Splits replica results into completed ones and the indices that hit
/// the population cap. Any other error is returned.
fn split_aborts<T>(results: Vec<Result<T>>) -> Result<(Vec<(usize, T)>, Vec<usize>)> {
    let mut done = Vec::new();
    let mut aborted = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => done.push((i, t)),
            Err(Error::PopulationCap { .. }) => aborted.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok((done, aborted))
}

fn too_many(cfg: &ExperimentConfig, aborted: usize, total: usize) -> bool {
    total > 0 && aborted as f64 / total as f64 > cfg.run.abort_tolerance
}

fn replica_config(cfg: &ExperimentConfig, models: &Models, n: usize) -> Result<ReplicaConfig> {
    ReplicaConfig::new(&models.branching, &models.displacement, n, cfg.run.eta, cfg.run.population_cap)
}

fn bn(models: &Models, n: usize) -> Result<f64> {
    Ok(ScalingSequence::new(models.branching.rho(), *models.displacement.heavy.marginal())?.bn(n))
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub branching: ValidationReport,
    pub displacement_ok: bool,
    pub displacement_problem: Option<String>,
    pub accepted: bool,
}

pub fn validate(cfg: &ExperimentConfig) -> ValidateReport {
    let branching = validate_model(&cfg.model);
    let d = &cfg.displacement;
    let problem = DisplacementModel::new(d.light.clone(), d.heavy.clone(), d.gamma)
        .and_then(|_| cfg.validate_run())
        .and_then(|_| cfg.models().map(|_| ()))
        .err()
        .map(|e| e.to_string());
    ValidateReport {
        accepted: branching.accepted && problem.is_none(),
        displacement_ok: problem.is_none(),
        displacement_problem: problem,
        branching,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRow {
    pub replica: usize,
    pub n: usize,
    pub m_over_bn: f64,
    pub w_hat: f64,
    pub total: u64,
    pub flags: Vec<bool>,
    #[serde(skip)]
    pub points: Option<PointMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub n: usize,
    pub bn: f64,
    pub replicas: usize,
    pub aborted: Vec<usize>,
    pub rows: Vec<ReplicaRow>,
}

pub fn simulate(cfg: &ExperimentConfig, models: &Models) -> Result<SimulateReport> {
    let rc = replica_config(cfg, models, cfg.run.n)?;
    let (theta, zeta) = (cfg.run.theta, cfg.run.zeta);
    let keep_points = cfg.run.dump_points;
    let results = run_replicas(
        &models.branching,
        &models.displacement,
        &rc,
        cfg.run.replicas,
        cfg.seed,
        |i, r| -> Result<ReplicaRow> {
            Ok(ReplicaRow {
                replica: i,
                n: r.n,
                m_over_bn: r.max_over_bn(),
                w_hat: r.w_hat,
                total: r.total,
                flags: one_jump_events(&r, theta, zeta)?,
                points: keep_points.then(|| r.points.clone()),
            })
        },
    );
    let (done, aborted) = split_aborts(results)?;
    let rows = done.into_iter().map(|(_, r)| r).collect::<Result<_>>()?;
    Ok(SimulateReport {
        n: cfg.run.n,
        bn: rc.bn,
        replicas: cfg.run.replicas,
        aborted,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SimulateSummary {
    n: usize,
    bn: f64,
    replicas: usize,
    completed: usize,
    aborted: Vec<usize>,
    abort_fraction: f64,
    mean_m_over_bn: f64,
    mean_w_hat: f64,
    flag_rates: Vec<f64>,
}

pub fn render_simulate(cfg: &ExperimentConfig, report: &SimulateReport) -> Outcome {
    let prov = Provenance::of(cfg);
    let q = cfg.model.offspring.len();
    let mut csv = prov.csv_header();
    csv.push_str("replica,n,M_n_over_bn,W_hat,total");
    for p in 1..=q {
        csv.push_str(&format!(",flag_{p}"));
    }
    csv.push('\n');
    for r in &report.rows {
        csv.push_str(&format!("{},{},{},{},{}", r.replica, r.n, r.m_over_bn, r.w_hat, r.total));
        for &f in &r.flags {
            csv.push_str(if f { ",1" } else { ",0" });
        }
        csv.push('\n');
    }
    let completed = report.rows.len();
    let mean = |f: &dyn Fn(&ReplicaRow) -> f64| {
        if completed == 0 {
            f64::NAN
        } else {
            report.rows.iter().map(f).sum::<f64>() / completed as f64
        }
    };
    let summary = SimulateSummary {
        n: report.n,
        bn: report.bn,
        replicas: report.replicas,
        completed,
        aborted: report.aborted.clone(),
        abort_fraction: report.aborted.len() as f64 / report.replicas.max(1) as f64,
        mean_m_over_bn: mean(&|r| r.m_over_bn),
        mean_w_hat: mean(&|r| r.w_hat),
        flag_rates: (0..q).map(|p| mean(&|r| r.flags[p] as u8 as f64)).collect(),
    };
    let mut artifacts = vec![
        Artifact::new("simulate.csv", csv),
        Artifact::new("simulate_summary.json", prov.json(&summary)),
    ];
    if cfg.run.dump_points {
        let points: Vec<(usize, &PointMeasure)> = report
            .rows
            .iter()
            .filter_map(|r| r.points.as_ref().map(|p| (r.replica, p)))
            .collect();
        artifacts.push(Artifact::new("simulate_points.json", prov.json(&points)));
    }
    Outcome {
        artifacts,
        too_many_aborts: too_many(cfg, report.aborted.len(), report.replicas),
    }
}

/// `W` as configured: the degenerate law, or Kesten-Stigum samples.
pub fn w_source(cfg: &ExperimentConfig, models: &Models) -> Result<WSource> {
    Ok(match cfg.run.w_mode {
        WMode::Degenerate => WSource::Degenerate,
        WMode::Empirical => WSource::Empirical(estimate_w(
            &models.branching,
            cfg.run.w_depth,
            cfg.run.w_samples,
            RootChoice::FromDistribution,
            derive_seed(cfg.seed, salt::W),
            cfg.run.population_cap,
        )?),
    })
}

pub fn limit_params(cfg: &ExperimentConfig, models: &Models) -> Result<LimitParams> {
    LimitParams::new(
        &models.branching,
        &models.displacement.heavy,
        w_source(cfg, models)?,
        cfg.run.table_cap,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxDistReport {
    pub n: usize,
    pub replicas: usize,
    pub aborted: Vec<usize>,
    pub kappa: f64,
    pub ks: f64,
    pub ks_threshold: f64,
    pub pass: bool,
    /// Sorted `M_n / b_n`.
    #[serde(skip)]
    pub samples: Vec<f64>,
    #[serde(skip)]
    pub limit_cdf: Vec<f64>,
}

pub const MAXDIST_KS_THRESHOLD: f64 = 0.05;

/// ECDF of `M_n / b_n` against `E[exp(−κ W x^{-α})]`.
pub fn maxdist(cfg: &ExperimentConfig, models: &Models, params: &LimitParams) -> Result<MaxDistReport> {
    let rc = replica_config(cfg, models, cfg.run.n)?;
    let results = run_replicas(
        &models.branching,
        &models.displacement,
        &rc,
        cfg.run.replicas,
        cfg.seed,
        |_, r| r.max_over_bn(),
    );
    let (done, aborted) = split_aborts(results)?;
    let mut samples: Vec<f64> = done.into_iter().map(|(_, x)| x).collect();
    samples.sort_by(f64::total_cmp);
    let kappa = kappa_lambda_closed_form(params);
    let cdf = |x: f64| if x > 0.0 { limit_max_cdf(params, kappa, x).unwrap_or(0.0) } else { 0.0 };
    let ks = ks_vs_cdf(&samples, cdf);
    Ok(MaxDistReport {
        n: cfg.run.n,
        replicas: cfg.run.replicas,
        aborted,
        kappa,
        ks,
        ks_threshold: MAXDIST_KS_THRESHOLD,
        pass: ks <= MAXDIST_KS_THRESHOLD,
        limit_cdf: samples.iter().map(|&x| cdf(x)).collect(),
        samples,
    })
}

pub fn render_maxdist(cfg: &ExperimentConfig, report: &MaxDistReport) -> Outcome {
    let prov = Provenance::of(cfg);
    let mut csv = prov.csv_header();
    csv.push_str("x,ecdf,limit_cdf\n");
    let total = report.samples.len() as f64;
    for (i, (x, c)) in report.samples.iter().zip(&report.limit_cdf).enumerate() {
        csv.push_str(&format!("{},{},{}\n", x, (i + 1) as f64 / total, c));
    }
    Outcome {
        artifacts: vec![
            Artifact::new("maxdist_ecdf.csv", csv),
            Artifact::new("maxdist_report.json", prov.json(report)),
        ],
        too_many_aborts: too_many(cfg, report.aborted.len(), report.replicas),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneJumpRow {
    pub n: usize,
    pub completed: usize,
    pub aborted: usize,
    pub flag_rates: Vec<f64>,
    /// Fraction of replicas with `|N_n(f) − Ñ_n(f)| > ε`.
    pub gap_fraction: f64,
    pub gap_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneJumpReport {
    pub theta: f64,
    pub zeta: f64,
    pub epsilon: f64,
    pub rows: Vec<OneJumpRow>,
    /// Each step along the grid rises by at most 3 combined binomial SE.
    pub gap_nonincreasing: bool,
}

pub fn onejump(cfg: &ExperimentConfig, models: &Models) -> Result<OneJumpReport> {
    let r = &cfg.run;
    let f = HatFunction::new(r.zeta, 1.0)?;
    let mut rows = Vec::new();
    for &n in &r.n_grid {
        let rc = replica_config(cfg, models, n)?;
        let results = run_replicas(
            &models.branching,
            &models.displacement,
            &rc,
            r.replicas,
            derive_seed(cfg.seed, salt::ONEJUMP + n as u64),
            |_, rep| -> Result<(Vec<bool>, bool)> {
                let gap = (rep.points.integrate(&f) - rep.single_jump.integrate(&f)).abs();
                Ok((one_jump_events(&rep, r.theta, r.zeta)?, gap > r.epsilon))
            },
        );
        let (done, aborted) = split_aborts(results)?;
        let done: Vec<(Vec<bool>, bool)> = done.into_iter().map(|(_, x)| x).collect::<Result<_>>()?;
        let completed = done.len();
        let q = models.branching.num_types();
        let rate = |hits: usize| hits as f64 / completed.max(1) as f64;
        let flag_rates = (0..q).map(|p| rate(done.iter().filter(|(fl, _)| fl[p]).count())).collect();
        let gap_fraction = rate(done.iter().filter(|(_, g)| *g).count());
        rows.push(OneJumpRow {
            n,
            completed,
            aborted: aborted.len(),
            flag_rates,
            gap_fraction,
            gap_stderr: (gap_fraction * (1.0 - gap_fraction) / completed.max(1) as f64).sqrt(),
        });
    }
    let gap_nonincreasing = rows.windows(2).all(|w| {
        let noise = 3.0 * w[0].gap_stderr.hypot(w[1].gap_stderr);
        w[1].gap_fraction <= w[0].gap_fraction + noise
    });
    Ok(OneJumpReport {
        theta: r.theta,
        zeta: r.zeta,
        epsilon: r.epsilon,
        rows,
        gap_nonincreasing,
    })
}

pub fn render_onejump(cfg: &ExperimentConfig, report: &OneJumpReport) -> Outcome {
    let prov = Provenance::of(cfg);
    let q = cfg.model.offspring.len();
    let mut csv = prov.csv_header();
    csv.push_str("n,completed,aborted");
    for p in 1..=q {
        csv.push_str(&format!(",flag_rate_{p}"));
    }
    csv.push_str(",gap_fraction,gap_stderr\n");
    let mut aborted = 0;
    let mut total = 0;
    for r in &report.rows {
        csv.push_str(&format!("{},{},{}", r.n, r.completed, r.aborted));
        for x in &r.flag_rates {
            csv.push_str(&format!(",{x}"));
        }
        csv.push_str(&format!(",{},{}\n", r.gap_fraction, r.gap_stderr));
        aborted += r.aborted;
        total += r.aborted + r.completed;
    }
    Outcome {
        artifacts: vec![
            Artifact::new("onejump.csv", csv),
            Artifact::new("onejump_report.json", prov.json(report)),
        ],
        too_many_aborts: too_many(cfg, aborted, total),
    }
}

pub fn convergence(cfg: &ExperimentConfig, models: &Models) -> Result<Vec<GapRow>> {
    let r = &cfg.run;
    let hats = cfg.hats()?;
    let study = GapStudy {
        n: r.n,
        ks: &r.k_list,
        bs: &r.b_list,
        hats: &hats,
        trees: r.trees,
        rule: r.prune_rule,
        node_cap: r.node_cap,
    };
    convergence_study(&models.branching, &models.displacement, bn(models, r.n)?, &study, cfg.seed)
}

pub fn render_convergence(cfg: &ExperimentConfig, rows: &[GapRow]) -> Outcome {
    let prov = Provenance::of(cfg);
    Outcome {
        artifacts: vec![Artifact::new(
            "convergence.csv",
            prov.csv_header() + &gap_rows_to_csv(rows),
        )],
        too_many_aborts: false,
    }
}

/// `count` draws of the limit, draw `i` from its own stream.
pub fn n_star_draws(params: &LimitParams, delta: f64, count: usize, seed: u64) -> Result<Vec<NStarSample>> {
    sample_n_star_many(params, delta, count, seed, |_, s| Ok(s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoidRow {
    pub x: f64,
    pub empirical: f64,
    pub exact: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Frequency of `N_*((x, ∞]) = 0` against `E[exp(−κ W x^{-α})]`, within
/// 3 binomial SE.
pub fn void_check(params: &LimitParams, draws: &[NStarSample], xs: &[f64]) -> Result<Vec<VoidRow>> {
    let kappa = kappa_lambda(params)?;
    xs.iter()
        .map(|&x| {
            let mut empty = 0usize;
            for d in draws {
                if d.counts_above(x)? == 0 {
                    empty += 1;
                }
            }
            let total = draws.len() as f64;
            let empirical = empty as f64 / total;
            let exact = limit_max_cdf(params, kappa, x)?;
            let stderr = (exact * (1.0 - exact) / total).sqrt();
            Ok(VoidRow {
                x,
                empirical,
                exact,
                stderr,
                pass: (empirical - exact).abs() <= 3.0 * stderr,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceRow {
    pub f_id: usize,
    pub zeta: f64,
    pub height: f64,
    pub limit: f64,
    pub limit_stderr: f64,
    pub empirical: f64,
    pub empirical_stderr: f64,
    pub pass: bool,
}

/// The Laplace-functional estimator against the sample mean of
/// `exp(−N_*(f))`, within 3 combined SE.
pub fn laplace_check(params: &LimitParams, draws: &[NStarSample], hats: &[HatFunction], mc: LaplaceMc) -> Result<Vec<LaplaceRow>> {
    hats.iter()
        .enumerate()
        .map(|(f_id, f)| {
            let mut values = Vec::with_capacity(draws.len());
            for d in draws {
                d.check_resolved(f.zeta())?;
                values.push(d.measure().laplace_at(f));
            }
            let (empirical, empirical_stderr) = mean_and_stderr(&values);
            let est = laplace_functional_limit(params, |x| f.eval(x), f.zeta(), mc)?;
            let combined = est.stderr.hypot(empirical_stderr);
            Ok(LaplaceRow {
                f_id,
                zeta: f.zeta(),
                height: f.height(),
                limit: est.value,
                limit_stderr: est.stderr,
                empirical,
                empirical_stderr,
                pass: (est.value - empirical).abs() <= 3.0 * combined,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicityReport {
    pub clusters: usize,
    pub support: usize,
    pub tv: f64,
}

/// Single-point cluster multiplicities against the mixture pmf of `H`.
/// Values at or past `support` share one bucket with the pmf's leftover
/// mass. Only meaningful on the axes measure, where every cluster has one
/// atom.
pub fn multiplicity_check(params: &LimitParams, draws: &[NStarSample], max_clusters: usize) -> Result<MultiplicityReport> {
    if !matches!(params.joint(), JointLawQ::IidAxes { .. }) {
        return Err(Error::InvalidModel("cluster multiplicities need the axes measure".into()));
    }
    let support = params.table().cap;
    let (mut pmf, rest) = h_pmf(params, support);
    pmf.push(rest);
    let mut counts = vec![0u64; support + 1];
    let mut clusters = 0;
    for c in draws.iter().flat_map(|d| &d.clusters).take(max_clusters) {
        let (_, t) = c
            .xi
            .iter()
            .zip(&c.t)
            .find(|(x, _)| **x != 0.0)
            .expect("axes clusters carry one atom");
        counts[(*t as usize).min(support)] += 1;
        clusters += 1;
    }
    Ok(MultiplicityReport {
        clusters,
        support,
        tv: total_variation(&counts, &pmf),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountComparison {
    pub x: f64,
    pub n: usize,
    pub finite_samples: usize,
    pub limit_samples: usize,
    pub finite_mean: f64,
    pub limit_mean: f64,
    pub ks: f64,
}

/// `N_n((x, ∞])` from simulated replicas against `N_*((x, ∞])`.
pub fn count_comparison(cfg: &ExperimentConfig, models: &Models, draws: &[NStarSample], x: f64) -> Result<CountComparison> {
    let rc = replica_config(cfg, models, cfg.run.n)?;
    let results = run_replicas(
        &models.branching,
        &models.displacement,
        &rc,
        cfg.run.replicas,
        cfg.seed,
        |_, r| r.points.counts_above(x) as f64,
    );
    let (done, _) = split_aborts(results)?;
    let finite: Vec<f64> = done.into_iter().map(|(_, c)| c).collect();
    let limit = draws
        .iter()
        .map(|d| d.counts_above(x).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(CountComparison {
        x,
        n: cfg.run.n,
        finite_samples: finite.len(),
        limit_samples: limit.len(),
        finite_mean: mean_and_stderr(&finite).0,
        limit_mean: mean_and_stderr(&limit).0,
        ks: ks_two_sample(&finite, &limit),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub kappa: f64,
    pub kappa_closed_form: f64,
    pub delta: f64,
    pub samples: usize,
    pub void: Vec<VoidRow>,
    pub laplace: Vec<LaplaceRow>,
    pub multiplicity: Option<MultiplicityReport>,
    pub counts: CountComparison,
    #[serde(skip)]
    pub cdf: Vec<(f64, f64)>,
    #[serde(skip)]
    pub dumped: Vec<NStarSample>,
}

pub fn limit(cfg: &ExperimentConfig, models: &Models, params: &LimitParams) -> Result<LimitReport> {
    let r = &cfg.run;
    let draws = n_star_draws(params, r.delta, r.limit_samples, derive_seed(cfg.seed, salt::LIMIT))?;
    let kappa = kappa_lambda(params)?;
    let cdf = r
        .x_grid
        .iter()
        .map(|&x| Ok((x, limit_max_cdf(params, kappa, x)?)))
        .collect::<Result<_>>()?;
    let mc = LaplaceMc {
        samples: r.laplace_samples,
        seed: derive_seed(cfg.seed, salt::LAPLACE),
    };
    let multiplicity = match params.joint() {
        JointLawQ::IidAxes { .. } => Some(multiplicity_check(params, &draws, r.laplace_samples)?),
        JointLawQ::DependentRay { .. } => None,
    };
    Ok(LimitReport {
        kappa,
        kappa_closed_form: kappa_lambda_closed_form(params),
        delta: r.delta,
        samples: draws.len(),
        void: void_check(params, &draws, &r.x_grid)?,
        laplace: laplace_check(params, &draws, &cfg.hats()?, mc)?,
        multiplicity,
        counts: count_comparison(cfg, models, &draws, 1.0)?,
        cdf,
        dumped: draws.into_iter().take(r.dump_samples).collect(),
    })
}

pub fn render_limit(cfg: &ExperimentConfig, report: &LimitReport) -> Outcome {
    #[derive(Serialize)]
    struct Dump<'a> {
        w: f64,
        resolution: f64,
        points: &'a [(f64, u64)],
    }
    let prov = Provenance::of(cfg);
    let mut csv = prov.csv_header();
    csv.push_str("x,cdf\n");
    for (x, c) in &report.cdf {
        csv.push_str(&format!("{x},{c}\n"));
    }
    let measures: Vec<PointMeasure> = report.dumped.iter().map(|d| d.measure()).collect();
    let dumps: Vec<Dump> = report
        .dumped
        .iter()
        .zip(&measures)
        .map(|(d, m)| Dump {
            w: d.w,
            resolution: d.resolution,
            points: m.atoms(),
        })
        .collect();
    Outcome {
        artifacts: vec![
            Artifact::new("limit_cdf.csv", csv),
            Artifact::new("limit_report.json", prov.json(report)),
            Artifact::new("limit_samples.json", prov.json(&dumps)),
        ],
        too_many_aborts: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperposeReport {
    pub weight: f64,
    pub b1: f64,
    pub b2: f64,
    pub samples: usize,
    pub superposed_mean: f64,
    pub single_mean: f64,
    pub ks: f64,
}

/// With `W ≡ 1`: `b_1 N'_* + b_2 N''_*` against `N_*`, compared through
/// counts in `(1, ∞]`, where `b_1^α + b_2^α = 1`.
pub fn superpose(cfg: &ExperimentConfig, models: &Models) -> Result<SuperposeReport> {
    let r = &cfg.run;
    let params = LimitParams::new(
        &models.branching,
        &models.displacement.heavy,
        WSource::Degenerate,
        r.table_cap,
    )?;
    let alpha = params.alpha();
    let b1 = r.superpose_weight.powf(1.0 / alpha);
    let b2 = (1.0 - r.superpose_weight).powf(1.0 / alpha);
    let seed = derive_seed(cfg.seed, salt::SECOND);
    let first = n_star_draws(&params, r.delta, r.limit_samples, cfg.seed)?;
    let second = n_star_draws(&params, r.delta, r.limit_samples, seed)?;
    let single = n_star_draws(&params, r.delta, r.limit_samples, derive_seed(seed, salt::SECOND))?;
    let superposed = first
        .iter()
        .zip(&second)
        .map(|(a, b)| Ok((a.counts_above(1.0 / b1)? + b.counts_above(1.0 / b2)?) as f64))
        .collect::<Result<Vec<_>>>()?;
    let single = single
        .iter()
        .map(|d| d.counts_above(1.0).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuperposeReport {
        weight: r.superpose_weight,
        b1,
        b2,
        samples: r.limit_samples,
        superposed_mean: mean_and_stderr(&superposed).0,
        single_mean: mean_and_stderr(&single).0,
        ks: ks_two_sample(&superposed, &single),
    })
}

pub fn render_superpose(cfg: &ExperimentConfig, report: &SuperposeReport) -> Outcome {
    Outcome {
        artifacts: vec![Artifact::new("superpose_report.json", Provenance::of(cfg).json(report))],
        too_many_aborts: false,
    }
}

pub fn render_validate(cfg: &ExperimentConfig, report: &ValidateReport) -> Outcome {
    Outcome {
        artifacts: vec![Artifact::new("validate.json", Provenance::of(cfg).json(report))],
        too_many_aborts: false,
    }
}
