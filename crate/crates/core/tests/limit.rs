use brw_extremes::branching::{BranchingModel, BranchingSpec, OffspringDist};
use brw_extremes::brw::{estimate_w, RootChoice, DEFAULT_POPULATION_CAP};
use brw_extremes::displacement::{JointLawQ, TailLaw};
use brw_extremes::experiments::{n_star_draws, void_check};
use brw_extremes::limit::{
    h_pmf, kappa_lambda, kappa_lambda_closed_form, laplace_functional_limit, sample_g, sample_t, LaplaceMc,
    LimitParams, WSource, DEFAULT_TABLE_CAP,
};
use brw_extremes::pp_stats::{total_variation, HatFunction};
use brw_extremes::rng::{stream, Purpose};
use proptest::prelude::*;

fn model(offspring: Vec<OffspringDist>, root: Vec<f64>) -> BranchingModel {
    BranchingModel::new(BranchingSpec { offspring, root_distribution: root }).unwrap()
}

fn pareto(beta: f64) -> TailLaw {
    TailLaw::TwoSidedPareto { alpha: 1.0, beta, scale: 1.0 }
}

fn one_or_three() -> BranchingModel {
    model(vec![OffspringDist::IndependentPerType { pmfs: vec![vec![0.5, 0.0, 0.5]] }], vec![1.0])
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// Binary tree, `W ≡ 1`: `G = 2`, `Δ_m = 2^m`, so the Laplace functional
/// reduces to a one-dimensional integral per `m`.
#[test]
fn laplace_functional_matches_quadrature_on_the_binary_tree() {
    let b = model(vec![OffspringDist::Deterministic { counts: vec![2] }], vec![1.0]);
    let joint = JointLawQ::IidAxes { marginal: pareto(1.0) };
    let params = LimitParams::new(&b, &joint, WSource::Degenerate, DEFAULT_TABLE_CAP).unwrap();
    assert_eq!(params.m_max(), 20);
    for (zeta, height) in [(0.5, 1.0), (1.0, 0.5), (2.0, 2.0)] {
        let hat = HatFunction::new(zeta, height).unwrap();
        let norm = 1.0 - 2f64.powi(-21);
        let integral: f64 = (0..=20)
            .map(|m| {
                let p = 2f64.powi(-(m + 1)) / norm;
                let t = 2f64.powi(m);
                let ramp = simpson(|x| (1.0 - (-t * hat.eval(x)).exp()) / (x * x), zeta, 2.0 * zeta, 2000);
                let flat = (1.0 - (-t * height).exp()) / (2.0 * zeta);
                p * 2.0 * (ramp + flat)
            })
            .sum();
        let exact = (-integral).exp();
        let est = laplace_functional_limit(&params, |x| hat.eval(x), zeta, LaplaceMc { samples: 50_000, seed: 11 })
            .unwrap();
        assert!(
            (est.value - exact).abs() <= 3.0 * est.stderr + 1e-9,
            "hat({zeta},{height}): {} ± {} vs {exact}",
            est.value,
            est.stderr
        );
    }
}

#[test]
fn multiplicities_are_independent_only_given_m() {
    let joint = JointLawQ::IidAxes { marginal: pareto(1.0) };
    let params = LimitParams::new(&one_or_three(), &joint, WSource::Degenerate, DEFAULT_TABLE_CAP).unwrap();
    let mut rng = stream(12, 0, Purpose::Test(130));
    let draws: Vec<(usize, f64, f64)> = (0..40_000)
        .map(|_| {
            let (m, t) = sample_t(&params, 2, &mut rng).unwrap();
            (m, (t[0] as f64).ln(), (t[1] as f64).ln())
        })
        .collect();
    let corr = |pairs: &[(f64, f64)]| {
        let n = pairs.len() as f64;
        let (mx, my) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    };
    let all: Vec<(f64, f64)> = draws.iter().map(|d| (d.1, d.2)).collect();
    assert!(corr(&all) > 0.3, "{}", corr(&all));
    for m in 2..=4 {
        let given: Vec<(f64, f64)> = draws.iter().filter(|d| d.0 == m).map(|d| (d.1, d.2)).collect();
        let r = corr(&given);
        assert!(r.abs() < 4.0 / (given.len() as f64).sqrt(), "m={m}: {r} over {}", given.len());
    }
}

#[test]
fn cluster_size_law_matches_its_definition() {
    // types 0 and 1 (heavy); G counts heavy children of a ς-distributed parent
    let b = model(
        vec![
            OffspringDist::IndependentPerType { pmfs: vec![vec![0.6, 0.4], vec![0.7, 0.0, 0.3]] },
            OffspringDist::ExplicitTable { table: vec![(vec![1, 1], 0.5), (vec![2, 1], 0.25), (vec![1, 3], 0.25)] },
        ],
        vec![0.5, 0.5],
    );
    let sigma = b.spectral().sigma.clone();
    let oracle = [
        0.0,
        sigma[0] * 0.7 + sigma[1] * 0.75,
        0.0,
        sigma[0] * 0.3 + sigma[1] * 0.25,
    ];
    let joint = JointLawQ::IidAxes { marginal: pareto(1.0) };
    let params = LimitParams::new(&b, &joint, WSource::Degenerate, DEFAULT_TABLE_CAP).unwrap();
    for (g, p) in oracle.iter().enumerate() {
        assert!((params.g_pmf().get(g).copied().unwrap_or(0.0) - p).abs() < 1e-12);
    }
    let mut rng = stream(13, 0, Purpose::Test(131));
    let mut counts = [0u64; 4];
    for _ in 0..50_000 {
        counts[sample_g(&params, &mut rng)] += 1;
    }
    assert!(total_variation(&counts, &oracle) < 0.01);
}

#[test]
fn void_probabilities_hold_for_a_ray_with_random_w() {
    let b = one_or_three();
    let w = estimate_w(&b, 10, 4000, RootChoice::FromDistribution, 14, DEFAULT_POPULATION_CAP).unwrap();
    let joint = JointLawQ::DependentRay { marginal: pareto(0.7), coefficients: vec![1.0, 0.5, 0.25] };
    let params = LimitParams::new(&b, &joint, WSource::Empirical(w), DEFAULT_TABLE_CAP).unwrap();
    let draws = n_star_draws(&params, 0.1, 5000, 15).unwrap();
    for row in void_check(&params, &draws, &[0.5, 1.0, 3.0]).unwrap() {
        assert!(row.pass, "{row:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn kappa_enumeration_agrees_with_closed_forms(beta in 0.05f64..1.0, c1 in 0.01f64..1.0, c2_frac in 0.01f64..1.0, ray in any::<bool>()) {
        let joint = if ray {
            JointLawQ::DependentRay { marginal: pareto(beta), coefficients: vec![1.0, c1, c1 * c2_frac] }
        } else {
            JointLawQ::IidAxes { marginal: pareto(beta) }
        };
        let params = LimitParams::new(&one_or_three(), &joint, WSource::Degenerate, 256).unwrap();
        let k = kappa_lambda(&params).unwrap();
        prop_assert!((k - kappa_lambda_closed_form(&params)).abs() < 1e-10 * k.max(1.0));
    }

    #[test]
    fn h_law_is_a_probability(cap in 16usize..512, len in 1usize..600) {
        let joint = JointLawQ::IidAxes { marginal: pareto(1.0) };
        let params = LimitParams::new(&one_or_three(), &joint, WSource::Degenerate, cap).unwrap();
        let (pmf, rest) = h_pmf(&params, len);
        prop_assert!(pmf.iter().all(|p| *p >= 0.0) && rest >= 0.0);
        prop_assert!((pmf.iter().sum::<f64>() + rest - 1.0).abs() < 1e-9);
        prop_assert_eq!(pmf[0], 0.0);
    }
}
