use brw_extremes::branching::{generation_total_pmf, BranchingModel, BranchingSpec, OffspringDist};
use brw_extremes::brw::{step_generation, GenerationState, ReplicaConfig};
use brw_extremes::displacement::{DisplacementModel, JointLawQ, TailLaw};
use brw_extremes::pp_stats::{mean_and_stderr, total_variation};
use brw_extremes::rng::{stream, Purpose};
use proptest::prelude::*;

fn single(pmf: Vec<f64>) -> BranchingModel {
    BranchingModel::new(BranchingSpec {
        offspring: vec![OffspringDist::IndependentPerType { pmfs: vec![pmf] }],
        root_distribution: vec![1.0],
    })
    .unwrap()
}

fn two_type() -> BranchingModel {
    BranchingModel::new(BranchingSpec {
        offspring: vec![
            OffspringDist::IndependentPerType { pmfs: vec![vec![0.6, 0.4], vec![0.7, 0.0, 0.3]] },
            OffspringDist::ExplicitTable {
                table: vec![(vec![1, 1], 0.5), (vec![2, 1], 0.25), (vec![1, 3], 0.25)],
            },
        ],
        root_distribution: vec![0.3, 0.7],
    })
    .unwrap()
}

#[test]
fn simulated_generation_totals_match_the_exact_law() {
    let model = two_type();
    let row = generation_total_pmf(&model, 3, 512).unwrap();
    let mut rng = stream(1, 0, Purpose::Test(100));
    let mut counts = vec![0u64; 512];
    for _ in 0..100_000 {
        let z = model.simulate_generation_counts(model.heavy_type(), 3, 1 << 20, &mut rng).unwrap();
        let total: u64 = z.iter().sum();
        counts[(total as usize).min(511)] += 1;
    }
    let mut pmf = row.pmf.clone();
    pmf[511] += row.overflow;
    let tv = total_variation(&counts, &pmf);
    assert!(tv <= 0.02, "{tv}");
}

fn mat_vec_left(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    (0..m.len()).map(|q| v.iter().zip(m).map(|(vp, row)| vp * row[q]).sum()).collect()
}

#[test]
fn mean_type_counts_follow_the_mean_matrix() {
    let model = two_type();
    let zero = DisplacementModel::new(vec![TailLaw::Zero], JointLawQ::IidAxes { marginal: TailLaw::Zero }, 1.0).unwrap();
    let cfg = ReplicaConfig { n: 6, bn: 1.0, record_threshold: 1.0, population_cap: 1 << 22 };
    let mut expected = model.spec().root_distribution.clone();
    for _ in 0..6 {
        expected = mat_vec_left(&expected, &model.spectral().mean_matrix);
    }
    let mut per_type = vec![Vec::new(); 2];
    for i in 0..10_000 {
        let mut rng = stream(2, i, Purpose::Test(101));
        let mut state = GenerationState::root(model.sample_root(&mut rng), 2);
        for _ in 0..6 {
            state = step_generation(&state, &model, &zero, &cfg, &mut rng).unwrap();
        }
        let tally: Vec<u64> = (0..2).map(|q| state.particles.iter().filter(|p| p.ty == q).count() as u64).collect();
        assert_eq!(tally, state.counts);
        for q in 0..2 {
            per_type[q].push(state.counts[q] as f64);
        }
    }
    for q in 0..2 {
        let (mean, se) = mean_and_stderr(&per_type[q]);
        assert!((mean - expected[q]).abs() <= 3.0 * se, "type {q}: {mean} vs {}", expected[q]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn exact_law_has_the_right_mass_and_mean(w in prop::collection::vec(0.05f64..1.0, 3), m in 0usize..4) {
        let total: f64 = w.iter().sum();
        let pmf: Vec<f64> = w.iter().map(|x| x / total).collect();
        let model = single(pmf);
        // 3^3 = 27 < cap, so nothing overflows
        let row = generation_total_pmf(&model, m, 64).unwrap();
        prop_assert!(row.overflow < 1e-12);
        prop_assert!((row.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = row.pmf.iter().enumerate().map(|(t, p)| t as f64 * p).sum();
        prop_assert!((mean - model.rho().powi(m as i32)).abs() < 1e-9 * mean);
        prop_assert_eq!(row.pmf[0], 0.0);
    }

    #[test]
    fn offspring_draws_stay_in_the_support(seed in any::<u64>()) {
        let model = two_type();
        let mut rng = stream(seed, 0, Purpose::Test(102));
        for p in 0..2 {
            let support = model.offspring(p).support();
            for _ in 0..20 {
                let v = model.sample_offspring(p, &mut rng);
                prop_assert!(v.iter().all(|&k| k >= 1));
                prop_assert!(support.iter().any(|(s, _)| *s == v));
            }
        }
    }
}
