mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use wsn_collab::collab::{assemble_collab_problem, solve_collaboration};
use wsn_collab::compress::{filter_gain_closed_form, sweep_centralized, trace_after_update};
use wsn_collab::estimator::{joseph_covariance, joseph_trace, optimal_gain};
use wsn_collab::kronmap::{devectorize, vectorize_weights, WeightIndexMap};
use wsn_collab::linalg;
use wsn_collab::model::{expected_collab_cost, total_cost, Dimensions, EnergyBudget};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_vector_round_trips(seed in any::<u64>(), m in 1usize..4, extra in 0usize..3) {
        let mut rng = rng(seed);
        let topo = random_topology(&mut rng, m, m + extra, 0.5);
        let map = WeightIndexMap::new(&topo);
        let w = masked(&mut rng, &topo);
        let v = vectorize_weights(&w, &map).unwrap();
        prop_assert_eq!(v.len(), topo.link_count());
        prop_assert_eq!(devectorize(&v, &map).unwrap(), w);
    }

    #[test]
    fn joseph_update_is_symmetric_psd(seed in any::<u64>(), p in 1usize..5, s in 1usize..4, scale in 0.0f64..100.0) {
        let mut rng = rng(seed);
        let cov = spd(&mut rng, p, 0.01);
        let d = gauss(&mut rng, s, p);
        let rn = spd(&mut rng, s, 0.01);
        let t = gauss(&mut rng, p, s) * scale;
        let next = joseph_covariance(&cov, &d, &rn, &t);
        prop_assert_eq!(linalg::max_asymmetry(&next), 0.0);
        prop_assert!(linalg::min_eigenvalue(&next) >= -1e-10 * next.trace());
    }

    #[test]
    fn closed_form_gain_never_loses(seed in any::<u64>(), p in 1usize..5, s in 1usize..4) {
        let mut rng = rng(seed);
        let cov = spd(&mut rng, p, 0.05);
        let d = gauss(&mut rng, s, p);
        let rn = spd(&mut rng, s, 0.05);
        let best = joseph_trace(&cov, &d, &rn, &optimal_gain(&cov, &d, &rn).unwrap());
        let other = joseph_trace(&cov, &d, &rn, &gauss(&mut rng, p, s));
        prop_assert!(best <= other * (1.0 + 1e-12));
        prop_assert!(best <= cov.trace() * (1.0 + 1e-12));
    }

    #[test]
    fn energy_costs_are_nonnegative(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let dims = Dimensions::new(2, 2, 4, 2, 2).unwrap();
        let model = random_model(&mut rng, dims);
        let topo = random_topology(&mut rng, 2, 4, 0.5);
        let w = masked(&mut rng, &topo);
        let comp = random_compression(&mut rng, 2, 2);
        for i in 0..4 {
            prop_assert!(expected_collab_cost(i, &w, &model, &topo).unwrap() >= 0.0);
            prop_assert!(total_cost(i, &w, comp.vectors(), &model, &topo).unwrap() >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// One collaboration solve and one compression sweep stay within budget
    /// and never raise the trace.
    #[test]
    fn design_round_is_feasible_and_monotone(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let dims = Dimensions::new(2, 3, 4, 2, 2).unwrap();
        let model = random_model(&mut rng, dims);
        let topo = random_topology(&mut rng, 2, 4, 0.6);
        let budget = EnergyBudget::uniform(4, 1.0).unwrap();
        let p = spd(&mut rng, 2, 0.2);
        let comp = random_compression(&mut rng, 2, 3);
        let comp = wsn_collab::compress::CompressionSet::new(comp.vectors().iter().map(|f| f * 0.01).collect()).unwrap();
        let w0 = DMatrix::zeros(2, 4);
        let t = filter_gain_closed_form(&p, &model, &w0, &comp.matrix()).unwrap().gain;
        let before = trace_after_update(&p, &model, &w0, &comp.matrix(), &t);
        let prob = assemble_collab_problem(&p, &model, &topo, &comp, &t, &budget).unwrap();
        let w = solve_collaboration(&prob, Some(&w0)).unwrap().w;
        let mid = trace_after_update(&p, &model, &w, &comp.matrix(), &t);
        prop_assert!(mid <= before * (1.0 + 1e-9));
        let next = sweep_centralized(&p, &model, &topo, &w, &t, &comp, &budget, 1).unwrap();
        let after = trace_after_update(&p, &model, &w, &next.matrix(), &t);
        prop_assert!(after <= mid * (1.0 + 1e-9));
        for i in 0..4 {
            prop_assert!(total_cost(i, &w, next.vectors(), &model, &topo).unwrap() <= 1.0 + 1e-8);
        }
    }
}
