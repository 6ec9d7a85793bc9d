//! Property tests of structural invariants.

use proptest::prelude::*;

use ctmc_fluid::bounds::{budget_exp, budget_l2, delta, theta};
use ctmc_fluid::ctmc::{project, simulate_replica, SimOptions};
use ctmc_fluid::fluid::integrate;
use ctmc_fluid::hypergraph::{
    empirical_core_frequencies, k_core, limiting_frequencies, peel_chain, FrequencyVectors, HypergraphInstance,
    PeelState,
};
use ctmc_fluid::martingale::compensate;
use ctmc_fluid::models::{make_epidemic, make_reaction, EpidemicParams, ReactionParams};
use ctmc_fluid::scalar::expm1_minus_linear;
use ctmc_fluid::{BuiltModel, ErrorBudget, ErrorBudgetF32};

fn small_hypergraph() -> impl Strategy<Value = HypergraphInstance> {
    (2usize..8).prop_flat_map(|nv| {
        prop::collection::vec(prop::collection::btree_set(0..nv, 1..=3.min(nv)), 0..10).prop_map(move |edges| {
            let edges = edges.into_iter().map(|e| e.into_iter().collect()).collect();
            HypergraphInstance::from_edges(1, nv, edges).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn budgets_are_consistent(
        eps in 1e-3f64..1.0,
        t0 in 0.01f64..5.0,
        k in 0.0f64..5.0,
        a in 1e-6f64..1.0,
        dim in 1usize..6,
    ) {
        for b in [budget_l2(eps, t0, k, a, dim).unwrap(), budget_exp(eps, t0, k, a, dim).unwrap()] {
            prop_assert!(b.delta > 0.0 && b.delta <= eps / 3.0);
            prop_assert!(b.theta > 0.0);
            prop_assert!((0.0..=1.0).contains(&b.bound));
            prop_assert_eq!(b.delta, delta(eps, k, t0));
            prop_assert_eq!(b.theta, theta(b.delta, a, t0));
        }
    }

    #[test]
    fn f32_budget_tracks_f64(eps in 0.01f64..1.0, t0 in 0.1f64..2.0, k in 0.0f64..2.0, a in 1e-3f64..0.1) {
        let wide: ErrorBudget = budget_exp(eps, t0, k, a, 2).unwrap();
        let narrow: ErrorBudgetF32 = budget_exp(eps as f32, t0 as f32, k as f32, a as f32, 2).unwrap();
        prop_assert!(((narrow.delta as f64) / wide.delta - 1.0).abs() < 1e-4);
        prop_assert!((narrow.bound as f64 - wide.bound).abs() < 1e-4);
    }

    #[test]
    fn expm1_minus_linear_is_nonnegative(x in -30.0f64..30.0) {
        let v = expm1_minus_linear(x);
        prop_assert!(v >= 0.0);
        prop_assert!((v - (x.exp() - 1.0 - x)).abs() <= 1e-12 * (1.0 + x.exp()));
    }

    #[test]
    fn trajectories_follow_channels(seed in any::<u64>(), replica in 0u64..1000) {
        let m: BuiltModel = make_reaction(&ReactionParams { lambda: 1.5, mu: 0.5, n: 40.0, x0: [0.5, 0.25, 0.25] }).unwrap();
        let traj = simulate_replica(&m.spec, &m.init, 1.0, seed, replica, SimOptions::default()).unwrap();
        let jumps: Vec<&Vec<i64>> = m.spec.channels().iter().map(|c| &c.jump).collect();
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        for k in 1..traj.len() {
            let d: Vec<i64> = traj.state(k).iter().zip(traj.state(k - 1)).map(|(a, b)| a - b).collect();
            prop_assert!(jumps.contains(&&d));
            prop_assert!(traj.state(k).iter().all(|&v| v >= 0));
            // A + C and B + C are conserved.
            prop_assert_eq!(traj.state(k)[0] + traj.state(k)[2], m.init[0] + m.init[2]);
            prop_assert_eq!(traj.state(k)[1] + traj.state(k)[2], m.init[1] + m.init[2]);
        }
        let path = project(&traj, &m.spec).unwrap();
        prop_assert_eq!(path.len(), traj.len());
        prop_assert_eq!(path.value(0), &m.spec.coord(&m.init)[..]);
    }

    #[test]
    fn replicas_are_reproducible(seed in any::<u64>(), replica in 0u64..100) {
        let m: BuiltModel = make_epidemic(&EpidemicParams { n: 50.0, lambda: 2.0, p: 0.2 }).unwrap();
        let a = simulate_replica(&m.spec, &m.init, 1.0, seed, replica, SimOptions::default()).unwrap();
        let b = simulate_replica(&m.spec, &m.init, 1.0, seed, replica, SimOptions::default()).unwrap();
        prop_assert_eq!(a.times, b.times);
        prop_assert_eq!(a.states, b.states);
    }

    #[test]
    fn compensated_process_reconstructs(seed in any::<u64>(), theta in -3.0f64..3.0, coord in 0usize..2) {
        let m: BuiltModel = make_epidemic(&EpidemicParams { n: 50.0, lambda: 2.0, p: 0.2 }).unwrap();
        let traj = simulate_replica(&m.spec, &m.init, 1.0, seed, 0, SimOptions::default()).unwrap();
        let c = compensate(&traj, &m.spec, |s: &[i64]| m.spec.coord(s)[coord], theta).unwrap();
        prop_assert_eq!(c.m_at(0.0).unwrap(), 0.0);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            prop_assert!(c.reconstruction_error(t).unwrap() < 1e-12);
            prop_assert!(c.integral_alpha(t).unwrap() >= 0.0);
            prop_assert!(c.integral_phi(t).unwrap() >= 0.0);
            let m_t = c.m_at(t).unwrap();
            prop_assert!((c.n_at(t).unwrap() - (m_t * m_t - c.integral_alpha(t).unwrap())).abs() < 1e-12);
            prop_assert!(c.sup_abs_m(t).unwrap() >= m_t.abs());
        }
    }

    #[test]
    fn fluid_stays_in_unit_square(lambda in 0.1f64..8.0, p in 0.01f64..0.99) {
        let n = 100.0;
        let p = (p * n).round().clamp(1.0, 99.0) / n;
        let m: BuiltModel = make_epidemic(&EpidemicParams { n, lambda, p }).unwrap();
        let path = integrate(&m.fluid, 3.0, 1e-2).unwrap();
        for k in 0..path.len() {
            let x = path.value(k);
            prop_assert!(x[0] >= -1e-12 && x[1] >= -1e-12 && x[0] + x[1] <= 1.0 + 1e-12);
        }
        prop_assert!(path.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn core_is_idempotent_and_matches_peeling(h in small_hypergraph(), k in 2usize..4, seed in any::<u64>()) {
        let core = k_core(&h, k).unwrap();
        prop_assert!(core.is_subhypergraph_of(&h));
        prop_assert_eq!(&k_core(&core, k).unwrap(), &core);
        for v in 0..core.num_vertices() {
            prop_assert!(core.degree(v) == 0 || core.degree(v) >= k);
        }
        let run = peel_chain(&h, k, seed).unwrap();
        prop_assert_eq!(&run.core, &core);
        prop_assert_eq!(run.terminal(), &PeelState::from_instances(&core, &h, k).unwrap());
        for s in &run.states {
            prop_assert!(s.incidences_balance());
        }
    }

    #[test]
    fn edge_list_round_trips(h in small_hypergraph()) {
        let back = HypergraphInstance::from_edge_list(&h.to_edge_list()).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn limiting_frequencies_conserve_mass(
        p in prop::collection::vec(0.0f64..1.0, 3),
        scale in 0.2f64..3.0,
        k in 2usize..4,
    ) {
        // Choose q so that the degree and weight sums balance.
        let p = vec![0.0, p[0] + 0.05, p[1], p[2]];
        let m: f64 = p.iter().enumerate().map(|(d, v)| d as f64 * v).sum();
        let q = vec![0.0, 0.0, m / 2.0 * scale.min(1.0), 0.0];
        let w3 = (m - 2.0 * q[2]) / 3.0;
        let q = vec![q[0], q[1], q[2], w3];
        let f = FrequencyVectors::from_dense(p.clone(), q.clone()).unwrap();
        let g = f.size_biased().g_star(k).value;
        prop_assert!((0.0..=1.0).contains(&g));
        let lim = limiting_frequencies(&f, k, g).unwrap();
        for d2 in 1..=3 {
            let total: f64 = (0..=d2).map(|d| lim.pbar(d, d2)).sum();
            prop_assert!((total - p[d2]).abs() < 1e-12);
        }
        let qtotal: f64 = (0..=3).map(|w| lim.qbar(w)).sum();
        prop_assert!((qtotal - q.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn empirical_frequencies_sum_to_vertex_share(h in small_hypergraph(), k in 2usize..4) {
        let core = k_core(&h, k).unwrap();
        let emp = empirical_core_frequencies(&core, &h).unwrap();
        let l = h.max_degree().max(h.max_weight());
        let total: f64 = (0..=l).flat_map(|d2| (0..=d2).map(move |d| (d, d2))).map(|(d, d2)| emp.pbar(d, d2)).sum();
        prop_assert!((total - h.num_vertices() as f64).abs() < 1e-9);
    }
}
