//! Monte Carlo against the exact forward pass over the reference grid.

use platoon_pof::harness::sweep::schedule_oracle;
use platoon_pof::harness::ScenarioConfig;
use platoon_pof::security::{
    exact_passing_probability, guess_bound, passing_probability, simulate_random_walk_follower, uniform_draws,
    RandomWalkModel,
};

fn spread(n: usize, m: usize) -> Vec<usize> {
    (0..m).map(|i| (i * (n - 1) + (m - 1) / 2) / (m - 1)).collect()
}

#[test]
fn monte_carlo_agrees_with_forward_pass() {
    let trials = 20_000;
    for n in [3usize, 10, 100] {
        let model = RandomWalkModel::new(n, 0.0, 1.0).unwrap();
        let p = model.transition_matrix();
        for m in [2usize, 5, 51] {
            if m > n {
                continue;
            }
            let states = spread(n, m);
            let distances: Vec<f64> = states.iter().map(|&s| model.distance(s)).collect();
            for k in 1..=3 {
                let steps: Vec<usize> = (0..k).map(|i| 1 + i % 3).collect();
                let exact = exact_passing_probability(&p, &states, &steps).unwrap();
                let seed = (n * 1000 + m * 10 + k) as u64;
                let mc = simulate_random_walk_follower(
                    &model,
                    &p,
                    uniform_draws(distances.clone(), steps.clone()),
                    0.3,
                    trials,
                    seed,
                );
                let se = (exact * (1.0 - exact) / trials as f64).sqrt().max(1.0 / trials as f64);
                assert!(
                    (mc.rate - exact).abs() <= 3.0 * se,
                    "N={n} M={m} K={k}: {} vs {exact} (se {se})",
                    mc.rate
                );
                let marginal_product = passing_probability(&p, &states, &steps).unwrap();
                assert!(marginal_product <= guess_bound(m, k) + 1e-12);
            }
        }
    }
}

#[test]
fn schedule_oracle_for_reference_setup() {
    let cfg = ScenarioConfig::default();
    let o = schedule_oracle(&cfg).unwrap();
    assert_eq!(o.walk.n, 51);
    assert_eq!(o.points.len(), 52);
    let p = o.walk.transition_matrix();
    let k1 = o.passing_probability(&p, 1, false).unwrap();
    assert!((k1 - 1.0 / 51.0).abs() < 1e-3, "{k1}");
    // with both d_ref entries the walk must also start and end on d_ref
    let with_ends = o.passing_probability(&p, 1, true).unwrap();
    assert!(with_ends < k1 / 20.0);
    let mut prev = 1.0;
    for k in 1..=5 {
        let v = o.passing_probability(&p, k, false).unwrap();
        assert!(v < prev);
        prev = v;
    }
}
