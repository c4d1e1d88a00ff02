//! Exact passing probability for the follower attack against the real
//! challenge schedule.
//!
//! Unlike the fixed-step formulas, deadlines here depend on which two
//! checkpoints a challenge connects, and the walk moves on a fixed clock
//! (one step every `step_ticks` simulation ticks, first move at tick
//! `step_ticks`) that is independent of the schedule.

use super::analysis::RandomWalkModel;
use super::matrix::TransitionMatrix;
use super::SecurityError;

#[derive(Debug, Clone)]
pub struct ScheduleOracle {
    pub walk: RandomWalkModel,
    /// Candidate checkpoint distances; the last slot holds `d_ref`.
    pub points: Vec<f64>,
    /// `interval[a][b]`: ticks from a measurement at `points[a]` to the
    /// next one at `points[b]`, slack included.
    pub interval: Vec<Vec<usize>>,
    pub t0_tick: usize,
    pub step_ticks: usize,
    pub gamma: f64,
}

impl ScheduleOracle {
    fn d_ref_index(&self) -> usize {
        self.points.len() - 1
    }

    fn accept_mask(&self, point: usize) -> Vec<bool> {
        let acc = self.walk.acceptance_states(self.points[point], self.gamma);
        let mut mask = vec![false; self.walk.n];
        for x in acc {
            mask[x] = true;
        }
        mask
    }

    /// Probability that the walk passes all K interior challenges; with
    /// `boundaries` the two `d_ref` entries must pass as well.
    pub fn passing_probability(&self, p: &TransitionMatrix, k: usize, boundaries: bool) -> Result<f64, SecurityError> {
        let n = self.walk.n;
        if p.n() != n {
            return Err(SecurityError::Domain(format!(
                "matrix is {}x{0}, walk has {n} states",
                p.n()
            )));
        }
        if self.points.len() < 2 || self.step_ticks == 0 {
            return Err(SecurityError::Domain(
                "need at least one checkpoint and a positive step".into(),
            ));
        }
        let m = self.points.len() - 1;
        let s = self.step_ticks;
        let r = self.d_ref_index();
        let masks: Vec<Vec<bool>> = (0..self.points.len()).map(|i| self.accept_mask(i)).collect();

        let max_steps = self.interval.iter().flatten().max().copied().unwrap_or(0) / s + 2;
        let mut powers = vec![TransitionMatrix::identity(n)];
        for i in 1..=max_steps.max(self.t0_tick / s) {
            powers.push(powers[i - 1].mul(p));
        }
        let power = |k: usize| -> TransitionMatrix {
            if k < powers.len() {
                powers[k].clone()
            } else {
                p.pow(k)
            }
        };

        // mass[prev point][tick phase] = distribution over walk states
        let mut mass: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; s]; self.points.len()];
        let mut start = power(self.t0_tick / s).left_mul(&vec![1.0 / n as f64; n]);
        if boundaries {
            for (x, keep) in start.iter_mut().zip(&masks[r]) {
                if !keep {
                    *x = 0.0;
                }
            }
        }
        mass[r][self.t0_tick % s] = Some(start);

        let advance = |mass: &Vec<Vec<Option<Vec<f64>>>>, targets: &[usize], weight: f64| {
            let mut next: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; s]; self.points.len()];
            for (prev, phases) in mass.iter().enumerate() {
                for (phase, dist) in phases.iter().enumerate() {
                    let Some(dist) = dist else { continue };
                    for &to in targets {
                        let ticks = phase + self.interval[prev][to];
                        let moved = power(ticks / s).left_mul(dist);
                        let slot = next[to][ticks % s].get_or_insert_with(|| vec![0.0; n]);
                        for ((acc, v), keep) in slot.iter_mut().zip(&moved).zip(&masks[to]) {
                            if *keep {
                                *acc += weight * v;
                            }
                        }
                    }
                }
            }
            next
        };

        let interior: Vec<usize> = (0..m).collect();
        for _ in 0..k {
            mass = advance(&mass, &interior, 1.0 / m as f64);
        }
        if boundaries {
            mass = advance(&mass, &[r], 1.0);
        }
        Ok(mass.iter().flatten().flatten().map(|d| d.iter().sum::<f64>()).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::analysis::exact_passing_probability;
    use crate::security::monte_carlo::{trial_rng, WalkSampler};
    use rand::Rng;

    fn oracle(interval: Vec<Vec<usize>>, t0: usize, step: usize) -> ScheduleOracle {
        ScheduleOracle {
            walk: RandomWalkModel::new(5, 0.0, 1.0).unwrap(),
            points: vec![1.0, 3.0, 2.0],
            interval,
            t0_tick: t0,
            step_ticks: step,
            gamma: 0.0,
        }
    }

    #[test]
    fn uniform_intervals_reduce_to_forward_pass() {
        // one step per challenge, phase aligned
        let o = oracle(vec![vec![10; 3]; 3], 0, 10);
        let p = o.walk.transition_matrix();
        for k in 1..4 {
            let a = o.passing_probability(&p, k, false).unwrap();
            let b = exact_passing_probability(&p, &[1, 3], &vec![1; k]).unwrap();
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_simulation_with_uneven_intervals() {
        let interval = vec![vec![7, 13, 9], vec![11, 4, 16], vec![8, 12, 5]];
        let o = oracle(interval.clone(), 3, 5);
        let p = o.walk.transition_matrix();
        let sampler = WalkSampler::new(&p);
        let trials = 60_000u64;
        for (k, boundaries) in [(1, false), (2, false), (2, true)] {
            let exact = o.passing_probability(&p, k, boundaries).unwrap();
            let mut passes = 0;
            for t in 0..trials {
                let mut rng = trial_rng(99, t);
                let mut x = sampler.uniform_start(&mut rng);
                let mut tick = 0usize;
                let walk_to = |target: usize, x: &mut usize, tick: &mut usize, rng: &mut _| {
                    for tt in *tick + 1..=target {
                        if tt % 5 == 0 {
                            *x = sampler.step(*x, rng);
                        }
                    }
                    *tick = target;
                };
                walk_to(3, &mut x, &mut tick, &mut rng);
                let mut ok = !boundaries || x == 2;
                let mut prev = 2;
                for _ in 0..k {
                    let c = rng.random_range(0..2usize);
                    let target = tick + interval[prev][c];
                    walk_to(target, &mut x, &mut tick, &mut rng);
                    ok &= x as f64 == o.points[c];
                    prev = c;
                }
                if boundaries {
                    let target = tick + interval[prev][2];
                    walk_to(target, &mut x, &mut tick, &mut rng);
                    ok &= x == 2;
                }
                passes += ok as usize;
            }
            let rate = passes as f64 / trials as f64;
            let se = (exact * (1.0 - exact) / trials as f64).sqrt();
            assert!((rate - exact).abs() < 4.0 * se, "k={k} {rate} vs {exact}");
        }
    }
}
