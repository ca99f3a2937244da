//! Count-level simulation of the population DTMC.
//!
//! Every object jumps independently according to `K(M(t))`, so the
//! destinations of the `c_i` objects in state `i` are multinomial over row
//! `i`. The multinomial is drawn as a chain of conditional binomials.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};

use crate::exec::{map_indexed, Execution};
use crate::model::{CountVector, Measure, PopulationModel};
use crate::rng::{derive_seed, SimRng};
use crate::stats::SimStats;

/// Draws multinomial(`count`, `probs`) into `out` (added, not assigned).
pub fn sample_multinomial<R: Rng + ?Sized>(
    rng: &mut R,
    count: u64,
    probs: &[f64],
    out: &mut [u64],
) {
    let mut remaining = count;
    let mut mass_left = 1.0;
    let last = probs.len() - 1;
    for (j, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j == last {
            out[j] += remaining;
            break;
        }
        if p <= 0.0 {
            mass_left -= p;
            continue;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).min(1.0)
        } else {
            1.0
        };
        let x = if q >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, q)
                .expect("probability in [0, 1)")
                .sample(rng)
        };
        out[j] += x;
        remaining -= x;
        mass_left -= p;
    }
}

fn advance<M: PopulationModel + ?Sized, R: Rng>(
    model: &M,
    counts: &[u64],
    rng: &mut R,
) -> Vec<u64> {
    let n = model.n_states();
    let total = counts.iter().sum::<u64>() as f64;
    let m: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let k = model.kernel_row_major(&m);
    let mut next = vec![0u64; n];
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            sample_multinomial(rng, c, &k[i * n..(i + 1) * n], &mut next);
        }
    }
    next
}

/// One run of `t_max` steps from `counts0`, seeded with `rng_seed`.
pub fn simulate_counts<M: PopulationModel + ?Sized>(
    model: &M,
    counts0: &CountVector,
    t_max: usize,
    rng_seed: u64,
) -> Vec<CountVector> {
    let mut rng = SimRng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(counts0.clone());
    let mut current = counts0.counts().to_vec();
    for _ in 0..t_max {
        current = advance(model, &current, &mut rng);
        out.push(CountVector::new(current.clone()).expect("population is conserved"));
    }
    out
}

/// Per-run series of each measure (evaluated on `counts / N`):
/// `result[measure][run][t]`. Run `r` uses `derive_seed(base_seed, r)`.
pub fn simulate_measure_runs<M: PopulationModel + ?Sized>(
    model: &M,
    counts0: &CountVector,
    t_max: usize,
    runs: usize,
    base_seed: u64,
    measures: &[Measure],
    exec: Execution,
) -> Vec<Vec<Vec<f64>>> {
    let per_run = map_indexed(exec, runs, |r| {
        let traj = simulate_counts(model, counts0, t_max, derive_seed(base_seed, r as u64));
        measures
            .iter()
            .map(|h| {
                traj.iter()
                    .map(|c| h.value(c.occupancy().as_slice()))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    (0..measures.len())
        .map(|q| per_run.iter().map(|run| run[q].clone()).collect())
        .collect()
}

/// Mean and standard deviation of several measures over `runs` runs.
pub fn simulate_measures<M: PopulationModel + ?Sized>(
    model: &M,
    counts0: &CountVector,
    t_max: usize,
    runs: usize,
    base_seed: u64,
    measures: &[Measure],
    exec: Execution,
) -> Vec<SimStats> {
    assert!(runs >= 1, "at least one run is required");
    simulate_measure_runs(model, counts0, t_max, runs, base_seed, measures, exec)
        .iter()
        .map(|series| SimStats::from_runs(series, base_seed))
        .collect()
}

pub fn simulate_measure<M: PopulationModel + ?Sized>(
    model: &M,
    counts0: &CountVector,
    t_max: usize,
    runs: usize,
    base_seed: u64,
    h: &Measure,
) -> SimStats {
    simulate_measures(
        model,
        counts0,
        t_max,
        runs,
        base_seed,
        std::slice::from_ref(h),
        Execution::default(),
    )
    .remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::{build_model, GossipParams, ModelKind};
    use crate::meanfield::classic_trajectory;
    use crate::model::{ConstantModel, IdentityModel};

    #[test]
    fn identity_kernel_freezes_counts() {
        let c0 = CountVector::new(vec![3, 5, 2]).unwrap();
        let traj = simulate_counts(&IdentityModel(3), &c0, 25, 9);
        assert!(traj.iter().all(|c| *c == c0));
    }

    #[test]
    fn deterministic_kernel_matches_classic() {
        let model = ConstantModel::new(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let c0 = CountVector::new(vec![1, 3, 6]).unwrap();
        let traj = simulate_counts(&model, &c0, 12, 4);
        let classic = classic_trajectory(&model, &c0.occupancy(), 12).unwrap();
        for (c, mu) in traj.iter().zip(classic.points()) {
            let scaled: Vec<f64> = mu.as_slice().iter().map(|x| x * 10.0).collect();
            let counts: Vec<f64> = c.counts().iter().map(|&x| x as f64).collect();
            assert_eq!(counts, scaled);
        }
    }

    #[test]
    fn multinomial_conserves_and_respects_zeros() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..200 {
            let mut out = vec![0; 4];
            sample_multinomial(&mut rng, 37, &[0.25, 0.0, 0.5, 0.25], &mut out);
            assert_eq!(out.iter().sum::<u64>(), 37);
            assert_eq!(out[1], 0);
        }
        let mut out = vec![0; 3];
        sample_multinomial(&mut rng, 11, &[0.0, 1.0, 0.0], &mut out);
        assert_eq!(out, vec![0, 11, 0]);
    }

    #[test]
    fn multinomial_mean() {
        let mut rng = SimRng::seed_from_u64(2);
        let probs = [0.1, 0.6, 0.3];
        let mut acc = [0u64; 3];
        let draws = 20_000;
        for _ in 0..draws {
            let mut out = vec![0; 3];
            sample_multinomial(&mut rng, 10, &probs, &mut out);
            for j in 0..3 {
                acc[j] += out[j];
            }
        }
        for j in 0..3 {
            let mean = acc[j] as f64 / draws as f64;
            let sd = (10.0 * probs[j] * (1.0 - probs[j]) / draws as f64).sqrt();
            assert!((mean - 10.0 * probs[j]).abs() < 5.0 * sd, "{j}: {mean}");
        }
    }

    #[test]
    fn stats_are_reproducible_and_conserve_population() {
        let params = GossipParams::new(500, 100, 50, 3, 40).unwrap();
        let model = build_model(ModelKind::SixState, &params).unwrap();
        let c0 = CountVector::new(vec![0, 0, 39, 0, 1, 0]).unwrap();
        let rep = model.replication_measure();
        let a = simulate_measure(&model, &c0, 60, 16, 77, &rep);
        let b = simulate_measure(&model, &c0, 60, 16, 77, &rep);
        assert_eq!(a, b);
        let seq = simulate_measures(
            &model,
            &c0,
            60,
            16,
            77,
            std::slice::from_ref(&rep),
            Execution::Sequential,
        );
        assert_eq!(seq[0], a);
        let single = simulate_measure(&model, &c0, 60, 1, 77, &rep);
        assert!(single.std.iter().all(|&s| s == 0.0));

        for r in 0..8 {
            let traj = simulate_counts(&model, &c0, 60, derive_seed(3, r));
            for c in &traj {
                assert_eq!(c.population(), 40);
                // PD is absorbing, so replication never vanishes.
                assert!(c.counts()[1] + c.counts()[4] >= 1);
                assert_eq!(c.counts()[4], 1);
            }
        }
    }
}
