//! Exact transient law of the count-level chain for small populations.
//!
//! The distribution of `N·M(t)` is propagated step by step: from every
//! support point, the destinations of each state's objects are
//! enumerated as compositions over the non-zero entries of the kernel row,
//! weighted by multinomial probabilities computed in log space, and the
//! per-row outcomes are convolved.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::model::{CountVector, OccupancyVector, PopulationModel};
use crate::refined::refined_trajectory;

pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

/// Law of the count vector; keys are exact integer counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    population: u64,
    probs: BTreeMap<Vec<u64>, f64>,
}

impl CountDistribution {
    pub fn point(counts: &CountVector) -> Self {
        let mut probs = BTreeMap::new();
        probs.insert(counts.counts().to_vec(), 1.0);
        CountDistribution {
            population: counts.population(),
            probs,
        }
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probability(&self, counts: &[u64]) -> f64 {
        self.probs.get(counts).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u64], f64)> {
        self.probs.iter().map(|(k, &p)| (k.as_slice(), p))
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }

    /// `E[M(t)]`.
    pub fn expected_occupancy(&self) -> Vec<f64> {
        let n = self.probs.keys().next().map_or(0, Vec::len);
        let pop = self.population as f64;
        let mut e = vec![0.0; n];
        for (counts, &p) in &self.probs {
            for (ei, &c) in e.iter_mut().zip(counts) {
                *ei += p * c as f64 / pop;
            }
        }
        e
    }
}

struct LogFactorials(Vec<f64>);

impl LogFactorials {
    fn new(max: u64) -> Self {
        let mut v = Vec::with_capacity(max as usize + 1);
        let mut acc = 0.0;
        v.push(0.0);
        for k in 1..=max {
            acc += (k as f64).ln();
            v.push(acc);
        }
        LogFactorials(v)
    }

    fn get(&self, k: u64) -> f64 {
        self.0[k as usize]
    }
}

/// All ways of sending `count` objects to the destinations `support`, with
/// their multinomial probabilities.
fn row_outcomes(
    count: u64,
    support: &[(usize, f64)],
    lf: &LogFactorials,
) -> Vec<(Vec<(usize, u64)>, f64)> {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        count: u64,
        support: &[(usize, f64)],
        pos: usize,
        acc: &mut Vec<(usize, u64)>,
        log_w: f64,
        lf: &LogFactorials,
        base: f64,
        out: &mut Vec<(Vec<(usize, u64)>, f64)>,
    ) {
        let (j, p) = support[pos];
        if pos + 1 == support.len() {
            acc.push((j, count));
            let lw = log_w - lf.get(count) + count as f64 * p.ln();
            out.push((acc.clone(), (base + lw).exp()));
            acc.pop();
            return;
        }
        for k in 0..=count {
            acc.push((j, k));
            let lw = log_w - lf.get(k) + k as f64 * p.ln();
            rec(count - k, support, pos + 1, acc, lw, lf, base, out);
            acc.pop();
        }
    }

    let mut out = Vec::new();
    rec(
        count,
        support,
        0,
        &mut Vec::new(),
        0.0,
        lf,
        lf.get(count),
        &mut out,
    );
    out
}

fn expand<M: PopulationModel + ?Sized>(
    model: &M,
    counts: &[u64],
    population: u64,
    lf: &LogFactorials,
    cap: usize,
) -> Result<BTreeMap<Vec<u64>, f64>> {
    let n = model.n_states();
    let m: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / population as f64)
        .collect();
    let k = model.kernel_row_major(&m);

    let mut partial: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    partial.insert(vec![0; n], 1.0);
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let support: Vec<(usize, f64)> = (0..n)
            .filter_map(|j| {
                let p = k[i * n + j];
                (p > 0.0).then_some((j, p))
            })
            .collect();
        let outcomes = row_outcomes(c, &support, lf);
        let mut next = BTreeMap::new();
        for (base, &p) in &partial {
            for (moves, q) in &outcomes {
                let mut v = base.clone();
                for &(j, x) in moves {
                    v[j] += x;
                }
                *next.entry(v).or_insert(0.0) += p * q;
            }
        }
        if next.len() > cap {
            return Err(Error::StateSpaceTooLarge {
                needed: next.len(),
                cap,
            });
        }
        partial = next;
    }
    Ok(partial)
}

/// One exact step of the count chain.
pub fn exact_step<M: PopulationModel + ?Sized>(
    model: &M,
    dist: &CountDistribution,
) -> Result<CountDistribution> {
    exact_step_capped(model, dist, DEFAULT_SUPPORT_CAP, Execution::default())
}

pub fn exact_step_capped<M: PopulationModel + ?Sized>(
    model: &M,
    dist: &CountDistribution,
    cap: usize,
    exec: Execution,
) -> Result<CountDistribution> {
    let population = dist.population;
    let lf = LogFactorials::new(population);
    let support: Vec<(&Vec<u64>, f64)> = dist.probs.iter().map(|(k, &p)| (k, p)).collect();
    for (counts, _) in &support {
        let got = counts.iter().sum::<u64>();
        if got != population {
            return Err(Error::PopulationMismatch {
                expected: population,
                got,
            });
        }
    }
    let expansions = map_indexed(exec, support.len(), |q| {
        expand(model, support[q].0, population, &lf, cap)
    });

    let mut probs = BTreeMap::new();
    for ((_, p), expansion) in support.iter().zip(expansions) {
        for (v, q) in expansion? {
            *probs.entry(v).or_insert(0.0) += p * q;
        }
        if probs.len() > cap {
            return Err(Error::StateSpaceTooLarge {
                needed: probs.len(),
                cap,
            });
        }
    }
    Ok(CountDistribution { population, probs })
}

/// `E[M(t)]` for `t = 0..=t_max` under the exact law.
pub fn exact_expected_series<M: PopulationModel + ?Sized>(
    model: &M,
    counts0: &CountVector,
    t_max: usize,
) -> Result<Vec<Vec<f64>>> {
    if counts0.len() != model.n_states() {
        return Err(Error::DimensionMismatch {
            expected: model.n_states(),
            got: counts0.len(),
        });
    }
    let mut dist = CountDistribution::point(counts0);
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(dist.expected_occupancy());
    for _ in 0..t_max {
        dist = exact_step(model, &dist)?;
        out.push(dist.expected_occupancy());
    }
    Ok(out)
}

pub fn exact_expected_occupancy<M: PopulationModel + ?Sized>(
    model: &M,
    counts0: &CountVector,
    t: usize,
) -> Result<Vec<f64>> {
    Ok(exact_expected_series(model, counts0, t)?
        .pop()
        .expect("t + 1 entries"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub population: u64,
    /// `max_i |N (E[M_i(t)] − μ_i(t)) − V_{t,i}|`.
    pub error: f64,
}

/// Residual of the `1/N` expansion of `E[M(t)]` for each population size.
pub fn corollary_convergence_table<M: PopulationModel + ?Sized>(
    model: &M,
    occupancy0: &OccupancyVector,
    t: usize,
    populations: &[u64],
) -> Result<Vec<ConvergenceRow>> {
    let refined = refined_trajectory(model, occupancy0, t)?;
    let state = refined.at(t);
    populations
        .iter()
        .map(|&population| {
            let counts0 = CountVector::from_occupancy(occupancy0, population)?;
            let e = exact_expected_occupancy(model, &counts0, t)?;
            let n = population as f64;
            let error = e
                .iter()
                .zip(state.mu.as_slice())
                .zip(&state.v)
                .map(|((e, mu), v)| (n * (e - mu) - v).abs())
                .fold(0.0, f64::max);
            Ok(ConvergenceRow { population, error })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::classic_trajectory;
    use crate::model::{ConstantModel, IdentityModel};

    #[test]
    fn identity_kernel_keeps_distribution() {
        let c0 = CountVector::new(vec![2, 1, 4]).unwrap();
        let d0 = CountDistribution::point(&c0);
        assert_eq!(exact_step(&IdentityModel(3), &d0).unwrap(), d0);
    }

    #[test]
    fn single_object_follows_kernel_row() {
        let rows = [
            vec![0.2, 0.8, 0.0],
            vec![0.1, 0.6, 0.3],
            vec![0.0, 0.0, 1.0],
        ];
        let model = ConstantModel::new(&rows).unwrap();
        let d = exact_step(
            &model,
            &CountDistribution::point(&CountVector::new(vec![0, 1, 0]).unwrap()),
        )
        .unwrap();
        assert!((d.probability(&[1, 0, 0]) - 0.1).abs() < 1e-15);
        assert!((d.probability(&[0, 1, 0]) - 0.6).abs() < 1e-15);
        assert!((d.probability(&[0, 0, 1]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_objects_two_states_by_hand() {
        // One object in each state; K = [[0.3, 0.7], [0.6, 0.4]].
        let model = ConstantModel::new(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let d = exact_step(
            &model,
            &CountDistribution::point(&CountVector::new(vec![1, 1]).unwrap()),
        )
        .unwrap();
        // (2,0): 0.3·0.6; (1,1): 0.3·0.4 + 0.7·0.6; (0,2): 0.7·0.4
        assert!((d.probability(&[2, 0]) - 0.18).abs() < 1e-15);
        assert!((d.probability(&[1, 1]) - 0.54).abs() < 1e-15);
        assert!((d.probability(&[0, 2]) - 0.28).abs() < 1e-15);
        assert!((d.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_kernel_expectation_is_classic() {
        let rows = [
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.7, 0.2],
            vec![0.25, 0.25, 0.5],
        ];
        let model = ConstantModel::new(&rows).unwrap();
        let c0 = CountVector::new(vec![4, 0, 2]).unwrap();
        let series = exact_expected_series(&model, &c0, 6).unwrap();
        let classic = classic_trajectory(&model, &c0.occupancy(), 6).unwrap();
        for (e, mu) in series.iter().zip(classic.points()) {
            for (a, b) in e.iter().zip(mu.as_slice()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let table = corollary_convergence_table(&model, &c0.occupancy(), 4, &[6, 12]).unwrap();
        assert!(table.iter().all(|r| r.error < 1e-9));
    }

    #[test]
    fn cap_is_enforced() {
        let model = ConstantModel::new(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        let d0 = CountDistribution::point(&CountVector::new(vec![10, 10, 10]).unwrap());
        assert!(matches!(
            exact_step_capped(&model, &d0, 20, Execution::Sequential),
            Err(Error::StateSpaceTooLarge { cap: 20, .. })
        ));
    }
}
