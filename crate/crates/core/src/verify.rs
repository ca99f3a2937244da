//! Built-in property suites, run by `gossip-rmf verify`.
//!
//! Each check returns the worst observed deviation next to its tolerance,
//! so a report line is self-explanatory.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1};

use crate::agent::apply_shuffle;
use crate::autodiff::{fd_check, FdOrder, FD_STEP_FIRST, FD_STEP_SECOND};
use crate::error::Result;
use crate::exec::Execution;
use crate::experiment::{initial_counts, parse_config, preset};
use crate::gossip::{build_model, pair_probs, GossipParams, ModelKind};
use crate::meanfield::classic_trajectory;
use crate::model::{OccupancyVector, OneStepMap, PopulationModel};
use crate::refined::refined_trajectory_with;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    fn push(&mut self, name: impl Into<String>, worst: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            worst,
            tolerance,
        });
    }
}

/// Uniform point of the `(n − 1)`-simplex (flat Dirichlet).
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// The catalogue's reference parameters: `(500, 100, 50)` with `gmax = 3`.
pub fn reference_params() -> GossipParams {
    GossipParams::new(500, 100, 50, 3, 100).expect("valid")
}

/// Largest `|row sum − 1|` and largest distance of any entry outside
/// `[0, 1]`, over `points` random simplex points.
pub fn kernel_identity(
    kind: ModelKind,
    params: &GossipParams,
    points: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let model = build_model(kind, params)?;
    let n = model.n_states();
    let mut rng = SimRng::seed_from_u64(seed);
    let (mut row_err, mut range_err) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let m = random_simplex(&mut rng, n);
        let k = model.kernel_row_major(&m);
        for i in 0..n {
            let row = &k[i * n..(i + 1) * n];
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            for &x in row {
                range_err = range_err.max((-x).max(x - 1.0).max(0.0));
            }
        }
    }
    Ok((row_err, range_err))
}

/// Largest deviation of the two conditional row sums from 1 over random
/// `(n_items, c, s)` with `s < c < n_items`.
pub fn pair_prob_identity(samples: usize, seed: u64) -> Result<f64> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n_items = rng.random_range(3..=2000u32);
        let c = rng.random_range(2..n_items);
        let s = rng.random_range(1..c);
        let p = pair_probs(&GossipParams::new(n_items, c, s, 1, 1)?)?;
        worst = worst
            .max((p.p_od_od + p.p_dd_od + p.p_do_od - 1.0).abs())
            .max((p.p_do_do + p.p_dd_do + p.p_od_do - 1.0).abs())
            .max((p.p_od_dd + p.p_do_dd + p.p_dd_dd - 1.0).abs());
    }
    Ok(worst)
}

/// Worst first- and second-order `fd_check` of `Φ₁` over random points.
pub fn derivative_agreement(
    kind: ModelKind,
    params: &GossipParams,
    points: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let model = build_model(kind, params)?;
    let phi = OneStepMap(&model);
    let mut rng = SimRng::seed_from_u64(seed);
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let m = random_simplex(&mut rng, model.n_states());
        first = first.max(fd_check(&phi, &m, FdOrder::First, FD_STEP_FIRST));
        second = second.max(fd_check(&phi, &m, FdOrder::Second, FD_STEP_SECOND));
    }
    Ok((first, second))
}

/// Worst structural diagnostics of the refined recursions along a
/// trajectory: `(|ΣV|, W asymmetry, |W row sum|, −min eigenvalue)`.
pub fn refined_structure<M: PopulationModel + ?Sized>(
    model: &M,
    mu0: &OccupancyVector,
    t_max: usize,
    exec: Execution,
) -> Result<[f64; 4]> {
    let traj = refined_trajectory_with(model, mu0, t_max, exec)?;
    let mut worst = [0.0f64; 4];
    for s in traj.states() {
        let d = s.diagnostics();
        worst[0] = worst[0].max(d.v_sum);
        worst[1] = worst[1].max(d.w_asymmetry);
        worst[2] = worst[2].max(d.w_row_sum);
        worst[3] = worst[3].max(-d.w_min_eigenvalue);
    }
    Ok(worst)
}

/// Worst spread among the `O` delay classes and among the `D` delay
/// classes of the full replication model started from equal class masses.
pub fn aggregation_spread(params: &GossipParams, o_mass: f64, t_max: usize) -> Result<f64> {
    let model = build_model(ModelKind::FullReplication, params)?;
    let groups = params.gmax as usize + 1;
    let mut mu0 = vec![o_mass / groups as f64; groups];
    mu0.extend(std::iter::repeat_n((1.0 - o_mass) / groups as f64, groups));
    let traj = classic_trajectory(&model, &OccupancyVector::new(mu0)?, t_max)?;
    let spread = |xs: &[f64]| {
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        hi - lo
    };
    Ok(traj
        .points()
        .iter()
        .map(|p| spread(&p.as_slice()[..groups]).max(spread(&p.as_slice()[groups..])))
        .fold(0.0, f64::max))
}

/// Worst difference between the full coverage trajectory with `O` and `I`
/// merged and the full replication trajectory from the merged start.
pub fn coverage_projection(
    params: &GossipParams,
    points: usize,
    t_max: usize,
    seed: u64,
) -> Result<f64> {
    let cov = build_model(ModelKind::FullCoverage, params)?;
    let rep = build_model(ModelKind::FullReplication, params)?;
    let g = params.gmax as usize + 1;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let m = random_simplex(&mut rng, 3 * g);
        let project = |x: &[f64]| -> Vec<f64> {
            let mut p: Vec<f64> = (0..g).map(|d| x[d] + x[2 * g + d]).collect();
            p.extend_from_slice(&x[g..2 * g]);
            p
        };
        let a = classic_trajectory(&cov, &OccupancyVector::new(m.clone())?, t_max)?;
        let b = classic_trajectory(&rep, &OccupancyVector::new(project(&m))?, t_max)?;
        for (x, y) in a.points().iter().zip(b.points()) {
            for (u, v) in project(x.as_slice()).iter().zip(y.as_slice()) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    Ok(worst)
}

fn subsets(items: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &x in items {
        let extended: Vec<Vec<u32>> = out
            .iter()
            .filter(|s| s.len() < max_len)
            .map(|s| {
                let mut t = s.clone();
                t.push(x);
                t
            })
            .collect();
        out.extend(extended);
    }
    out
}

/// Every pair of caches over `items` distinct ids with at most `c` items,
/// every `s ≤ c`, every pair of selections of size `min(s, |cache|)` in
/// both draw orders that matter for refilling (ascending, descending).
/// Returns `(cases, violations)`.
pub fn exhaustive_shuffle(items: u32, c: usize) -> (u64, u64) {
    let universe: Vec<u32> = (0..items).collect();
    let caches = subsets(&universe, c);
    let (mut cases, mut violations) = (0u64, 0u64);
    for s in 1..=c {
        for a in &caches {
            for b in &caches {
                let sel_as = subsets(a, s)
                    .into_iter()
                    .filter(|x| x.len() == s.min(a.len()));
                let sel_bs: Vec<Vec<u32>> = subsets(b, s)
                    .into_iter()
                    .filter(|x| x.len() == s.min(b.len()))
                    .collect();
                for sa in sel_as {
                    for sb in &sel_bs {
                        let mut sa_rev = sa.clone();
                        sa_rev.reverse();
                        let mut sb_rev = sb.clone();
                        sb_rev.reverse();
                        for (x, y) in [(&sa, sb), (&sa_rev, &sb_rev)] {
                            cases += 1;
                            let (a2, b2) = apply_shuffle(a, b, x, y, c);
                            let mut before: Vec<u32> = a.iter().chain(b).copied().collect();
                            before.sort_unstable();
                            before.dedup();
                            let mut after: Vec<u32> = a2.iter().chain(&b2).copied().collect();
                            after.sort_unstable();
                            after.dedup();
                            let sorted = |v: &[u32]| v.windows(2).all(|w| w[0] < w[1]);
                            if before != after
                                || a2.len() > c
                                || b2.len() > c
                                || !sorted(&a2)
                                || !sorted(&b2)
                            {
                                violations += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    (cases, violations)
}

/// All suites at moderate size.
pub fn run_all(exec: Execution) -> Result<Report> {
    let mut report = Report::default();
    let params = reference_params();

    for kind in ModelKind::ALL {
        let (rows, range) = kernel_identity(kind, &params, 500, 1)?;
        report.push(format!("kernel row sums ({kind})"), rows, 1e-12);
        report.push(format!("kernel entries in [0,1] ({kind})"), range, 0.0);
    }
    report.push(
        "pair-probability row sums",
        pair_prob_identity(200, 2)?,
        1e-12,
    );

    for kind in ModelKind::ALL {
        let (first, second) = derivative_agreement(kind, &params, 50, 3)?;
        report.push(
            format!("first derivatives vs finite differences ({kind})"),
            first,
            1e-6,
        );
        report.push(
            format!("second derivatives vs finite differences ({kind})"),
            second,
            1e-4,
        );
    }

    for name in ["fig7", "fig8"] {
        let config = parse_config(preset(name).expect("shipped preset")).expect("valid preset");
        let model = build_model(config.kind, &config.params)?;
        let mu0 = initial_counts(config.kind, &config.params, &config.init)
            .expect("valid preset")
            .occupancy();
        let [v_sum, asym, row, eig] = refined_structure(&model, &mu0, config.t_max, exec)?;
        report.push(format!("refined |ΣV| ({name})"), v_sum, 1e-9);
        report.push(format!("refined W asymmetry ({name})"), asym, 1e-9);
        report.push(format!("refined W row sums ({name})"), row, 1e-9);
        report.push(
            format!("refined W min eigenvalue ≥ −1e-9 ({name})"),
            eig,
            1e-9,
        );
    }

    report.push(
        "equal delay classes stay equal (full replication)",
        aggregation_spread(&params, 0.984, 1000)?,
        1e-9,
    );
    report.push(
        "coverage model projects onto replication model",
        coverage_projection(&params, 20, 200, 4)?,
        1e-12,
    );

    let (cases, violations) = exhaustive_shuffle(6, 3);
    report.push(
        format!("shuffle conservation ({cases} cases)"),
        violations as f64,
        0.0,
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_points() {
        let mut rng = SimRng::seed_from_u64(1);
        for n in [1, 2, 7] {
            let m = random_simplex(&mut rng, n);
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(m.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn first_step_spread_by_hand() {
        // Equal classes a (O) and b (D), gmax = 3. One step gives
        // O3 − O2 = 2·noc·b·(b·P(DO|DD) − a·P(DD|OD)), noc = e^{−2(a+b)}.
        let p = reference_params();
        let (a, b): (f64, f64) = (0.246, 0.004);
        let expected = 2.0 * (-2.0 * (a + b)).exp() * b * (b * (2.0 / 9.0) - a / 18.0);
        let spread = aggregation_spread(&p, 4.0 * a, 1).unwrap();
        assert!(
            (spread - expected.abs()).abs() < 1e-15,
            "{spread} vs {expected}"
        );
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(&[1, 2, 3], 3).len(), 8);
        assert_eq!(subsets(&[1, 2, 3, 4], 2).len(), 11);
    }

    #[test]
    fn small_suites_pass() {
        let p = reference_params();
        assert!(kernel_identity(ModelKind::SixState, &p, 50, 1).unwrap().0 <= 1e-12);
        assert!(pair_prob_identity(50, 1).unwrap() <= 1e-12);
        assert!(coverage_projection(&p, 3, 30, 1).unwrap() <= 1e-12);
        assert_eq!(exhaustive_shuffle(4, 2).1, 0);
    }
}
