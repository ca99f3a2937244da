//! Refined mean field: the `1/N` correction to the classic trajectory.
//!
//! With `A_t = DΦ₁(μ(t))`, `B_t = D²Φ₁(μ(t))` and the one-step noise
//! matrix `Γ(μ(t))`,
//!
//! ```text
//! V_{t+1} = A_t V_t + ½ B_t·W_t        V_0 = 0
//! W_{t+1} = Γ(μ(t)) + A_t W_t A_tᵀ     W_0 = 0
//! ```
//!
//! and for a smooth measure `h`,
//! `E[h(M(t))] ≈ h(μ(t)) + (Dh·V_t + ½ D²h·W_t) / N`.
//!
//! Occupancies are row vectors; `V` is a plain array and `A` is indexed
//! `A_ij = ∂Φ₁,ᵢ/∂m_j`, so `A·V` applies the Jacobian to `V`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::autodiff::derivatives;
use crate::error::Result;
use crate::exec::{map_indexed, Execution};
use crate::meanfield::classic_trajectory;
use crate::model::{Measure, OccupancyVector, OneStepMap, PopulationModel};

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedState {
    pub mu: OccupancyVector,
    pub v: Vec<f64>,
    pub w: DMatrix<f64>,
}

/// Conservation and covariance diagnostics of one refined state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `|Σ_i V_i|`.
    pub v_sum: f64,
    /// `max |W_jk − W_kj|`.
    pub w_asymmetry: f64,
    /// `max_j |Σ_k W_jk|`.
    pub w_row_sum: f64,
    /// Smallest eigenvalue of the symmetric part of `W`.
    pub w_min_eigenvalue: f64,
}

impl RefinedState {
    pub fn diagnostics(&self) -> Diagnostics {
        let n = self.w.nrows();
        let mut w_asymmetry: f64 = 0.0;
        let mut w_row_sum: f64 = 0.0;
        for j in 0..n {
            let mut row = 0.0;
            for k in 0..n {
                row += self.w[(j, k)];
                w_asymmetry = w_asymmetry.max((self.w[(j, k)] - self.w[(k, j)]).abs());
            }
            w_row_sum = w_row_sum.max(row.abs());
        }
        let sym = (&self.w + self.w.transpose()) * 0.5;
        let w_min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
        Diagnostics {
            v_sum: self.v.iter().sum::<f64>().abs(),
            w_asymmetry,
            w_row_sum,
            w_min_eigenvalue,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTrajectory {
    states: Vec<RefinedState>,
}

impl RefinedTrajectory {
    pub fn states(&self) -> &[RefinedState] {
        &self.states
    }

    pub fn at(&self, t: usize) -> &RefinedState {
        &self.states[t]
    }

    pub fn t_max(&self) -> usize {
        self.states.len() - 1
    }

    /// Refined estimate of `h` at every time step.
    pub fn measure_series(&self, h: &Measure, population: u64) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| refined_measure(s, h, population))
            .collect()
    }
}

/// `Γ_jj = Σ_i m_i K_ij (1 − K_ij)`, `Γ_jk = −Σ_i m_i K_ij K_ik`.
pub fn gamma<M: PopulationModel + ?Sized>(model: &M, m: &OccupancyVector) -> DMatrix<f64> {
    let n = model.n_states();
    let k = model.kernel_row_major(m.as_slice());
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                let (kij, kil) = (k[i * n + j], k[i * n + l]);
                acc += if j == l {
                    m[i] * kij * (1.0 - kij)
                } else {
                    -(m[i] * kij * kil)
                };
            }
            g[(j, l)] = acc;
        }
    }
    g
}

/// Steps whose derivatives are evaluated together before the sequential
/// `V`/`W` recursion consumes them. Bounds memory for the 30-state model.
const DERIVATIVE_CHUNK: usize = 64;

/// Classic trajectory plus the `V_t`, `W_t` recursions.
pub fn refined_trajectory<M: PopulationModel + ?Sized>(
    model: &M,
    mu0: &OccupancyVector,
    t_max: usize,
) -> Result<RefinedTrajectory> {
    refined_trajectory_with(model, mu0, t_max, Execution::default())
}

pub fn refined_trajectory_with<M: PopulationModel + ?Sized>(
    model: &M,
    mu0: &OccupancyVector,
    t_max: usize,
    exec: Execution,
) -> Result<RefinedTrajectory> {
    let n = model.n_states();
    let classic = classic_trajectory(model, mu0, t_max)?;
    let phi = OneStepMap(model);

    let mut states = Vec::with_capacity(t_max + 1);
    let mut v = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, n);
    states.push(RefinedState {
        mu: mu0.clone(),
        v: v.as_slice().to_vec(),
        w: w.clone(),
    });

    let mut t0 = 0;
    while t0 < t_max {
        let len = DERIVATIVE_CHUNK.min(t_max - t0);
        let chunk = map_indexed(exec, len, |q| {
            let mu = classic.at(t0 + q);
            derivatives(&phi, mu.as_slice(), Execution::Sequential).map(|d| (d, gamma(model, mu)))
        });
        for (q, item) in chunk.into_iter().enumerate() {
            let ((a, b), g) = item?;
            let bw = DVector::from_vec(b.contract(&w));
            let v_next = &a * &v + bw * 0.5;
            let w_next = g + &a * &w * a.transpose();
            v = v_next;
            w = w_next;
            states.push(RefinedState {
                mu: classic.at(t0 + q + 1).clone(),
                v: v.as_slice().to_vec(),
                w: w.clone(),
            });
        }
        t0 += len;
    }
    Ok(RefinedTrajectory { states })
}

/// `μ + V/N`, with a flag when any entry leaves `[0, 1]`. Values are
/// never clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedOccupancy {
    pub values: Vec<f64>,
    pub out_of_range: bool,
}

pub fn refined_occupancy(state: &RefinedState, population: u64) -> RefinedOccupancy {
    let n = population as f64;
    let values: Vec<f64> = state
        .mu
        .as_slice()
        .iter()
        .zip(&state.v)
        .map(|(mu, v)| mu + v / n)
        .collect();
    let out_of_range = values.iter().any(|&x| !(0.0..=1.0).contains(&x));
    RefinedOccupancy {
        values,
        out_of_range,
    }
}

/// `h(μ) + [Dh(μ)·V + ½ Σ_jk D²h(μ)_jk W_jk] / N`.
pub fn refined_measure(state: &RefinedState, h: &Measure, population: u64) -> f64 {
    let m = state.mu.as_slice();
    let n_pop = population as f64;
    match h {
        // Same expression as h(refined_occupancy) for linear measures.
        Measure::Linear(weights) => weights
            .iter()
            .zip(m.iter().zip(&state.v))
            .map(|(w, (mu, v))| w * (mu + v / n_pop))
            .sum(),
        Measure::General(_) => {
            let n = m.len();
            let grad = h.gradient(m);
            let hess = h.hessian(m);
            let first: f64 = grad.iter().zip(&state.v).map(|(g, v)| g * v).sum();
            let mut second = 0.0;
            for j in 0..n {
                for k in 0..n {
                    second += hess[j * n + k] * state.w[(j, k)];
                }
            }
            h.value(m) + (first + 0.5 * second) / n_pop
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gossip::{build_model, GossipParams, ModelKind};
    use crate::model::{ConstantModel, IdentityModel, SmoothFunction};

    struct SquareOf(usize);

    impl SmoothFunction for SquareOf {
        fn value(&self, m: &[f64]) -> f64 {
            m[self.0] * m[self.0]
        }
        fn gradient(&self, m: &[f64]) -> Vec<f64> {
            let mut g = vec![0.0; m.len()];
            g[self.0] = 2.0 * m[self.0];
            g
        }
        fn hessian(&self, m: &[f64]) -> Vec<f64> {
            let n = m.len();
            let mut h = vec![0.0; n * n];
            h[self.0 * n + self.0] = 2.0;
            h
        }
    }

    #[test]
    fn gamma_of_deterministic_kernel_is_zero() {
        let model = ConstantModel::new(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let m = OccupancyVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(gamma(&model, &m), DMatrix::zeros(3, 3));
    }

    #[test]
    fn gamma_of_fair_coin_kernel() {
        let model = ConstantModel::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let m = OccupancyVector::new(vec![0.5, 0.5]).unwrap();
        let g = gamma(&model, &m);
        assert_eq!(
            g,
            DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25])
        );
    }

    #[test]
    fn identity_kernel_has_no_correction() {
        let mu0 = OccupancyVector::new(vec![0.3, 0.7]).unwrap();
        let rt = refined_trajectory(&IdentityModel(2), &mu0, 20).unwrap();
        for s in rt.states() {
            assert_eq!(s.v, vec![0.0, 0.0]);
            assert_eq!(s.w, DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn constant_kernel_keeps_v_zero() {
        let rows = [
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.3, 0.3, 0.4],
        ];
        let model = ConstantModel::new(&rows).unwrap();
        let k = DMatrix::from_row_slice(3, 3, &rows.concat());
        let a = k.transpose();
        let mu0 = OccupancyVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        let rt = refined_trajectory(&model, &mu0, 15).unwrap();
        let mut w = DMatrix::zeros(3, 3);
        for t in 0..15 {
            assert!(rt.at(t + 1).v.iter().all(|&x| x == 0.0));
            w = gamma(&model, &rt.at(t).mu) + &a * &w * a.transpose();
            assert!((&w - &rt.at(t + 1).w).abs().max() < 1e-15);
        }
    }

    #[test]
    fn refined_occupancy_and_measures() {
        let state = RefinedState {
            mu: OccupancyVector::new(vec![0.5, 0.5]).unwrap(),
            v: vec![0.1, -0.1],
            w: DMatrix::zeros(2, 2),
        };
        let r = refined_occupancy(&state, 10);
        assert!((r.values[0] - 0.51).abs() < 1e-15 && (r.values[1] - 0.49).abs() < 1e-15);
        assert!(!r.out_of_range);

        let zero_v = RefinedState {
            v: vec![0.0, 0.0],
            ..state.clone()
        };
        assert_eq!(refined_occupancy(&zero_v, 10).values, vec![0.5, 0.5]);
        assert_eq!(
            refined_measure(&zero_v, &Measure::Linear(vec![1.0, 0.0]), 10),
            0.5
        );

        let quad = RefinedState {
            mu: OccupancyVector::new(vec![0.5, 0.5]).unwrap(),
            v: vec![0.0, 0.0],
            w: DMatrix::from_row_slice(2, 2, &[0.04, -0.04, -0.04, 0.04]),
        };
        let h = Measure::General(Arc::new(SquareOf(0)));
        assert!((refined_measure(&quad, &h, 100) - 0.2504).abs() < 1e-15);

        let out = RefinedState {
            mu: OccupancyVector::new(vec![0.0, 1.0]).unwrap(),
            v: vec![-0.5, 0.5],
            w: DMatrix::zeros(2, 2),
        };
        assert!(refined_occupancy(&out, 10).out_of_range);
    }

    #[test]
    fn linear_measure_matches_refined_occupancy() {
        let params = GossipParams::new(500, 100, 50, 3, 100).unwrap();
        let model = build_model(ModelKind::SixState, &params).unwrap();
        let mu0 = OccupancyVector::new(vec![0.0, 0.0, 0.99, 0.0, 0.01, 0.0]).unwrap();
        let rt = refined_trajectory(&model, &mu0, 100).unwrap();
        let rep = model.replication_measure();
        for s in rt.states() {
            let occ = refined_occupancy(s, 100).values;
            let direct = occ[1] + occ[4];
            assert!((refined_measure(s, &rep, 100) - direct).abs() <= 1e-14);
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let params = GossipParams::new(500, 100, 50, 3, 100).unwrap();
        let model = build_model(ModelKind::FullCoverage, &params).unwrap();
        let mut mu0 = vec![0.0; 12];
        mu0[4] = 0.01;
        for d in 0..4 {
            mu0[8 + d] += 0.2475;
        }
        let mu0 = OccupancyVector::new(mu0).unwrap();
        let a = refined_trajectory_with(&model, &mu0, 130, Execution::Sequential).unwrap();
        let b = refined_trajectory_with(&model, &mu0, 130, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
