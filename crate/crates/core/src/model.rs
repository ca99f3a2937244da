//! Population models: occupancy and count vectors, occupancy-dependent
//! kernels, measures, and the one-step mean-field map.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::autodiff::{DiffMap, Scalar};
use crate::error::{Error, Result};

/// Tolerance for simplex membership and kernel row sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the unit simplex: fractions of the population per state.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyVector(Vec<f64>);

impl OccupancyVector {
    /// Validates entries in `[0, 1]` and a unit sum, both within
    /// [`SIMPLEX_TOL`]. Nothing is renormalised.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        validate_occupancy(&entries)?;
        Ok(OccupancyVector(entries))
    }

    /// The vertex of the simplex concentrated on `state`.
    pub fn vertex(n_states: usize, state: usize) -> Self {
        let mut v = vec![0.0; n_states];
        v[state] = 1.0;
        OccupancyVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for OccupancyVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Checks that `v` lies on the unit simplex.
pub fn validate_occupancy(v: &[f64]) -> Result<()> {
    for (index, &value) in v.iter().enumerate() {
        if !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&value) {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let sum: f64 = v.iter().sum();
    let deviation = sum - 1.0;
    if deviation.abs() > SIMPLEX_TOL {
        return Err(Error::SumNotOne { sum, deviation });
    }
    Ok(())
}

/// Integer state counts of a population of `N` objects.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountVector(Vec<u64>);

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::EmptyPopulation);
        }
        Ok(CountVector(counts))
    }

    /// Like [`CountVector::new`] but also checks the total.
    pub fn with_population(counts: Vec<u64>, population: u64) -> Result<Self> {
        let got = counts.iter().sum::<u64>();
        if got != population {
            return Err(Error::PopulationMismatch {
                expected: population,
                got,
            });
        }
        Self::new(counts)
    }

    /// Converts `occupancy · N` to counts; every product must be integral.
    pub fn from_occupancy(occupancy: &OccupancyVector, population: u64) -> Result<Self> {
        let counts = occupancy
            .as_slice()
            .iter()
            .map(|&x| {
                let c = x * population as f64;
                let r = c.round();
                if (c - r).abs() > 1e-9 {
                    Err(Error::NonIntegralCounts {
                        value: x,
                        population,
                    })
                } else {
                    Ok(r as u64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_population(counts, population)
    }

    pub fn population(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn occupancy(&self) -> OccupancyVector {
        let n = self.population() as f64;
        OccupancyVector(self.0.iter().map(|&c| c as f64 / n).collect())
    }
}

/// A population model: `n` local states and an occupancy-dependent
/// row-stochastic kernel `K(m)`.
///
/// Kernels are written against [`Scalar`] so the same code evaluates
/// values and derivatives. Implementations must be deterministic and must
/// not depend on the population size.
pub trait PopulationModel: Sync {
    fn n_states(&self) -> usize;

    fn state_names(&self) -> Vec<String> {
        (0..self.n_states()).map(|i| format!("s{i}")).collect()
    }

    /// Writes the non-zero entries of `K(m)` into the row-major `k`, which
    /// the caller zero-fills.
    fn fill_kernel<S: Scalar>(&self, m: &[S], k: &mut [S]);

    /// Row-major `K(m)`.
    fn kernel_row_major<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        let n = self.n_states();
        let mut k = vec![S::zero(); n * n];
        self.fill_kernel(m, &mut k);
        k
    }

    fn kernel(&self, m: &OccupancyVector) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_row_slice(n, n, &self.kernel_row_major(m.as_slice()))
    }
}

/// `(Φ₁(m))_j = Σ_i m_i K_ij(m)` on any scalar type.
pub fn phi<M: PopulationModel + ?Sized, S: Scalar>(model: &M, m: &[S]) -> Vec<S> {
    let n = model.n_states();
    let k = model.kernel_row_major(m);
    let mut out = vec![S::zero(); n];
    for (i, &mi) in m.iter().enumerate() {
        let row = &k[i * n..(i + 1) * n];
        for (o, &kij) in out.iter_mut().zip(row) {
            *o += mi * kij;
        }
    }
    out
}

/// One mean-field step `m ↦ m·K(m)`. The result is validated, never
/// renormalised.
pub fn step<M: PopulationModel + ?Sized>(
    model: &M,
    m: &OccupancyVector,
) -> Result<OccupancyVector> {
    if m.len() != model.n_states() {
        return Err(Error::DimensionMismatch {
            expected: model.n_states(),
            got: m.len(),
        });
    }
    OccupancyVector::new(phi(model, m.as_slice()))
}

/// `t`-fold composition of [`step`].
pub fn iterate<M: PopulationModel + ?Sized>(
    model: &M,
    m0: &OccupancyVector,
    t: usize,
) -> Result<OccupancyVector> {
    let mut m = m0.clone();
    for _ in 0..t {
        m = step(model, &m)?;
    }
    Ok(m)
}

/// Φ₁ as a differentiable map.
pub struct OneStepMap<'a, M: ?Sized>(pub &'a M);

impl<M: PopulationModel + ?Sized> DiffMap for OneStepMap<'_, M> {
    fn dim_in(&self) -> usize {
        self.0.n_states()
    }

    fn dim_out(&self) -> usize {
        self.0.n_states()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        phi(self.0, x)
    }
}

/// A smooth scalar function of the occupancy with its own gradient and
/// Hessian.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, m: &[f64]) -> f64;
    fn gradient(&self, m: &[f64]) -> Vec<f64>;
    /// Row-major `n × n`.
    fn hessian(&self, m: &[f64]) -> Vec<f64>;
}

/// A measure of interest `h(m)`.
#[derive(Clone)]
pub enum Measure {
    /// `h(m) = Σ w_i m_i`.
    Linear(Vec<f64>),
    General(Arc<dyn SmoothFunction>),
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Linear(w) => f.debug_tuple("Linear").field(w).finish(),
            Measure::General(_) => f.write_str("General(..)"),
        }
    }
}

impl Measure {
    pub fn value(&self, m: &[f64]) -> f64 {
        match self {
            Measure::Linear(w) => w.iter().zip(m).map(|(a, b)| a * b).sum(),
            Measure::General(h) => h.value(m),
        }
    }

    pub fn gradient(&self, m: &[f64]) -> Vec<f64> {
        match self {
            Measure::Linear(w) => w.clone(),
            Measure::General(h) => h.gradient(m),
        }
    }

    /// Row-major Hessian; zero for linear measures.
    pub fn hessian(&self, m: &[f64]) -> Vec<f64> {
        match self {
            Measure::Linear(w) => vec![0.0; w.len() * w.len()],
            Measure::General(h) => h.hessian(m),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Measure::Linear(_))
    }
}

/// `K(m) = I`.
#[derive(Debug, Clone)]
pub struct IdentityModel(pub usize);

impl PopulationModel for IdentityModel {
    fn n_states(&self) -> usize {
        self.0
    }

    fn fill_kernel<S: Scalar>(&self, _m: &[S], k: &mut [S]) {
        for i in 0..self.0 {
            k[i * self.0 + i] = S::one();
        }
    }
}

/// A kernel that ignores the occupancy.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    n: usize,
    entries: Vec<f64>,
}

impl ConstantModel {
    /// `rows` must be square and row-stochastic.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            validate_occupancy(row)?;
            entries.extend_from_slice(row);
        }
        Ok(ConstantModel { n, entries })
    }
}

impl PopulationModel for ConstantModel {
    fn n_states(&self) -> usize {
        self.n
    }

    fn fill_kernel<S: Scalar>(&self, _m: &[S], k: &mut [S]) {
        for (dst, &src) in k.iter_mut().zip(&self.entries) {
            *dst = S::constant(src);
        }
    }
}
