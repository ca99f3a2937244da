//! Forward-mode first and second derivatives.
//!
//! A [`Jet2`] carries a value, its derivatives along two seed directions
//! `u` and `v`, and the mixed second derivative along `(u, v)`. Seeding
//! `u = e_j`, `v = e_k` and pushing the jet through a map yields
//! `∂f/∂m_j`, `∂f/∂m_k` and `∂²f/∂m_j∂m_k` in one pass, without
//! truncation error.
//!
//! Maps are written once against the [`Scalar`] trait and evaluated with
//! `f64` (values), `TwoFloat` (finite-difference oracles) or `Jet2`
//! (derivatives).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};

/// Arithmetic needed by kernels and measures.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn constant(x: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(x: f64) -> Self {
        x
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// Double-double evaluation, used by the finite-difference oracles so
/// that stencil cancellation does not drown in `f64` rounding.
impl Scalar for TwoFloat {
    #[inline]
    fn constant(x: f64) -> Self {
        TwoFloat::from(x)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.hi() + self.lo()
    }

    #[inline]
    fn exp(self) -> Self {
        TwoFloat::exp(self)
    }
}

/// Second-order jet along two seed directions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    /// Derivatives along the first and second seed direction.
    pub grad: [f64; 2],
    /// Mixed second derivative along (first, second).
    pub hess: f64,
}

impl Jet2 {
    pub fn new(value: f64, grad: [f64; 2], hess: f64) -> Self {
        Jet2 { value, grad, hess }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    #[inline]
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Jet2 {
            value: f,
            grad: [df * self.grad[0], df * self.grad[1]],
            hess: df * self.hess + d2f * self.grad[0] * self.grad[1],
        }
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.value;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for Jet2 {
    type Output = Jet2;

    #[inline]
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: [self.grad[0] + o.grad[0], self.grad[1] + o.grad[1]],
            hess: self.hess + o.hess,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;

    #[inline]
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value - o.value,
            grad: [self.grad[0] - o.grad[0], self.grad[1] - o.grad[1]],
            hess: self.hess - o.hess,
        }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;

    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value * o.value,
            grad: [
                self.grad[0] * o.value + self.value * o.grad[0],
                self.grad[1] * o.value + self.value * o.grad[1],
            ],
            hess: self.hess * o.value
                + self.grad[0] * o.grad[1]
                + self.grad[1] * o.grad[0]
                + self.value * o.hess,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;

    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

impl Neg for Jet2 {
    type Output = Jet2;

    #[inline]
    fn neg(self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: [-self.grad[0], -self.grad[1]],
            hess: -self.hess,
        }
    }
}

impl AddAssign for Jet2 {
    #[inline]
    fn add_assign(&mut self, o: Jet2) {
        *self = *self + o;
    }
}

impl SubAssign for Jet2 {
    #[inline]
    fn sub_assign(&mut self, o: Jet2) {
        *self = *self - o;
    }
}

impl MulAssign for Jet2 {
    #[inline]
    fn mul_assign(&mut self, o: Jet2) {
        *self = *self * o;
    }
}

impl Scalar for Jet2 {
    #[inline]
    fn constant(x: f64) -> Self {
        Jet2 {
            value: x,
            grad: [0.0; 2],
            hess: 0.0,
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
}

/// A map `ℝⁿ → ℝᵖ` written against [`Scalar`], so it can be evaluated
/// on plain floats and on jets.
pub trait DiffMap: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

/// `p × n × n` second-derivative tensor, `(i, j, k) ↦ ∂²f_i/∂m_j∂m_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianTensor {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl HessianTensor {
    pub fn zeros(p: usize, n: usize) -> Self {
        HessianTensor {
            p,
            n,
            data: vec![0.0; p * n * n],
        }
    }

    pub fn dim_out(&self) -> usize {
        self.p
    }

    pub fn dim_in(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    /// The `n × n` slice for output `i`.
    pub fn slice(&self, i: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.data[i * nn..(i + 1) * nn]
    }

    /// `(B·W)_i = Σ_j Σ_k B_ijk W_jk`, summed over `j` then `k`.
    pub fn contract(&self, w: &DMatrix<f64>) -> Vec<f64> {
        (0..self.p)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..self.n {
                    for k in 0..self.n {
                        acc += self.get(i, j, k) * w[(j, k)];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

fn seeded(m: &[f64], first: Option<usize>, second: Option<usize>) -> Vec<Jet2> {
    m.iter()
        .enumerate()
        .map(|(l, &v)| {
            Jet2::new(
                v,
                [
                    if Some(l) == first { 1.0 } else { 0.0 },
                    if Some(l) == second { 1.0 } else { 0.0 },
                ],
                0.0,
            )
        })
        .collect()
}

fn check_dim<F: DiffMap>(f: &F, m: &[f64]) -> Result<()> {
    if m.len() != f.dim_in() {
        return Err(Error::DimensionMismatch {
            expected: f.dim_in(),
            got: m.len(),
        });
    }
    Ok(())
}

/// Forward-mode Jacobian, `(Df)_ij = ∂f_i/∂m_j`. One pass per input.
pub fn jacobian<F: DiffMap>(f: &F, m: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(f, m)?;
    let (p, n) = (f.dim_out(), f.dim_in());
    let mut jac = DMatrix::zeros(p, n);
    for j in 0..n {
        for (i, jet) in f.eval(&seeded(m, Some(j), None)).iter().enumerate() {
            if !jet.grad[0].is_finite() {
                return Err(Error::NonFiniteDerivative {
                    output: i,
                    input: j,
                });
            }
            jac[(i, j)] = jet.grad[0];
        }
    }
    Ok(jac)
}

/// Mixed second derivative `∂²f/∂m_j∂m_k` for every output, seeding
/// `j` first and `k` second.
pub fn mixed_second<F: DiffMap>(f: &F, m: &[f64], j: usize, k: usize) -> Result<Vec<f64>> {
    check_dim(f, m)?;
    Ok(f.eval(&seeded(m, Some(j), Some(k)))
        .iter()
        .map(|jet| jet.hess)
        .collect())
}

/// Jacobian and Hessian together from the `n(n+1)/2` paired passes.
///
/// The diagonal passes (`j = k`) also carry the first derivatives, so no
/// extra Jacobian passes are needed. `B_ijk` and `B_ikj` are filled from
/// the same computed coefficient.
pub fn derivatives<F: DiffMap>(
    f: &F,
    m: &[f64],
    exec: Execution,
) -> Result<(DMatrix<f64>, HessianTensor)> {
    check_dim(f, m)?;
    let (p, n) = (f.dim_out(), f.dim_in());
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).collect();
    let passes = map_indexed(exec, pairs.len(), |q| {
        let (j, k) = pairs[q];
        f.eval(&seeded(m, Some(j), Some(k)))
    });

    let mut jac = DMatrix::zeros(p, n);
    let mut hess = HessianTensor::zeros(p, n);
    for (&(j, k), out) in pairs.iter().zip(&passes) {
        for (i, jet) in out.iter().enumerate() {
            if !jet.hess.is_finite() {
                return Err(Error::NonFiniteDerivative {
                    output: i,
                    input: j,
                });
            }
            hess.set(i, j, k, jet.hess);
            hess.set(i, k, j, jet.hess);
            if j == k {
                if !jet.grad[0].is_finite() {
                    return Err(Error::NonFiniteDerivative {
                        output: i,
                        input: j,
                    });
                }
                jac[(i, j)] = jet.grad[0];
            }
        }
    }
    Ok((jac, hess))
}

/// Forward-mode Hessian tensor.
pub fn hessian<F: DiffMap>(f: &F, m: &[f64]) -> Result<HessianTensor> {
    derivatives(f, m, Execution::default()).map(|(_, h)| h)
}

/// Which derivative `fd_check` compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    First,
    Second,
}

pub const FD_STEP_FIRST: f64 = 1e-5;
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Denominator floor of the relative discrepancy.
pub const FD_DENOM_FLOOR: f64 = 1e-8;

fn shifted(m: &[f64], moves: &[(usize, f64)]) -> Vec<TwoFloat> {
    let mut x: Vec<TwoFloat> = m.iter().map(|&v| TwoFloat::from(v)).collect();
    for &(l, d) in moves {
        x[l] += d;
    }
    x
}

/// Central-difference Jacobian, `(f(m+he_j) − f(m−he_j)) / 2h`. The map is
/// evaluated in double-double, so the result carries truncation error
/// only.
pub fn fd_jacobian<F: DiffMap>(f: &F, m: &[f64], h: f64) -> DMatrix<f64> {
    let (p, n) = (f.dim_out(), f.dim_in());
    let mut jac = DMatrix::zeros(p, n);
    for j in 0..n {
        let fp = f.eval(&shifted(m, &[(j, h)]));
        let fm = f.eval(&shifted(m, &[(j, -h)]));
        for i in 0..p {
            jac[(i, j)] = ((fp[i] - fm[i]) / (2.0 * h)).value();
        }
    }
    jac
}

/// Four-point central stencil for `∂²f/∂m_j∂m_k`:
/// `[f(+h,+h) − f(+h,−h) − f(−h,+h) + f(−h,−h)] / 4h²`.
pub fn fd_hessian<F: DiffMap>(f: &F, m: &[f64], h: f64) -> HessianTensor {
    let (p, n) = (f.dim_out(), f.dim_in());
    let mut hess = HessianTensor::zeros(p, n);
    for j in 0..n {
        for k in j..n {
            let fpp = f.eval(&shifted(m, &[(j, h), (k, h)]));
            let fpm = f.eval(&shifted(m, &[(j, h), (k, -h)]));
            let fmp = f.eval(&shifted(m, &[(j, -h), (k, h)]));
            let fmm = f.eval(&shifted(m, &[(j, -h), (k, -h)]));
            for i in 0..p {
                let v = ((fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4.0 * h * h)).value();
                hess.set(i, j, k, v);
                hess.set(i, k, j, v);
            }
        }
    }
    hess
}

#[inline]
fn rel_err(exact: f64, approx: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(FD_DENOM_FLOOR)
}

/// Largest relative discrepancy between forward-mode derivatives and
/// central finite differences with step `h`. Non-finite derivatives
/// report `f64::INFINITY`.
pub fn fd_check<F: DiffMap>(f: &F, m: &[f64], order: FdOrder, h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    match order {
        FdOrder::First => {
            let Ok(ad) = jacobian(f, m) else {
                return f64::INFINITY;
            };
            let fd = fd_jacobian(f, m, h);
            ad.iter()
                .zip(fd.iter())
                .fold(0.0, |acc, (&a, &b)| acc.max(rel_err(a, b)))
        }
        FdOrder::Second => {
            let Ok((_, ad)) = derivatives(f, m, Execution::Sequential) else {
                return f64::INFINITY;
            };
            let fd = fd_hessian(f, m, h);
            ad.data
                .iter()
                .zip(&fd.data)
                .fold(0.0, |acc, (&a, &b)| acc.max(rel_err(a, b)))
        }
    }
}
