//! Closed-form 2×2 symmetric matrix algebra.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Symmetric 2×2 matrix stored by its three free entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chol2<T> {
    pub l11: T,
    pub l21: T,
    pub l22: T,
}

impl<T: Real> Sym2<T> {
    pub fn new(xx: T, xy: T, yy: T) -> Self {
        Self { xx, xy, yy }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::one())
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn diag(a: T, b: T) -> Self {
        Self::new(a, T::zero(), b)
    }

    /// `v vᵀ`.
    pub fn outer(v: [T; 2]) -> Self {
        Self::new(v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    pub fn det(&self) -> T {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> T {
        self.xx + self.yy
    }

    /// Both eigenvalues strictly positive and every entry finite.
    pub fn is_positive_definite(&self) -> bool {
        self.xx.is_finite()
            && self.xy.is_finite()
            && self.yy.is_finite()
            && self.xx > T::zero()
            && self.det() > T::zero()
    }

    pub fn cholesky(&self) -> Option<Chol2<T>> {
        if !self.is_positive_definite() {
            return None;
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let rem = self.yy - l21 * l21;
        if !(rem > T::zero()) {
            return None;
        }
        Some(Chol2 { l11, l21, l22: rem.sqrt() })
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        Some(Self::new(self.yy / det, -self.xy / det, self.xx / det))
    }

    pub fn mul_vec(&self, v: [T; 2]) -> [T; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// `vᵀ A v`.
    pub fn quad(&self, v: [T; 2]) -> T {
        self.xx * v[0] * v[0] + (self.xy + self.xy) * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    /// `tr(A B)` for symmetric `A`, `B`.
    pub fn trace_prod(&self, other: &Self) -> T {
        self.xx * other.xx + (self.xy + self.xy) * other.xy + self.yy * other.yy
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.xx + other.xx, self.xy + other.xy, self.yy + other.yy)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [T; 2] {
        let half = T::lit(0.5);
        let mean = (self.xx + self.yy) * half;
        let diff = (self.xx - self.yy) * half;
        let r = (diff * diff + self.xy * self.xy).sqrt();
        [mean - r, mean + r]
    }

    pub fn cast<U: Real>(&self) -> Sym2<U> {
        Sym2::new(U::lit(self.xx.as_f64()), U::lit(self.xy.as_f64()), U::lit(self.yy.as_f64()))
    }
}

impl<T: Real> Chol2<T> {
    /// `L v`.
    pub fn mul_vec(&self, v: [T; 2]) -> [T; 2] {
        [self.l11 * v[0], self.l21 * v[0] + self.l22 * v[1]]
    }

    /// Solves `L x = v`.
    pub fn solve_lower(&self, v: [T; 2]) -> [T; 2] {
        let x0 = v[0] / self.l11;
        [x0, (v[1] - self.l21 * x0) / self.l22]
    }

    /// Solves `Lᵀ x = v`.
    pub fn solve_upper(&self, v: [T; 2]) -> [T; 2] {
        let x1 = v[1] / self.l22;
        [(v[0] - self.l21 * x1) / self.l11, x1]
    }

    /// `log det(A)` for `A = L Lᵀ`.
    pub fn log_det(&self) -> T {
        (self.l11.ln() + self.l22.ln()) * T::lit(2.0)
    }

    /// Reassembles `L Lᵀ`.
    pub fn product(&self) -> Sym2<T> {
        Sym2::new(
            self.l11 * self.l11,
            self.l11 * self.l21,
            self.l21 * self.l21 + self.l22 * self.l22,
        )
    }

    /// `A⁻¹` via the factor.
    pub fn inverse(&self) -> Sym2<T> {
        // L⁻¹ = [[1/l11, 0], [-l21/(l11 l22), 1/l22]]
        let a = T::one() / self.l11;
        let b = -self.l21 / (self.l11 * self.l22);
        let c = T::one() / self.l22;
        // A⁻¹ = L⁻ᵀ L⁻¹
        Sym2::new(a * a + b * b, b * c, c * c)
    }
}
