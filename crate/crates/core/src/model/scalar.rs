use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Number type the network is written against. `f64` gives values and
/// gradients; [`Dual`] pushes one tangent direction through the same code,
/// which turns the hand-written backward pass into a Hessian-vector product.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + std::fmt::Debug
{
    fn from_f64(v: f64) -> Self;
    /// Primal part.
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    #[inline]
    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }
}

#[inline]
pub(crate) fn softplus_f64(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
}

/// Forward-mode dual number `re + eps * e`, `e^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    #[inline]
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, e * self.eps)
    }
    #[inline]
    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }
    #[inline]
    fn softplus(self) -> Self {
        Self::new(softplus_f64(self.re), sigmoid_f64(self.re) * self.eps)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.re);
        Self::new(s, s * (1.0 - s) * self.eps)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.eps * k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivative(f: impl Fn(Dual) -> Dual, g: impl Fn(f64) -> f64, x: f64) {
        let h = 1e-6;
        let fd = (g(x + h) - g(x - h)) / (2.0 * h);
        let d = f(Dual::new(x, 1.0)).eps;
        assert!((fd - d).abs() < 1e-7 * (1.0 + d.abs()), "x={x}: {d} vs {fd}");
    }

    #[test]
    fn dual_derivatives() {
        for x in [-30.0, -2.5, -0.1, 0.0, 0.3, 4.0, 35.0] {
            check_derivative(|d| d.softplus(), softplus_f64, x);
            check_derivative(|d| d.sigmoid(), sigmoid_f64, x);
            check_derivative(|d| d.exp() * d, |v| v.exp() * v, x.clamp(-5.0, 5.0));
            check_derivative(|d| (d * d + Dual::from_f64(1.0)).ln(), |v| (v * v + 1.0).ln(), x);
            check_derivative(|d| Dual::from_f64(1.0) / (d * d + Dual::from_f64(2.0)), |v| 1.0 / (v * v + 2.0), x);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus_f64(1000.0), 1000.0);
        assert!(softplus_f64(-1000.0) >= 0.0);
        assert!((softplus_f64(0.0) - 2f64.ln()).abs() < 1e-16);
    }
}
