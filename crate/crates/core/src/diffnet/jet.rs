//! Truncated-Taylor scalar types for forward-over-reverse differentiation.
//!
//! Running the network's forward and reverse passes over `Dual` numbers
//! seeded with an input direction v yields, in the dual parts, directional
//! derivatives of every produced quantity: the output picks up (grad . v)
//! and the parameter adjoints pick up d/dw (grad . v). `Jet2` extends this
//! one order further, so second directional derivatives v^T H v and their
//! parameter gradients fall out of the same passes.

/// Scalar that supports the operations the network passes need.
pub trait Ad:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self;
    /// Leading (value) coefficient.
    fn value(self) -> f64;
    /// Multiply by a plain f64 constant.
    fn scale(self, c: f64) -> Self;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;
}

/// Overflow-safe softplus: `ln(1 + e^x)`.
pub fn softplus_f64(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Overflow-safe logistic sigmoid, the softplus derivative.
pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Ad for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn zero() -> Self {
        0.0
    }
    fn value(self) -> f64 {
        self
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
}

/// First-order jet: value plus one directional derivative coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }
}

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.v + rhs.v, self.d + rhs.d)
    }
}

impl std::ops::Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.v - rhs.v, self.d - rhs.d)
    }
}

impl std::ops::Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.v * rhs.v, self.v * rhs.d + self.d * rhs.v)
    }
}

impl std::ops::Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Ad for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn zero() -> Self {
        Dual::new(0.0, 0.0)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn scale(self, c: f64) -> Self {
        Dual::new(self.v * c, self.d * c)
    }
    fn softplus(self) -> Self {
        Dual::new(softplus_f64(self.v), sigmoid_f64(self.v) * self.d)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.v);
        Dual::new(s, s * (1.0 - s) * self.d)
    }
}

/// Second-order jet `v + d1*eps + d2*eps^2` with `d2 = f''/2` along the
/// seeded direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Jet2 { v, d1, d2 }
    }

    /// Second directional derivative `d^2/deps^2` of the tracked quantity.
    pub fn second(self) -> f64 {
        2.0 * self.d2
    }
}

impl std::ops::Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.v + rhs.v, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl std::ops::Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.v - rhs.v, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl std::ops::Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.v * rhs.v,
            self.v * rhs.d1 + self.d1 * rhs.v,
            self.v * rhs.d2 + self.d1 * rhs.d1 + self.d2 * rhs.v,
        )
    }
}

impl std::ops::Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.v, -self.d1, -self.d2)
    }
}

impl Ad for Jet2 {
    fn from_f64(v: f64) -> Self {
        Jet2::new(v, 0.0, 0.0)
    }
    fn zero() -> Self {
        Jet2::new(0.0, 0.0, 0.0)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn scale(self, c: f64) -> Self {
        Jet2::new(self.v * c, self.d1 * c, self.d2 * c)
    }
    fn softplus(self) -> Self {
        let s = sigmoid_f64(self.v);
        let sp = softplus_f64(self.v);
        let s1 = s * (1.0 - s); // second softplus derivative
        Jet2::new(sp, s * self.d1, s * self.d2 + 0.5 * s1 * self.d1 * self.d1)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.v);
        let g1 = s * (1.0 - s);
        let g2 = g1 * (1.0 - 2.0 * s);
        Jet2::new(s, g1 * self.d1, g1 * self.d2 + 0.5 * g2 * self.d1 * self.d1)
    }
}
