use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combinatorics::factorial;
use crate::error::{Error, Result};

/// Built-in nonlinearities `g` with closed-form derivatives of every order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `g(u) = cos u`
    Cos,
    /// `g(u) = 1/(1+u²)`
    Rational,
    /// `g ≡ 1` (additive noise)
    One,
    /// `g ≡ 0`
    Zero,
}

impl Nonlinearity {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cos" => Ok(Self::Cos),
            "rational" | "lorentzian" => Ok(Self::Rational),
            "one" | "1" => Ok(Self::One),
            "zero" | "0" => Ok(Self::Zero),
            other => Err(Error::InvalidArgument(format!("unknown nonlinearity `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cos => "cos",
            Self::Rational => "rational",
            Self::One => "one",
            Self::Zero => "zero",
        }
    }

    /// `g^{(order)}(u)`.
    pub fn derivative(self, order: usize, u: f64) -> f64 {
        match self {
            Self::Cos => match order % 4 {
                0 => u.cos(),
                1 => -u.sin(),
                2 => -u.cos(),
                _ => u.sin(),
            },
            Self::Rational => {
                // 1/(1+u²) = Im 1/(u - i)
                let z = Complex64::new(u, -1.0);
                let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * factorial(order) * z.powi(-(order as i32) - 1).im
            }
            Self::One => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Zero => 0.0,
        }
    }

    pub fn eval(self, u: f64) -> f64 {
        self.derivative(0, u)
    }

    /// Uniform bound `sup_u |g^{(order)}(u)|`.
    pub fn bound(self, order: usize) -> f64 {
        match self {
            Self::Cos => 1.0,
            Self::Rational => factorial(order),
            Self::One => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Zero => 0.0,
        }
    }

    /// Whether every derivative of order ≥ 1 vanishes.
    pub fn is_constant(self) -> bool {
        matches!(self, Self::One | Self::Zero)
    }

    /// Fill `out[k] = g^{(k)}(u)` for `k < out.len()`.
    pub fn derivatives_into(self, u: f64, out: &mut [f64]) {
        match self {
            Self::Cos => {
                let (s, c) = u.sin_cos();
                for (k, o) in out.iter_mut().enumerate() {
                    *o = match k % 4 {
                        0 => c,
                        1 => -s,
                        2 => -c,
                        _ => s,
                    };
                }
            }
            _ => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self.derivative(k, u);
                }
            }
        }
    }
}
