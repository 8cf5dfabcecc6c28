//! Terminal-time functionals `F(u) = Φ(⟨u(T), ψ⟩)` and their Taylor jets
//! along the hierarchy.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{compositions, factorial};
use crate::error::{Error, Result};
use crate::spectral::Field;
use crate::solver::SolveContext;
use crate::taylor::{deterministic_hierarchy, TaylorHierarchy};

/// Smooth functional of the terminal state.
pub trait Functional: Send + Sync {
    fn evaluate(&self, u: &Field) -> Result<f64>;

    /// `D^k F(u)[d_1, …, d_k]` with `k = dirs.len()`.
    fn derivative(&self, u: &Field, dirs: &[&Field]) -> Result<f64>;

    /// Highest derivative order available.
    fn max_order(&self) -> usize {
        usize::MAX
    }

    /// `M_k ≥ sup_u ‖D^k F(u)‖` in the operator norm over `L^∞` directions.
    fn derivative_bound(&self, k: usize) -> f64;

    /// Riesz representer of `DF(u)` in the discrete `L²` inner product.
    fn terminal_gradient(&self, u: &Field) -> Result<Field>;

    /// `sup_u |F(u)|`.
    fn sup_norm(&self) -> f64 {
        self.derivative_bound(0)
    }
}

/// Scalar profile `Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Arctan,
    Tanh,
    /// `Φ(s) = ∫_{−1}^{s} φ / Z − 1/2` with `φ(t) = exp(−1/(1−t²))`.
    BumpIntegral,
    /// `Φ(s) = s`; unbounded, for testing.
    Linear,
}

impl Profile {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "arctan" => Ok(Self::Arctan),
            "tanh" => Ok(Self::Tanh),
            "bump" | "bump_integral" => Ok(Self::BumpIntegral),
            "linear" => Ok(Self::Linear),
            other => Err(Error::InvalidArgument(format!("unknown profile `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Arctan => "arctan",
            Self::Tanh => "tanh",
            Self::BumpIntegral => "bump",
            Self::Linear => "linear",
        }
    }

    /// `Φ^{(k)}(s)`.
    pub fn derivative(self, k: usize, s: f64) -> f64 {
        match self {
            Self::Arctan => {
                if k == 0 {
                    return s.atan();
                }
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * factorial(k - 1) * Complex64::new(s, -1.0).powi(-(k as i32)).im
            }
            Self::Tanh => {
                let t = s.tanh();
                poly_eval(&tanh_polys()[k.min(TABLE_ORDER)], t)
            }
            Self::BumpIntegral => {
                if k == 0 {
                    bump_integral(s)
                } else if s.abs() >= 1.0 {
                    0.0
                } else {
                    bump_derivative(k - 1, s) / bump_mass()
                }
            }
            Self::Linear => match k {
                0 => s,
                1 => 1.0,
                _ => 0.0,
            },
        }
    }

    /// `sup_s |Φ^{(k)}(s)|` (an upper bound).
    pub fn bound(self, k: usize) -> f64 {
        match self {
            Self::Arctan => {
                if k == 0 {
                    FRAC_PI_2
                } else {
                    factorial(k - 1)
                }
            }
            Self::Tanh => tanh_polys()[k.min(TABLE_ORDER)].iter().map(|c| c.abs()).sum(),
            Self::BumpIntegral => {
                if k == 0 {
                    0.5
                } else {
                    bump_bounds()[(k - 1).min(TABLE_ORDER)]
                }
            }
            Self::Linear => match k {
                0 => f64::INFINITY,
                1 => 1.0,
                _ => 0.0,
            },
        }
    }
}

const TABLE_ORDER: usize = 14;

fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// `tanh^{(k)} = P_k(tanh)` with `P_0 = t`, `P_{k+1} = P_k'·(1 − t²)`.
fn tanh_polys() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut out = vec![vec![0.0, 1.0]];
        for k in 0..TABLE_ORDER {
            let next = poly_mul(&poly_derivative(&out[k]), &[1.0, 0.0, -1.0]);
            out.push(next);
        }
        out
    })
}

/// `φ^{(n)} = P_n(t) q^{−2n} φ` with `q = 1 − t²` and
/// `P_{n+1} = P_n' q² + (4n t q − 2t) P_n`.
fn bump_polys() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let q = [1.0, 0.0, -1.0];
        let q2 = poly_mul(&q, &q);
        let mut out = vec![vec![1.0]];
        for n in 0..TABLE_ORDER {
            let p = &out[n];
            let a = 2.0 * n as f64;
            let tq = poly_mul(&[0.0, 2.0 * a], &q);
            let factor = poly_add(&tq, &[0.0, -2.0]);
            let next = poly_add(&poly_mul(&poly_derivative(p), &q2), &poly_mul(&factor, p));
            out.push(next);
        }
        out
    })
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

fn bump_derivative(n: usize, t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - t * t;
    let log_scale = -1.0 / q - 2.0 * n as f64 * q.ln();
    poly_eval(&bump_polys()[n.min(TABLE_ORDER)], t) * log_scale.exp()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| simpson(bump, -1.0, 1.0, 4000))
}

fn bump_integral(s: f64) -> f64 {
    if s <= -1.0 {
        return -0.5;
    }
    if s >= 1.0 {
        return 0.5;
    }
    let panels = ((s + 1.0) * 2000.0).ceil() as usize + 2;
    (simpson(bump, -1.0, s, panels) / bump_mass() - 0.5).clamp(-0.5, 0.5)
}

/// Dense-sweep estimate of `sup |φ^{(n)}| / Z` with a 5% margin.
fn bump_bounds() -> &'static [f64] {
    static BOUNDS: OnceLock<Vec<f64>> = OnceLock::new();
    BOUNDS.get_or_init(|| {
        let z = bump_mass();
        (0..=TABLE_ORDER)
            .map(|n| {
                let sup = (1..40000)
                    .map(|i| bump_derivative(n, -1.0 + i as f64 / 20000.0).abs())
                    .fold(0.0, f64::max);
                1.05 * sup / z
            })
            .collect()
    })
}

/// `F(u) = Φ(⟨u, ψ⟩)`.
#[derive(Clone, Debug)]
pub struct TerminalFunctional {
    pub profile: Profile,
    pub psi: Field,
}

impl TerminalFunctional {
    pub fn new(profile: Profile, psi: Field) -> Self {
        Self { profile, psi }
    }

    pub fn observable(&self, u: &Field) -> Result<f64> {
        self.psi.grid().check(u.grid())?;
        Ok(u.inner(&self.psi))
    }
}

impl Functional for TerminalFunctional {
    fn evaluate(&self, u: &Field) -> Result<f64> {
        Ok(self.profile.derivative(0, self.observable(u)?))
    }

    fn derivative(&self, u: &Field, dirs: &[&Field]) -> Result<f64> {
        let s = self.observable(u)?;
        let mut d = self.profile.derivative(dirs.len(), s);
        for v in dirs {
            d *= self.observable(v)?;
        }
        Ok(d)
    }

    fn derivative_bound(&self, k: usize) -> f64 {
        if k == 0 {
            return self.profile.bound(0);
        }
        self.profile.bound(k) * self.psi.norm_l1().powi(k as i32)
    }

    fn terminal_gradient(&self, u: &Field) -> Result<Field> {
        Ok(self.psi.scaled(self.profile.derivative(1, self.observable(u)?)))
    }
}

/// `F ≡ c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantFunctional(pub f64);

impl Functional for ConstantFunctional {
    fn evaluate(&self, _u: &Field) -> Result<f64> {
        Ok(self.0)
    }

    fn derivative(&self, _u: &Field, dirs: &[&Field]) -> Result<f64> {
        Ok(if dirs.is_empty() { self.0 } else { 0.0 })
    }

    fn derivative_bound(&self, k: usize) -> f64 {
        if k == 0 {
            self.0.abs()
        } else {
            0.0
        }
    }

    fn terminal_gradient(&self, u: &Field) -> Result<Field> {
        Ok(Field::zeros(u.grid()))
    }
}

/// Functional by name: `"terminal"` (`Φ(⟨u, ψ⟩)`) or `"constant"` (`F ≡ 0`).
pub fn builtin_functional(kind: &str, profile: Profile, psi: Field) -> Result<Box<dyn Functional>> {
    match kind {
        "terminal" | "observable" => Ok(Box::new(TerminalFunctional::new(profile, psi))),
        "constant" | "zero" => Ok(Box::new(ConstantFunctional(0.0))),
        other => Err(Error::InvalidArgument(format!("unknown functional kind `{other}`"))),
    }
}

/// `F̂^{(m)} = ∂_ε^m F(Σ_j ε^j u_j/j!)|_{ε=0}` for `m = 0..=order`, from the
/// terminal values `terms[j] = u_j(T)`:
/// `F̂^{(m)} = m! Σ_k (1/k!) Σ_{i ∈ S_k^m} D^k F(u_0)[u_{i_1}/i_1!, …, u_{i_k}/i_k!]`.
pub fn jet(f: &dyn Functional, terms: &[Field], order: usize) -> Result<Vec<f64>> {
    if terms.len() <= order {
        return Err(Error::MissingTerm(order));
    }
    if f.max_order() < order {
        return Err(Error::InsufficientDerivatives {
            needed: order,
            available: f.max_order(),
        });
    }
    let scaled: Vec<Field> = terms.iter().enumerate().map(|(j, u)| u.scaled(1.0 / factorial(j))).collect();
    let mut out = vec![f.evaluate(&terms[0])?];
    for m in 1..=order {
        let mut total = 0.0;
        for k in 1..=m {
            let mut s = 0.0;
            for comp in compositions(k, m) {
                let dirs: Vec<&Field> = comp.iter().map(|&i| &scaled[i]).collect();
                s += f.derivative(&terms[0], &dirs)?;
            }
            total += s / factorial(k);
        }
        out.push(factorial(m) * total);
    }
    Ok(out)
}

/// Jet along a solved hierarchy, up to its full order.
pub fn fhat(f: &dyn Functional, hier: &TaylorHierarchy) -> Result<Vec<f64>> {
    jet(f, &hier.terminal(), hier.order)
}

/// `Q̂ = F̂^{(2)}` for one noise sample.
pub fn qhat(f: &dyn Functional, hier: &TaylorHierarchy) -> Result<f64> {
    if hier.order < 2 {
        return Err(Error::MissingTerm(2));
    }
    Ok(jet(f, &hier.terminal(), 2)?[2])
}

/// `Q_h(𝓛(k)) = ∂_s² F(w_{h+sk})|_{s=0}` via the hierarchy driven by `k` with `c = 0`.
pub fn qhat_deterministic(f: &dyn Functional, ctx: &SolveContext, h: &Field, k: &Field) -> Result<f64> {
    let ctx = ctx.clone().terminal_only();
    let hier = deterministic_hierarchy(&ctx, h, k, 2)?;
    qhat(f, &hier)
}

/// `F(û^ε(T)) − Σ_{m ≤ order} ε^m F̂^{(m)}/m!`.
pub fn functional_remainder(f: &dyn Functional, shifted_terminal: &Field, jet: &[f64], eps: f64, order: usize) -> Result<f64> {
    if jet.len() <= order {
        return Err(Error::MissingTerm(order));
    }
    let sum: f64 = (0..=order).map(|m| eps.powi(m as i32) * jet[m] / factorial(m)).sum();
    Ok(f.evaluate(shifted_terminal)? - sum)
}
