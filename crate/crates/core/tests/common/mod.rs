//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use gpam::functional::{Profile, TerminalFunctional};
use gpam::nonlinearity::Nonlinearity;
use gpam::solver::SolveContext;
use gpam::spectral::{Field, MollifierSpec, TorusGrid};

/// Dense polynomial arithmetic, coefficients in increasing degree.
pub mod poly {
    pub fn eval(p: &[f64], x: f64) -> f64 {
        p.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    pub fn derivative(p: &[f64]) -> Vec<f64> {
        if p.len() <= 1 {
            return vec![0.0];
        }
        p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
    }

    pub fn nth_derivative(p: &[f64], n: usize) -> Vec<f64> {
        (0..n).fold(p.to_vec(), |q, _| derivative(&q))
    }

    /// `f ∘ g` by Horner's scheme on polynomials.
    pub fn compose(f: &[f64], g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0];
        for c in f.iter().rev() {
            out = mul(&out, g);
            out[0] += c;
        }
        out
    }
}

/// `exp(s)` for a truncated series with zero constant term, summed as
/// `Σ_k s^k / k!` by repeated truncated products.
pub fn series_exp_by_powers(s: &[f64]) -> Vec<f64> {
    let n = s.len() - 1;
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    let mut power = vec![0.0; n + 1];
    power[0] = 1.0;
    let mut fact = 1.0;
    for k in 1..=n {
        let mut next = vec![0.0; n + 1];
        for i in 0..=n {
            for j in 0..=n - i {
                next[i + j] += power[i] * s[j];
            }
        }
        power = next;
        fact *= k as f64;
        for (o, p) in out.iter_mut().zip(&power) {
            *o += p / fact;
        }
    }
    out
}

/// Closed-form arctan derivatives up to order 4.
pub fn arctan_d(k: usize, s: f64) -> f64 {
    let r = 1.0 + s * s;
    match k {
        0 => s.atan(),
        1 => 1.0 / r,
        2 => -2.0 * s / (r * r),
        3 => (6.0 * s * s - 2.0) / r.powi(3),
        4 => 24.0 * s * (1.0 - s * s) / r.powi(4),
        _ => unimplemented!(),
    }
}

/// Reduction of the additive-noise problem with `F(u) = arctan⟨u(T), ψ⟩` to
/// one Gaussian variable `X = ⟨u_1(T), ψ⟩ ~ N(0, σ²)`:
/// `⟨w_h(T), ψ⟩ = c₀ + ⟨h, a⟩` with `a = dt Σ_{j=1}^{M} E^j D ψ`.
#[derive(Clone, Debug)]
pub struct GaussianOracle {
    pub c0: f64,
    pub sigma2: f64,
    pub a: Field,
    pub s_star: f64,
    pub value: f64,
    pub h_star: Field,
    pub q: f64,
    pub a0: f64,
    pub a2: f64,
}

impl GaussianOracle {
    pub fn new(grid: &TorusGrid, u0: &Field, psi: &Field, t: f64, steps: usize) -> Self {
        let n = grid.n() as i64;
        let dt = t / steps as f64;
        let psi_hat = grid.forward(psi.values());
        let u0_hat = grid.forward(u0.values());
        let mut a_hat = psi_hat.clone();
        let mut c0 = 0.0;
        for (idx, c) in a_hat.iter_mut().enumerate() {
            let (k1, k2) = grid.mode(idx);
            let r = (-4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) * dt).exp();
            let kept = 3 * k1.abs() < n && 3 * k2.abs() < n;
            let geometric = if r == 1.0 {
                steps as f64
            } else {
                r * (1.0 - r.powi(steps as i32)) / (1.0 - r)
            };
            c0 += (u0_hat[idx] * psi_hat[idx].conj()).re * r.powi(steps as i32);
            *c = if kept { *c * dt * geometric } else { Default::default() };
        }
        let a = Field::new(grid, grid.inverse(&a_hat)).unwrap();
        let sigma2: f64 = a_hat.iter().map(|c| c.norm_sqr()).sum();
        // s + Φ'(s)σ² = c₀ has a unique root below c₀ for c₀ < 0
        let (mut lo, mut hi) = (c0 - sigma2 - 1.0, c0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + arctan_d(1, mid) * sigma2 - c0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let d1 = arctan_d(1, s);
        let value = arctan_d(0, s) + 0.5 * d1 * d1 * sigma2;
        let q = arctan_d(2, s);
        let a0 = (1.0 + q * sigma2).powf(-0.5);
        let sp2 = sigma2 / (1.0 + q * sigma2);
        let a2 = a0 * (-arctan_d(4, s) * 3.0 * sp2 * sp2 / 24.0 + arctan_d(3, s).powi(2) * 15.0 * sp2.powi(3) / 72.0);
        Self {
            c0,
            sigma2,
            h_star: a.scaled(-d1),
            a,
            s_star: s,
            value,
            q,
            a0,
            a2,
        }
    }

    /// `e^{𝓕*/ε²}·E[exp(−arctan(c₀ + εX)/ε²)]` by trapezoidal quadrature.
    pub fn normalized_j(&self, eps: f64) -> f64 {
        let sigma = self.sigma2.sqrt();
        let centre = (self.s_star - self.c0) / eps;
        let width = 14.0 * sigma;
        let pts = 40_001;
        let hstep = 2.0 * width / (pts - 1) as f64;
        let mut acc = 0.0;
        for i in 0..pts {
            let x = centre - width + i as f64 * hstep;
            let expo = (self.value - arctan_d(0, self.c0 + eps * x)) / (eps * eps) - x * x / (2.0 * self.sigma2);
            let w = if i == 0 || i == pts - 1 { 0.5 } else { 1.0 };
            acc += w * expo.exp();
        }
        acc * hstep / (2.0 * PI * self.sigma2).sqrt()
    }
}

/// `Σ_{k ≠ 0} χ(δ|k|)² / (4π²|k|²)` over the modes of an `n × n` grid.
pub fn c_delta_mode_sum(n: usize, mollifier: &MollifierSpec) -> f64 {
    let half = n as i64 / 2;
    let mut total = 0.0;
    for k1 in -half..half {
        for k2 in -half..half {
            if (k1, k2) == (0, 0) {
                continue;
            }
            let k2f = (k1 * k1 + k2 * k2) as f64;
            let chi = mollifier.profile.eval(mollifier.delta * k2f.sqrt());
            total += chi * chi / (4.0 * PI * PI * k2f);
        }
    }
    total
}

/// Additive-noise test problem on a small grid.
pub struct AdditiveCase {
    pub ctx: SolveContext,
    pub functional: TerminalFunctional,
    pub oracle: GaussianOracle,
}

pub fn additive_case(n: usize, steps: usize) -> AdditiveCase {
    let grid = TorusGrid::new(n).unwrap();
    let t = 0.1;
    let u0 = Field::constant(&grid, -0.5).add(&Field::cosine_mode(&grid, 0, 1, 0.3));
    let psi = Field::constant(&grid, 4.0).add(&Field::cosine_mode(&grid, 1, 0, 2.0));
    let ctx = SolveContext::new(u0.clone(), t, steps, Nonlinearity::One, MollifierSpec::flat_top(0.125)).unwrap();
    let oracle = GaussianOracle::new(&grid, &u0, &psi, t, steps);
    AdditiveCase {
        ctx,
        functional: TerminalFunctional::new(Profile::Arctan, psi),
        oracle,
    }
}

/// The `g = cos` benchmark: `u₀ = −0.08 + 0.5 cos(2πx₁)`, `T = 0.1`,
/// `F(u) = tanh(25⟨u(T), 1⟩)`, `δ = 1/8`.
pub struct CosBenchmark {
    pub ctx: SolveContext,
    pub functional: TerminalFunctional,
}

pub fn cos_benchmark(n: usize, steps: usize) -> CosBenchmark {
    let grid = TorusGrid::new(n).unwrap();
    let u0 = Field::constant(&grid, -0.08).add(&Field::cosine_mode(&grid, 1, 0, 0.5));
    let ctx = SolveContext::new(u0, 0.1, steps, Nonlinearity::Cos, MollifierSpec::flat_top(0.125)).unwrap();
    CosBenchmark {
        ctx,
        functional: TerminalFunctional::new(Profile::Tanh, Field::constant(&grid, 25.0)),
    }
}
