//! Finite combinatorics of the noise-intensity expansion.
//!
//! * integer compositions `S_k^m = {i ∈ ℕ^k_{≥1} : |i| = m}`,
//! * the composition form of the higher chain rule,
//!   `∂^m(f∘g) = m! Σ_k f^{(k)}(g)/k! Σ_{i∈S_k^m} Π g^{(i_ℓ)}/i_ℓ!`,
//! * maps `π : {1..k} → {3..N+2}` with excess `ℓ(π) = Σ(π_i − 2)`,
//! * the weights `W_m` obtained by expanding `exp(−Σ_{j≥3} ε^{j−2} F̂^{(j)}/j!)`,
//! * truncated power series, used as an independent route to the weights.
//!
//! All enumerations are lexicographic so floating-point summation order is fixed.

use crate::error::{Error, Result};

const FACTORIALS: [u64; 21] = {
    let mut t = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        t[i] = t[i - 1] * i as u64;
        i += 1;
    }
    t
};

/// `n!` as a float; exact for `n ≤ 20`, Γ-free product beyond that.
pub fn factorial(n: usize) -> f64 {
    if n < FACTORIALS.len() {
        FACTORIALS[n] as f64
    } else {
        (21..=n).fold(FACTORIALS[20] as f64, |acc, k| acc * k as f64)
    }
}

/// Exact integer factorial; `None` past `20!`.
pub fn factorial_u64(n: usize) -> Option<u64> {
    FACTORIALS.get(n).copied()
}

pub type Composition = Vec<usize>;

/// All `i ∈ ℕ^k_{≥1}` with `|i| = m`, in lexicographic order.
pub fn compositions(k: usize, m: usize) -> Vec<Composition> {
    let mut out = Vec::new();
    if k == 0 || k > m {
        return out;
    }
    let mut current = Vec::with_capacity(k);
    fill_compositions(k, m, &mut current, &mut out);
    out
}

fn fill_compositions(k: usize, remaining: usize, current: &mut Vec<usize>, out: &mut Vec<Composition>) {
    if current.len() + 1 == k {
        current.push(remaining);
        out.push(current.clone());
        current.pop();
        return;
    }
    let slots_left = k - current.len() - 1;
    for first in 1..=(remaining - slots_left) {
        current.push(first);
        fill_compositions(k, remaining - first, current, out);
        current.pop();
    }
}

/// Precomputed `S_k^j` for all `1 ≤ k ≤ j ≤ max`.
#[derive(Clone, Debug)]
pub struct CompositionTable {
    max: usize,
    // index [j][k]
    table: Vec<Vec<Vec<Composition>>>,
}

impl CompositionTable {
    pub fn new(max: usize) -> Self {
        let table = (0..=max)
            .map(|j| (0..=j).map(|k| compositions(k, j)).collect())
            .collect();
        Self { max, table }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn get(&self, k: usize, j: usize) -> &[Composition] {
        if j > self.max || k > j {
            return &[];
        }
        &self.table[j][k]
    }
}

/// `m`-th derivative of `f∘g` from `f_derivs[k] = f^{(k)}(g(x))` and
/// `g_derivs[i] = g^{(i)}(x)` (index 0 unused).
pub fn riordan_derivative(f_derivs: &[f64], g_derivs: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return f_derivs
            .first()
            .copied()
            .ok_or(Error::InsufficientDerivatives { needed: 0, available: 0 });
    }
    if f_derivs.len() <= m {
        return Err(Error::InsufficientDerivatives {
            needed: m,
            available: f_derivs.len().saturating_sub(1),
        });
    }
    if g_derivs.len() <= m {
        return Err(Error::InsufficientDerivatives {
            needed: m,
            available: g_derivs.len().saturating_sub(1),
        });
    }
    let mut total = 0.0;
    for k in 1..=m {
        let inner: f64 = compositions(k, m)
            .iter()
            .map(|comp| comp.iter().map(|&i| g_derivs[i] / factorial(i)).product::<f64>())
            .sum();
        total += f_derivs[k] / factorial(k) * inner;
    }
    Ok(factorial(m) * total)
}

/// A map `π : {1..k} → {3..N+2}` stored as its value list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionMap(pub Vec<usize>);

impl ExpansionMap {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `ℓ(π) = Σ (π_i − 2)`
    pub fn excess(&self) -> usize {
        self.0.iter().map(|&p| p - 2).sum()
    }

    /// `|π| = Σ π_i`
    pub fn size(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapFilter {
    All,
    ExcessAtMost(usize),
    ExcessAbove(usize),
    ExcessEquals(usize),
}

impl MapFilter {
    fn accepts(self, excess: usize) -> bool {
        match self {
            MapFilter::All => true,
            MapFilter::ExcessAtMost(n) => excess <= n,
            MapFilter::ExcessAbove(n) => excess > n,
            MapFilter::ExcessEquals(m) => excess == m,
        }
    }
}

/// Lexicographic enumeration of `G(k, N)` restricted by `filter`.
pub fn maps_g(k: usize, n: usize, filter: MapFilter) -> Vec<ExpansionMap> {
    let mut out = Vec::new();
    if k == 0 || n == 0 {
        return out;
    }
    let mut current = vec![3usize; k];
    loop {
        let map = ExpansionMap(current.clone());
        if filter.accepts(map.excess()) {
            out.push(map);
        }
        // odometer increment over {3..n+2}^k
        let mut pos = k;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if current[pos] < n + 2 {
                current[pos] += 1;
                for c in current.iter_mut().skip(pos + 1) {
                    *c = 3;
                }
                break;
            }
        }
    }
}

/// Weights `W_0 … W_N` from `fhat[j] = F̂^{(j)}` for `j = 3..=N+2`.
///
/// `fhat` is indexed by derivative order; entries below 3 are ignored.
pub fn weights_w(fhat: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > 0 && fhat.len() < n + 3 {
        return Err(Error::InsufficientDerivatives {
            needed: n + 2,
            available: fhat.len().saturating_sub(1),
        });
    }
    let mut w = vec![0.0; n + 1];
    w[0] = 1.0;
    for (m, wm) in w.iter_mut().enumerate().skip(1) {
        let mut total = 0.0;
        // maps with excess m have at most m entries
        for k in 1..=m.min(n) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let inner: f64 = maps_g(k, m, MapFilter::ExcessEquals(m))
                .iter()
                .map(|pi| pi.0.iter().map(|&p| fhat[p] / factorial(p)).product::<f64>())
                .sum();
            total += sign / factorial(k) * inner;
        }
        *wm = total;
    }
    Ok(w)
}

/// Real power series `c_0 + c_1 ε + … + c_N ε^N` truncated at a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct FormalSeries {
    coeffs: Vec<f64>,
}

impl FormalSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least one coefficient");
        Self { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::new(vec![0.0; order + 1])
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        Self::new((0..=n).map(|i| self.coeffs[i] + other.coeffs[i]).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| s * c).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        let mut out = vec![0.0; n + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(n + 1) {
            for (j, b) in other.coeffs.iter().enumerate().take(n + 1 - i) {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// `exp(s)` for `s` with zero constant term, via `E' = s'E`.
    pub fn exp(&self) -> Result<Self> {
        if self.coeffs[0] != 0.0 {
            return Err(Error::NonZeroConstantTerm(self.coeffs[0]));
        }
        let n = self.order();
        let mut e = vec![0.0; n + 1];
        e[0] = 1.0;
        for m in 1..=n {
            let mut acc = 0.0;
            for k in 1..=m {
                acc += k as f64 * self.coeffs[k] * e[m - k];
            }
            e[m] = acc / m as f64;
        }
        Ok(Self::new(e))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Independent route to the weights: coefficients of
/// `exp(−Σ_{m=1}^{N} ε^m F̂^{(m+2)}/(m+2)!)` truncated at order `N`.
pub fn series_exp_truncate(s: &FormalSeries) -> Result<FormalSeries> {
    s.exp()
}

pub fn weights_series(fhat: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut c = vec![0.0; n + 1];
    for (m, cm) in c.iter_mut().enumerate().skip(1) {
        *cm = -fhat[m + 2] / factorial(m + 2);
    }
    Ok(series_exp_truncate(&FormalSeries::new(c))?.coeffs().to_vec())
}
