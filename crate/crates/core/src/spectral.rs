//! Discrete unit torus, Fourier transforms and the Fourier multipliers used
//! throughout the pipeline: heat semigroup, periodic Green's function,
//! mollification and two-thirds dealiasing.
//!
//! Conventions: the torus side is 1, nodes sit at `x = (i/n, j/n)` stored
//! row-major (`i` is the `x₁` index), and the forward transform is normalised
//! so that `f(x) = Σ_k f̂(k) exp(2πi k·x)`. The discrete inner product is
//! `⟨f, g⟩ = Σ_x f(x) g(x) / n²`, the Riemann sum of the L² pairing.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct GridInner {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// integer |k|² for every mode, flat row-major
    k_squared: Vec<f64>,
}

/// `n × n` discretisation of the unit torus. Cheap to clone; FFT plans are shared.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.inner.n).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n
    }
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(n));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut k_squared = Vec::with_capacity(n * n);
        for i in 0..n {
            let k1 = wavenumber(n, i) as f64;
            for j in 0..n {
                let k2 = wavenumber(n, j) as f64;
                k_squared.push(k1 * k1 + k2 * k2);
            }
        }
        Ok(Self {
            inner: Arc::new(GridInner {
                n,
                fwd,
                inv,
                k_squared,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.inner.n as f64
    }

    /// Physical coordinates of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.spacing();
        (i as f64 * h, j as f64 * h)
    }

    /// Signed wavenumber stored at array index `idx` along one axis.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        wavenumber(self.inner.n, idx)
    }

    /// Flat index of the mode `(k1, k2)`, wavenumbers taken modulo `n`.
    pub fn mode_index(&self, k1: i64, k2: i64) -> usize {
        let n = self.inner.n as i64;
        (k1.rem_euclid(n) * n + k2.rem_euclid(n)) as usize
    }

    /// Flat index of the mode `-k` for the mode stored at flat index `idx`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.inner.n;
        let (i, j) = (idx / n, idx % n);
        ((n - i) % n) * n + (n - j) % n
    }

    pub fn mode(&self, idx: usize) -> (i64, i64) {
        let n = self.inner.n;
        (self.wavenumber(idx / n), self.wavenumber(idx % n))
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.inner.k_squared
    }

    pub fn check(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected: self.n(),
                found: other.n(),
            });
        }
        Ok(())
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.inner.n;
        let plan = if inverse { &self.inner.inv } else { &self.inner.fwd };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, n);
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, n);
    }

    /// Forward transform of real nodal values, normalised by `1/n²`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        let scale = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Inverse transform; returns the real part.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.fft2(&mut buf, true);
        buf.iter().map(|c| c.re).collect()
    }

    pub(crate) fn inverse_into(&self, coeffs: &[Complex64], work: &mut Vec<Complex64>, out: &mut [f64]) {
        work.clear();
        work.extend_from_slice(coeffs);
        self.fft2(work, true);
        for (o, c) in out.iter_mut().zip(work.iter()) {
            *o = c.re;
        }
    }

    pub(crate) fn forward_into(&self, values: &[f64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(values.iter().map(|&v| Complex64::new(v, 0.0)));
        self.fft2(out, false);
        let scale = 1.0 / self.len() as f64;
        out.iter_mut().for_each(|c| *c *= scale);
    }
}

fn wavenumber(n: usize, idx: usize) -> i64 {
    if idx < n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Real scalar field on the torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = grid.node(i, j);
                values.push(f(x1, x2));
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// `amp·cos(2π k·x)`.
    pub fn cosine_mode(grid: &TorusGrid, k1: i64, k2: i64, amp: f64) -> Self {
        Self::from_fn(grid, |x1, x2| {
            amp * (2.0 * PI * (k1 as f64 * x1 + k2 as f64 * x2)).cos()
        })
    }

    /// `amp·sin(2π k·x)`.
    pub fn sine_mode(grid: &TorusGrid, k1: i64, k2: i64, amp: f64) -> Self {
        Self::from_fn(grid, |x1, x2| {
            amp * (2.0 * PI * (k1 as f64 * x1 + k2 as f64 * x2)).sin()
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn inner(&self, other: &Field) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s / self.grid.len() as f64
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.grid.len() as f64
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// Value at the node `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }
}

/// Fourier coefficient table of a real field.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.mode_index(k1, k2)]
    }

    /// Replace each coefficient by the average of itself and the conjugate of its partner.
    pub fn symmetrize(&mut self) {
        for idx in 0..self.coeffs.len() {
            let c = self.grid.conjugate_index(idx);
            if c < idx {
                continue;
            }
            let avg = 0.5 * (self.coeffs[idx] + self.coeffs[c].conj());
            self.coeffs[idx] = avg;
            self.coeffs[c] = avg.conj();
            if c == idx {
                self.coeffs[idx].im = 0.0;
            }
        }
    }

    pub fn apply(&mut self, multiplier: &Multiplier) {
        for (c, m) in self.coeffs.iter_mut().zip(&multiplier.symbol) {
            *c *= *m;
        }
    }
}

pub fn forward_transform(f: &Field) -> Result<Spectrum> {
    if !f.is_finite() {
        return Err(Error::Exploded);
    }
    let mut s = Spectrum {
        grid: f.grid.clone(),
        coeffs: f.grid.forward(&f.values),
    };
    s.symmetrize();
    Ok(s)
}

pub fn inverse_transform(s: &Spectrum) -> Field {
    Field {
        grid: s.grid.clone(),
        values: s.grid.inverse(&s.coeffs),
    }
}

/// Real, even Fourier multiplier, one value per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplier {
    symbol: Vec<f64>,
}

impl Multiplier {
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            symbol: grid.k_squared().iter().map(|&k2| f(k2)).collect(),
        }
    }

    pub fn from_symbol(symbol: Vec<f64>) -> Self {
        Self { symbol }
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn compose(&self, other: &Multiplier) -> Multiplier {
        Multiplier {
            symbol: self.symbol.iter().zip(&other.symbol).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn apply_to(&self, f: &Field) -> Field {
        let mut coeffs = f.grid.forward(&f.values);
        for (c, m) in coeffs.iter_mut().zip(&self.symbol) {
            *c *= *m;
        }
        Field {
            grid: f.grid.clone(),
            values: f.grid.inverse(&coeffs),
        }
    }
}

/// `exp(-4π²|k|² dt)`
pub fn heat_multiplier(grid: &TorusGrid, dt: f64) -> Multiplier {
    Multiplier::from_fn(grid, |k2| (-4.0 * PI * PI * k2 * dt).exp())
}

pub fn heat_step(f: &Field, dt: f64) -> Result<Field> {
    if dt < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time step {dt}")));
    }
    if dt == 0.0 {
        return Ok(f.clone());
    }
    Ok(heat_multiplier(&f.grid, dt).apply_to(f))
}

/// Spectral Laplacian `Δ`, symbol `-4π²|k|²`.
pub fn laplacian(f: &Field) -> Field {
    Multiplier::from_fn(&f.grid, |k2| -4.0 * PI * PI * k2).apply_to(f)
}

/// Two-thirds rule: keep modes with `|k_i| < n/3` on both axes.
pub fn dealias_multiplier(grid: &TorusGrid) -> Multiplier {
    let n = grid.n();
    let cut = n as f64 / 3.0;
    let symbol = (0..grid.len())
        .map(|idx| {
            let (k1, k2) = grid.mode(idx);
            if (k1.abs() as f64) < cut && (k2.abs() as f64) < cut {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Multiplier { symbol }
}

pub fn dealias(f: &Field) -> Field {
    dealias_multiplier(&f.grid).apply_to(f)
}

/// Zero-mean periodic Green's function of `-Δ` on the unit torus.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    multiplier: Multiplier,
}

impl GreenKernel {
    pub fn periodic(grid: &TorusGrid) -> Self {
        Self {
            multiplier: Multiplier::from_fn(grid, green_symbol),
        }
    }

    pub fn multiplier(&self) -> &Multiplier {
        &self.multiplier
    }

    pub fn convolve(&self, f: &Field) -> Field {
        self.multiplier.apply_to(f)
    }
}

/// `m(k) = 1/(4π²|k|²)`, `m(0) = 0`.
pub fn green_symbol(k_squared: f64) -> f64 {
    if k_squared == 0.0 {
        0.0
    } else {
        1.0 / (4.0 * PI * PI * k_squared)
    }
}

pub fn green_convolve(f: &Field) -> Field {
    GreenKernel::periodic(&f.grid).convolve(f)
}

/// Radial profile `χ` of the mollifier in Fourier space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// `χ = 1` on `[0, 1/2]`, C^∞ transition to `0` at `1`.
    FlatTop,
    /// `χ(r) = exp(1 - 1/(1 - r²))` on `[0, 1)`.
    Bump,
}

impl Cutoff {
    pub fn eval(self, r: f64) -> f64 {
        let r = r.abs();
        if r >= 1.0 {
            return 0.0;
        }
        match self {
            Cutoff::FlatTop => {
                if r <= 0.5 {
                    1.0
                } else {
                    1.0 - smooth_step(2.0 * (r - 0.5))
                }
            }
            Cutoff::Bump => (1.0 - 1.0 / (1.0 - r * r)).exp(),
        }
    }
}

fn smooth_step(t: f64) -> f64 {
    let psi = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = psi(t);
    let b = psi(1.0 - t);
    a / (a + b)
}

/// Mollifier `ρ_δ` with Fourier symbol `χ(δ|k|)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MollifierSpec {
    pub profile: Cutoff,
    pub delta: f64,
}

impl MollifierSpec {
    pub fn new(profile: Cutoff, delta: f64) -> Self {
        Self { profile, delta }
    }

    pub fn flat_top(delta: f64) -> Self {
        Self::new(Cutoff::FlatTop, delta)
    }

    pub fn check(&self, grid: &TorusGrid) -> Result<()> {
        let min = 2.0 * grid.spacing();
        if !(self.delta >= min - 1e-15) {
            return Err(Error::UnderResolved {
                delta: self.delta,
                min,
            });
        }
        Ok(())
    }

    pub fn symbol(&self, k_squared: f64) -> f64 {
        self.profile.eval(self.delta * k_squared.sqrt())
    }

    pub fn multiplier(&self, grid: &TorusGrid) -> Result<Multiplier> {
        self.check(grid)?;
        Ok(Multiplier::from_fn(grid, |k2| self.symbol(k2)))
    }
}

pub fn mollify(f: &Field, spec: &MollifierSpec) -> Result<Field> {
    Ok(spec.multiplier(&f.grid)?.apply_to(f))
}

/// Time-indexed sequence of fields on a common grid with a uniform output step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    /// solver steps between consecutive snapshots
    pub stride: usize,
    pub exploded: bool,
}

impl Trajectory {
    pub fn new(stride: usize) -> Self {
        Self {
            times: Vec::new(),
            snapshots: Vec::new(),
            stride,
            exploded: false,
        }
    }

    pub fn push(&mut self, t: f64, f: Field) {
        self.times.push(t);
        self.snapshots.push(f);
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn terminal(&self) -> &Field {
        self.snapshots.last().expect("empty trajectory")
    }

    pub fn grid(&self) -> &TorusGrid {
        self.snapshots[0].grid()
    }

    /// Discrete sup over snapshots of the grid L∞ norm.
    pub fn sup_norm(&self) -> f64 {
        self.snapshots.iter().fold(0.0, |m, f| m.max(f.norm_sup()))
    }

    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.snapshots
            .iter()
            .zip(&other.snapshots)
            .fold(0.0, |m, (a, b)| m.max(a.sub(b).norm_sup()))
    }
}
