//! Spatial white noise on the discrete torus, its mollification, the
//! renormalisation constant `c_δ = ⟨K_δ, ρ_δ⟩`, the Wick-renormalised
//! second-order object and a finite-frame surrogate for the homogeneous model norm.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    dealias_multiplier, green_symbol, Field, GreenKernel, MollifierSpec, Multiplier, TorusGrid,
};

/// Homogeneity offset used for both `Ξ` (degree `−1−κ`) and `⟨11⟩` (degree `−2κ`).
pub const KAPPA: f64 = 0.05;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` in the run with root seed `root`:
/// `splitmix64(splitmix64(root) ^ index)`.
pub fn sample_seed(root: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root) ^ index)
}

/// One white-noise sample, stored as Hermitian-symmetric Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
    seed: u64,
}

impl NoiseRealization {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `⟨ξ, e_k⟩` for the mode `k`.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.mode_index(k1, k2)]
    }

    pub fn to_field(&self) -> Field {
        Field::new(&self.grid, self.grid.inverse(&self.coeffs)).expect("grid sized")
    }

    pub fn mollified(&self, spec: &MollifierSpec) -> Result<Field> {
        let m = spec.multiplier(&self.grid)?;
        let coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .zip(m.symbol())
            .map(|(c, s)| c * s)
            .collect();
        Field::new(&self.grid, self.grid.inverse(&coeffs))
    }

    /// `ε·ξ`, used to exercise dilation properties.
    pub fn scaled(&self, eps: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|c| c * eps).collect(),
            seed: self.seed,
        }
    }
}

/// Draw `ξ` with `⟨ξ, e_k⟩` iid standard normal over a real orthonormal basis:
/// complex coefficients with `E|ξ̂(k)|² = 1` on conjugate pairs and real
/// `N(0,1)` coefficients on the four self-conjugate modes.
pub fn sample_white_noise(grid: &TorusGrid, seed: u64) -> NoiseRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![Complex64::default(); grid.len()];
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for idx in 0..grid.len() {
        let partner = grid.conjugate_index(idx);
        if partner < idx {
            continue;
        }
        if partner == idx {
            let z: f64 = StandardNormal.sample(&mut rng);
            coeffs[idx] = Complex64::new(z, 0.0);
        } else {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let c = Complex64::new(re * half, im * half);
            coeffs[idx] = c;
            coeffs[partner] = c.conj();
        }
    }
    NoiseRealization {
        grid: grid.clone(),
        coeffs,
        seed,
    }
}

/// Paley–Wiener pairing `ξ(h) = Σ_k conj(ĥ(k)) ξ̂(k)`.
pub fn pair(xi: &NoiseRealization, h: &Field) -> Result<f64> {
    xi.grid.check(h.grid())?;
    let hh = h.grid().forward(h.values());
    let s: Complex64 = xi.coeffs.iter().zip(&hh).map(|(x, y)| y.conj() * x).sum();
    Ok(s.re)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormConstant {
    pub delta: f64,
    pub value: f64,
}

/// `c_δ = Σ_{k≠0} χ(δ|k|)² m(k)` over the modes of `grid`.
pub fn renorm_constant(grid: &TorusGrid, mollifier: &MollifierSpec) -> Result<RenormConstant> {
    mollifier.check(grid)?;
    let value = grid
        .k_squared()
        .iter()
        .map(|&k2| mollifier.symbol(k2).powi(2) * green_symbol(k2))
        .sum();
    Ok(RenormConstant {
        delta: mollifier.delta,
        value,
    })
}

/// Forcing pair `(ξ_δ, c)` entering the renormalised equation; `c = 0` for
/// smooth deterministic drivers.
#[derive(Clone, Debug, PartialEq)]
pub struct Driver {
    pub field: Field,
    pub counterterm: f64,
}

impl Driver {
    pub fn from_noise(xi: &NoiseRealization, mollifier: &MollifierSpec, c_delta: f64) -> Result<Self> {
        Ok(Self {
            field: xi.mollified(mollifier)?,
            counterterm: c_delta,
        })
    }

    pub fn deterministic(k: Field) -> Self {
        Self {
            field: k,
            counterterm: 0.0,
        }
    }

    /// Dilation `(ξ_δ, c) ↦ (εξ_δ, ε²c)`.
    pub fn dilate(&self, eps: f64) -> Self {
        Self {
            field: self.field.scaled(eps),
            counterterm: eps * eps * self.counterterm,
        }
    }
}

/// `Π̂⟨11⟩ = P[(K*ξ_δ)·ξ_δ] − c_δ` together with `K*ξ_δ` for recentring.
#[derive(Clone, Debug)]
pub struct SecondOrderObject {
    pub field: Field,
    pub integrated: Field,
    pub driver: Field,
    pub counterterm: f64,
}

impl SecondOrderObject {
    /// Recentred at base point node `z`: `(K*ξ_δ(y) − K*ξ_δ(z))·ξ_δ(y) − c_δ`.
    pub fn recentred(&self, zi: usize, zj: usize) -> Field {
        let kz = self.integrated.at(zi, zj);
        self.field.zip_map(&self.driver, |v, x| v - kz * x)
    }
}

pub fn second_order_object(driver: &Driver) -> SecondOrderObject {
    let grid = driver.field.grid();
    let integrated = GreenKernel::periodic(grid).convolve(&driver.field);
    let product = integrated.mul(&driver.field);
    let c = driver.counterterm;
    let field = dealias_multiplier(grid).apply_to(&product).map(|v| v - c);
    SecondOrderObject {
        field,
        integrated,
        driver: driver.field.clone(),
        counterterm: c,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormFrame {
    /// number of dyadic scales `λ = 2^{-1} … 2^{-J}`
    pub scales: usize,
    /// base points every `stride` nodes along each axis
    pub stride: usize,
}

impl Default for NormFrame {
    fn default() -> Self {
        Self { scales: 3, stride: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelNormEstimate {
    pub norm_xi: f64,
    pub norm_11: f64,
    pub combined: f64,
    pub scales: Vec<f64>,
    pub stride: usize,
}

/// `(1 − |x|²)^4` on the unit disc: a fixed C³ bump.
fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - r2).powi(4)
    }
}

/// `φ^λ_0` on the grid (periodised, unit discrete mass) as a Fourier multiplier.
fn test_function_multiplier(grid: &TorusGrid, lambda: f64) -> Multiplier {
    let n = grid.n();
    let h = grid.spacing();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..n {
        let di = i.min(n - i) as f64 * h;
        for j in 0..n {
            let dj = j.min(n - j) as f64 * h;
            values.push(bump((di * di + dj * dj) / (lambda * lambda)));
        }
    }
    let mass: f64 = values.iter().sum::<f64>() / grid.len() as f64;
    let coeffs = grid.forward(&values);
    // bump is even in both axes, so coefficients are real
    Multiplier::from_symbol(coeffs.iter().map(|c| c.re / mass).collect())
}

/// Finite-frame surrogate of `‖Ẑ‖`: maximises `λ^{-deg τ}|⟨Π_z τ, φ^λ_z⟩|`
/// over dyadic `λ` and strided base points `z`.
pub fn model_norm_approx(driver: &Driver, frame: &NormFrame) -> Result<ModelNormEstimate> {
    let grid = driver.field.grid();
    let n = grid.n();
    if frame.stride == 0 || frame.scales == 0 {
        return Err(Error::InvalidArgument("norm frame needs ≥1 scale and stride ≥1".into()));
    }
    let scales: Vec<f64> = (1..=frame.scales).map(|j| 0.5f64.powi(j as i32)).collect();
    let finest = *scales.last().unwrap();
    if finest * (n as f64) < 2.0 {
        return Err(Error::UnderResolved {
            delta: finest,
            min: 2.0 * grid.spacing(),
        });
    }
    let second = second_order_object(driver);
    // un-recentred product (with counterterm) convolved; recentring is linear in z
    let xi_hat = grid.forward(driver.field.values());
    let prod_hat = grid.forward(second.field.values());
    let mut norm_xi: f64 = 0.0;
    let mut norm_11: f64 = 0.0;
    for &lambda in &scales {
        let phi = test_function_multiplier(grid, lambda);
        let conv = |hat: &[Complex64]| -> Vec<f64> {
            let c: Vec<Complex64> = hat.iter().zip(phi.symbol()).map(|(a, s)| a * s).collect();
            grid.inverse(&c)
        };
        let xi_tested = conv(&xi_hat);
        let prod_tested = conv(&prod_hat);
        let w_xi = lambda.powf(1.0 + KAPPA);
        let w_11 = lambda.powf(2.0 * KAPPA);
        for i in (0..n).step_by(frame.stride) {
            for j in (0..n).step_by(frame.stride) {
                let idx = i * n + j;
                norm_xi = norm_xi.max(w_xi * xi_tested[idx].abs());
                let recentred = prod_tested[idx] - second.integrated.values()[idx] * xi_tested[idx];
                norm_11 = norm_11.max(w_11 * recentred.abs());
            }
        }
    }
    Ok(ModelNormEstimate {
        norm_xi,
        norm_11,
        combined: norm_xi.max(norm_11.sqrt()),
        scales,
        stride: frame.stride,
    })
}
