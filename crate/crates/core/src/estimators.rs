//! Monte Carlo estimators of the Laplace functional
//! `J(ε) = E[exp(−F(û^ε)/ε²)]`, its Cameron–Martin shifted form, the
//! expansion coefficients `a_m` and tail diagnostics.
//!
//! Sample `i` of a stream with root seed `s` always uses the noise
//! `sample_white_noise(grid, sample_seed(s, i))`; per-sample results are
//! collected in index order and reduced sequentially, so estimates do not
//! depend on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::weights_w;
use crate::error::{Error, Result};
use crate::functional::{jet, Functional};
use crate::noise::{model_norm_approx, pair, sample_seed, sample_white_noise, splitmix64, NormFrame};
use crate::solver::{solve_shifted_driver, solve_skeleton, SolveContext};
use crate::spectral::Field;
use crate::stats::{linear_fit, mean_se, survival_curve, LinearFit, MeanSe, ScaledEstimate};
use crate::taylor::solve_hierarchy;

/// Independent seed streams derived from one root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SeedStreams {
    pub direct: u64,
    pub shifted: u64,
    pub coeff: u64,
    pub tails: u64,
}

impl SeedStreams {
    pub fn from_root(root: u64) -> Self {
        Self {
            direct: splitmix64(root ^ 0xd1ec_7000),
            shifted: splitmix64(root ^ 0x5a1f_7000),
            coeff: splitmix64(root ^ 0xc0ef_f000),
            tails: splitmix64(root ^ 0x7a11_5000),
        }
    }
}

fn noise_for(ctx: &SolveContext, stream: u64, i: u64) -> crate::noise::NoiseRealization {
    sample_white_noise(ctx.grid(), sample_seed(stream, i))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("noise intensity {eps} outside (0, 1]")));
    }
    Ok(())
}

/// Direct estimator of `J(ε)`; exploded samples contribute zero.
pub fn mc_direct(f: &dyn Functional, ctx: &SolveContext, eps: f64, samples: usize, seed: u64) -> Result<ScaledEstimate> {
    check_eps(eps)?;
    let ctx = ctx.clone().terminal_only();
    let zero = Field::zeros(ctx.grid());
    let terms = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let driver = ctx.driver(&noise_for(&ctx, seed, i))?;
            let u = solve_shifted_driver(&ctx, &zero, eps, &driver)?;
            if u.exploded {
                return Ok(None);
            }
            Ok(Some(-f.evaluate(u.terminal())? / (eps * eps)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaledEstimate::from_log_terms(&terms, 0.0))
}

/// Minimiser data shared by the shifted estimators.
#[derive(Clone, Copy)]
pub struct CenteredProblem<'a> {
    pub functional: &'a dyn Functional,
    pub ctx: &'a SolveContext,
    pub h_star: &'a Field,
    /// `𝓕(h*)`
    pub value: f64,
}

/// Shifted estimator `exp(−𝓕(h*)/ε²)·E[exp(−F̃/ε²); ε‖Ẑ‖ < ρ]` with
/// `F̃ = F(û^ε_{h*}) − F(w_{h*}) + ε ξ(h*)`. `rho = ∞` disables the indicator.
pub fn mc_shifted(p: &CenteredProblem, eps: f64, rho: f64, frame: &NormFrame, samples: usize, seed: u64) -> Result<ScaledEstimate> {
    check_eps(eps)?;
    let ctx = p.ctx.clone().terminal_only();
    let f = p.functional;
    let f_w = f.evaluate(solve_skeleton(&ctx, p.h_star)?.terminal())?;
    let terms = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let xi = noise_for(&ctx, seed, i);
            let driver = ctx.driver(&xi)?;
            if rho.is_finite() && model_norm_approx(&driver.dilate(eps), frame)?.combined >= rho {
                return Ok(None);
            }
            let u = solve_shifted_driver(&ctx, p.h_star, eps, &driver)?;
            if u.exploded {
                return Ok(None);
            }
            let ft = f.evaluate(u.terminal())? - f_w + eps * pair(&xi, p.h_star)?;
            Ok(Some(-ft / (eps * eps)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaledEstimate::from_log_terms(&terms, -p.value / (eps * eps)))
}

/// Per-sample values `exp(−½Q̂)·W_m`, `m = 0..=N`, for the coefficients
/// `a_m = E[exp(−½Q̂)W_m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSamples {
    pub order: usize,
    pub values: Vec<Vec<f64>>,
    pub exploded: usize,
}

impl CoeffSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pool two disjoint sample sets.
    pub fn merge(mut self, other: CoeffSamples) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::InvalidArgument("coefficient orders differ".into()));
        }
        self.values.extend(other.values);
        self.exploded += other.exploded;
        Ok(self)
    }

    pub fn coefficient(&self, m: usize) -> MeanSe {
        let col: Vec<f64> = self.values.iter().map(|v| v[m]).collect();
        mean_se(&col)
    }

    pub fn coefficients(&self) -> Vec<MeanSe> {
        (0..=self.order).map(|m| self.coefficient(m)).collect()
    }

    /// `Σ_m a_m ε^m` with the SE of the per-sample combination.
    pub fn expansion(&self, eps: f64) -> MeanSe {
        let col: Vec<f64> = self
            .values
            .iter()
            .map(|v| v.iter().enumerate().map(|(m, a)| a * eps.powi(m as i32)).sum())
            .collect();
        mean_se(&col)
    }
}

/// Coefficient samples for sample indices `range` of the stream `seed`.
pub fn mc_coeff_range(p: &CenteredProblem, order: usize, seed: u64, range: Range<u64>) -> Result<CoeffSamples> {
    let ctx = p.ctx.clone().terminal_only();
    let f = p.functional;
    let rows = range
        .into_par_iter()
        .map(|i| {
            let driver = ctx.driver(&noise_for(&ctx, seed, i))?;
            let hier = solve_hierarchy(&ctx, p.h_star, &driver, order + 2)?;
            if hier.exploded {
                return Ok(None);
            }
            let fh = jet(f, &hier.terminal(), order + 2)?;
            let weight = (-0.5 * fh[2]).exp();
            let w = weights_w(&fh, order)?;
            Ok(Some(w.iter().map(|wm| weight * wm).collect::<Vec<f64>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    let exploded = rows.iter().filter(|r| r.is_none()).count();
    let values = rows
        .into_iter()
        .map(|r| r.unwrap_or_else(|| vec![0.0; order + 1]))
        .collect();
    Ok(CoeffSamples { order, values, exploded })
}

pub fn mc_coeff(p: &CenteredProblem, order: usize, samples: usize, seed: u64) -> Result<CoeffSamples> {
    mc_coeff_range(p, order, seed, 0..samples as u64)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionRow {
    pub eps: f64,
    /// `e^{𝓕(h*)/ε²}·J_direct`
    pub j_direct: f64,
    pub se_direct: f64,
    /// `e^{𝓕(h*)/ε²}·J_shifted`
    pub j_shifted: f64,
    pub se_shifted: f64,
    pub expansion: f64,
    pub expansion_se: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub exploded_direct: usize,
    pub exploded_shifted: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub value: f64,
    pub order: usize,
    pub coefficients: Vec<MeanSe>,
    pub rows: Vec<ExpansionRow>,
    pub samples: usize,
    pub seeds: SeedStreams,
    pub coeff_exploded: usize,
}

impl ExpansionReport {
    pub const CSV_HEADER: [&'static str; 8] =
        ["eps", "J_direct", "SE_direct", "J_shifted", "SE_shifted", "expansion", "gap", "gap_SE"];

    pub fn csv_rows(&self) -> Vec<[f64; 8]> {
        self.rows
            .iter()
            .map(|r| [r.eps, r.j_direct, r.se_direct, r.j_shifted, r.se_shifted, r.expansion, r.gap, r.gap_se])
            .collect()
    }
}

/// Direct, shifted and truncated-expansion values of `J(ε)` in units of
/// `exp(−𝓕(h*)/ε²)`. Each estimator uses its own seed stream, shared across
/// all `ε` (common random numbers).
pub fn expansion_compare(
    p: &CenteredProblem,
    eps_list: &[f64],
    order: usize,
    samples: usize,
    root_seed: u64,
) -> Result<ExpansionReport> {
    let seeds = SeedStreams::from_root(root_seed);
    let coeffs = mc_coeff(p, order, samples, seeds.coeff)?;
    let frame = NormFrame::default();
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let unit = -p.value / (eps * eps);
        let direct = mc_direct(p.functional, p.ctx, eps, samples, seeds.direct)?;
        let shifted = mc_shifted(p, eps, f64::INFINITY, &frame, samples, seeds.shifted)?;
        let d = direct.relative_to(unit);
        let s = shifted.relative_to(unit);
        let e = coeffs.expansion(eps);
        rows.push(ExpansionRow {
            eps,
            j_direct: d.mean,
            se_direct: d.se,
            j_shifted: s.mean,
            se_shifted: s.se,
            expansion: e.mean,
            expansion_se: e.se,
            gap: (d.mean - e.mean).abs(),
            gap_se: d.se.hypot(e.se),
            exploded_direct: direct.exploded,
            exploded_shifted: shifted.exploded,
        });
    }
    Ok(ExpansionReport {
        value: p.value,
        order,
        coefficients: coeffs.coefficients(),
        rows,
        samples,
        seeds,
        coeff_exploded: coeffs.exploded,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VaradhanRow {
    pub eps: f64,
    /// `ε² log J(ε) + 𝓕(h*)`
    pub value: f64,
    pub se: f64,
}

/// `ε² log J(ε) + 𝓕(h*)` from the shifted estimator (common random numbers).
pub fn varadhan_check(p: &CenteredProblem, eps_list: &[f64], samples: usize, seed: u64) -> Result<Vec<VaradhanRow>> {
    let frame = NormFrame::default();
    eps_list
        .iter()
        .map(|&eps| {
            let est = mc_shifted(p, eps, f64::INFINITY, &frame, samples, seed)?;
            let e2 = eps * eps;
            Ok(VaradhanRow {
                eps,
                value: e2 * est.ln_value() + p.value,
                se: e2 * est.ln_se(),
            })
        })
        .collect()
}

/// Empirical tail of a scalar sample: survival curve and a least-squares
/// fit of `log P(X > r)` against `r^power` over the upper tail.
#[derive(Clone, Debug, Serialize)]
pub struct TailDiagnostic {
    pub samples: Vec<f64>,
    pub survival: Vec<(f64, f64)>,
    pub power: i32,
    pub fit: LinearFit,
    /// fitted decay rate `−slope`
    pub rate: f64,
    /// lower end of the 95% band for the rate
    pub rate_lower: f64,
}

/// Fit over points with `r` above the median and at least `min_count`
/// exceedances.
pub fn tail_fit(samples: Vec<f64>, power: i32, min_count: usize) -> Result<TailDiagnostic> {
    let survival = survival_curve(&samples);
    let n = samples.len() as f64;
    let floor = (min_count as f64 / n).ln();
    let pts: Vec<(f64, f64)> = survival
        .iter()
        .copied()
        .filter(|&(_, ls)| ls <= (0.5f64).ln() && ls >= floor)
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument("too few tail points for a fit".into()));
    }
    let x: Vec<f64> = pts.iter().map(|(r, _)| r.powi(power)).collect();
    let y: Vec<f64> = pts.iter().map(|(_, ls)| *ls).collect();
    let fit = linear_fit(&x, &y);
    Ok(TailDiagnostic {
        samples,
        survival,
        power,
        rate: -fit.slope,
        rate_lower: -fit.slope - 1.96 * fit.slope_se,
        fit,
    })
}

/// Gaussian-tail diagnostic for `‖Ẑ‖_approx`: fits `log P(‖Ẑ‖ > r)` against `r²`.
pub fn fernique_tail(ctx: &SolveContext, frame: &NormFrame, samples: usize, seed: u64) -> Result<TailDiagnostic> {
    let norms = (0..samples as u64)
        .into_par_iter()
        .map(|i| Ok(model_norm_approx(&ctx.driver(&noise_for(ctx, seed, i))?, frame)?.combined))
        .collect::<Result<Vec<f64>>>()?;
    tail_fit(norms, 2, 10)
}

/// Integrability diagnostic for `exp(−½Q̂)`.
#[derive(Clone, Debug, Serialize)]
pub struct QIntegrability {
    /// samples of `−½Q̂`
    pub samples: Vec<f64>,
    pub p: f64,
    /// `E[exp(−p·Q̂/2)]` over all samples
    pub moment: MeanSe,
    pub first_half: MeanSe,
    pub second_half: MeanSe,
    /// the two disjoint halves agree within three combined standard errors
    pub stable: bool,
    /// exponential tail fit of `−½Q̂`, when enough tail points exist
    pub tail: Option<TailDiagnostic>,
}

pub fn q_integrability(p: &CenteredProblem, power: f64, samples: usize, seed: u64) -> Result<QIntegrability> {
    let ctx = p.ctx.clone().terminal_only();
    let f = p.functional;
    let q = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let driver = ctx.driver(&noise_for(&ctx, seed, i))?;
            let hier = solve_hierarchy(&ctx, p.h_star, &driver, 2)?;
            Ok(-0.5 * jet(f, &hier.terminal(), 2)?[2])
        })
        .collect::<Result<Vec<f64>>>()?;
    let moments: Vec<f64> = q.iter().map(|v| (power * v).exp()).collect();
    let half = samples / 2;
    let first_half = mean_se(&moments[..half]);
    let second_half = mean_se(&moments[half..]);
    let stable = (first_half.mean - second_half.mean).abs() <= 3.0 * first_half.se.hypot(second_half.se);
    let tail = tail_fit(q.clone(), 1, 10).ok();
    Ok(QIntegrability {
        moment: mean_se(&moments),
        samples: q,
        p: power,
        first_half,
        second_half,
        stable,
        tail,
    })
}
