//! Sample statistics used by the estimators.

use serde::Serialize;

/// Mean and standard error of iid samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    MeanSe { mean, se, n }
}

/// `|a − b| ≤ k·sqrt(se_a² + se_b²)`.
pub fn agree_within(a: MeanSe, b: MeanSe, k: f64) -> bool {
    (a.mean - b.mean).abs() <= k * a.se.hypot(b.se)
}

/// Monte Carlo estimate of `E[e^{X}]` stored as `exp(log_factor)·(mean ± se)`
/// so that very small or very large expectations stay representable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaledEstimate {
    pub log_factor: f64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    /// samples counted as zero because the solve exploded
    pub exploded: usize,
}

impl ScaledEstimate {
    /// Estimate `exp(base)·E[e^{X}]` from log-terms `X_i`, with `None` for
    /// exploded samples (weight zero).
    pub fn from_log_terms(terms: &[Option<f64>], base: f64) -> Self {
        let n = terms.len();
        let exploded = terms.iter().filter(|t| t.is_none()).count();
        let shift = terms.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Self {
                log_factor: base,
                mean: 0.0,
                se: 0.0,
                n,
                exploded,
            };
        }
        let values: Vec<f64> = terms.iter().map(|t| t.map_or(0.0, |x| (x - shift).exp())).collect();
        let s = mean_se(&values);
        Self {
            log_factor: base + shift,
            mean: s.mean,
            se: s.se,
            n,
            exploded,
        }
    }

    /// Estimate and SE expressed in units of `exp(log_unit)`.
    pub fn relative_to(&self, log_unit: f64) -> MeanSe {
        let scale = (self.log_factor - log_unit).exp();
        MeanSe {
            mean: scale * self.mean,
            se: scale * self.se,
            n: self.n,
        }
    }

    pub fn value(&self) -> f64 {
        self.log_factor.exp() * self.mean
    }

    pub fn ln_value(&self) -> f64 {
        self.log_factor + self.mean.ln()
    }

    /// Delta-method SE of `ln_value`.
    pub fn ln_se(&self) -> f64 {
        self.se / self.mean
    }
}

/// Ordinary least squares fit `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len().min(y.len());
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y[..n].iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x[..n]
        .iter()
        .zip(&y[..n])
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        slope_se,
        r2,
    }
}

/// Empirical survival curve `(r_i, log P(X > r_i))` at the sorted sample
/// values, omitting the maximum (where the empirical survival is 0).
pub fn survival_curve(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = Vec::with_capacity(sorted.len());
    for (i, &r) in sorted.iter().enumerate() {
        // strict exceedances past the last tie
        if i + 1 < sorted.len() && sorted[i + 1] == r {
            continue;
        }
        let above = sorted.len() - i - 1;
        if above == 0 {
            break;
        }
        out.push((r, (above as f64 / n).ln()));
    }
    out
}
