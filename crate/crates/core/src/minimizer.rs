//! Minimisation of `𝓕(h) = F(w_h) + ½‖h‖²` over the Cameron–Martin space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{qhat_deterministic, Functional};
use crate::solver::{solve_adjoint_full, solve_skeleton, SolveContext};
use crate::spectral::{Field, TorusGrid};

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    /// stop once `‖∇𝓕‖ ≤ tol·(1 + ‖h‖)`
    pub tol: f64,
    pub max_iter: usize,
    /// random probe directions added to the low Fourier modes
    pub random_probes: usize,
    pub probe_seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            random_probes: 8,
            probe_seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct MinimizerResult {
    pub h_star: Field,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterationRecord>,
    pub probe_quotients: Vec<f64>,
    pub hessian_min_quotient: f64,
}

/// `𝓕(h) = F(w_h(T)) + ½‖h‖²`.
pub fn total_objective(f: &dyn Functional, ctx: &SolveContext, h: &Field) -> Result<f64> {
    let ctx = ctx.clone().terminal_only();
    let w = solve_skeleton(&ctx, h)?;
    Ok(f.evaluate(w.terminal())? + 0.5 * h.inner(h))
}

/// `𝓕(h)` and its `L²` gradient `h + r_h`, with `r_h` assembled by one
/// backward sweep.
pub fn value_and_gradient(f: &dyn Functional, ctx: &SolveContext, h: &Field) -> Result<(f64, Field)> {
    let full = ctx.clone().with_record_every(1)?;
    let w = solve_skeleton(&full, h)?;
    let value = f.evaluate(w.terminal())? + 0.5 * h.inner(h);
    let terminal = f.terminal_gradient(w.terminal())?;
    let adj = solve_adjoint_full(&full, &w, h, &terminal)?;
    Ok((value, h.add(&adj.sensitivity)))
}

pub fn gradient(f: &dyn Functional, ctx: &SolveContext, h: &Field) -> Result<Field> {
    Ok(value_and_gradient(f, ctx, h)?.1)
}

/// Descent with Barzilai–Borwein steps and Armijo backtracking.
pub fn minimize(f: &dyn Functional, ctx: &SolveContext, h0: &Field, opts: &MinimizeOptions) -> Result<MinimizerResult> {
    ctx.grid().check(h0.grid())?;
    let mut h = h0.clone();
    let (mut value, mut grad) = value_and_gradient(f, ctx, &h)?;
    let mut log = vec![IterationRecord {
        iter: 0,
        value,
        grad_norm: grad.norm_l2(),
        step: 0.0,
    }];
    let mut alpha = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=opts.max_iter {
        let gnorm = grad.norm_l2();
        if gnorm <= opts.tol * (1.0 + h.norm_l2()) {
            converged = true;
            break;
        }
        let g2 = gnorm * gnorm;
        let slack = 4.0 * f64::EPSILON * value.abs();
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = h.axpy(-step, &grad);
            let (v, g) = value_and_gradient(f, ctx, &trial)?;
            if v.is_finite() && v <= value - 1e-4 * step * g2 + slack {
                accepted = Some((trial, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, v, g)) = accepted else {
            break;
        };
        let s = trial.sub(&h);
        let y = g.sub(&grad);
        let sy = s.inner(&y);
        alpha = if sy > 0.0 { (s.inner(&s) / sy).clamp(1e-3, 1e3) } else { 1.0 };
        h = trial;
        value = v;
        grad = g;
        iterations = iter;
        log.push(IterationRecord {
            iter,
            value,
            grad_norm: grad.norm_l2(),
            step,
        });
    }
    if !converged {
        converged = grad.norm_l2() <= opts.tol * (1.0 + h.norm_l2());
    }
    let probes = probe_directions(ctx.grid(), opts.random_probes, opts.probe_seed);
    let probe_quotients = nondegeneracy_probe(f, ctx, &h, &probes)?;
    let hessian_min_quotient = probe_quotients.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MinimizerResult {
        grad_norm: grad.norm_l2(),
        h_star: h,
        value,
        iterations,
        converged,
        log,
        probe_quotients,
        hessian_min_quotient,
    })
}

/// Fourier modes with `|k| ≤ 2` (constant, cosines and sines) followed by
/// `random` Gaussian combinations of modes with `|k|² ≤ 16`.
pub fn probe_directions(grid: &TorusGrid, random: usize, seed: u64) -> Vec<Field> {
    let mut out = vec![Field::constant(grid, 1.0)];
    let half_plane = |k1: i64, k2: i64| k1 > 0 || (k1 == 0 && k2 > 0);
    for k1 in -2i64..=2 {
        for k2 in -2i64..=2 {
            if k1 * k1 + k2 * k2 <= 4 && half_plane(k1, k2) {
                out.push(Field::cosine_mode(grid, k1, k2, 1.0));
                out.push(Field::sine_mode(grid, k1, k2, 1.0));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let mut acc = Field::zeros(grid);
        for k1 in -4i64..=4 {
            for k2 in -4i64..=4 {
                if k1 * k1 + k2 * k2 <= 16 && (half_plane(k1, k2) || (k1, k2) == (0, 0)) {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    acc = acc.add(&Field::cosine_mode(grid, k1, k2, a)).add(&Field::sine_mode(grid, k1, k2, b));
                }
            }
        }
        out.push(acc);
    }
    out
}

/// Rayleigh quotients `(Q_h(𝓛(k)) + ‖k‖²)/‖k‖²` of `D²𝓕(h)` along each probe.
pub fn nondegeneracy_probe(f: &dyn Functional, ctx: &SolveContext, h: &Field, probes: &[Field]) -> Result<Vec<f64>> {
    probes
        .par_iter()
        .map(|k| {
            let n2 = k.inner(k);
            if n2 == 0.0 {
                return Err(Error::InvalidArgument("zero probe direction".into()));
            }
            Ok((qhat_deterministic(f, ctx, h, k)? + n2) / n2)
        })
        .collect()
}

/// Minimise from each start and return all results, best first. Distinct
/// final values hint at several local minimisers.
pub fn multistart(f: &dyn Functional, ctx: &SolveContext, starts: &[Field], opts: &MinimizeOptions) -> Result<Vec<MinimizerResult>> {
    let mut results = starts
        .iter()
        .map(|h0| minimize(f, ctx, h0, opts))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{ConstantFunctional, Profile, TerminalFunctional};
    use crate::nonlinearity::Nonlinearity;
    use crate::spectral::MollifierSpec;

    fn ctx(g: Nonlinearity) -> SolveContext {
        let grid = TorusGrid::new(16).unwrap();
        let u0 = Field::constant(&grid, -0.4).add(&Field::cosine_mode(&grid, 1, 0, 0.5));
        SolveContext::new(u0, 0.2, 32, g, MollifierSpec::flat_top(0.25)).unwrap()
    }

    fn arctan(grid: &TorusGrid) -> TerminalFunctional {
        let psi = Field::constant(grid, 1.0).add(&Field::cosine_mode(grid, 1, 0, 1.0));
        TerminalFunctional::new(Profile::Arctan, psi)
    }

    #[test]
    fn zero_functional() {
        let c = ctx(Nonlinearity::Cos);
        let grid = c.grid().clone();
        let h = Field::cosine_mode(&grid, 1, 1, 0.7);
        let f = ConstantFunctional(0.0);
        let v = total_objective(&f, &c, &h).unwrap();
        assert!((v - 0.5 * h.inner(&h)).abs() < 1e-15);
        assert!((total_objective(&f, &c, &h.scaled(2.0)).unwrap() - 4.0 * v).abs() < 1e-14);
        assert!(gradient(&f, &c, &h).unwrap().sub(&h).norm_sup() < 1e-15);
        let res = minimize(&f, &c, &h, &MinimizeOptions::default()).unwrap();
        assert!(res.converged && res.iterations == 1);
        assert_eq!(res.h_star.norm_sup(), 0.0);
        for q in &res.probe_quotients {
            assert!((q - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let c = ctx(Nonlinearity::Cos);
        let grid = c.grid().clone();
        let f = arctan(&grid);
        let h = Field::cosine_mode(&grid, 1, 0, 0.3).add(&Field::constant(&grid, -0.1));
        let (v, g) = value_and_gradient(&f, &c, &h).unwrap();
        for k in probe_directions(&grid, 2, 1).iter().take(8) {
            let exact = g.inner(k);
            let mut errs = vec![];
            for s in [1e-2, 1e-3] {
                let fd = (total_objective(&f, &c, &h.axpy(s, k)).unwrap() - v) / s;
                errs.push((fd - exact).abs());
            }
            assert!(errs[1] < 0.2 * errs[0] + 1e-9, "{errs:?}");
        }
    }

    #[test]
    fn minimize_decreases_and_converges() {
        let c = ctx(Nonlinearity::Cos);
        let grid = c.grid().clone();
        let f = arctan(&grid);
        let res = minimize(&f, &c, &Field::zeros(&grid), &MinimizeOptions::default()).unwrap();
        assert!(res.converged);
        for pair in res.log.windows(2) {
            assert!(pair[1].value <= pair[0].value + 1e-14 * pair[0].value.abs());
        }
        assert!(res.grad_norm <= 1e-6 * (1.0 + res.h_star.norm_l2()));
        assert!(res.hessian_min_quotient > 0.0);
    }

    #[test]
    fn probe_quotient_matches_second_difference() {
        let c = ctx(Nonlinearity::Rational);
        let grid = c.grid().clone();
        let f = arctan(&grid);
        let h = Field::cosine_mode(&grid, 0, 1, 0.4);
        let k = Field::cosine_mode(&grid, 1, 0, 1.0).add(&Field::constant(&grid, 0.5));
        let q = nondegeneracy_probe(&f, &c, &h, std::slice::from_ref(&k)).unwrap()[0];
        let s = 1e-3;
        let fd = (total_objective(&f, &c, &h.axpy(s, &k)).unwrap() - 2.0 * total_objective(&f, &c, &h).unwrap()
            + total_objective(&f, &c, &h.axpy(-s, &k)).unwrap())
            / (s * s);
        let expected = fd / k.inner(&k);
        assert!((q - expected).abs() < 1e-4 * expected.abs(), "{q} vs {expected}");
    }

    #[test]
    fn probe_basis_shape() {
        let grid = TorusGrid::new(16).unwrap();
        let p = probe_directions(&grid, 3, 7);
        // constant + 2·6 low modes + 3 random
        assert_eq!(p.len(), 1 + 12 + 3);
        assert_eq!(probe_directions(&grid, 3, 7)[14], p[14]);
    }
}
