//! Taylor hierarchy of the shifted renormalised equation in the noise
//! intensity.
//!
//! Writing `û^ε = Σ_m ε^m u_m / m!`, every term solves
//! `(∂_t − Δ)u_m = a_m^ξ ξ_δ − a_m^c c_δ + (b_m + u_m g'(w_h)) h` with
//! `u_m(0) = 0`, where the coefficients depend on `w_h, u_1, …, u_{m−1}` only.
//! All terms are advanced in lockstep with the same discrete step as the
//! shifted equation.

use crate::combinatorics::{factorial, CompositionTable};
use crate::error::{Error, Result};
use crate::noise::Driver;
use crate::nonlinearity::Nonlinearity;
use crate::solver::{finite, solve_shifted_driver, SolveContext, Stepper};
use crate::spectral::{Field, Trajectory};

/// Highest supported Taylor order.
pub const MAX_ORDER: usize = 8;

const FACTORIAL: [f64; MAX_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0];
const INV_FACTORIAL: [f64; MAX_ORDER + 1] = [
    1.0,
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
];

#[derive(Clone, Debug)]
pub struct TaylorHierarchy {
    pub order: usize,
    /// `terms[0]` is the skeleton `w_h`, `terms[m]` is `u_m`.
    pub terms: Vec<Trajectory>,
    pub driver: Driver,
    pub nonlinearity: Nonlinearity,
    pub exploded: bool,
}

impl TaylorHierarchy {
    pub fn skeleton(&self) -> &Trajectory {
        &self.terms[0]
    }

    pub fn term(&self, m: usize) -> Result<&Trajectory> {
        self.terms.get(m).ok_or(Error::MissingTerm(m))
    }

    /// Terminal values `u_0(T), …, u_M(T)`.
    pub fn terminal(&self) -> Vec<Field> {
        self.terms.iter().map(|t| t.terminal().clone()).collect()
    }

    /// `Σ_{m ≤ order} ε^m u_m / m!` at every recorded time.
    pub fn partial_sum(&self, eps: f64, order: usize) -> Result<Trajectory> {
        if order > self.order {
            return Err(Error::MissingTerm(order));
        }
        let base = self.skeleton();
        let mut out = Trajectory::new(base.stride);
        for (idx, t) in base.times.iter().enumerate() {
            let mut acc = base.snapshots[idx].clone();
            for m in 1..=order {
                acc = acc.axpy(eps.powi(m as i32) / factorial(m), &self.terms[m].snapshots[idx]);
            }
            out.push(*t, acc);
        }
        Ok(out)
    }
}

/// Per-node kernel for the hierarchy sources.
struct NodeKernel {
    order: usize,
    gd: [f64; MAX_ORDER + 2],
    powers: [[f64; MAX_ORDER + 1]; MAX_ORDER + 1],
    g_series: [f64; MAX_ORDER + 1],
    gp_series: [f64; MAX_ORDER + 1],
}

impl NodeKernel {
    fn new(order: usize) -> Self {
        Self {
            order,
            gd: [0.0; MAX_ORDER + 2],
            powers: [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1],
            g_series: [0.0; MAX_ORDER + 1],
            gp_series: [0.0; MAX_ORDER + 1],
        }
    }

    /// Coefficients of `g(û)` and `g'(û)` in `ε` at one node, given
    /// `states[m] = u_m` there.
    fn expand(&mut self, g: Nonlinearity, states: &[f64]) {
        let m_max = self.order;
        g.derivatives_into(states[0], &mut self.gd[..m_max + 2]);
        // powers[k][j] = [ε^j] (Σ_{i≥1} ε^i u_i/i!)^k, nonzero only for j ≥ k
        let p = &mut self.powers;
        for j in 1..=m_max {
            p[1][j] = states[j] * INV_FACTORIAL[j];
        }
        for k in 2..=m_max {
            for j in k..=m_max {
                let mut s = 0.0;
                for i in 1..=j - k + 1 {
                    s += p[1][i] * p[k - 1][j - i];
                }
                p[k][j] = s;
            }
        }
        self.g_series[0] = self.gd[0];
        self.gp_series[0] = self.gd[1];
        for j in 1..=m_max {
            let mut a = 0.0;
            let mut b = 0.0;
            for k in 1..=j {
                let w = p[k][j] * INV_FACTORIAL[k];
                a += self.gd[k] * w;
                b += self.gd[k + 1] * w;
            }
            self.g_series[j] = a;
            self.gp_series[j] = b;
        }
    }

    /// Source of term `m` given the expanded series.
    fn source(&self, m: usize, xi: f64, c: f64, h: f64) -> f64 {
        let mut s = self.g_series[m] * h;
        if m >= 1 {
            s += self.g_series[m - 1] * xi;
        }
        if m >= 2 {
            let mut gg = 0.0;
            for a in 0..=m - 2 {
                gg += self.g_series[a] * self.gp_series[m - 2 - a];
            }
            s -= c * gg;
        }
        FACTORIAL[m] * s
    }
}

/// Solve `w_h, u_1, …, u_order` in lockstep for the driver `(ξ_δ, c)`.
pub fn solve_hierarchy(ctx: &SolveContext, h: &Field, driver: &Driver, order: usize) -> Result<TaylorHierarchy> {
    if order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("Taylor order {order} exceeds {MAX_ORDER}")));
    }
    ctx.grid().check(h.grid())?;
    ctx.grid().check(driver.field.grid())?;
    let grid = ctx.grid().clone();
    let len = grid.len();
    let g = ctx.nonlinearity();
    let c = driver.counterterm;
    let mut stepper = Stepper::new(ctx);
    let mut states = Vec::with_capacity(order + 1);
    states.push(stepper.state(ctx.u0()));
    for _ in 0..order {
        states.push(stepper.zero_state());
    }
    let mut terms: Vec<Trajectory> = (0..=order).map(|_| Trajectory::new(ctx.record_every())).collect();
    for (m, t) in terms.iter_mut().enumerate() {
        let f = if m == 0 { ctx.u0().clone() } else { Field::zeros(&grid) };
        t.push(0.0, f);
    }
    let mut kernel = NodeKernel::new(order);
    let mut sources = vec![vec![0.0; len]; order + 1];
    let mut node = [0.0; MAX_ORDER + 1];
    let mut exploded = false;
    for step in 0..ctx.steps() {
        for idx in 0..len {
            for (m, s) in states.iter().enumerate() {
                node[m] = s.phys[idx];
            }
            kernel.expand(g, &node[..=order]);
            let (xi, hv) = (driver.field.values()[idx], h.values()[idx]);
            for (m, src) in sources.iter_mut().enumerate() {
                src[idx] = kernel.source(m, xi, c, hv);
            }
        }
        for (state, src) in states.iter_mut().zip(&sources) {
            stepper.advance(state, src);
        }
        if states.iter().any(|s| !finite(&s.phys)) {
            exploded = true;
            break;
        }
        if ctx.records(step + 1) {
            let t = ctx.time(step + 1);
            for (traj, s) in terms.iter_mut().zip(&states) {
                traj.push(t, Field::new(&grid, s.phys.clone())?);
            }
        }
    }
    for t in terms.iter_mut() {
        t.exploded = exploded;
    }
    Ok(TaylorHierarchy {
        order,
        terms,
        driver: driver.clone(),
        nonlinearity: g,
        exploded,
    })
}

/// Hierarchy for a smooth deterministic driver `k` with `c = 0`; its terms are
/// the directional derivatives `D^m w_h[k, …, k]`.
pub fn deterministic_hierarchy(ctx: &SolveContext, h: &Field, k: &Field, order: usize) -> Result<TaylorHierarchy> {
    solve_hierarchy(ctx, h, &Driver::deterministic(k.clone()), order)
}

/// Single term `u_m` (solving the hierarchy up to `m`).
pub fn solve_taylor_term(ctx: &SolveContext, h: &Field, driver: &Driver, m: usize) -> Result<Trajectory> {
    let mut hier = solve_hierarchy(ctx, h, driver, m)?;
    Ok(hier.terms.swap_remove(m))
}

/// Coefficient fields of the equation for `u_m` at one recorded time.
#[derive(Clone, Debug)]
pub struct CoefficientFields {
    pub a_xi: Field,
    pub a_c: Field,
    pub b_h: Field,
}

/// Coefficients `a_m^ξ, a_m^c, b_m` evaluated from compositions, given the
/// hierarchy up to at least `m − 1` at snapshot `time_index`.
pub fn coefficient_fields(m: usize, hier: &TaylorHierarchy, time_index: usize) -> Result<CoefficientFields> {
    if m == 0 || m > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("coefficient order {m} out of range")));
    }
    let needed = m.max(2) - 1;
    if hier.order < needed {
        return Err(Error::MissingTerm(needed));
    }
    let grid = hier.skeleton().grid().clone();
    let len = grid.len();
    let g = hier.nonlinearity;
    let table = CompositionTable::new(m);
    let mut a_xi = vec![0.0; len];
    let mut a_c = vec![0.0; len];
    let mut b_h = vec![0.0; len];
    let mut gd = [0.0; MAX_ORDER + 2];
    let mut us = [0.0; MAX_ORDER + 1];
    let mut axi_scaled = [0.0; MAX_ORDER + 1];
    let snap = |j: usize, idx: usize| hier.terms[j].snapshots[time_index].values()[idx];
    for idx in 0..len {
        g.derivatives_into(snap(0, idx), &mut gd[..m + 1]);
        for (i, u) in us.iter_mut().enumerate().take(m).skip(1) {
            *u = snap(i, idx) / factorial(i);
        }
        // a^ξ_i / i! for i < m
        for i in 1..m {
            axi_scaled[i] = a_xi_value(&table, &gd, &us, i) / factorial(i);
        }
        a_xi[idx] = a_xi_value(&table, &gd, &us, m);
        let mut ac = 0.0;
        for k in 1..m {
            let mut s = 0.0;
            for comp in table.get(k, m - 1) {
                for r in 0..k {
                    let mut prod = axi_scaled[comp[r]];
                    for (n, &i) in comp.iter().enumerate() {
                        if n != r {
                            prod *= us[i];
                        }
                    }
                    s += prod;
                }
            }
            ac += gd[k] / factorial(k) * s;
        }
        a_c[idx] = factorial(m) * ac;
        let mut b = 0.0;
        for k in 2..=m {
            let s: f64 = table.get(k, m).iter().map(|comp| comp.iter().map(|&i| us[i]).product::<f64>()).sum();
            b += gd[k] / factorial(k) * s;
        }
        b_h[idx] = factorial(m) * b;
    }
    Ok(CoefficientFields {
        a_xi: Field::new(&grid, a_xi)?,
        a_c: Field::new(&grid, a_c)?,
        b_h: Field::new(&grid, b_h)?,
    })
}

fn a_xi_value(table: &CompositionTable, gd: &[f64], us: &[f64], m: usize) -> f64 {
    if m == 1 {
        return gd[0];
    }
    let mut a = 0.0;
    for k in 1..m {
        let s: f64 = table.get(k, m - 1).iter().map(|comp| comp.iter().map(|&i| us[i]).product::<f64>()).sum();
        a += gd[k] / factorial(k) * s;
    }
    factorial(m) * a
}

/// Remainder `R = û^ε − Σ_{m ≤ order} ε^m u_m/m!` of the shifted equation.
#[derive(Clone, Debug)]
pub struct Remainder {
    pub eps: f64,
    pub order: usize,
    pub terminal: Field,
    /// sup over recorded times of the grid sup norm
    pub sup: f64,
    pub exploded: bool,
}

pub fn remainder(ctx: &SolveContext, h: &Field, eps: f64, driver: &Driver, order: usize) -> Result<Remainder> {
    let hier = solve_hierarchy(ctx, h, driver, order)?;
    remainder_from(ctx, &hier, h, eps, order)
}

/// Remainder against an already computed hierarchy.
pub fn remainder_from(ctx: &SolveContext, hier: &TaylorHierarchy, h: &Field, eps: f64, order: usize) -> Result<Remainder> {
    let shifted = solve_shifted_driver(ctx, h, eps, &hier.driver)?;
    let exploded = shifted.exploded || hier.exploded;
    if exploded {
        return Ok(Remainder {
            eps,
            order,
            terminal: Field::constant(ctx.grid(), f64::NAN),
            sup: f64::INFINITY,
            exploded,
        });
    }
    let sum = hier.partial_sum(eps, order)?;
    let terminal = shifted.terminal().sub(sum.terminal());
    Ok(Remainder {
        eps,
        order,
        terminal,
        sup: shifted.max_abs_diff(&sum),
        exploded,
    })
}
