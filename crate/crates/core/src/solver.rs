//! Time integration for every PDE in the pipeline.
//!
//! All equations have the form `(∂_t − Δ)u = S(t, x)` and share one
//! integrating-factor Euler step
//!
//! ```text
//! û_{n+1} = e^{−4π²|k|²dt} ( û_n + dt · D(k) · Ŝ_n )
//! ```
//!
//! with `D` the two-thirds dealiasing mask and `S_n` evaluated pointwise from
//! the state at step `n` (all couplings lagged). Because the skeleton, the
//! shifted equation, the linearised equation and the Taylor hierarchy use the
//! same step, the discrete Taylor terms are the exact ε-derivatives of the
//! discrete shifted solution, and the discrete adjoint below is the exact
//! transpose of the discrete linearisation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{renorm_constant, Driver, NoiseRealization};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{dealias_multiplier, heat_multiplier, Field, MollifierSpec, TorusGrid, Trajectory};

/// Values beyond this magnitude count as overflow.
pub const OVERFLOW: f64 = 1e150;

#[derive(Clone, Debug)]
pub struct SolveContext {
    grid: TorusGrid,
    t_final: f64,
    steps: usize,
    u0: Field,
    g: Nonlinearity,
    mollifier: MollifierSpec,
    c_delta: f64,
    record_every: usize,
    heat: Vec<f64>,
    heat_dealias_dt: Vec<f64>,
    dealias: Vec<f64>,
}

impl SolveContext {
    /// Context with `c_δ` computed from the mollifier and the periodic Green's
    /// function, recording every step.
    pub fn new(
        u0: Field,
        t_final: f64,
        steps: usize,
        g: Nonlinearity,
        mollifier: MollifierSpec,
    ) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {t_final}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        if !u0.is_finite() {
            return Err(Error::Exploded);
        }
        let grid = u0.grid().clone();
        let c_delta = renorm_constant(&grid, &mollifier)?.value;
        let dt = t_final / steps as f64;
        let heat = heat_multiplier(&grid, dt).symbol().to_vec();
        let dealias = dealias_multiplier(&grid).symbol().to_vec();
        let heat_dealias_dt = heat.iter().zip(&dealias).map(|(e, d)| e * d * dt).collect();
        Ok(Self {
            grid,
            t_final,
            steps,
            u0,
            g,
            mollifier,
            c_delta,
            record_every: 1,
            heat,
            heat_dealias_dt,
            dealias,
        })
    }

    /// Record a snapshot every `k` steps; `k` must divide the step count.
    pub fn with_record_every(mut self, k: usize) -> Result<Self> {
        if k == 0 || !self.steps.is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!(
                "record stride {k} must divide the step count {}",
                self.steps
            )));
        }
        self.record_every = k;
        Ok(self)
    }

    /// Record only the initial and terminal states.
    pub fn terminal_only(self) -> Self {
        let steps = self.steps;
        self.with_record_every(steps).expect("steps divides itself")
    }

    pub fn with_c_delta(mut self, c: f64) -> Self {
        self.c_delta = c;
        self
    }

    pub fn with_nonlinearity(mut self, g: Nonlinearity) -> Self {
        self.g = g;
        self
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn u0(&self) -> &Field {
        &self.u0
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.g
    }

    pub fn mollifier(&self) -> &MollifierSpec {
        &self.mollifier
    }

    pub fn c_delta(&self) -> f64 {
        self.c_delta
    }

    pub fn record_every(&self) -> usize {
        self.record_every
    }

    /// Mollified noise paired with this context's counterterm.
    pub fn driver(&self, xi: &NoiseRealization) -> Result<Driver> {
        self.grid.check(xi.grid())?;
        Driver::from_noise(xi, &self.mollifier, self.c_delta)
    }

    pub(crate) fn time(&self, step: usize) -> f64 {
        self.t_final * step as f64 / self.steps as f64
    }

    pub(crate) fn records(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every)
    }

    pub(crate) fn check_field(&self, f: &Field) -> Result<()> {
        self.grid.check(f.grid())
    }
}

/// Solution state held in both representations.
pub(crate) struct State {
    pub phys: Vec<f64>,
    pub spec: Vec<Complex64>,
}

/// Scratch buffers for one integration.
pub(crate) struct Stepper<'a> {
    ctx: &'a SolveContext,
    src_hat: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    pub fn new(ctx: &'a SolveContext) -> Self {
        Self {
            ctx,
            src_hat: Vec::with_capacity(ctx.grid.len()),
            work: Vec::with_capacity(ctx.grid.len()),
        }
    }

    pub fn state(&mut self, f: &Field) -> State {
        let mut spec = Vec::with_capacity(self.ctx.grid.len());
        self.ctx.grid.forward_into(f.values(), &mut spec);
        State {
            phys: f.values().to_vec(),
            spec,
        }
    }

    pub fn zero_state(&self) -> State {
        State {
            phys: vec![0.0; self.ctx.grid.len()],
            spec: vec![Complex64::default(); self.ctx.grid.len()],
        }
    }

    /// One integrating-factor Euler step with nodal source `source`.
    pub fn advance(&mut self, state: &mut State, source: &[f64]) {
        self.ctx.grid.forward_into(source, &mut self.src_hat);
        for ((u, s), (e, ed)) in state
            .spec
            .iter_mut()
            .zip(&self.src_hat)
            .zip(self.ctx.heat.iter().zip(&self.ctx.heat_dealias_dt))
        {
            *u = *u * *e + *s * *ed;
        }
        self.ctx.grid.inverse_into(&state.spec, &mut self.work, &mut state.phys);
    }

    /// `E p` and `D E p` in nodal form, for the adjoint sweep.
    pub fn heat_and_dealias(&mut self, p: &[f64], heated: &mut [f64], projected: &mut [f64]) {
        self.ctx.grid.forward_into(p, &mut self.src_hat);
        for (c, e) in self.src_hat.iter_mut().zip(&self.ctx.heat) {
            *c *= *e;
        }
        self.ctx.grid.inverse_into(&self.src_hat, &mut self.work, heated);
        for (c, d) in self.src_hat.iter_mut().zip(&self.ctx.dealias) {
            *c *= *d;
        }
        self.ctx.grid.inverse_into(&self.src_hat, &mut self.work, projected);
    }
}

pub(crate) fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite() && v.abs() < OVERFLOW)
}

/// Nodal source `g(u)·(forcing − counterterm·g'(u))` of the renormalised equation.
#[inline]
pub(crate) fn renormalized_source(g: Nonlinearity, u: f64, forcing: f64, counterterm: f64) -> f64 {
    g.eval(u) * (forcing - counterterm * g.derivative(1, u))
}

fn to_field(ctx: &SolveContext, v: &[f64]) -> Field {
    Field::new(&ctx.grid, v.to_vec()).expect("grid sized")
}

/// Solve `(∂_t − Δ)u = g(u)(forcing − counterterm·g'(u))`, `u(0) = u₀`.
///
/// Non-finite or overflowing states stop the integration and mark the
/// trajectory as exploded.
pub fn solve_forced(ctx: &SolveContext, forcing: &Field, counterterm: f64) -> Result<Trajectory> {
    ctx.check_field(forcing)?;
    let g = ctx.g;
    let mut stepper = Stepper::new(ctx);
    let mut state = stepper.state(&ctx.u0);
    let mut traj = Trajectory::new(ctx.record_every);
    traj.push(0.0, ctx.u0.clone());
    let mut source = vec![0.0; ctx.grid.len()];
    for step in 0..ctx.steps {
        for ((s, &u), &f) in source.iter_mut().zip(&state.phys).zip(forcing.values()) {
            *s = renormalized_source(g, u, f, counterterm);
        }
        stepper.advance(&mut state, &source);
        if !finite(&state.phys) {
            traj.exploded = true;
            return Ok(traj);
        }
        if ctx.records(step + 1) {
            traj.push(ctx.time(step + 1), to_field(ctx, &state.phys));
        }
    }
    Ok(traj)
}

/// Skeleton `w_h`: `(∂_t − Δ)w = g(w)h`, `w(0) = u₀`.
pub fn solve_skeleton(ctx: &SolveContext, h: &Field) -> Result<Trajectory> {
    let traj = solve_forced(ctx, h, 0.0)?;
    if traj.exploded {
        return Err(Error::SolverFault("skeleton produced non-finite values".into()));
    }
    Ok(traj)
}

/// Forcing `εξ_δ + h` and counterterm `ε²c` of the shifted equation.
pub fn shifted_forcing(h: &Field, eps: f64, driver: &Driver) -> (Field, f64) {
    let forcing = driver.field.zip_map(h, |x, hv| eps * x + hv);
    (forcing, eps * eps * driver.counterterm)
}

/// Shifted renormalised equation
/// `(∂_t − Δ)û = g(û)(εξ_δ + h − ε²c_δ g'(û))` for a prepared driver.
pub fn solve_shifted_driver(ctx: &SolveContext, h: &Field, eps: f64, driver: &Driver) -> Result<Trajectory> {
    ctx.check_field(h)?;
    let (forcing, counter) = shifted_forcing(h, eps, driver);
    solve_forced(ctx, &forcing, counter)
}

/// Shifted renormalised equation driven by the white-noise sample `xi`.
pub fn solve_shifted(ctx: &SolveContext, h: &Field, eps: f64, xi: &NoiseRealization) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("noise intensity {eps} outside [0, 1]")));
    }
    let driver = ctx.driver(xi)?;
    solve_shifted_driver(ctx, h, eps, &driver)
}

fn require_full(ctx: &SolveContext, w: &Trajectory) -> Result<()> {
    if w.stride != 1 || w.len() != ctx.steps + 1 {
        return Err(Error::StrideMismatch(w.stride));
    }
    ctx.check_field(&w.snapshots[0])
}

/// Linearisation `v_{h,k}` along a skeleton recorded at every step:
/// `(∂_t − Δ)v = g'(w_h)·v·h + g(w_h)·k`, `v(0) = 0`.
pub fn solve_linearized(ctx: &SolveContext, w: &Trajectory, h: &Field, k: &Field) -> Result<Trajectory> {
    require_full(ctx, w)?;
    ctx.check_field(h)?;
    ctx.check_field(k)?;
    let g = ctx.g;
    let mut stepper = Stepper::new(ctx);
    let mut state = stepper.zero_state();
    let mut traj = Trajectory::new(ctx.record_every);
    traj.push(0.0, Field::zeros(&ctx.grid));
    let mut source = vec![0.0; ctx.grid.len()];
    for step in 0..ctx.steps {
        let wn = w.snapshots[step].values();
        for (idx, s) in source.iter_mut().enumerate() {
            let wv = wn[idx];
            *s = g.derivative(1, wv) * state.phys[idx] * h.values()[idx] + g.eval(wv) * k.values()[idx];
        }
        stepper.advance(&mut state, &source);
        if ctx.records(step + 1) {
            traj.push(ctx.time(step + 1), to_field(ctx, &state.phys));
        }
    }
    Ok(traj)
}

/// Output of the backward sweep: adjoint states `p_0 … p_M` and the
/// sensitivity field `r` with `⟨r, k⟩ = ⟨terminal, v_{h,k}(T)⟩` for every `k`.
#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub states: Trajectory,
    pub sensitivity: Field,
}

/// Backward equation `(−∂_t − Δ)p = g'(w_h)·h·p`, `p(T) = terminal`, as the
/// exact transpose of the discrete linearised step:
/// `p_n = E p_{n+1} + dt·g'(w_n)·h·D E p_{n+1}`.
pub fn solve_adjoint_full(ctx: &SolveContext, w: &Trajectory, h: &Field, terminal: &Field) -> Result<AdjointSolution> {
    require_full(ctx, w)?;
    ctx.check_field(h)?;
    ctx.check_field(terminal)?;
    let g = ctx.g;
    let dt = ctx.dt();
    let len = ctx.grid.len();
    let mut stepper = Stepper::new(ctx);
    let mut states = vec![Field::zeros(&ctx.grid); ctx.steps + 1];
    states[ctx.steps] = terminal.clone();
    let mut heated = vec![0.0; len];
    let mut projected = vec![0.0; len];
    let mut r = vec![0.0; len];
    for step in (0..ctx.steps).rev() {
        stepper.heat_and_dealias(states[step + 1].values(), &mut heated, &mut projected);
        let wn = w.snapshots[step].values();
        let mut p = vec![0.0; len];
        for idx in 0..len {
            let wv = wn[idx];
            p[idx] = heated[idx] + dt * g.derivative(1, wv) * h.values()[idx] * projected[idx];
            r[idx] += dt * g.eval(wv) * projected[idx];
        }
        states[step] = to_field(ctx, &p);
    }
    let times = (0..=ctx.steps).map(|s| ctx.time(s)).collect();
    Ok(AdjointSolution {
        states: Trajectory {
            times,
            snapshots: states,
            stride: 1,
            exploded: false,
        },
        sensitivity: to_field(ctx, &r),
    })
}

pub fn solve_adjoint(ctx: &SolveContext, w: &Trajectory, h: &Field, terminal: &Field) -> Result<Trajectory> {
    Ok(solve_adjoint_full(ctx, w, h, terminal)?.states)
}

/// Time quadrature of `⟨g(w_h)·k, p⟩` matching the discrete scheme:
/// `dt Σ_n ⟨g(w_n)·k, D E p_{n+1}⟩`.
pub fn adjoint_pairing(ctx: &SolveContext, w: &Trajectory, p: &Trajectory, k: &Field) -> Result<f64> {
    require_full(ctx, w)?;
    require_full(ctx, p)?;
    let g = ctx.g;
    let len = ctx.grid.len();
    let mut stepper = Stepper::new(ctx);
    let mut heated = vec![0.0; len];
    let mut projected = vec![0.0; len];
    let mut total = 0.0;
    for step in 0..ctx.steps {
        stepper.heat_and_dealias(p.snapshots[step + 1].values(), &mut heated, &mut projected);
        let wn = w.snapshots[step].values();
        let s: f64 = (0..len)
            .map(|idx| g.eval(wn[idx]) * k.values()[idx] * projected[idx])
            .sum();
        total += ctx.dt() * s / len as f64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;
    use crate::spectral::heat_step;

    fn ctx(n: usize, steps: usize, g: Nonlinearity) -> SolveContext {
        let grid = TorusGrid::new(n).unwrap();
        let u0 = Field::constant(&grid, 0.2).add(&Field::cosine_mode(&grid, 1, 0, 0.5));
        SolveContext::new(u0, 0.1, steps, g, MollifierSpec::flat_top(4.0 / n as f64)).unwrap()
    }

    #[test]
    fn context_validation() {
        let grid = TorusGrid::new(8).unwrap();
        let u0 = Field::zeros(&grid);
        let m = MollifierSpec::flat_top(0.25);
        assert!(SolveContext::new(u0.clone(), 0.0, 4, Nonlinearity::Cos, m).is_err());
        assert!(SolveContext::new(u0.clone(), 1.0, 0, Nonlinearity::Cos, m).is_err());
        let c = SolveContext::new(u0, 1.0, 8, Nonlinearity::Cos, m).unwrap();
        assert!(c.clone().with_record_every(3).is_err());
        assert_eq!(c.terminal_only().record_every(), 8);
    }

    #[test]
    fn skeleton_without_source_is_heat_flow() {
        let c = ctx(16, 32, Nonlinearity::Cos);
        let g = c.grid().clone();
        let heat = heat_step(c.u0(), c.t_final()).unwrap();
        let w = solve_skeleton(&c, &Field::zeros(&g)).unwrap();
        assert!(w.terminal().sub(&heat).norm_sup() < 1e-13);
        let c0 = c.clone().with_nonlinearity(Nonlinearity::Zero);
        let h = Field::cosine_mode(&g, 2, 1, 3.0);
        let w0 = solve_skeleton(&c0, &h).unwrap();
        assert!(w0.terminal().sub(&heat).norm_sup() < 1e-13);
        assert_eq!(w.len(), 33);
        assert!((w.times[32] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn skeleton_with_constant_source() {
        let c = ctx(16, 20, Nonlinearity::One);
        let g = c.grid().clone();
        let w = solve_skeleton(&c, &Field::constant(&g, 0.7)).unwrap();
        for (t, snap) in w.times.iter().zip(&w.snapshots) {
            let expected = heat_step(c.u0(), *t).unwrap().map(|v| v + 0.7 * t);
            assert!(snap.sub(&expected).norm_sup() < 1e-13);
        }
    }

    #[test]
    fn shifted_at_zero_intensity_is_skeleton() {
        let c = ctx(16, 32, Nonlinearity::Cos);
        let g = c.grid().clone();
        let h = Field::cosine_mode(&g, 1, 1, 0.4);
        let xi = sample_white_noise(&g, 3);
        let w = solve_skeleton(&c, &h).unwrap();
        let u = solve_shifted(&c, &h, 0.0, &xi).unwrap();
        assert_eq!(w, u);
        assert!(solve_shifted(&c, &h, 1.5, &xi).is_err());
    }

    #[test]
    fn shifted_additive_noise_superposition() {
        let c = ctx(16, 32, Nonlinearity::One);
        let g = c.grid().clone();
        let h = Field::cosine_mode(&g, 0, 1, 0.3);
        let xi = sample_white_noise(&g, 8);
        let eps = 0.37;
        let u = solve_shifted(&c, &h, eps, &xi).unwrap();
        let w = solve_skeleton(&c, &h).unwrap();
        // Z solves (∂_t − Δ)Z = ξ_δ from zero
        let zc = SolveContext::new(Field::zeros(&g), c.t_final(), c.steps(), Nonlinearity::One, *c.mollifier()).unwrap();
        let z = solve_skeleton(&zc, &c.driver(&xi).unwrap().field).unwrap();
        let expected = w.terminal().axpy(eps, z.terminal());
        assert!(u.terminal().sub(&expected).norm_sup() < 1e-12);
    }

    #[test]
    fn nan_initial_data_rejected_and_overflow_flagged() {
        let grid = TorusGrid::new(8).unwrap();
        let mut u0 = Field::zeros(&grid);
        u0.values_mut()[0] = f64::NAN;
        assert!(SolveContext::new(u0, 1.0, 4, Nonlinearity::Cos, MollifierSpec::flat_top(0.25)).is_err());
        let c = ctx(8, 4, Nonlinearity::One);
        let huge = Field::constant(&grid, 1e300);
        let traj = solve_forced(&c, &huge, 0.0).unwrap();
        assert!(traj.exploded);
        assert!(solve_skeleton(&c, &huge).is_err());
    }

    #[test]
    fn linearized_special_cases() {
        let c = ctx(16, 32, Nonlinearity::Cos);
        let g = c.grid().clone();
        let h = Field::cosine_mode(&g, 1, 0, 0.5);
        let w = solve_skeleton(&c, &h).unwrap();
        let v = solve_linearized(&c, &w, &h, &Field::zeros(&g)).unwrap();
        assert_eq!(v.sup_norm(), 0.0);
        let c1 = c.clone().with_nonlinearity(Nonlinearity::One);
        let k = Field::sine_mode(&g, 1, 2, 1.0);
        let w1 = solve_skeleton(&c1, &h).unwrap();
        let v1 = solve_linearized(&c1, &w1, &h, &k).unwrap();
        let zc = SolveContext::new(Field::zeros(&g), c.t_final(), c.steps(), Nonlinearity::One, *c.mollifier()).unwrap();
        let direct = solve_skeleton(&zc, &k).unwrap();
        assert!(v1.max_abs_diff(&direct) < 1e-14);
        let coarse = solve_skeleton(&c.clone().terminal_only(), &h).unwrap();
        assert!(matches!(solve_linearized(&c, &coarse, &h, &k), Err(Error::StrideMismatch(_))));
    }

    #[test]
    fn adjoint_special_cases() {
        let c = ctx(16, 16, Nonlinearity::One);
        let g = c.grid().clone();
        let h = Field::cosine_mode(&g, 1, 0, 0.5);
        let w = solve_skeleton(&c, &h).unwrap();
        let p = solve_adjoint(&c, &w, &h, &Field::zeros(&g)).unwrap();
        assert_eq!(p.sup_norm(), 0.0);
        let terminal = Field::cosine_mode(&g, 2, 0, 1.0).add(&Field::constant(&g, 0.3));
        let p = solve_adjoint(&c, &w, &h, &terminal).unwrap();
        for (n, snap) in p.snapshots.iter().enumerate() {
            let expected = heat_step(&terminal, c.t_final() - p.times[n]).unwrap();
            assert!(snap.sub(&expected).norm_sup() < 1e-13);
        }
    }

    #[test]
    fn adjoint_duality() {
        let c = ctx(16, 40, Nonlinearity::Cos);
        let g = c.grid().clone();
        let h = Field::cosine_mode(&g, 1, 0, 0.8).add(&Field::sine_mode(&g, 1, 1, 0.4));
        let k = Field::cosine_mode(&g, 0, 2, 1.0).add(&Field::constant(&g, -0.2));
        let terminal = Field::cosine_mode(&g, 1, 0, 1.0).add(&Field::constant(&g, 0.5));
        let w = solve_skeleton(&c, &h).unwrap();
        let v = solve_linearized(&c, &w, &h, &k).unwrap();
        let adj = solve_adjoint_full(&c, &w, &h, &terminal).unwrap();
        let lhs = v.terminal().inner(&terminal);
        let rhs = adjoint_pairing(&c, &w, &adj.states, &k).unwrap();
        assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs());
        assert!((adj.sensitivity.inner(&k) - lhs).abs() <= 1e-12 * lhs.abs().max(1e-12));
    }

    #[test]
    fn linearized_matches_finite_difference() {
        let c = ctx(16, 32, Nonlinearity::Cos);
        let g = c.grid().clone();
        let h = Field::cosine_mode(&g, 1, 0, 0.8);
        let k = Field::sine_mode(&g, 0, 1, 1.0).add(&Field::constant(&g, 0.4));
        let w = solve_skeleton(&c, &h).unwrap();
        let v = solve_linearized(&c, &w, &h, &k).unwrap();
        let mut errs = Vec::new();
        for s in [1e-2, 1e-3] {
            let ws = solve_skeleton(&c, &h.axpy(s, &k)).unwrap();
            let fd = ws.terminal().sub(w.terminal()).scaled(1.0 / s);
            errs.push(fd.sub(v.terminal()).norm_sup() / v.terminal().norm_sup());
        }
        assert!(errs[0] < 5e-2 && errs[1] < errs[0] * 0.2, "{errs:?}");
    }
}
