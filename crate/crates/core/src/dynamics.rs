//! Forcing, thermodynamic sources and backward-Euler IMEX stepping of
//! `v' + A(v) v = F(v)`.
//!
//! Each step freezes the coefficients of `A` (at `v_n`, or at successive
//! Picard iterates) and solves `(I + dt A_ω) v_{n+1} = v_n + dt F_ω(v_n)`.
//! Advection of `h`, `a` is evaluated explicitly in flux form with the
//! summation-by-parts divergence, so trapezoid totals are conserved when
//! the sources vanish.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::discretization::{
    assemble_coupled, divergence, gradient_x, gradient_y, solve_linear_with, DiscretizationError,
    FieldSet, Grid, SolveError, SolveOptions,
};
use crate::rheology::RheologyParams;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid forcing input: {0}")]
    InvalidInput(String),
    #[error("state left the admissible set: {0}")]
    State(DiscretizationError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("Picard iteration stalled after {iterations} iterations (relative update {update:e})")]
    PicardNotConverged { iterations: usize, update: f64 },
    #[error("shift correction stalled after {iterations} iterations (relative update {update:e})")]
    ShiftNotConverged { iterations: usize, update: f64 },
    #[error("step {step} (t = {time:e}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        source: Box<DynamicsError>,
    },
    #[error("observer aborted the run: {0}")]
    Observer(String),
}

impl From<DiscretizationError> for DynamicsError {
    fn from(e: DiscretizationError) -> Self {
        match e {
            DiscretizationError::Solve(s) => DynamicsError::Solve(s),
            other => DynamicsError::State(other),
        }
    }
}

/// Thermodynamic growth rate `f(h)`, m·s⁻¹.
#[derive(Clone, Default)]
pub enum GrowthLaw<T> {
    #[default]
    Zero,
    Constant(T),
    /// `f(h) = f0 + slope · h`.
    Linear { f0: T, slope: T },
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> GrowthLaw<T> {
    pub fn eval(&self, h: T) -> T {
        match self {
            GrowthLaw::Zero => T::zero(),
            GrowthLaw::Constant(c) => *c,
            GrowthLaw::Linear { f0, slope } => *f0 + *slope * h,
            GrowthLaw::Custom(f) => f(h),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, GrowthLaw::Zero)
    }
}

impl<T: fmt::Debug> fmt::Debug for GrowthLaw<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthLaw::Zero => write!(f, "Zero"),
            GrowthLaw::Constant(c) => write!(f, "Constant({c:?})"),
            GrowthLaw::Linear { f0, slope } => write!(f, "Linear {{ f0: {f0:?}, slope: {slope:?} }}"),
            GrowthLaw::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Prescribed winds, currents, surface tilt and growth law.
#[derive(Debug, Clone)]
pub struct ForcingInputs<T> {
    pub u_atm: [Vec<T>; 2],
    pub u_ocean: [Vec<T>; 2],
    /// Sea-surface slope `∇H`.
    pub tilt: [Vec<T>; 2],
    pub growth: GrowthLaw<T>,
}

impl<T: Real> ForcingInputs<T> {
    /// No wind, no current, flat surface, `f ≡ 0`.
    pub fn none(grid: &Grid<T>) -> Self {
        Self::uniform(grid, [T::zero(); 2], [T::zero(); 2], [T::zero(); 2], GrowthLaw::Zero)
    }

    pub fn uniform(
        grid: &Grid<T>,
        u_atm: [T; 2],
        u_ocean: [T; 2],
        tilt: [T; 2],
        growth: GrowthLaw<T>,
    ) -> Self {
        let n = grid.n();
        let fill = |v: [T; 2]| [vec![v[0]; n], vec![v[1]; n]];
        Self {
            u_atm: fill(u_atm),
            u_ocean: fill(u_ocean),
            tilt: fill(tilt),
            growth,
        }
    }

    pub fn validate(&self, grid: &Grid<T>) -> Result<(), DynamicsError> {
        for (name, field) in [("u_atm", &self.u_atm), ("u_ocean", &self.u_ocean), ("tilt", &self.tilt)] {
            for comp in field.iter() {
                if comp.len() != grid.n() {
                    return Err(DynamicsError::InvalidInput(format!(
                        "{name} has {} nodes, grid has {}",
                        comp.len(),
                        grid.n()
                    )));
                }
                if let Some(k) = comp.iter().position(|v| !v.is_finite()) {
                    return Err(DynamicsError::InvalidInput(format!(
                        "{name} is not finite at node {k}"
                    )));
                }
            }
        }
        if !self.growth.eval(T::zero()).is_finite() {
            return Err(DynamicsError::InvalidInput("growth law f(0) is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Coefficients frozen at `v_n`.
    #[default]
    FrozenCoefficient,
    /// Coefficients re-frozen at successive iterates until the update is small.
    Picard,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FrozenCoefficient => "frozen-coefficient",
            Scheme::Picard => "picard",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frozen-coefficient" => Ok(Scheme::FrozenCoefficient),
            "picard" => Ok(Scheme::Picard),
            other => Err(format!(
                "unknown scheme '{other}' (expected frozen-coefficient or picard)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig<T> {
    pub dt: T,
    pub t_end: T,
    pub scheme: Scheme,
    pub picard_max: usize,
    pub picard_tol: T,
    /// Diagonal shift ω of the implicit velocity block; compensated on the
    /// explicit side.
    pub omega: T,
    pub solver: SolveOptions,
}

impl<T: Real> Default for StepperConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-2),
            t_end: T::one(),
            scheme: Scheme::FrozenCoefficient,
            picard_max: 100,
            picard_tol: T::lit(1e-8),
            omega: T::zero(),
            solver: SolveOptions::default(),
        }
    }
}

impl<T: Real> StepperConfig<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(DynamicsError::InvalidConfig(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(DynamicsError::InvalidConfig(format!(
                "t_end = {} must be >= 0",
                self.t_end
            )));
        }
        if !(self.picard_tol > T::zero()) {
            return Err(DynamicsError::InvalidConfig(format!(
                "picard_tol = {} must be > 0",
                self.picard_tol
            )));
        }
        if self.picard_max == 0 {
            return Err(DynamicsError::InvalidConfig("picard_max must be >= 1".into()));
        }
        if !(self.omega >= T::zero()) {
            return Err(DynamicsError::InvalidConfig(format!(
                "omega = {} must be >= 0",
                self.omega
            )));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; the last one may be shortened.
    pub fn step_count(&self) -> usize {
        let ratio = (self.t_end / self.dt).as_f64();
        (ratio - 1e-9).ceil().max(0.0) as usize
    }
}

fn check_thickness<T: Real>(v: &FieldSet<T>, params: &RheologyParams<T>) -> Result<(), DynamicsError> {
    if let Some((k, h)) = v
        .h
        .iter()
        .enumerate()
        .find(|(_, h)| !(**h >= params.kappa))
    {
        return Err(DynamicsError::State(DiscretizationError::InvalidState {
            field: "h",
            node: k,
            value: h.as_f64(),
            constraint: "h >= kappa",
        }));
    }
    Ok(())
}

fn rotate<T: Real>(theta: T, v: [T; 2]) -> [T; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Velocity part of `F(v)`:
/// `−u·∇u − c_cor n×u − g∇H + (c₁/h)|U_atm|U_atm + (c₂/h)|U_ocean − u|(U_ocean − u)`,
/// with `n×u = (−u₂, u₁)` and the drag coefficients rotated by the turning
/// angles.
pub fn compute_forcing<T: Real>(
    v: &FieldSet<T>,
    grid: &Grid<T>,
    inputs: &ForcingInputs<T>,
    params: &RheologyParams<T>,
) -> Result<[Vec<T>; 2], DynamicsError> {
    check_thickness(v, params)?;
    let n = grid.n();
    let c1 = params.rho_atm * params.c_atm / params.rho_ice;
    let c2 = params.rho_ocean * params.c_ocean / params.rho_ice;
    let g1x = gradient_x(grid, &v.u1);
    let g1y = gradient_y(grid, &v.u1);
    let g2x = gradient_x(grid, &v.u2);
    let g2y = gradient_y(grid, &v.u2);
    let mut f1 = vec![T::zero(); n];
    let mut f2 = vec![T::zero(); n];
    for k in 0..n {
        let (u1, u2) = (v.u1[k], v.u2[k]);
        let adv = [u1 * g1x[k] + u2 * g1y[k], u1 * g2x[k] + u2 * g2y[k]];
        let cor = [-params.c_cor * u2, params.c_cor * u1];
        let ua = [inputs.u_atm[0][k], inputs.u_atm[1][k]];
        let atm = rotate(params.theta_atm, ua);
        let speed_a = ua[0].hypot(ua[1]);
        let rel = [inputs.u_ocean[0][k] - u1, inputs.u_ocean[1][k] - u2];
        let ocn = rotate(params.theta_ocean, rel);
        let speed_o = rel[0].hypot(rel[1]);
        let inv_h = T::one() / v.h[k];
        f1[k] = -adv[0] - cor[0] - params.g * inputs.tilt[0][k]
            + c1 * inv_h * speed_a * atm[0]
            + c2 * inv_h * speed_o * ocn[0];
        f2[k] = -adv[1] - cor[1] - params.g * inputs.tilt[1][k]
            + c1 * inv_h * speed_a * atm[1]
            + c2 * inv_h * speed_o * ocn[1];
    }
    Ok([f1, f2])
}

/// Thermodynamic sources `(S_h, S_a)`.
///
/// `S_h = f(h/a) a + (1 − a) f(0)`, the first term taken as zero where
/// `a = 0`. `S_a` adds `(f(0)/κ)(1 − a)` when `f(0) > 0` and `(a/(2h)) S_h`
/// when `S_h < 0`; the undetermined cases `f(0) = 0`, `S_h = 0` contribute
/// nothing.
pub fn source_terms<T: Real>(
    v: &FieldSet<T>,
    inputs: &ForcingInputs<T>,
    params: &RheologyParams<T>,
) -> (Vec<T>, Vec<T>) {
    let n = v.n();
    if inputs.growth.is_zero() {
        return (vec![T::zero(); n], vec![T::zero(); n]);
    }
    let f0 = inputs.growth.eval(T::zero());
    let two = T::lit(2.0);
    let mut sh = vec![T::zero(); n];
    let mut sa = vec![T::zero(); n];
    for k in 0..n {
        let (h, a) = (v.h[k], v.a[k]);
        let thick = if a > T::zero() {
            inputs.growth.eval(h / a) * a
        } else {
            T::zero()
        };
        sh[k] = thick + (T::one() - a) * f0;
        let open = if f0 > T::zero() {
            f0 / params.kappa * (T::one() - a)
        } else {
            T::zero()
        };
        let melt = if sh[k] < T::zero() {
            a / (two * h) * sh[k]
        } else {
            T::zero()
        };
        sa[k] = open + melt;
    }
    (sh, sa)
}

/// Explicit right-hand side `F(v)` stacked as `[u1 | u2 | h | a]`.
pub fn explicit_rhs<T: Real>(
    v: &FieldSet<T>,
    grid: &Grid<T>,
    inputs: &ForcingInputs<T>,
    params: &RheologyParams<T>,
) -> Result<Vec<T>, DynamicsError> {
    let [f1, f2] = compute_forcing(v, grid, inputs, params)?;
    let (sh, sa) = source_terms(v, inputs, params);
    let flux = |s: &[T]| -> Vec<T> {
        let q1: Vec<T> = v.u1.iter().zip(s).map(|(u, s)| *u * *s).collect();
        let q2: Vec<T> = v.u2.iter().zip(s).map(|(u, s)| *u * *s).collect();
        divergence(grid, &q1, &q2)
    };
    let dh = flux(&v.h);
    let da = flux(&v.a);
    let mut out = f1;
    out.extend(f2);
    out.extend(dh.iter().zip(&sh).map(|(d, s)| *s - *d));
    out.extend(da.iter().zip(&sa).map(|(d, s)| *s - *d));
    Ok(out)
}

fn rel_change<T: Real>(new: &[T], old: &[T]) -> f64 {
    let mut diff = 0.0;
    let mut size = 0.0;
    for (a, b) in new.iter().zip(old) {
        let (a, b) = (a.as_f64(), b.as_f64());
        diff += (a - b) * (a - b);
        size += a * a;
    }
    if size == 0.0 {
        diff.sqrt()
    } else {
        (diff / size).sqrt()
    }
}

/// Solves `(I + dt A_ω(v_frozen)) x = v_n + dt F_ω` where the shift term
/// `ω u / (ρ h)` on the right is evaluated at the latest iterate, so the
/// converged `x` does not depend on ω.
fn implicit_solve<T: Real>(
    v_frozen: &FieldSet<T>,
    base: &[T],
    grid: &Grid<T>,
    params: &RheologyParams<T>,
    cfg: &StepperConfig<T>,
    dt: T,
) -> Result<Vec<T>, DynamicsError> {
    let n = grid.n();
    let op = assemble_coupled(v_frozen, grid, params, cfg.omega)?;
    let sys = op.shifted(T::one(), dt);
    let mut rhs = base.to_vec();
    sys.zero_dirichlet(&mut rhs);
    let (mut x, _) = solve_linear_with(&sys, &rhs, &cfg.solver)?;
    if cfg.omega == T::zero() {
        return Ok(x);
    }
    let tol = (1e2 * T::epsilon().as_f64()).max(1e-13);
    let mut update = f64::INFINITY;
    for _ in 0..500 {
        let mut r = base.to_vec();
        for p in 0..n {
            let k = dt * cfg.omega / (params.rho_ice * v_frozen.h[p]);
            r[p] += k * x[p];
            r[n + p] += k * x[n + p];
        }
        sys.zero_dirichlet(&mut r);
        let (next, _) = solve_linear_with(&sys, &r, &cfg.solver)?;
        update = rel_change(&next[..2 * n], &x[..2 * n]);
        x = next;
        if update <= tol {
            return Ok(x);
        }
    }
    Err(DynamicsError::ShiftNotConverged {
        iterations: 500,
        update,
    })
}

/// One backward-Euler IMEX step of length `dt`.
pub fn step_by<T: Real>(
    v_n: &FieldSet<T>,
    grid: &Grid<T>,
    inputs: &ForcingInputs<T>,
    params: &RheologyParams<T>,
    cfg: &StepperConfig<T>,
    dt: T,
) -> Result<FieldSet<T>, DynamicsError> {
    let mut v = v_n.clone();
    v.validate(grid, params)?;
    let f = explicit_rhs(&v, grid, inputs, params)?;
    let base: Vec<T> = v.to_vec().iter().zip(&f).map(|(x, f)| *x + dt * *f).collect();
    let mut x = implicit_solve(&v, &base, grid, params, cfg, dt)?;
    if cfg.scheme == Scheme::Picard {
        let mut converged = false;
        let mut update = f64::INFINITY;
        for _ in 0..cfg.picard_max {
            let mut frozen = FieldSet::from_slice(&x)?;
            frozen.validate(grid, params)?;
            let next = implicit_solve(&frozen, &base, grid, params, cfg, dt)?;
            update = rel_change(&next, &x);
            x = next;
            if update < cfg.picard_tol.as_f64() {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(DynamicsError::PicardNotConverged {
                iterations: cfg.picard_max,
                update,
            });
        }
    }
    let mut out = FieldSet::from_slice(&x)?;
    out.enforce_dirichlet(grid);
    out.validate(grid, params)?;
    Ok(out)
}

/// One step of length `cfg.dt`.
pub fn step<T: Real>(
    v_n: &FieldSet<T>,
    grid: &Grid<T>,
    inputs: &ForcingInputs<T>,
    params: &RheologyParams<T>,
    cfg: &StepperConfig<T>,
) -> Result<FieldSet<T>, DynamicsError> {
    cfg.validate()?;
    step_by(v_n, grid, inputs, params, cfg, cfg.dt)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    pub time: T,
    /// `½ ∫ ρ_ice h |u|²`.
    pub kinetic_energy: T,
    pub mean_h: T,
    pub mean_a: T,
    pub max_u: T,
    /// Composite L² distance `‖v − v_ref‖` over all four fields.
    pub perturbation_norm: T,
}

impl<T: Real> Diagnostics<T> {
    pub const CSV_HEADER: &'static str =
        "time,kinetic_energy,mean_h,mean_a,max_u,perturbation_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.time.as_f64(),
            self.kinetic_energy.as_f64(),
            self.mean_h.as_f64(),
            self.mean_a.as_f64(),
            self.max_u.as_f64(),
            self.perturbation_norm.as_f64()
        )
    }
}

/// Composite L² norm `(∫ |u|² + h² + a²)^{1/2}` of the difference `v − w`.
pub fn composite_distance<T: Real>(grid: &Grid<T>, v: &FieldSet<T>, w: &FieldSet<T>) -> T {
    let mut acc = T::zero();
    for k in 0..grid.n() {
        let (i, j) = grid.coords(k);
        let d = [
            v.u1[k] - w.u1[k],
            v.u2[k] - w.u2[k],
            v.h[k] - w.h[k],
            v.a[k] - w.a[k],
        ];
        acc += grid.weight(i, j) * d.iter().map(|x| *x * *x).sum::<T>();
    }
    acc.sqrt()
}

pub fn diagnostics<T: Real>(
    grid: &Grid<T>,
    v: &FieldSet<T>,
    reference: &FieldSet<T>,
    params: &RheologyParams<T>,
    time: T,
) -> Diagnostics<T> {
    let ke: Vec<T> = (0..grid.n())
        .map(|k| T::lit(0.5) * params.rho_ice * v.h[k] * (v.u1[k] * v.u1[k] + v.u2[k] * v.u2[k]))
        .collect();
    Diagnostics {
        time,
        kinetic_energy: grid.integrate(&ke),
        mean_h: grid.mean(&v.h),
        mean_a: grid.mean(&v.a),
        max_u: v.max_speed(),
        perturbation_norm: composite_distance(grid, v, reference),
    }
}

/// Receives the state after every step (and the initial state as step 0).
pub trait RunObserver<T> {
    fn observe(
        &mut self,
        step: usize,
        state: &FieldSet<T>,
        diag: &Diagnostics<T>,
    ) -> Result<(), String>;
}

/// Observer that ignores everything.
pub struct NoObserver;

impl<T> RunObserver<T> for NoObserver {
    fn observe(&mut self, _: usize, _: &FieldSet<T>, _: &Diagnostics<T>) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary<T> {
    pub steps: usize,
    pub final_state: FieldSet<T>,
    pub diagnostics: Vec<Diagnostics<T>>,
}

/// Steps from `v0` to `cfg.t_end`. Perturbation norms are measured against
/// `reference`, defaulting to the rest state with the initial means of `h`, `a`.
pub fn run<T: Real>(
    v0: &FieldSet<T>,
    grid: &Grid<T>,
    inputs: &ForcingInputs<T>,
    params: &RheologyParams<T>,
    cfg: &StepperConfig<T>,
    reference: Option<&FieldSet<T>>,
    observer: &mut dyn RunObserver<T>,
) -> Result<RunSummary<T>, DynamicsError> {
    cfg.validate()?;
    inputs.validate(grid)?;
    let mut v = v0.clone();
    v.validate(grid, params)?;
    let reference = match reference {
        Some(r) => r.clone(),
        None => FieldSet::equilibrium(grid, grid.mean(&v.h), grid.mean(&v.a)),
    };
    let mut t = T::zero();
    let first = diagnostics(grid, &v, &reference, params, t);
    observer.observe(0, &v, &first).map_err(DynamicsError::Observer)?;
    let mut diags = vec![first];
    let steps = cfg.step_count();
    for s in 1..=steps {
        let dt = if s == steps { (cfg.t_end - t).min(cfg.dt) } else { cfg.dt };
        v = step_by(&v, grid, inputs, params, cfg, dt).map_err(|e| DynamicsError::AtStep {
            step: s,
            time: t.as_f64(),
            source: Box::new(e),
        })?;
        t = if s == steps { cfg.t_end } else { t + dt };
        let d = diagnostics(grid, &v, &reference, params, t);
        observer.observe(s, &v, &d).map_err(DynamicsError::Observer)?;
        diags.push(d);
    }
    Ok(RunSummary {
        steps,
        final_state: v,
        diagnostics: diags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scaled() -> (Grid<f64>, RheologyParams<f64>) {
        let grid = Grid::new(9, 9, 1.0, 1.0).unwrap();
        let params = RheologyParams {
            delta: 1e-4,
            p_star: 1.0,
            rho_ice: 1.0,
            rho_atm: 1.0,
            rho_ocean: 1.0,
            c_atm: 0.1,
            c_ocean: 0.2,
            c_cor: 0.0,
            g: 1.0,
            kappa: 0.1,
            d_h: 0.5,
            d_a: 0.25,
            ..Default::default()
        };
        (grid, params)
    }

    #[test]
    fn forcing_terms() {
        let (grid, params) = scaled();
        let v = FieldSet::equilibrium(&grid, 2.0, 0.5);
        let none = ForcingInputs::none(&grid);
        let [f1, f2] = compute_forcing(&v, &grid, &none, &params).unwrap();
        assert!(f1.iter().chain(&f2).all(|x| *x == 0.0));

        let ocean = ForcingInputs::uniform(&grid, [0.0; 2], [0.3, -0.4], [0.0; 2], GrowthLaw::Zero);
        let [f1, f2] = compute_forcing(&v, &grid, &ocean, &params).unwrap();
        let c2 = params.rho_ocean * params.c_ocean / params.rho_ice;
        assert_relative_eq!(f1[7], c2 / 2.0 * 0.5 * 0.3, max_relative = 1e-14);
        assert_relative_eq!(f2[7], c2 / 2.0 * 0.5 * -0.4, max_relative = 1e-14);

        let cor = RheologyParams { c_cor: 1e-4, c_ocean: 0.0, ..params.clone() };
        let mut moving = v.clone();
        moving.u1 = vec![1.0; grid.n()];
        let [f1, f2] = compute_forcing(&moving, &grid, &none, &cor).unwrap();
        // −c_cor (n × u) with n × u = (−u₂, u₁) = (0, 1)
        assert_eq!(f1[40], 0.0);
        assert_relative_eq!(f2[40], -1e-4, max_relative = 1e-14);

        let mut thin = v.clone();
        thin.h[3] = 0.01;
        assert!(compute_forcing(&thin, &grid, &none, &params).is_err());
    }

    #[test]
    fn rotated_drag() {
        let (grid, params) = scaled();
        let params = RheologyParams {
            theta_atm: std::f64::consts::FRAC_PI_2,
            ..params
        };
        let v = FieldSet::equilibrium(&grid, 1.0, 1.0);
        let wind = ForcingInputs::uniform(&grid, [2.0, 0.0], [0.0; 2], [0.0; 2], GrowthLaw::Zero);
        let [f1, f2] = compute_forcing(&v, &grid, &wind, &params).unwrap();
        let c1 = params.rho_atm * params.c_atm / params.rho_ice;
        assert!(f1[0].abs() < 1e-14);
        assert_relative_eq!(f2[0], c1 * 2.0 * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn source_branches() {
        let (grid, params) = scaled();
        let mut v = FieldSet::equilibrium(&grid, 1.0, 1.0);
        let zero = ForcingInputs::none(&grid);
        let (sh, sa) = source_terms(&v, &zero, &params);
        assert!(sh.iter().chain(&sa).all(|x| *x == 0.0));

        let grow = ForcingInputs::uniform(&grid, [0.0; 2], [0.0; 2], [0.0; 2], GrowthLaw::Constant(0.3));
        let (sh, sa) = source_terms(&v, &grow, &params);
        assert_relative_eq!(sh[0], 0.3);
        assert_eq!(sa[0], 0.0);

        v.a = vec![0.5; grid.n()];
        let melt = ForcingInputs::uniform(&grid, [0.0; 2], [0.0; 2], [0.0; 2], GrowthLaw::Constant(-0.3));
        let (sh, sa) = source_terms(&v, &melt, &params);
        assert_relative_eq!(sh[0], -0.3, max_relative = 1e-14);
        assert_relative_eq!(sa[0], -0.3 / 4.0, max_relative = 1e-14);

        // open water with positive f(0): only the freezing term
        v.a = vec![0.0; grid.n()];
        let (sh, sa) = source_terms(&v, &grow, &params);
        assert_relative_eq!(sh[0], 0.3);
        assert_relative_eq!(sa[0], 0.3 / params.kappa);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (grid, params) = scaled();
        let v = FieldSet::equilibrium(&grid, 1.3, 0.7);
        let cfg = StepperConfig { dt: 0.05, ..Default::default() };
        let next = step(&v, &grid, &ForcingInputs::none(&grid), &params, &cfg).unwrap();
        assert!(composite_distance(&grid, &next, &v) < 1e-12);
    }

    fn perturbed(grid: &Grid<f64>) -> FieldSet<f64> {
        let mut v = FieldSet::equilibrium(grid, 1.0, 0.8);
        let pi = std::f64::consts::PI;
        v.h = grid.sample(|x, y| 1.0 + 0.05 * (pi * x).cos() * (pi * y).cos());
        v.a = grid.sample(|x, _| 0.8 + 0.02 * (pi * x).cos());
        v.u1 = grid.sample(|x, y| 0.1 * (pi * x).sin() * (pi * y).sin());
        v.u2 = grid.sample(|x, y| -0.05 * (2.0 * pi * x).sin() * (pi * y).sin());
        v.enforce_dirichlet(grid);
        v
    }

    #[test]
    fn totals_are_conserved_without_sources() {
        let (grid, params) = scaled();
        let v0 = perturbed(&grid);
        let cfg = StepperConfig { dt: 0.01, t_end: 0.2, ..Default::default() };
        let summary = run(&v0, &grid, &ForcingInputs::none(&grid), &params, &cfg, None, &mut NoObserver).unwrap();
        let h0 = grid.integrate(&v0.h);
        let a0 = grid.integrate(&v0.a);
        let v = &summary.final_state;
        assert!((grid.integrate(&v.h) - h0).abs() <= 1e-12 * h0);
        assert!((grid.integrate(&v.a) - a0).abs() <= 1e-12 * a0);
        let d = &summary.diagnostics;
        assert!(d.last().unwrap().perturbation_norm < d[0].perturbation_norm);
    }

    #[test]
    fn omega_shift_does_not_change_the_solution() {
        let (grid, params) = scaled();
        let v0 = perturbed(&grid);
        let inputs = ForcingInputs::none(&grid);
        let base = StepperConfig { dt: 0.02, ..Default::default() };
        let shifted = StepperConfig { omega: 3.0, ..base.clone() };
        let a = step(&v0, &grid, &inputs, &params, &base).unwrap();
        let b = step(&v0, &grid, &inputs, &params, &shifted).unwrap();
        assert!(composite_distance(&grid, &a, &b) < 1e-10 * composite_distance(&grid, &a, &FieldSet::equilibrium(&grid, 0.0, 0.0)));
    }

    #[test]
    fn picard_converges_and_stays_close_to_frozen() {
        let (grid, params) = scaled();
        let v0 = perturbed(&grid);
        let inputs = ForcingInputs::none(&grid);
        let frozen = StepperConfig { dt: 0.01, ..Default::default() };
        let picard = StepperConfig { scheme: Scheme::Picard, ..frozen.clone() };
        let a = step(&v0, &grid, &inputs, &params, &frozen).unwrap();
        let b = step(&v0, &grid, &inputs, &params, &picard).unwrap();
        let gap = composite_distance(&grid, &a, &b);
        let change = composite_distance(&grid, &a, &v0);
        assert!(gap < change, "{gap} vs {change}");
    }

    #[test]
    fn state_violation_is_reported() {
        let (grid, params) = scaled();
        let mut v0 = FieldSet::equilibrium(&grid, 0.2, 0.5);
        v0.h[40] = 0.05;
        let cfg = StepperConfig::default();
        let err = run(&v0, &grid, &ForcingInputs::none(&grid), &params, &cfg, None, &mut NoObserver).unwrap_err();
        assert!(err.to_string().contains("h = "), "{err}");
    }

    #[test]
    fn config_validation_and_step_count() {
        let cfg = StepperConfig::<f64> { dt: 0.3, t_end: 1.0, ..Default::default() };
        assert_eq!(cfg.step_count(), 4);
        let cfg = StepperConfig::<f64> { dt: 0.1, t_end: 1.0, ..Default::default() };
        assert_eq!(cfg.step_count(), 10);
        assert!(StepperConfig::<f64> { dt: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!("picard".parse::<Scheme>().unwrap(), Scheme::Picard);
        assert!("rk4".parse::<Scheme>().is_err());
    }
}
