//! Property checks with pinned tolerances, shared by the command-line
//! self-test and the acceptance suite.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use num_complex::Complex;

use crate::discretization::{
    assemble_coupled, assemble_hibler, assemble_neumann_laplacian, FieldSet, Grid,
};
use crate::dynamics::{step, ForcingInputs, Scheme, StepperConfig};
use crate::rheology::{RheologyParams, StrainRate};
use crate::sampling::SampleRng;
use crate::stability::{
    assemble_a0, decay_experiment, kernel_residual, perturbed_equilibrium, semisimplicity,
    spectrum, DecayConfig, Equilibrium, SpectrumReport,
};
use crate::symbol::{
    boundary_form_check, ellipticity_at, lopatinskii_shapiro_check, EllipticityReport, LsProbe,
};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DUAL_FORMULA_TOL: f64 = 1e-12;
pub const CAUCHY_SCHWARZ_ROUNDING: f64 = 1e-14;
pub const COERCIVITY_TOL: f64 = 1e-10;
pub const JACOBIAN_TOL: f64 = 1e-6;
pub const LS_SMIN_TOL: f64 = 1e-8;
pub const BOUNDARY_FORM_TOL: f64 = 1e-10;
pub const ORDER_TARGET: f64 = 2.0;
pub const ORDER_TOL: f64 = 0.2;
pub const KORN_TOL: f64 = 1e-12;
pub const KERNEL_TOL: f64 = 1e-12;
pub const SEMISIMPLE_TOL: f64 = 1e-10;
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const CONSERVATION_TOL: f64 = 1e-9;
pub const DECAY_RATE_TOL: f64 = 0.2;
pub const LIMIT_MEAN_TOL: f64 = 1e-8;

/// Outcome of one acceptance property.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Sample counts and grid sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub rheology_samples: usize,
    pub jacobian_points: usize,
    pub ellipticity_samples: usize,
    pub ls_probes: usize,
    pub boundary_samples: usize,
    pub convergence_grids: [usize; 3],
    pub korn_grid: usize,
    pub korn_fields: usize,
    pub spectrum_grid: usize,
    pub fixed_point_steps: usize,
    pub conservation_steps: usize,
    pub decay_grid: usize,
}

impl Budget {
    pub fn full() -> Self {
        Self {
            rheology_samples: 10_000,
            jacobian_points: 100,
            ellipticity_samples: 1_000,
            ls_probes: 1_000,
            boundary_samples: 10_000,
            convergence_grids: [17, 33, 65],
            korn_grid: 33,
            korn_fields: 100,
            spectrum_grid: 17,
            fixed_point_steps: 1_000,
            conservation_steps: 200,
            decay_grid: 17,
        }
    }

    pub fn quick() -> Self {
        Self {
            rheology_samples: 1_000,
            jacobian_points: 20,
            ellipticity_samples: 200,
            ls_probes: 100,
            boundary_samples: 1_000,
            convergence_grids: [17, 33, 65],
            korn_grid: 17,
            korn_fields: 10,
            spectrum_grid: 9,
            fixed_point_steps: 100,
            conservation_steps: 50,
            decay_grid: 9,
        }
    }
}

/// Nondimensional parameters used by the grid-level checks.
pub fn scaled_params() -> RheologyParams<f64> {
    RheologyParams {
        e: 2.0,
        delta: 1e-6,
        p_star: 1.0,
        rho_ice: 1.0,
        c: 20.0,
        c_cor: 0.0,
        d_h: 1.0,
        d_a: 0.5,
        ..Default::default()
    }
}

pub fn scaled_equilibrium() -> Equilibrium<f64> {
    Equilibrium {
        h_star: 1.0,
        a_star: 0.9,
    }
}

/// Random state `(ε, h, a, P)` with `|ε|` spread over several decades around `√δ`.
pub fn sample_state(params: &RheologyParams<f64>, rng: &mut SampleRng) -> (StrainRate<f64>, f64, f64, f64) {
    let mag = params.delta.sqrt() * rng.log_uniform(1e-3, 1e3);
    let eps = rng.strain(mag);
    let h = rng.uniform(params.kappa, 5.0);
    let a = rng.uniform(0.0, 1.0);
    let p = params.pressure(h, a).expect("sampled state is valid").value;
    (eps, h, a, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RheologyIdentityReport {
    pub samples: usize,
    /// Largest symmetry violation relative to the tensor magnitude.
    pub symmetry: f64,
    /// Largest disagreement between the two stress formulas relative to `max(|σ|, P)`.
    pub dual_formula: f64,
    /// Largest `((dᵀ𝕊ε)² − Δ²(d)Δ²(ε)) / (Δ²(d)Δ²(ε))`; nonpositive up to rounding.
    pub cauchy_schwarz_excess: f64,
    /// Smallest `(Σ a d d − (P/(2Δ_δ³)) δ Δ²(d)) / ((P/(2Δ_δ)) Δ²(d))`.
    pub coercivity_margin: f64,
}

impl RheologyIdentityReport {
    pub fn passed(&self) -> bool {
        self.symmetry <= SYMMETRY_TOL
            && self.dual_formula <= DUAL_FORMULA_TOL
            && self.cauchy_schwarz_excess <= CAUCHY_SCHWARZ_ROUNDING
            && self.coercivity_margin >= -COERCIVITY_TOL
    }
}

pub fn rheology_identities(
    params: &RheologyParams<f64>,
    samples: usize,
    seed: u64,
) -> RheologyIdentityReport {
    let mut rng = SampleRng::new(seed);
    let mut r = RheologyIdentityReport {
        samples,
        symmetry: 0.0,
        dual_formula: 0.0,
        cauchy_schwarz_excess: f64::NEG_INFINITY,
        coercivity_margin: f64::INFINITY,
    };
    for _ in 0..samples {
        let (eps, h, a, p) = sample_state(params, &mut rng);
        let scale = rng.log_uniform(1e-3, 1e3);
        let d = rng.mat2(scale);
        let t = params.coefficient_tensor(&eps, p);
        r.symmetry = r.symmetry.max(t.max_symmetry_defect() / t.max_abs());

        let s1 = params.stress_sigma_delta(&eps, h, a).expect("valid state");
        let s2 = params.stress_from_viscosities(&eps, p);
        let size = s1.max_abs().max(p);
        r.dual_formula = r.dual_formula.max(s1.max_abs_diff(&s2) / size);

        let se = params.s_map(&eps).to_mat();
        let mut pairing = 0.0;
        for i in 0..2 {
            for k in 0..2 {
                pairing += d.0[i][k] * se.0[i][k];
            }
        }
        let dd = params.delta_sq_general(&d);
        let de = params.delta_sq(&eps);
        if dd * de > 0.0 {
            let excess = (pairing * pairing - dd * de) / (dd * de);
            r.cauchy_schwarz_excess = r.cauchy_schwarz_excess.max(excess);
        }
        let form = t.quadratic_form(&d);
        let bound = params.coercivity_constant(&eps, p) * params.delta * dd;
        let norm = 0.5 * p / params.delta_reg(&eps) * dd;
        if norm > 0.0 {
            r.coercivity_margin = r.coercivity_margin.min((form - bound) / norm);
        }
    }
    r
}

/// Largest relative gap between the analytic coefficient tensor and central
/// differences of the regularised stress.
pub fn jacobian_check(params: &RheologyParams<f64>, points: usize, seed: u64) -> f64 {
    let mut rng = SampleRng::new(seed);
    (0..points)
        .map(|_| {
            let (eps, _, _, p) = sample_state(params, &mut rng);
            params.strain_derivative_check(&eps, p).relative()
        })
        .fold(0.0, f64::max)
}

/// Random `(ε, ξ, η)` triples with the eigenvalue and coercivity checks.
pub fn ellipticity_sweep(
    params: &RheologyParams<f64>,
    samples: usize,
    seed: u64,
) -> EllipticityReport<f64> {
    let mut rng = SampleRng::new(seed);
    let mut report = EllipticityReport {
        samples: 0,
        min_eigenvalue: f64::INFINITY,
        min_margin: f64::INFINITY,
        min_relative_margin: f64::INFINITY,
        max_imag_ratio: 0.0,
        scale: 1.0,
    };
    for _ in 0..samples {
        let (eps, _, _, p) = sample_state(params, &mut rng);
        let xi = rng.unit2();
        let eta = rng.complex_unit2();
        let s = ellipticity_at(params, &eps, p, xi, &eta);
        // eigenvalues and imaginary parts in units of the symbol scale
        let scale = 0.5 * p / params.delta_reg(&eps);
        report.samples += 1;
        report.min_eigenvalue = report.min_eigenvalue.min(s.min_eigenvalue / scale);
        report.min_margin = report.min_margin.min(s.margin() / scale);
        report.min_relative_margin = report.min_relative_margin.min(s.margin() / s.bound);
        report.max_imag_ratio = report.max_imag_ratio.max(s.max_imag / scale);
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSweepReport {
    pub probes: usize,
    /// Smallest normalised `s_min`.
    pub min_s_min: f64,
    /// Probes without a 2/2 root split or where the check failed.
    pub failures: Vec<String>,
}

impl LsSweepReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.min_s_min > LS_SMIN_TOL
    }
}

/// Random boundary probes with `Re λ ≥ 0`, including `λ = 0`.
pub fn ls_sweep(params: &RheologyParams<f64>, probes: usize, seed: u64) -> LsSweepReport {
    let mut rng = SampleRng::new(seed);
    let mut report = LsSweepReport {
        probes,
        min_s_min: f64::INFINITY,
        failures: Vec::new(),
    };
    for k in 0..probes {
        let (eps, _, _, p) = sample_state(params, &mut rng);
        let scale = 0.5 * p / params.delta_reg(&eps);
        let lambda = if k % 10 == 0 {
            Complex::new(0.0, 0.0)
        } else {
            Complex::new(rng.uniform(0.0, 5.0), rng.uniform(-5.0, 5.0)) * scale
        };
        let probe = LsProbe::from_tangent(rng.unit2(), lambda, eps, p);
        match lopatinskii_shapiro_check(params, &probe) {
            Ok(r) if r.stable == 2 => report.min_s_min = report.min_s_min.min(r.s_min),
            Ok(r) => report
                .failures
                .push(format!("probe {k}: {} stable roots", r.stable)),
            Err(e) => report.failures.push(format!("probe {k}: {e}")),
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySweepReport {
    pub samples: usize,
    pub min_form: f64,
    pub min_form_nondegenerate: f64,
    pub nondegenerate_samples: usize,
}

impl BoundarySweepReport {
    pub fn passed(&self) -> bool {
        self.min_form >= -BOUNDARY_FORM_TOL
            && (self.nondegenerate_samples == 0 || self.min_form_nondegenerate > 0.0)
    }
}

/// One boundary-form sample per random state.
pub fn boundary_sweep(params: &RheologyParams<f64>, samples: usize, seed: u64) -> BoundarySweepReport {
    let mut rng = SampleRng::new(seed);
    let mut out = BoundarySweepReport {
        samples,
        min_form: f64::INFINITY,
        min_form_nondegenerate: f64::INFINITY,
        nondegenerate_samples: 0,
    };
    for _ in 0..samples {
        let (eps, _, _, p) = sample_state(params, &mut rng);
        let r = boundary_form_check(params, &eps, p, 1, &mut rng);
        out.min_form = out.min_form.min(r.min_form);
        if r.nondegenerate_samples > 0 {
            out.nondegenerate_samples += r.nondegenerate_samples;
            out.min_form_nondegenerate = out.min_form_nondegenerate.min(r.min_form_nondegenerate);
        }
    }
    out
}

/// Errors on successively refined grids and the observed orders.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub sizes: Vec<usize>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ConvergenceStudy {
    fn new(sizes: &[usize], errors: Vec<f64>) -> Self {
        let orders = (1..errors.len())
            .map(|k| {
                let ratio = (sizes[k] - 1) as f64 / (sizes[k - 1] - 1) as f64;
                (errors[k - 1] / errors[k]).ln() / ratio.ln()
            })
            .collect();
        Self {
            sizes: sizes.to_vec(),
            errors,
            orders,
        }
    }

    pub fn orders_within(&self, target: f64, tol: f64) -> bool {
        !self.orders.is_empty() && self.orders.iter().all(|p| (p - target).abs() <= tol)
    }
}

/// Smooth test state on the unit square: Dirichlet velocity, variable
/// thickness and compactness, and the first derivatives of the velocity.
pub struct ManufacturedState;

impl ManufacturedState {
    pub fn u(x: f64, y: f64) -> [f64; 2] {
        [
            (PI * x).sin() * (PI * y).sin(),
            0.5 * (2.0 * PI * x).sin() * (PI * y).sin(),
        ]
    }

    /// `[[∂x u1, ∂y u1], [∂x u2, ∂y u2]]`.
    pub fn grad_u(x: f64, y: f64) -> [[f64; 2]; 2] {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        [
            [PI * cx * sy, PI * sx * cy],
            [PI * (2.0 * PI * x).cos() * sy, 0.5 * PI * (2.0 * PI * x).sin() * cy],
        ]
    }

    pub fn strain(x: f64, y: f64) -> StrainRate<f64> {
        let g = Self::grad_u(x, y);
        StrainRate::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1])
    }

    pub fn h(x: f64, y: f64) -> f64 {
        1.0 + 0.3 * (PI * x).cos() * (PI * y).cos() + 0.1 * y
    }

    pub fn a(x: f64, y: f64) -> f64 {
        0.8 + 0.1 * (PI * x + 0.5).sin() * (PI * y).cos()
    }

    pub fn fields(grid: &Grid<f64>) -> FieldSet<f64> {
        FieldSet {
            u1: grid.sample(|x, y| Self::u(x, y)[0]),
            u2: grid.sample(|x, y| Self::u(x, y)[1]),
            h: grid.sample(Self::h),
            a: grid.sample(Self::a),
        }
    }
}

/// Parameters with a regularisation large enough that the manufactured
/// stress is smooth on the coarsest grid.
pub fn convergence_params() -> RheologyParams<f64> {
    RheologyParams {
        delta: 1.0,
        c: 5.0,
        p_star: 1.0,
        ..scaled_params()
    }
}

/// `−div S_δ(ε(u))` of the manufactured state by fourth-order differences
/// of the pointwise stress with a fine step.
pub fn manufactured_divergence(params: &RheologyParams<f64>, x: f64, y: f64) -> [f64; 2] {
    let stress = |x: f64, y: f64| {
        let p = params
            .pressure(ManufacturedState::h(x, y), ManufacturedState::a(x, y))
            .expect("valid")
            .value;
        params.regularized_stress(&ManufacturedState::strain(x, y), p)
    };
    let s = 1e-3;
    let d4 = |f: &dyn Fn(f64) -> f64| {
        (-f(2.0 * s) + 8.0 * f(s) - 8.0 * f(-s) + f(-2.0 * s)) / (12.0 * s)
    };
    let dx_s11 = d4(&|t| stress(x + t, y).s11);
    let dx_s12 = d4(&|t| stress(x + t, y).s12);
    let dy_s12 = d4(&|t| stress(x, y + t).s12);
    let dy_s22 = d4(&|t| stress(x, y + t).s22);
    [-(dx_s11 + dy_s12), -(dx_s12 + dy_s22)]
}

/// Max-norm error of the frozen Hibler block applied to its own frozen
/// velocity against `−div S_δ`, on interior nodes.
pub fn hibler_convergence(sizes: &[usize]) -> ConvergenceStudy {
    let params = convergence_params();
    let errors = sizes
        .iter()
        .map(|&n| {
            let grid = Grid::new(n, n, 1.0, 1.0).expect("grid");
            let v = ManufacturedState::fields(&grid);
            let op = assemble_hibler(&v, &grid, &params, 0.0).expect("assembly");
            let mut uu = v.u1.clone();
            uu.extend_from_slice(&v.u2);
            let out = op.apply(&uu);
            let mut err = 0.0f64;
            for p in 0..grid.n() {
                if grid.is_boundary_node(p) {
                    continue;
                }
                let (x, y) = (grid.x(p % n), grid.y(p / n));
                let exact = manufactured_divergence(&params, x, y);
                err = err.max((out[p] - exact[0]).abs()).max((out[grid.n() + p] - exact[1]).abs());
            }
            err
        })
        .collect();
    ConvergenceStudy::new(sizes, errors)
}

/// Max-norm error of `−d Δ_N` on a Neumann-compatible cosine field, through
/// the `h` block (`which = 0`) or `a` block (`which = 1`) of the coupled operator.
pub fn laplacian_convergence(sizes: &[usize], which: usize) -> ConvergenceStudy {
    let params = scaled_params();
    let d = if which == 0 { params.d_h } else { params.d_a };
    let f = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos() + 0.3 * (2.0 * PI * x).cos();
    let lap = |x: f64, y: f64| {
        d * (2.0 * PI * PI * (PI * x).cos() * (PI * y).cos()
            + 0.3 * 4.0 * PI * PI * (2.0 * PI * x).cos())
    };
    let errors = sizes
        .iter()
        .map(|&n| {
            let grid = Grid::new(n, n, 1.0, 1.0).expect("grid");
            let state = FieldSet::equilibrium(&grid, 1.0, 0.9);
            let op = assemble_coupled(&state, &grid, &params, 0.0).expect("assembly");
            let nn = grid.n();
            let mut x = vec![0.0; 4 * nn];
            let vals = grid.sample(f);
            x[(2 + which) * nn..(3 + which) * nn].copy_from_slice(&vals);
            let out = op.apply(&x);
            let exact = grid.sample(lap);
            (0..nn)
                .map(|p| (out[(2 + which) * nn + p] - exact[p]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    ConvergenceStudy::new(sizes, errors)
}

/// Standalone Neumann Laplacian on the same cosine field.
pub fn neumann_laplacian_convergence(sizes: &[usize]) -> ConvergenceStudy {
    let f = |x: f64, y: f64| (PI * x).cos() * (2.0 * PI * y).cos();
    let errors = sizes
        .iter()
        .map(|&n| {
            let grid = Grid::new(n, n, 1.0, 1.0).expect("grid");
            let out = assemble_neumann_laplacian(&grid, 1.0).apply(&grid.sample(f));
            let exact = grid.sample(|x, y| 5.0 * PI * PI * f(x, y));
            out.iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    ConvergenceStudy::new(sizes, errors)
}

/// `Σ_interior dx dy |ε_c(u)|²` with centred differences.
pub fn discrete_strain_norm_sq(grid: &Grid<f64>, u1: &[f64], u2: &[f64]) -> f64 {
    let mut acc = 0.0;
    let s = grid.nx;
    for p in 0..grid.n() {
        if grid.is_boundary_node(p) {
            continue;
        }
        let d = |f: &[f64], stride: usize, h: f64| (f[p + stride] - f[p - stride]) / (2.0 * h);
        let e11 = d(u1, 1, grid.dx);
        let e22 = d(u2, s, grid.dy);
        let e12 = 0.5 * (d(u1, s, grid.dy) + d(u2, 1, grid.dx));
        acc += e11 * e11 + 2.0 * e12 * e12 + e22 * e22;
    }
    acc * grid.dx * grid.dy
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KornReport {
    pub fields: usize,
    /// Smallest `(form − bound) / form`.
    pub min_relative_margin: f64,
}

impl KornReport {
    pub fn passed(&self) -> bool {
        self.min_relative_margin >= -KORN_TOL
    }
}

/// Quadratic form of the equilibrium Hibler block against
/// `(P*/(2√δ)) (2/e²) ‖ε(u)‖²` for random Dirichlet fields.
pub fn korn_check(n: usize, fields: usize, seed: u64) -> KornReport {
    let params = scaled_params();
    let eq = scaled_equilibrium();
    let grid = Grid::new(n, n, 1.0, 1.0).expect("grid");
    let op = assemble_hibler(&eq.state(&grid), &grid, &params, 0.0).expect("assembly");
    let p_star = eq.pressure(&params).value;
    let e2 = params.e * params.e;
    let k = p_star / (2.0 * params.delta.sqrt()) * 2.0 / e2.max(1.0);
    let mut rng = SampleRng::new(seed);
    let nn = grid.n();
    let mut worst = f64::INFINITY;
    for f in 0..fields {
        let mut uu: Vec<f64> = (0..2 * nn).map(|_| rng.normal()).collect();
        if f % 2 == 1 {
            // smooth fields alongside the rough ones
            let (kx, ky) = (1.0 + (f % 5) as f64, 1.0 + (f % 3) as f64);
            for p in 0..nn {
                let (x, y) = (grid.x(p % n), grid.y(p / n));
                uu[p] = (kx * PI * x).sin() * (ky * PI * y).sin();
                uu[nn + p] = (ky * PI * x).sin() * (kx * PI * y).sin() * x;
            }
        }
        for p in 0..nn {
            if grid.is_boundary_node(p) {
                uu[p] = 0.0;
                uu[nn + p] = 0.0;
            }
        }
        let au = op.apply(&uu);
        let form = grid.inner(&au[..nn], &uu[..nn]) + grid.inner(&au[nn..], &uu[nn..]);
        let bound = k * discrete_strain_norm_sq(&grid, &uu[..nn], &uu[nn..]);
        worst = worst.min((form - bound) / form);
    }
    KornReport {
        fields,
        min_relative_margin: worst,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpectrumReport {
    pub spectrum: SpectrumReport,
    pub kernel_residual: f64,
    pub semisimple: bool,
    pub restriction_norm: f64,
}

impl LinearSpectrumReport {
    pub fn passed(&self) -> bool {
        self.spectrum.is_stable_with_kernel(2)
            && self.kernel_residual <= KERNEL_TOL
            && self.semisimple
    }
}

pub fn linear_spectrum(n: usize) -> Result<LinearSpectrumReport, crate::stability::StabilityError> {
    let params = scaled_params();
    let grid = Grid::new(n, n, 1.0, 1.0)?;
    let a0 = assemble_a0(&scaled_equilibrium(), &grid, &params)?;
    let eig = spectrum(&a0, true)?;
    let ss = semisimplicity(&a0)?;
    Ok(LinearSpectrumReport {
        kernel_residual: kernel_residual(&a0),
        semisimple: ss.passes(SEMISIMPLE_TOL),
        restriction_norm: ss.restriction_norm,
        spectrum: eig,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionReport {
    pub steps: usize,
    /// Largest `‖v_{n+1} − v_n‖_∞` from the rest state.
    pub max_step_drift: f64,
    /// Relative drift of `∫h` and `∫a` from a perturbed state.
    pub h_total_drift: f64,
    pub a_total_drift: f64,
}

impl EvolutionReport {
    pub fn passed(&self) -> bool {
        self.max_step_drift <= FIXED_POINT_TOL
            && self.h_total_drift <= CONSERVATION_TOL
            && self.a_total_drift <= CONSERVATION_TOL
    }
}

/// Rest-state fixed point and conservation of the `h`, `a` totals.
pub fn evolution_check(
    fixed_steps: usize,
    conservation_steps: usize,
) -> Result<EvolutionReport, crate::dynamics::DynamicsError> {
    let params = RheologyParams {
        c_cor: 0.5,
        ..scaled_params()
    };
    let eq = scaled_equilibrium();
    let grid = Grid::new(17, 17, 1.0, 1.0).expect("grid");
    let inputs = ForcingInputs::none(&grid);
    let cfg = StepperConfig {
        dt: 1e-2,
        ..Default::default()
    };
    let mut v = eq.state(&grid);
    let mut drift = 0.0f64;
    for _ in 0..fixed_steps {
        let next = step(&v, &grid, &inputs, &params, &cfg)?;
        let d = next
            .to_vec()
            .iter()
            .zip(v.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        drift = drift.max(d);
        v = next;
    }

    let mut w = perturbed_equilibrium(&eq, &grid, 1e-2, 11);
    w.u1 = grid.sample(|x, y| 1e-2 * (PI * x).sin() * (2.0 * PI * y).sin());
    w.u2 = grid.sample(|x, y| -1e-2 * (2.0 * PI * x).sin() * (PI * y).sin());
    w.enforce_dirichlet(&grid);
    let (h0, a0) = (grid.integrate(&w.h), grid.integrate(&w.a));
    let cfg = StepperConfig {
        scheme: Scheme::Picard,
        ..cfg
    };
    for _ in 0..conservation_steps {
        w = step(&w, &grid, &inputs, &params, &cfg)?;
    }
    Ok(EvolutionReport {
        steps: fixed_steps,
        max_step_drift: drift,
        h_total_drift: ((grid.integrate(&w.h) - h0) / h0).abs(),
        a_total_drift: ((grid.integrate(&w.a) - a0) / a0).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySummary {
    pub fitted_rate: f64,
    pub gap: f64,
    pub relative_error: f64,
    pub limit_mismatch: f64,
    pub samples: usize,
}

impl DecaySummary {
    pub fn passed(&self) -> bool {
        self.relative_error <= DECAY_RATE_TOL && self.limit_mismatch <= LIMIT_MEAN_TOL
    }
}

pub fn decay_check(n: usize) -> Result<DecaySummary, crate::stability::StabilityError> {
    let params = scaled_params();
    let grid = Grid::new(n, n, 1.0, 1.0)?;
    let cfg = DecayConfig {
        perturbation_scale: 1e-3,
        seed: 7,
        stepper: StepperConfig {
            dt: 2e-3,
            ..Default::default()
        },
        decades: Some(1.0),
        ..Default::default()
    };
    let r = decay_experiment(&scaled_equilibrium(), &grid, &params, &cfg)?;
    let rate = r.fitted_rate.unwrap_or(f64::NAN);
    Ok(DecaySummary {
        fitted_rate: rate,
        gap: r.predicted_gap,
        relative_error: ((rate - r.predicted_gap) / r.predicted_gap).abs(),
        limit_mismatch: r.limit_mismatch,
        samples: r.fit_samples,
    })
}

/// Wall-clock limit for each criterion.
pub fn runtime_limit(id: u32) -> Duration {
    let secs = match id {
        1 | 2 | 3 | 5 => 5,
        4 | 7 => 30,
        6 => 60,
        8 | 9 => 120,
        _ => 300,
    };
    Duration::from_secs(secs)
}

fn physical_params() -> RheologyParams<f64> {
    RheologyParams {
        delta: 1e-12,
        ..Default::default()
    }
}

fn failed(id: u32, name: &'static str, err: impl fmt::Display) -> Criterion {
    Criterion {
        id,
        name,
        passed: false,
        detail: err.to_string(),
        elapsed: Duration::ZERO,
    }
}

fn check(id: u32, name: &'static str, passed: bool, detail: String) -> Criterion {
    Criterion {
        id,
        name,
        passed,
        detail,
        elapsed: Duration::ZERO,
    }
}

/// Runs criterion `id` (1–10) and records its wall-clock time. The
/// byte-level reproducibility criterion needs the command-line front end.
pub fn run_criterion(id: u32, budget: &Budget, seed: u64) -> Criterion {
    let start = Instant::now();
    let physical = physical_params();
    let mut c = match id {
        1 => {
            let r = rheology_identities(&physical, budget.rheology_samples, seed);
            check(
                1,
                "rheology identities",
                r.passed(),
                format!(
                    "{} samples, symmetry {:.2e}, dual formula {:.2e}, Cauchy-Schwarz excess {:.2e}, coercivity margin {:.2e}",
                    r.samples, r.symmetry, r.dual_formula, r.cauchy_schwarz_excess, r.coercivity_margin
                ),
            )
        }
        2 => {
            let j = jacobian_check(&physical, budget.jacobian_points, seed + 1);
            check(
                2,
                "coefficient tensor vs finite differences",
                j <= JACOBIAN_TOL,
                format!("{} points, max relative error {j:.2e}", budget.jacobian_points),
            )
        }
        3 => {
            let e = ellipticity_sweep(&physical, budget.ellipticity_samples, seed + 2);
            let ok = e.min_eigenvalue > 0.0
                && e.max_imag_ratio <= 1e-12
                && e.min_relative_margin >= -1e-9;
            check(
                3,
                "parameter ellipticity",
                ok,
                format!(
                    "{} samples, min eigenvalue/scale {:.3e}, max |Im|/scale {:.1e}, min relative margin {:.3e}",
                    e.samples, e.min_eigenvalue, e.max_imag_ratio, e.min_relative_margin
                ),
            )
        }
        4 => {
            let l = ls_sweep(&physical, budget.ls_probes, seed + 3);
            check(
                4,
                "Lopatinskii-Shapiro",
                l.passed(),
                format!(
                    "{} probes, {} failures, min s_min {:.3e}",
                    l.probes,
                    l.failures.len(),
                    l.min_s_min
                ),
            )
        }
        5 => {
            let b = boundary_sweep(&physical, budget.boundary_samples, seed + 4);
            check(
                5,
                "boundary form",
                b.passed(),
                format!(
                    "{} samples, min form {:.3e}, min nondegenerate form {:.3e} over {} samples",
                    b.samples, b.min_form, b.min_form_nondegenerate, b.nondegenerate_samples
                ),
            )
        }
        6 => {
            let g = budget.convergence_grids;
            let studies = [
                ("hibler", hibler_convergence(&g)),
                ("laplacian_h", laplacian_convergence(&g, 0)),
                ("laplacian_a", laplacian_convergence(&g, 1)),
            ];
            let ok = studies
                .iter()
                .all(|(_, s)| s.orders_within(ORDER_TARGET, ORDER_TOL));
            let detail = studies
                .iter()
                .map(|(n, s)| {
                    let o: Vec<String> = s.orders.iter().map(|p| format!("{p:.3}")).collect();
                    format!("{n} orders [{}]", o.join(", "))
                })
                .collect::<Vec<_>>()
                .join("; ");
            check(6, "operator convergence", ok, detail)
        }
        7 => {
            let k = korn_check(budget.korn_grid, budget.korn_fields, seed + 5);
            check(
                7,
                "discrete Korn coercivity",
                k.passed(),
                format!(
                    "{} fields on {}^2, min relative margin {:.3e}",
                    k.fields, budget.korn_grid, k.min_relative_margin
                ),
            )
        }
        8 => match linear_spectrum(budget.spectrum_grid) {
            Ok(s) => check(
                8,
                "linearised spectrum",
                s.passed(),
                format!(
                    "{} eigenvalues, kernel dim {}, gap {:.6e}, kernel residual {:.1e}, restriction {:.1e}, semisimple {}",
                    s.spectrum.eigenvalues.len(),
                    s.spectrum.kernel_dim,
                    s.spectrum.gap,
                    s.kernel_residual,
                    s.restriction_norm,
                    s.semisimple
                ),
            ),
            Err(err) => failed(8, "linearised spectrum", err),
        },
        9 => match evolution_check(budget.fixed_point_steps, budget.conservation_steps) {
            Ok(r) => check(
                9,
                "fixed point and conservation",
                r.passed(),
                format!(
                    "{} steps, max step drift {:.1e}, total drift h {:.1e} a {:.1e}",
                    r.steps, r.max_step_drift, r.h_total_drift, r.a_total_drift
                ),
            ),
            Err(err) => failed(9, "fixed point and conservation", err),
        },
        10 => match decay_check(budget.decay_grid) {
            Ok(d) => check(
                10,
                "exponential decay",
                d.passed(),
                format!(
                    "fitted rate {:.6e}, gap {:.6e}, relative error {:.3e}, limit mismatch {:.1e}, {} samples",
                    d.fitted_rate, d.gap, d.relative_error, d.limit_mismatch, d.samples
                ),
            ),
            Err(err) => failed(10, "exponential decay", err),
        },
        _ => failed(id, "unknown", format!("no criterion {id}")),
    };
    c.elapsed = start.elapsed();
    c
}

/// Criteria 1–10 in order.
pub fn run_criteria(budget: &Budget, seed: u64) -> Vec<Criterion> {
    (1..=10).map(|id| run_criterion(id, budget, seed)).collect()
}
