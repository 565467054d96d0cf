//! Linearisation at constant equilibria `v* = (0, h*, a*)`: dense spectra,
//! kernel and semi-simplicity checks, the tested energy identities and
//! nonlinear decay experiments.

use faer::Mat;
use num_complex::Complex;
use thiserror::Error;

use crate::discretization::{
    assemble_coupled, assemble_hibler, diff_x, diff_y, divergence, gradient_x, gradient_y,
    pressure_field, BlockLayout, DiscretizationError, FieldSet, Grid, SparseOperator,
};
use crate::dynamics::{run, DynamicsError, ForcingInputs, RunObserver, StepperConfig};
use crate::rheology::{Pressure, RheologyParams};
use crate::sampling::SampleRng;
use crate::Real;

/// Largest interior dimension handed to the dense eigensolver.
pub const DENSE_BUDGET: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid equilibrium: {0}")]
    InvalidEquilibrium(String),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error("dense eigensolve budget exceeded: {dim} unknowns > {budget}")]
    BudgetExceeded { dim: usize, budget: usize },
    #[error("dense eigensolver failed: {0}")]
    Eigen(&'static str),
    #[error("decay fit needs at least 10 samples in the window, got {samples}")]
    FitFailure { samples: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Constant rest state `(0, h*, a*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium<T> {
    pub h_star: T,
    pub a_star: T,
}

impl<T: Real> Equilibrium<T> {
    pub fn new(h_star: T, a_star: T, params: &RheologyParams<T>) -> Result<Self, StabilityError> {
        if !(h_star >= params.kappa) || !h_star.is_finite() {
            return Err(StabilityError::InvalidEquilibrium(format!(
                "h* = {h_star} must be >= kappa = {}",
                params.kappa
            )));
        }
        if !(a_star >= T::zero() && a_star <= T::one()) {
            return Err(StabilityError::InvalidEquilibrium(format!(
                "a* = {a_star} must lie in [0, 1]"
            )));
        }
        Ok(Self { h_star, a_star })
    }

    /// `P* = p* h* exp(−c(1 − a*))` and its partial derivatives.
    pub fn pressure(&self, params: &RheologyParams<T>) -> Pressure<T> {
        params
            .pressure(self.h_star, self.a_star)
            .expect("validated equilibrium")
    }

    pub fn state(&self, grid: &Grid<T>) -> FieldSet<T> {
        FieldSet::equilibrium(grid, self.h_star, self.a_star)
    }

    /// `C_h = p* exp(−c(1 − a*)) / (2h*)`.
    pub fn c_h(&self, params: &RheologyParams<T>) -> T {
        self.pressure(params).dp_dh / (T::lit(2.0) * self.h_star)
    }

    /// `C_a = c p* h* exp(−c(1 − a*)) / (2a*)`, or 1 when `a* = 0`.
    pub fn c_a(&self, params: &RheologyParams<T>) -> T {
        if self.a_star > T::zero() {
            self.pressure(params).dp_da / (T::lit(2.0) * self.a_star)
        } else {
            T::one()
        }
    }
}

/// Linearisation `A₀ = A(v*) − F_s'(v*)` on `[u1 | u2 | h | a]`:
///
/// ```text
/// | A_D^H(v*)/(ρh*) + c_cor J   ∂_h P*/(2ρh*) ∇   ∂_a P*/(2ρh*) ∇ |
/// |       h* div                   −d_h Δ_N              0         |
/// |       a* div                       0              −d_a Δ_N     |
/// ```
///
/// with `J u = (−u₂, u₁)`. The divergence rows use the summation-by-parts
/// difference operator, so `∫ div(u) h = −∫ u·∇h` holds exactly.
pub fn assemble_a0<T: Real>(
    eq: &Equilibrium<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
) -> Result<SparseOperator<T>, StabilityError> {
    let eq = Equilibrium::new(eq.h_star, eq.a_star, params)?;
    let base = assemble_coupled(&eq.state(grid), grid, params, T::zero())?;
    let n = grid.n();
    let mut b = base.to_builder();
    let half = T::lit(0.5);
    for p in 0..n {
        let (i, j) = grid.coords(p);
        if !grid.is_boundary(i, j) {
            b.push(p, n + p, -params.c_cor);
            b.push(n + p, p, params.c_cor);
        }
        // divergence rows: one-sided on the boundary, centred inside
        for (scale, row) in [(eq.h_star, 2 * n + p), (eq.a_star, 3 * n + p)] {
            let mut push = |col: usize, w: T| {
                if !grid.is_boundary_node(col % n) {
                    b.push(row, col, scale * w);
                }
            };
            let (ix, iy) = (T::one() / grid.dx, T::one() / grid.dy);
            if i == 0 {
                push(p + 1, ix);
                push(p, -ix);
            } else if i + 1 == grid.nx {
                push(p, ix);
                push(p - 1, -ix);
            } else {
                push(p + 1, half * ix);
                push(p - 1, -half * ix);
            }
            let s = grid.nx;
            if j == 0 {
                push(n + p + s, iy);
                push(n + p, -iy);
            } else if j + 1 == grid.ny {
                push(n + p, iy);
                push(n + p - s, -iy);
            } else {
                push(n + p + s, half * iy);
                push(n + p - s, -half * iy);
            }
        }
    }
    Ok(b.build())
}

/// Eigenvalues of an interior-restricted operator and derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    /// `1e-8 · spectral radius`.
    pub tol_kernel: f64,
    pub kernel_dim: usize,
    /// `min Re λ` over `|λ| > tol_kernel`.
    pub gap: f64,
    /// `min Re λ` over all eigenvalues.
    pub min_real: f64,
    /// `max |Im λ|`.
    pub max_imag: f64,
}

impl SpectrumReport {
    /// Kernel of dimension `kernel_dim` and every other eigenvalue in the
    /// open right half-plane.
    pub fn is_stable_with_kernel(&self, kernel_dim: usize) -> bool {
        self.kernel_dim == kernel_dim && self.gap > 0.0
    }
}

/// Dense eigenvalues of `op`, restricted to non-Dirichlet unknowns when
/// `interior_only` is set.
pub fn spectrum<T: Real>(
    op: &SparseOperator<T>,
    interior_only: bool,
) -> Result<SpectrumReport, StabilityError> {
    spectrum_with_budget(op, interior_only, DENSE_BUDGET)
}

pub fn spectrum_with_budget<T: Real>(
    op: &SparseOperator<T>,
    interior_only: bool,
    budget: usize,
) -> Result<SpectrumReport, StabilityError> {
    let mask = interior_only.then(|| op.interior_mask());
    let dim = mask
        .as_ref()
        .map_or(op.dim(), |m| m.iter().filter(|k| **k).count());
    if dim > budget {
        return Err(StabilityError::BudgetExceeded { dim, budget });
    }
    let mut dense = op.to_dense(mask.as_deref());
    balance(&mut dense);
    let mut eigenvalues = dense_eigenvalues(&dense)?;
    eigenvalues.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(summarise(eigenvalues))
}

/// Eigenvalues by dense Hessenberg QR.
fn dense_eigenvalues(m: &Mat<f64>) -> Result<Vec<Complex<f64>>, StabilityError> {
    let ev = m
        .eigenvalues()
        .map_err(|_| StabilityError::Eigen("QR iteration did not converge"))?;
    Ok(ev.iter().map(|z| Complex::new(z.re, z.im)).collect())
}

/// Diagonal similarity scaling by powers of two that equalises row and
/// column norms (Parlett–Reinsch). Leaves the eigenvalues unchanged.
fn balance(m: &mut Mat<f64>) {
    let n = m.nrows();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r) < 0.95 * total {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

fn summarise(eigenvalues: Vec<Complex<f64>>) -> SpectrumReport {
    let spectral_radius = eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let tol_kernel = 1e-8 * spectral_radius;
    let kernel_dim = eigenvalues.iter().filter(|z| z.norm() <= tol_kernel).count();
    let gap = eigenvalues
        .iter()
        .filter(|z| z.norm() > tol_kernel)
        .fold(f64::INFINITY, |m, z| m.min(z.re));
    let min_real = eigenvalues.iter().fold(f64::INFINITY, |m, z| m.min(z.re));
    let max_imag = eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    SpectrumReport {
        eigenvalues,
        spectral_radius,
        tol_kernel,
        kernel_dim,
        gap,
        min_real,
        max_imag,
    }
}

/// `max_k ‖A₀ k‖_∞ / ‖A₀‖_max` over the constant-`(h, a)` kernel vectors.
pub fn kernel_residual<T: Real>(op: &SparseOperator<T>) -> f64 {
    let n = match op.layout() {
        BlockLayout::Coupled { n } => n,
        _ => return f64::INFINITY,
    };
    let scale = op.max_abs().as_f64();
    let mut worst = 0.0f64;
    for block in [2usize, 3] {
        let mut v = vec![T::zero(); 4 * n];
        for x in &mut v[block * n..(block + 1) * n] {
            *x = T::one();
        }
        let r = op.apply(&v);
        worst = worst.max(r.iter().fold(0.0f64, |m, x| m.max(x.as_f64().abs())));
    }
    worst / scale
}

/// Evidence that the zero eigenvalue is semi-simple with multiplicity 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemisimplicityReport {
    /// Two smallest singular values, relative to the largest.
    pub null_singular_values: [f64; 2],
    /// Third smallest singular value, relative to the largest.
    pub next_singular_value: f64,
    /// `‖Kᵀ A₀ K‖ / ‖A₀‖` for an orthonormal basis `K` of the numerical kernel.
    pub restriction_norm: f64,
}

impl SemisimplicityReport {
    /// Geometric multiplicity 2 (two null singular values, the third well
    /// separated) and a vanishing restriction to the kernel.
    pub fn passes(&self, tol: f64) -> bool {
        self.null_singular_values[1] <= tol
            && self.next_singular_value > 1e3 * tol
            && self.restriction_norm <= tol
    }
}

/// SVD-based semi-simplicity proxy on the interior-restricted operator.
pub fn semisimplicity<T: Real>(op: &SparseOperator<T>) -> Result<SemisimplicityReport, StabilityError> {
    let mask = op.interior_mask();
    let dim = mask.iter().filter(|k| **k).count();
    if dim > DENSE_BUDGET {
        return Err(StabilityError::BudgetExceeded {
            dim,
            budget: DENSE_BUDGET,
        });
    }
    if dim < 3 {
        return Err(StabilityError::Eigen("operator too small"));
    }
    let a = op.to_dense(Some(&mask));
    let svd = a
        .svd()
        .map_err(|_| StabilityError::Eigen("SVD did not converge"))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let top = s[0];
    let v = svd.V();
    // right singular vectors of the two smallest singular values
    let k: Vec<Vec<f64>> = [dim - 2, dim - 1]
        .iter()
        .map(|&c| (0..dim).map(|r| v[(r, c)]).collect())
        .collect();
    let mut restriction = 0.0f64;
    for kj in &k {
        let akj: Vec<f64> = (0..dim)
            .map(|r| (0..dim).map(|c| a[(r, c)] * kj[c]).sum())
            .collect();
        for ki in &k {
            let e: f64 = ki.iter().zip(&akj).map(|(x, y)| x * y).sum();
            restriction += e * e;
        }
    }
    let a_norm = a.norm_l2();
    Ok(SemisimplicityReport {
        null_singular_values: [s[dim - 1] / top, s[dim - 2] / top],
        next_singular_value: s[dim - 3] / top,
        restriction_norm: restriction.sqrt() / a_norm,
    })
}

/// Per-term evaluation of `⟨A₀ v, v⟩` in the trapezoid inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyIdentity<T> {
    /// `(name, value)` for every term, each computed without the assembled matrix.
    pub terms: Vec<(&'static str, T)>,
    /// `⟨A₀ v, v⟩` from the assembled operator.
    pub quadratic_form: T,
    /// Rayleigh quotient `λ = −⟨A₀v, v⟩ / ‖v‖²`, so that `0 = λ‖v‖² + Σ terms`.
    pub lambda: T,
    /// `|⟨A₀v, v⟩ − Σ terms| / Σ |terms|`.
    pub residual: T,
}

/// Sum of squared forward differences weighted by the transverse trapezoid
/// weights: `Σ w_⊥ (f_{k+1} − f_k)² / h`.
fn edge_energy<T: Real>(grid: &Grid<T>, f: &[T], along_x: bool) -> T {
    let mut acc = T::zero();
    let half = T::lit(0.5);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.idx(i, j);
            if along_x && i + 1 < grid.nx {
                let w = if j == 0 || j + 1 == grid.ny { half } else { T::one() } * grid.dy;
                let d = f[p + 1] - f[p];
                acc += w * d * d / grid.dx;
            }
            if !along_x && j + 1 < grid.ny {
                let w = if i == 0 || i + 1 == grid.nx { half } else { T::one() } * grid.dx;
                let d = f[p + grid.nx] - f[p];
                acc += w * d * d / grid.dy;
            }
        }
    }
    acc
}

/// `∫ |∇f|²` in the edge form matching the Neumann stencil.
pub fn gradient_energy<T: Real>(grid: &Grid<T>, f: &[T]) -> T {
    edge_energy(grid, f, true) + edge_energy(grid, f, false)
}

/// `⟨A_D^H(v*) u, u⟩` for Dirichlet `u`, assembled from difference
/// quotients: forward differences for the pure second derivatives and
/// centred ones for the mixed terms.
pub fn hibler_energy<T: Real>(
    grid: &Grid<T>,
    params: &RheologyParams<T>,
    pressure: T,
    u: [&[T]; 2],
) -> T {
    let c = pressure / (T::lit(2.0) * params.delta.sqrt());
    let cell = grid.dx * grid.dy;
    let mut acc = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            let a11 = c * params.s_entry(i, j, 0, 0);
            let a22 = c * params.s_entry(i, j, 1, 1);
            let a12 = c * (params.s_entry(i, j, 0, 1) + params.s_entry(i, j, 1, 0));
            let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
            for q in 0..grid.n() {
                let (qi, qj) = grid.coords(q);
                let interior_row = qj > 0 && qj + 1 < grid.ny;
                let interior_col = qi > 0 && qi + 1 < grid.nx;
                if interior_row && qi + 1 < grid.nx {
                    sxx += (u[i][q + 1] - u[i][q]) * (u[j][q + 1] - u[j][q]);
                }
                if interior_col && qj + 1 < grid.ny {
                    let s = grid.nx;
                    syy += (u[i][q + s] - u[i][q]) * (u[j][q + s] - u[j][q]);
                }
                if interior_row && interior_col {
                    let s = grid.nx;
                    let dxi = u[i][q + 1] - u[i][q - 1];
                    let dyj = u[j][q + s] - u[j][q - s];
                    sxy += dxi * dyj;
                }
            }
            acc += a11 * sxx / (grid.dx * grid.dx)
                + a22 * syy / (grid.dy * grid.dy)
                + a12 * sxy / (T::lit(4.0) * grid.dx * grid.dy);
        }
    }
    acc * cell
}

/// Termwise discrete analogue of testing `(λ + A₀) v = 0` with `v`.
pub fn energy_identity_residual<T: Real>(
    op: &SparseOperator<T>,
    v: &FieldSet<T>,
    eq: &Equilibrium<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
) -> EnergyIdentity<T> {
    let pr = eq.pressure(params);
    let mass = T::one() / (params.rho_ice * eq.h_star);
    let two = T::lit(2.0);
    let gh = [diff_x(grid, &v.h), diff_y(grid, &v.h)];
    let ga = [diff_x(grid, &v.a), diff_y(grid, &v.a)];
    let div = divergence(grid, &v.u1, &v.u2);
    let dot = |g: &[Vec<T>; 2]| grid.inner(&g[0], &v.u1) + grid.inner(&g[1], &v.u2);
    let jv1: Vec<T> = v.u2.iter().map(|x| -*x).collect();
    let cor = params.c_cor * (grid.inner(&jv1, &v.u1) + grid.inner(&v.u1, &v.u2));
    let terms = vec![
        ("hibler", mass * hibler_energy(grid, params, pr.value, [&v.u1, &v.u2])),
        ("coriolis", cor),
        ("h_gradient_coupling", pr.dp_dh * mass / two * dot(&gh)),
        ("a_gradient_coupling", pr.dp_da * mass / two * dot(&ga)),
        ("h_divergence", eq.h_star * grid.inner(&div, &v.h)),
        ("a_divergence", eq.a_star * grid.inner(&div, &v.a)),
        ("h_diffusion", params.d_h * gradient_energy(grid, &v.h)),
        ("a_diffusion", params.d_a * gradient_energy(grid, &v.a)),
    ];
    let x = v.to_vec();
    let ax = op.apply(&x);
    let n = grid.n();
    let mut q = T::zero();
    for blk in 0..4 {
        q += grid.inner(&ax[blk * n..(blk + 1) * n], &x[blk * n..(blk + 1) * n]);
    }
    let total: T = terms.iter().map(|t| t.1).sum();
    let size: T = terms.iter().map(|t| t.1.abs()).sum::<T>().max(q.abs());
    let norm2: T = (0..4)
        .map(|blk| grid.inner(&x[blk * n..(blk + 1) * n], &x[blk * n..(blk + 1) * n]))
        .sum();
    EnergyIdentity {
        terms,
        quadratic_form: q,
        lambda: if norm2 > T::zero() { -q / norm2 } else { T::zero() },
        residual: if size > T::zero() { (q - total).abs() / size } else { T::zero() },
    }
}

/// `|⟨div u, h⟩ + ⟨u, ∇h⟩|` relative to the size of either side.
pub fn summation_by_parts_defect<T: Real>(grid: &Grid<T>, u1: &[T], u2: &[T], h: &[T]) -> T {
    let lhs = grid.inner(&divergence(grid, u1, u2), h);
    let rhs = grid.inner(u1, &diff_x(grid, h)) + grid.inner(u2, &diff_y(grid, h));
    let size = lhs.abs().max(rhs.abs());
    if size > T::zero() {
        (lhs + rhs).abs() / size
    } else {
        T::zero()
    }
}

/// Weighted energy near equilibrium: the equilibrium equation at `v` tested
/// with `(u, C_h h, C_a a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEnergy<T> {
    /// Sum of all terms.
    pub value: T,
    pub terms: Vec<(&'static str, T)>,
    /// Hibler and diffusion terms (nonnegative).
    pub coercive: T,
    /// `∫ (∂_h P/2 − C_h h) ∇h·u + ∫ (∂_a P/2 − C_a a) ∇a·u`, which the pressure
    /// and transport terms collapse to.
    pub remainder: T,
    /// `|T_pressure + T_h_transport + T_a_transport − remainder|`.
    pub regroup_defect: T,
    /// `sup|∂_h P/2 − C_h h| ‖∇h‖ ‖u‖ + sup|∂_a P/2 − C_a a| ‖∇a‖ ‖u‖`.
    pub remainder_bound: T,
    /// `sup |∂_h P/2 − C_h h|` and its a-priori bound in terms of `‖v − v*‖_∞`.
    pub h_factor: (T, T),
    /// `sup |∂_a P/2 − C_a a|` and its a-priori bound.
    pub a_factor: (T, T),
    /// `‖v − v*‖_∞` over all fields.
    pub deviation: T,
}

pub fn weighted_equilibrium_energy<T: Real>(
    v: &FieldSet<T>,
    eq: &Equilibrium<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
) -> Result<WeightedEnergy<T>, StabilityError> {
    let n = grid.n();
    let ch = eq.c_h(params);
    let ca = eq.c_a(params);
    let pres = pressure_field(v, params)?;
    let hib = assemble_hibler(v, grid, params, T::zero())?;
    let mut uu = v.u1.clone();
    uu.extend_from_slice(&v.u2);
    let au = hib.apply(&uu);
    let t_hibler = grid.inner(&au[..n], &v.u1) + grid.inner(&au[n..], &v.u2);

    let half = T::lit(0.5);
    let gh = [diff_x(grid, &v.h), diff_y(grid, &v.h)];
    let ga = [diff_x(grid, &v.a), diff_y(grid, &v.a)];
    let weighted = |coef: &dyn Fn(usize) -> T, g: &[Vec<T>; 2]| -> T {
        let c1: Vec<T> = (0..n).map(|k| coef(k) * g[0][k]).collect();
        let c2: Vec<T> = (0..n).map(|k| coef(k) * g[1][k]).collect();
        grid.inner(&c1, &v.u1) + grid.inner(&c2, &v.u2)
    };
    let t_pressure = weighted(&|k| half * pres[k].dp_dh, &gh) + weighted(&|k| half * pres[k].dp_da, &ga);

    let g1 = [gradient_x(grid, &v.u1), gradient_y(grid, &v.u1)];
    let g2 = [gradient_x(grid, &v.u2), gradient_y(grid, &v.u2)];
    let adv1: Vec<T> = (0..n)
        .map(|k| params.rho_ice * v.h[k] * (v.u1[k] * g1[0][k] + v.u2[k] * g1[1][k]))
        .collect();
    let adv2: Vec<T> = (0..n)
        .map(|k| params.rho_ice * v.h[k] * (v.u1[k] * g2[0][k] + v.u2[k] * g2[1][k]))
        .collect();
    let t_advection = grid.inner(&adv1, &v.u1) + grid.inner(&adv2, &v.u2);

    let flux_div = |s: &[T]| {
        let q1: Vec<T> = v.u1.iter().zip(s).map(|(u, s)| *u * *s).collect();
        let q2: Vec<T> = v.u2.iter().zip(s).map(|(u, s)| *u * *s).collect();
        divergence(grid, &q1, &q2)
    };
    let t_h_transport = ch * grid.inner(&flux_div(&v.h), &v.h);
    let t_a_transport = ca * grid.inner(&flux_div(&v.a), &v.a);
    let t_h_diff = params.d_h * ch * gradient_energy(grid, &v.h);
    let t_a_diff = params.d_a * ca * gradient_energy(grid, &v.a);

    let fh = |k: usize| half * pres[k].dp_dh - ch * v.h[k];
    let fa = |k: usize| half * pres[k].dp_da - ca * v.a[k];
    let remainder = weighted(&fh, &gh) + weighted(&fa, &ga);
    let sup_h = (0..n).fold(T::zero(), |m, k| m.max(fh(k).abs()));
    let sup_a = (0..n).fold(T::zero(), |m, k| m.max(fa(k).abs()));
    let unorm = (grid.inner(&v.u1, &v.u1) + grid.inner(&v.u2, &v.u2)).sqrt();
    let gnorm = |g: &[Vec<T>; 2]| (grid.inner(&g[0], &g[0]) + grid.inner(&g[1], &g[1])).sqrt();
    let remainder_bound = sup_h * gnorm(&gh) * unorm + sup_a * gnorm(&ga) * unorm;

    // a-priori factors from ‖v − v*‖_∞
    let c = params.c;
    let e_star = (c * eq.a_star).exp();
    let damp = (-c).exp();
    let dev_exp = (0..n).fold(T::zero(), |m, k| m.max(((c * v.a[k]).exp() - e_star).abs()));
    let dev_h = (0..n).fold(T::zero(), |m, k| m.max((v.h[k] - eq.h_star).abs()));
    let dev_a = (0..n).fold(T::zero(), |m, k| m.max((v.a[k] - eq.a_star).abs()));
    let h_max = (0..n).fold(T::zero(), |m, k| m.max(v.h[k]));
    let p_weight = (-c * (T::one() - eq.a_star)).exp();
    let bound_h = half * params.p_star * (damp * dev_exp + p_weight * dev_h / eq.h_star);
    let bound_a = if eq.a_star > T::zero() {
        half * c
            * params.p_star
            * (damp * (h_max * dev_exp + e_star * dev_h) + eq.h_star * p_weight * dev_a / eq.a_star)
    } else {
        half * c * params.p_star * damp * (h_max * dev_exp + e_star * dev_h) + dev_a
    };
    let speed = v.max_speed();
    let deviation = speed.max(dev_h).max(dev_a);

    let terms = vec![
        ("hibler", t_hibler),
        ("pressure_gradient", t_pressure),
        ("advection", t_advection),
        ("h_transport", t_h_transport),
        ("h_diffusion", t_h_diff),
        ("a_transport", t_a_transport),
        ("a_diffusion", t_a_diff),
    ];
    let value = terms.iter().map(|t| t.1).sum();
    Ok(WeightedEnergy {
        value,
        coercive: t_hibler + t_h_diff + t_a_diff,
        remainder,
        regroup_defect: (t_pressure + t_h_transport + t_a_transport - remainder).abs(),
        remainder_bound,
        h_factor: (sup_h, bound_h),
        a_factor: (sup_a, bound_a),
        deviation,
        terms,
    })
}

/// Parameters of a decay experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig<T> {
    /// Relative amplitude `s`: `h` and `a` deviate by up to `s·h*`, `s·a*`.
    pub perturbation_scale: T,
    pub seed: u64,
    /// Stepper settings; `t_end` is overridden when `decades` is set.
    pub stepper: StepperConfig<T>,
    /// Run long enough for the slowest linear mode to decay by `10^decades`
    /// (using the spectral gap) when set.
    pub decades: Option<T>,
    /// Fraction of the trajectory discarded as transient.
    pub discard: T,
    /// Fraction at the end of the trajectory used for the fit.
    pub window: T,
}

impl<T: Real> Default for DecayConfig<T> {
    fn default() -> Self {
        Self {
            perturbation_scale: T::lit(1e-3),
            seed: 0,
            stepper: StepperConfig::default(),
            decades: Some(T::one()),
            discard: T::lit(0.2),
            window: T::lit(0.6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport<T> {
    /// Least-squares rate of `‖v(t) − v_∞‖`; `None` without a perturbation.
    pub fitted_rate: Option<T>,
    /// Spectral gap of the interior-restricted linearisation.
    pub predicted_gap: f64,
    /// `max(|mean h(T) − mean h₀| / mean h₀, |mean a(T) − mean a₀| / mean a₀)`.
    pub limit_mismatch: T,
    pub limit_h: T,
    pub limit_a: T,
    pub fit_samples: usize,
    pub t_end: T,
    /// `(time, ‖v(t) − v_∞‖)` for every step.
    pub trajectory: Vec<(T, T)>,
    pub diagnostics: Vec<crate::dynamics::Diagnostics<T>>,
}

/// Smooth deterministic perturbation of `v*`: the lowest Neumann modes of
/// `h` and `a` with seeded amplitudes plus a higher mixed mode; the velocity
/// starts at rest.
pub fn perturbed_equilibrium<T: Real>(
    eq: &Equilibrium<T>,
    grid: &Grid<T>,
    scale: T,
    seed: u64,
) -> FieldSet<T> {
    let mut rng = SampleRng::new(seed);
    let mut coef = || T::lit(0.5 + 0.5 * rng.unit());
    let (ch1, ch2, ch3) = (coef(), coef(), coef());
    let (ca1, ca2, ca3) = (coef(), coef(), coef());
    let pi = T::PI();
    let (lx, ly) = (grid.lx, grid.ly);
    let shape = move |x: T, y: T, c: (T, T, T)| {
        let third = T::lit(1.0 / 3.0);
        third
            * (c.0 * (pi * x / lx).cos()
                + c.1 * (pi * y / ly).cos()
                + c.2 * (T::lit(2.0) * pi * x / lx).cos() * (pi * y / ly).cos())
    };
    let mut v = eq.state(grid);
    v.h = grid.sample(|x, y| eq.h_star * (T::one() + scale * shape(x, y, (ch1, ch2, ch3))));
    v.a = grid.sample(|x, y| eq.a_star * (T::one() + scale * shape(x, y, (ca1, ca2, ca3))));
    v
}

struct Trajectory<T> {
    reference: FieldSet<T>,
    points: Vec<(T, T)>,
}

impl<T: Real> Trajectory<T> {
    fn push(&mut self, grid: &Grid<T>, t: T, v: &FieldSet<T>) {
        let d = crate::dynamics::composite_distance(grid, v, &self.reference);
        self.points.push((t, d));
    }
}

struct TrajectoryObserver<'a, T> {
    grid: &'a Grid<T>,
    traj: &'a mut Trajectory<T>,
}

impl<T: Real> RunObserver<T> for TrajectoryObserver<'_, T> {
    fn observe(
        &mut self,
        _step: usize,
        state: &FieldSet<T>,
        diag: &crate::dynamics::Diagnostics<T>,
    ) -> Result<(), String> {
        self.traj.push(self.grid, diag.time, state);
        Ok(())
    }
}

/// Least-squares slope of `ln d` against `t`.
fn log_linear_slope<T: Real>(points: &[(T, T)]) -> T {
    let m = T::of_usize(points.len());
    let (mut st, mut sy) = (T::zero(), T::zero());
    for (t, d) in points {
        st += *t;
        sy += d.ln();
    }
    let (tm, ym) = (st / m, sy / m);
    let (mut num, mut den) = (T::zero(), T::zero());
    for (t, d) in points {
        num += (*t - tm) * (d.ln() - ym);
        den += (*t - tm) * (*t - tm);
    }
    num / den
}

/// Runs the unforced system from a perturbed equilibrium and fits the
/// exponential decay of `‖v(t) − v_∞‖` with `v_∞ = (0, mean h₀, mean a₀)`.
pub fn decay_experiment<T: Real>(
    eq: &Equilibrium<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
    cfg: &DecayConfig<T>,
) -> Result<DecayReport<T>, StabilityError> {
    let eq = Equilibrium::new(eq.h_star, eq.a_star, params)?;
    let a0 = assemble_a0(&eq, grid, params)?;
    let gap = spectrum(&a0, true)?.gap;
    let v0 = perturbed_equilibrium(&eq, grid, cfg.perturbation_scale, cfg.seed);
    let mut stepper = cfg.stepper.clone();
    if let Some(dec) = cfg.decades {
        stepper.t_end = T::lit(dec.as_f64() * std::f64::consts::LN_10 / gap);
    }
    let mean_h0 = grid.mean(&v0.h);
    let mean_a0 = grid.mean(&v0.a);
    let reference = FieldSet::equilibrium(grid, mean_h0, mean_a0);
    let mut traj = Trajectory {
        reference: reference.clone(),
        points: Vec::new(),
    };
    let summary = {
        let mut obs = TrajectoryObserver {
            grid,
            traj: &mut traj,
        };
        run(
            &v0,
            grid,
            &ForcingInputs::none(grid),
            params,
            &stepper,
            Some(&reference),
            &mut obs,
        )?
    };
    let end = summary.final_state;
    let limit_h = grid.mean(&end.h);
    let limit_a = grid.mean(&end.a);
    let rel = |a: T, b: T| {
        if b != T::zero() {
            (a - b).abs() / b.abs()
        } else {
            (a - b).abs()
        }
    };
    let limit_mismatch = rel(limit_h, mean_h0).max(rel(limit_a, mean_a0));

    let t_end = stepper.t_end;
    let start = t_end * (T::one() - cfg.window);
    let window: Vec<(T, T)> = traj
        .points
        .iter()
        .copied()
        .filter(|(t, d)| *t >= start && *t >= cfg.discard * t_end && *d > T::zero())
        .collect();
    let nonzero = traj.points.iter().any(|(_, d)| *d > T::zero());
    let fitted_rate = if !nonzero || cfg.perturbation_scale == T::zero() {
        None
    } else if window.len() < 10 {
        return Err(StabilityError::FitFailure {
            samples: window.len(),
        });
    } else {
        Some(-log_linear_slope(&window))
    };
    Ok(DecayReport {
        fitted_rate,
        predicted_gap: gap,
        limit_mismatch,
        limit_h,
        limit_a,
        fit_samples: window.len(),
        t_end,
        trajectory: traj.points,
        diagnostics: summary.diagnostics,
    })
}

/// One row of a δ sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub delta: f64,
    pub gap: f64,
    pub kernel_dim: usize,
    pub min_real: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSweep {
    pub points: Vec<SweepPoint>,
    /// Largest swept δ such that every δ' ≤ δ in the sweep has kernel
    /// dimension 2 and a positive gap.
    pub threshold: Option<f64>,
}

/// Spectral gap of `A₀` for each δ (sorted ascending).
pub fn delta_sweep<T: Real>(
    eq: &Equilibrium<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
    deltas: &[T],
) -> Result<DeltaSweep, StabilityError> {
    let mut ds: Vec<T> = deltas.to_vec();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut points = Vec::with_capacity(ds.len());
    for d in ds {
        let p = RheologyParams {
            delta: d,
            ..params.clone()
        };
        let rep = spectrum(&assemble_a0(eq, grid, &p)?, true)?;
        points.push(SweepPoint {
            delta: d.as_f64(),
            gap: rep.gap,
            kernel_dim: rep.kernel_dim,
            min_real: rep.min_real,
        });
    }
    let mut threshold = None;
    for p in &points {
        if p.kernel_dim == 2 && p.gap > 0.0 {
            threshold = Some(p.delta);
        } else {
            break;
        }
    }
    Ok(DeltaSweep { points, threshold })
}
