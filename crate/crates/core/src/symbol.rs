//! Principal symbol of the frozen-coefficient Hibler operator and pointwise
//! ellipticity / Lopatinskii–Shapiro verification.
//!
//! Every check here works on a single frozen state `(ε, P)`; sweeps draw
//! states and directions from a seeded [`SampleRng`] so reports are
//! reproducible.

use num_complex::Complex;
use thiserror::Error;

use crate::rheology::{CoefficientTensor, RheologyParams, StrainRate};
use crate::sampling::SampleRng;
use crate::Real;

type C<T> = Complex<T>;

/// Roots with `|Re μ| ≤ ROOT_AXIS_TOL · |μ|` are treated as lying on the
/// imaginary axis, which breaks the stable/unstable split.
pub const ROOT_AXIS_TOL: f64 = 1e-9;

/// `A_#(ξ)` together with the frozen inputs it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolMatrix<T> {
    pub m: [[C<T>; 2]; 2],
    pub eps: StrainRate<T>,
    pub pressure: T,
    pub xi: [C<T>; 2],
}

impl<T: Real> SymbolMatrix<T> {
    /// `A η`.
    pub fn apply(&self, eta: &[C<T>; 2]) -> [C<T>; 2] {
        [
            self.m[0][0] * eta[0] + self.m[0][1] * eta[1],
            self.m[1][0] * eta[0] + self.m[1][1] * eta[1],
        ]
    }

    /// `(A η | η) = Σ (Aη)_i conj(η_i)`.
    pub fn form(&self, eta: &[C<T>; 2]) -> C<T> {
        let a = self.apply(eta);
        a[0] * eta[0].conj() + a[1] * eta[1].conj()
    }

    /// `max |A_ij − conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - self.m[j][i].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        let mut worst = T::zero();
        for row in &self.m {
            for z in row {
                worst = worst.max(z.norm());
            }
        }
        worst
    }

    /// Both eigenvalues from the characteristic quadratic.
    pub fn eigenvalues(&self) -> [C<T>; 2] {
        eig2(&self.m)
    }

    /// Eigenvalues `(λ_min, λ_max)` assuming the matrix is Hermitian.
    pub fn hermitian_eigenvalues(&self) -> (T, T) {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = self.m[0][1];
        let half = T::lit(0.5);
        let mean = half * (a + d);
        let rad = (half * (a - d)).hypot(b.norm());
        let hi = mean + rad;
        let det = a * d - b.norm_sqr();
        let lo = if hi > T::zero() { det / hi } else { mean - rad };
        (lo, hi)
    }
}

fn eig2<T: Real>(m: &[[C<T>; 2]; 2]) -> [C<T>; 2] {
    let half = C::new(T::lit(0.5), T::zero());
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr * half * half - det).sqrt();
    [tr * half - disc, tr * half + disc]
}

/// Symbol of the principal part written out entry by entry:
///
/// ```text
/// A11 = a11¹¹ ξ1² + 2 a11¹² ξ1ξ2 + a11²² ξ2²
/// A12 = a11¹² ξ1² + (a12¹² + a11²²) ξ1ξ2 + a12²² ξ2²
/// A22 = a11²² ξ1² + 2 a12²² ξ1ξ2 + a22²² ξ2²
/// ```
///
/// (upper indices `kl`, lower `ij`). Valid for complex `ξ` as well; no
/// conjugation is involved.
pub fn symbol_entries<T: Real>(a: &CoefficientTensor<T>, xi: &[C<T>; 2]) -> [[C<T>; 2]; 2] {
    // a[i][j][k][l] = a_ij^kl
    let a11_11 = a.get(0, 0, 0, 0);
    let a11_12 = a.get(0, 0, 0, 1);
    let a11_22 = a.get(0, 0, 1, 1);
    let a12_12 = a.get(0, 1, 0, 1);
    let a12_22 = a.get(0, 1, 1, 1);
    let a22_22 = a.get(1, 1, 1, 1);
    let x11 = xi[0] * xi[0];
    let x12 = xi[0] * xi[1];
    let x22 = xi[1] * xi[1];
    let two = T::lit(2.0);
    let m11 = x11 * a11_11 + x12 * (two * a11_12) + x22 * a11_22;
    let m12 = x11 * a11_12 + x12 * (a12_12 + a11_22) + x22 * a12_22;
    let m22 = x11 * a11_22 + x12 * (two * a12_22) + x22 * a22_22;
    [[m11, m12], [m12, m22]]
}

/// `A_#(ξ)` at the frozen state `(ε, P)` for real `ξ`.
pub fn principal_symbol<T: Real>(
    params: &RheologyParams<T>,
    eps: &StrainRate<T>,
    pressure: T,
    xi: [T; 2],
) -> SymbolMatrix<T> {
    let a = params.coefficient_tensor(eps, pressure);
    let xi_c = [C::new(xi[0], T::zero()), C::new(xi[1], T::zero())];
    SymbolMatrix {
        m: symbol_entries(&a, &xi_c),
        eps: *eps,
        pressure,
        xi: xi_c,
    }
}

/// One evaluation of the ellipticity estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticitySample<T> {
    pub xi: [T; 2],
    pub min_eigenvalue: T,
    /// Largest `|Im λ|` over both eigenvalues.
    pub max_imag: T,
    /// `Re (A_# η | η)`.
    pub form_re: T,
    /// `(P / (2 Δ_δ³)) δ / e² · |ξ|² |η|²`.
    pub bound: T,
}

impl<T: Real> EllipticitySample<T> {
    pub fn margin(&self) -> T {
        self.form_re - self.bound
    }
}

/// Worst case over a sweep of directions at one frozen state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport<T> {
    pub samples: usize,
    pub min_eigenvalue: T,
    /// Smallest `Re(A_# η|η) − bound`.
    pub min_margin: T,
    /// Smallest `margin / bound`.
    pub min_relative_margin: T,
    /// Largest `|Im λ| / |A_#|`.
    pub max_imag_ratio: T,
    /// Scale `P / (2 Δ_δ)` of the symbol entries.
    pub scale: T,
}

impl<T: Real> EllipticityReport<T> {
    /// Eigenvalues real and positive, coercivity bound holds with a
    /// relative slack of `1e-9`.
    pub fn passed(&self) -> bool {
        self.min_eigenvalue > T::zero()
            && self.max_imag_ratio <= T::lit(1e-12)
            && self.min_relative_margin >= -T::lit(1e-9)
    }
}

/// Evaluates eigenvalues and the quantitative coercivity at direction `ξ`
/// and test vector `η`.
pub fn ellipticity_at<T: Real>(
    params: &RheologyParams<T>,
    eps: &StrainRate<T>,
    pressure: T,
    xi: [T; 2],
    eta: &[C<T>; 2],
) -> EllipticitySample<T> {
    let sym = principal_symbol(params, eps, pressure, xi);
    let eig = sym.eigenvalues();
    let (lo, _) = sym.hermitian_eigenvalues();
    let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
    let eta2 = eta[0].norm_sqr() + eta[1].norm_sqr();
    let e2 = params.e * params.e;
    EllipticitySample {
        xi,
        min_eigenvalue: lo,
        max_imag: eig[0].im.abs().max(eig[1].im.abs()),
        form_re: sym.form(eta).re,
        bound: params.coercivity_constant(eps, pressure) * params.delta / e2 * xi2 * eta2,
    }
}

/// Samples unit `ξ ∈ ℝ²` and unit `η ∈ ℂ²` at a fixed state.
pub fn ellipticity_report<T: Real>(
    params: &RheologyParams<T>,
    eps: &StrainRate<T>,
    pressure: T,
    n_samples: usize,
    rng: &mut SampleRng,
) -> EllipticityReport<T> {
    let scale = T::lit(0.5) * pressure / params.delta_reg(eps);
    let mut report = EllipticityReport {
        samples: 0,
        min_eigenvalue: T::infinity(),
        min_margin: T::infinity(),
        min_relative_margin: T::infinity(),
        max_imag_ratio: T::zero(),
        scale,
    };
    for _ in 0..n_samples.max(1) {
        let xi = rng.unit2::<T>();
        let eta = rng.complex_unit2::<T>();
        let s = ellipticity_at(params, eps, pressure, xi, &eta);
        report.merge(&s);
    }
    report
}

impl<T: Real> EllipticityReport<T> {
    pub fn merge(&mut self, s: &EllipticitySample<T>) {
        self.samples += 1;
        self.min_eigenvalue = self.min_eigenvalue.min(s.min_eigenvalue);
        self.min_margin = self.min_margin.min(s.margin());
        self.min_relative_margin = self.min_relative_margin.min(s.margin() / s.bound);
        self.max_imag_ratio = self.max_imag_ratio.max(s.max_imag / self.scale);
    }
}

/// `Re Σ a_ij^kl (ξ_l u_j − ν_l v_j) conj(ξ_k u_i − ν_k v_i)`.
pub fn boundary_form<T: Real>(
    a: &CoefficientTensor<T>,
    xi: [T; 2],
    nu: [T; 2],
    u: &[C<T>; 2],
    v: &[C<T>; 2],
) -> T {
    // d[j][l] = ξ_l u_j − ν_l v_j
    let mut d = [[C::new(T::zero(), T::zero()); 2]; 2];
    for j in 0..2 {
        for l in 0..2 {
            d[j][l] = u[j] * xi[l] - v[j] * nu[l];
        }
    }
    let mut acc = C::new(T::zero(), T::zero());
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    acc = acc + d[j][l] * d[i][k].conj() * a.get(i, j, k, l);
                }
            }
        }
    }
    acc.re
}

/// `Im (u | v)` with `(u|v) = Σ u_i conj(v_i)`.
pub fn im_inner<T: Real>(u: &[C<T>; 2], v: &[C<T>; 2]) -> T {
    (u[0] * v[0].conj() + u[1] * v[1].conj()).im
}

/// Minima of the normalised boundary form over a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFormReport<T> {
    pub samples: usize,
    /// `min form / (P/(2Δ_δ) (|u|² + |v|²))` over all samples.
    pub min_form: T,
    /// Same minimum restricted to samples with `|Im(u|v)| > 1e-6 |u||v|`.
    pub min_form_nondegenerate: T,
    pub nondegenerate_samples: usize,
}

impl<T: Real> BoundaryFormReport<T> {
    pub fn sne1_holds(&self) -> bool {
        self.min_form >= -T::lit(1e-10)
    }

    pub fn sne2_holds(&self) -> bool {
        self.nondegenerate_samples == 0 || self.min_form_nondegenerate > T::zero()
    }
}

/// Normalised boundary form for one sample and whether it satisfies the
/// `Im(u|v) ≠ 0` hypothesis.
pub fn boundary_form_sample<T: Real>(
    params: &RheologyParams<T>,
    a: &CoefficientTensor<T>,
    eps: &StrainRate<T>,
    pressure: T,
    xi: [T; 2],
    nu: [T; 2],
    u: &[C<T>; 2],
    v: &[C<T>; 2],
) -> (T, bool) {
    let scale = T::lit(0.5) * pressure / params.delta_reg(eps);
    let nu2 = u[0].norm_sqr() + u[1].norm_sqr();
    let nv2 = v[0].norm_sqr() + v[1].norm_sqr();
    let norm = scale * (nu2 + nv2);
    let form = boundary_form(a, xi, nu, u, v);
    let value = if norm > T::zero() { form / norm } else { form };
    let qualifies = im_inner(u, v).abs() > T::lit(1e-6) * (nu2 * nv2).sqrt();
    (value, qualifies)
}

/// Samples unit `ξ`, `ν = ±ξ^⊥` and Gaussian `u, v ∈ ℂ²` at a fixed state.
pub fn boundary_form_check<T: Real>(
    params: &RheologyParams<T>,
    eps: &StrainRate<T>,
    pressure: T,
    n_samples: usize,
    rng: &mut SampleRng,
) -> BoundaryFormReport<T> {
    let a = params.coefficient_tensor(eps, pressure);
    let mut report = BoundaryFormReport {
        samples: 0,
        min_form: T::infinity(),
        min_form_nondegenerate: T::infinity(),
        nondegenerate_samples: 0,
    };
    for _ in 0..n_samples {
        let xi = rng.unit2::<T>();
        let sign = if rng.unit() < 0.5 { -T::one() } else { T::one() };
        let nu = [-xi[1] * sign, xi[0] * sign];
        let u = rng.complex2::<T>();
        let v = rng.complex2::<T>();
        let (value, qualifies) = boundary_form_sample(params, &a, eps, pressure, xi, nu, &u, &v);
        report.samples += 1;
        report.min_form = report.min_form.min(value);
        if qualifies {
            report.nondegenerate_samples += 1;
            report.min_form_nondegenerate = report.min_form_nondegenerate.min(value);
        }
    }
    report
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsError {
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error(
        "root balance violated: {stable} stable, {unstable} unstable, {on_axis} on the imaginary axis"
    )]
    RootBalance {
        stable: usize,
        unstable: usize,
        on_axis: usize,
    },
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

/// Boundary point data for the half-line problem
/// `(λ + A_#(ξ − ν D_y)) w = 0`, `w(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsProbe<T> {
    /// Unit tangent.
    pub xi: [T; 2],
    /// Unit normal orthogonal to `xi`.
    pub nu: [T; 2],
    pub lambda: C<T>,
    pub eps: StrainRate<T>,
    pub pressure: T,
}

impl<T: Real> LsProbe<T> {
    /// Tangent `ξ` with the normal rotated by +90°.
    pub fn from_tangent(xi: [T; 2], lambda: C<T>, eps: StrainRate<T>, pressure: T) -> Self {
        Self {
            xi,
            nu: [-xi[1], xi[0]],
            lambda,
            eps,
            pressure,
        }
    }

    pub fn validate(&self) -> Result<(), LsError> {
        let tol = T::lit(1e-12);
        let nx = self.xi[0].hypot(self.xi[1]);
        let nn = self.nu[0].hypot(self.nu[1]);
        let dot = self.xi[0] * self.nu[0] + self.xi[1] * self.nu[1];
        if (nx - T::one()).abs() > tol || (nn - T::one()).abs() > tol {
            return Err(LsError::InvalidProbe(format!(
                "|xi| = {nx}, |nu| = {nn}; both must be 1"
            )));
        }
        if dot.abs() > tol {
            return Err(LsError::InvalidProbe(format!("xi·nu = {dot}, must be 0")));
        }
        if !(self.pressure > T::zero()) {
            return Err(LsError::InvalidProbe(format!(
                "pressure {} must be > 0",
                self.pressure
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsReport<T> {
    /// Smallest singular value of the Dirichlet trace restricted to an
    /// orthonormal basis of the decaying solutions.
    pub s_min: T,
    /// Roots `μ` of `det(λ + A_#(ξ + iμν)) = 0`, in units where the symbol
    /// scale `P/(2Δ_δ)` is one.
    pub roots: [C<T>; 4],
    pub stable: usize,
    /// `P / (2 Δ_δ)`; `λ` is measured against this.
    pub scale: T,
}

/// Checks the Lopatinskii–Shapiro condition at one probe.
///
/// Decaying modes `w₀ e^{μy}` (`Re μ < 0`) solve the quadratic eigenproblem
/// `(λ + K₀ + μ K₁ + μ² K₂) w₀ = 0`. The roots of its quartic determinant
/// are classified first; the stable invariant subspace of the companion
/// linearisation is then extracted with the matrix sign function, which
/// covers repeated roots through generalised eigenvectors. The condition
/// holds iff the `w(0)` block of that subspace is nonsingular.
pub fn lopatinskii_shapiro_check<T: Real>(
    params: &RheologyParams<T>,
    probe: &LsProbe<T>,
) -> Result<LsReport<T>, LsError> {
    probe.validate()?;
    let a = params.coefficient_tensor(&probe.eps, probe.pressure);
    let scale = T::lit(0.5) * probe.pressure / params.delta_reg(&probe.eps);
    let lam = probe.lambda / scale;

    let bilinear = |p: [T; 2], q: [T; 2]| -> [[T; 2]; 2] {
        let mut m = [[T::zero(); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for k in 0..2 {
                    for l in 0..2 {
                        acc += a.get(i, j, k, l) * p[k] * q[l];
                    }
                }
                *out = acc / scale;
            }
        }
        m
    };
    let xx = bilinear(probe.xi, probe.xi);
    let xn = bilinear(probe.xi, probe.nu);
    let nx = bilinear(probe.nu, probe.xi);
    let nn = bilinear(probe.nu, probe.nu);

    let zero = C::new(T::zero(), T::zero());
    let i_unit = C::new(T::zero(), T::one());
    // polynomial entries p_ij(μ) = c0 + c1 μ + c2 μ²
    let mut poly = [[[zero; 3]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let diag = if i == j { lam } else { zero };
            poly[i][j][0] = diag + C::new(xx[i][j], T::zero());
            poly[i][j][1] = i_unit * (xn[i][j] + nx[i][j]);
            poly[i][j][2] = C::new(-nn[i][j], T::zero());
        }
    }
    let det = poly_sub(
        &poly_mul(&poly[0][0], &poly[1][1]),
        &poly_mul(&poly[0][1], &poly[1][0]),
    );
    let roots = quartic_roots(&det).ok_or(LsError::Numerical("quartic root iteration"))?;

    let axis = T::lit(ROOT_AXIS_TOL);
    let mut stable = 0;
    let mut unstable = 0;
    let mut on_axis = 0;
    for r in &roots {
        if r.re.abs() <= axis * r.norm() {
            on_axis += 1;
        } else if r.re < T::zero() {
            stable += 1;
        } else {
            unstable += 1;
        }
    }
    if on_axis > 0 || stable != 2 {
        return Err(LsError::RootBalance {
            stable,
            unstable,
            on_axis,
        });
    }

    // companion: z = (w, w'), z' = M z
    let k2 = [
        [poly[0][0][2], poly[0][1][2]],
        [poly[1][0][2], poly[1][1][2]],
    ];
    let k2_inv = inv2(&k2).ok_or(LsError::Numerical("singular normal symbol"))?;
    let k0 = [
        [poly[0][0][0], poly[0][1][0]],
        [poly[1][0][0], poly[1][1][0]],
    ];
    let k1 = [
        [poly[0][0][1], poly[0][1][1]],
        [poly[1][0][1], poly[1][1][1]],
    ];
    let b0 = mul2(&k2_inv, &k0);
    let b1 = mul2(&k2_inv, &k1);
    let mut m = [[zero; 4]; 4];
    m[0][2] = C::new(T::one(), T::zero());
    m[1][3] = C::new(T::one(), T::zero());
    for i in 0..2 {
        for j in 0..2 {
            m[2 + i][j] = -b0[i][j];
            m[2 + i][2 + j] = -b1[i][j];
        }
    }
    let sign = matrix_sign(&m).ok_or(LsError::Numerical("sign function iteration"))?;
    // stable projector (I − sign)/2
    let half = T::lit(0.5);
    let mut proj = [[zero; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let id = if i == j { T::one() } else { T::zero() };
            proj[i][j] = (C::new(id, T::zero()) - sign[i][j]) * half;
        }
    }
    let basis = orthonormal_columns(&proj, 2).ok_or(LsError::Numerical("stable subspace rank"))?;
    let w = [[basis[0][0], basis[0][1]], [basis[1][0], basis[1][1]]];
    Ok(LsReport {
        s_min: smallest_singular_value2(&w),
        roots,
        stable,
        scale,
    })
}

fn poly_mul<T: Real>(p: &[C<T>; 3], q: &[C<T>; 3]) -> [C<T>; 5] {
    let mut out = [C::new(T::zero(), T::zero()); 5];
    for (i, pi) in p.iter().enumerate() {
        for (j, qj) in q.iter().enumerate() {
            out[i + j] = out[i + j] + *pi * *qj;
        }
    }
    out
}

fn poly_sub<T: Real>(p: &[C<T>; 5], q: &[C<T>; 5]) -> [C<T>; 5] {
    let mut out = *p;
    for (o, qi) in out.iter_mut().zip(q.iter()) {
        *o = *o - *qi;
    }
    out
}

/// Roots of `c0 + c1 z + ... + c4 z⁴` by Aberth–Ehrlich iteration.
pub fn quartic_roots<T: Real>(coeffs: &[C<T>; 5]) -> Option<[C<T>; 4]> {
    let lead = coeffs[4];
    if lead.norm() == T::zero() {
        return None;
    }
    let c: Vec<C<T>> = coeffs.iter().map(|z| *z / lead).collect();
    // Cauchy bound for the initial circle
    let radius = T::one()
        + c[..4]
            .iter()
            .fold(T::zero(), |acc, z| acc.max(z.norm()));
    let eval = |z: C<T>| -> (C<T>, C<T>) {
        let mut p = C::new(T::one(), T::zero());
        let mut dp = C::new(T::zero(), T::zero());
        for k in (0..4).rev() {
            dp = dp * z + p;
            p = p * z + c[k];
        }
        (p, dp)
    };
    let mut z = [C::new(T::zero(), T::zero()); 4];
    for (k, zk) in z.iter_mut().enumerate() {
        let angle = T::lit(0.4 + std::f64::consts::TAU * k as f64 / 4.0);
        *zk = C::new(angle.cos(), angle.sin()) * (radius * T::lit(0.5));
    }
    let tol = T::lit(4.0) * T::epsilon();
    for _ in 0..500 {
        let mut max_step = T::zero();
        for k in 0..4 {
            let (p, dp) = eval(z[k]);
            if p.norm() == T::zero() {
                continue;
            }
            let ratio = p / dp;
            let mut repulsion = C::new(T::zero(), T::zero());
            for j in 0..4 {
                if j != k {
                    repulsion = repulsion + (z[k] - z[j]).inv();
                }
            }
            let step = ratio / (C::new(T::one(), T::zero()) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                continue;
            }
            z[k] = z[k] - step;
            max_step = max_step.max(step.norm() / (T::one() + z[k].norm()));
        }
        if max_step <= tol {
            break;
        }
    }
    if z.iter().all(|r| r.re.is_finite() && r.im.is_finite()) {
        Some(z)
    } else {
        None
    }
}

fn mul2<T: Real>(a: &[[C<T>; 2]; 2], b: &[[C<T>; 2]; 2]) -> [[C<T>; 2]; 2] {
    let mut out = [[C::new(T::zero(), T::zero()); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn inv2<T: Real>(a: &[[C<T>; 2]; 2]) -> Option<[[C<T>; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.norm() == T::zero() {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

/// Gauss–Jordan inverse with partial pivoting.
fn inv4<T: Real>(a: &[[C<T>; 4]; 4]) -> Option<[[C<T>; 4]; 4]> {
    let zero = C::new(T::zero(), T::zero());
    let one = C::new(T::one(), T::zero());
    let mut m = *a;
    let mut inv = [[zero; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = one;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&x, &y| {
            m[x][col]
                .norm()
                .partial_cmp(&m[y][col].norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].norm() == T::zero() {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        for j in 0..4 {
            m[col][j] = m[col][j] / p;
            inv[col][j] = inv[col][j] / p;
        }
        for r in 0..4 {
            if r != col {
                let f = m[r][col];
                if f.norm() != T::zero() {
                    for j in 0..4 {
                        m[r][j] = m[r][j] - f * m[col][j];
                        inv[r][j] = inv[r][j] - f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn det4<T: Real>(a: &[[C<T>; 4]; 4]) -> C<T> {
    let mut m = *a;
    let mut det = C::new(T::one(), T::zero());
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&x, &y| {
                m[x][col]
                    .norm()
                    .partial_cmp(&m[y][col].norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if m[pivot][col].norm() == T::zero() {
            return C::new(T::zero(), T::zero());
        }
        if pivot != col {
            m.swap(col, pivot);
            det = -det;
        }
        det = det * m[col][col];
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for j in col..4 {
                m[r][j] = m[r][j] - f * m[col][j];
            }
        }
    }
    det
}

/// Scaled Newton iteration `X ← (c X + (c X)⁻¹) / 2` for `sign(M)`.
fn matrix_sign<T: Real>(m: &[[C<T>; 4]; 4]) -> Option<[[C<T>; 4]; 4]> {
    let mut x = *m;
    let half = T::lit(0.5);
    let mut prev_diff = T::infinity();
    for iter in 0..100 {
        let inv = inv4(&x)?;
        let c = if iter < 10 {
            let d = det4(&x).norm();
            if d > T::zero() {
                d.powf(-T::lit(0.25))
            } else {
                T::one()
            }
        } else {
            T::one()
        };
        let mut next = x;
        let mut diff = T::zero();
        let mut size = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                next[i][j] = (x[i][j] * c + inv[i][j] / c) * half;
                diff += (next[i][j] - x[i][j]).norm_sqr();
                size += next[i][j].norm_sqr();
            }
        }
        x = next;
        let (diff, size) = (diff.sqrt(), size.sqrt());
        if diff <= T::lit(1e2) * T::epsilon() * size {
            return Some(x);
        }
        // quadratic convergence has stopped at the rounding floor
        if iter >= 10 && diff <= T::epsilon().sqrt() * size && diff >= half * prev_diff {
            return Some(x);
        }
        prev_diff = diff;
    }
    None
}

/// Orthonormal basis (4 × `rank`) of the column space by modified
/// Gram–Schmidt with column pivoting.
fn orthonormal_columns<T: Real>(a: &[[C<T>; 4]; 4], rank: usize) -> Option<Vec<Vec<C<T>>>> {
    let mut cols: Vec<[C<T>; 4]> = (0..4)
        .map(|j| [a[0][j], a[1][j], a[2][j], a[3][j]])
        .collect();
    let norm = |v: &[C<T>; 4]| v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    let reference = cols.iter().map(norm).fold(T::zero(), |m, n| m.max(n));
    let mut basis: Vec<[C<T>; 4]> = Vec::with_capacity(rank);
    for _ in 0..rank {
        let (best, best_norm) = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, norm(c)))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))?;
        if !(best_norm > T::lit(1e-8) * reference) {
            return None;
        }
        let q: [C<T>; 4] = {
            let c = cols.remove(best);
            let mut q = c;
            for z in q.iter_mut() {
                *z = *z / best_norm;
            }
            q
        };
        for c in cols.iter_mut() {
            let proj = (0..4).fold(C::new(T::zero(), T::zero()), |acc, r| acc + q[r].conj() * c[r]);
            for r in 0..4 {
                c[r] = c[r] - q[r] * proj;
            }
        }
        basis.push(q);
    }
    // row-major 4 × rank
    Some(
        (0..4)
            .map(|r| basis.iter().map(|q| q[r]).collect())
            .collect(),
    )
}

/// Smallest singular value of a complex 2×2 matrix.
pub fn smallest_singular_value2<T: Real>(w: &[[C<T>; 2]; 2]) -> T {
    let fro2 = w.iter().flatten().map(|z| z.norm_sqr()).sum::<T>();
    let det = (w[0][0] * w[1][1] - w[0][1] * w[1][0]).norm();
    let half = T::lit(0.5);
    let disc = (fro2 * fro2 - T::lit(4.0) * det * det).max(T::zero()).sqrt();
    let s_max = (half * (fro2 + disc)).sqrt();
    if s_max > T::zero() {
        det / s_max
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> RheologyParams<f64> {
        RheologyParams {
            delta: 1e-4,
            ..Default::default()
        }
    }

    /// Full four-index contraction `Σ_kl a_ij^kl ξ_k ξ_l`.
    fn contraction_oracle(a: &CoefficientTensor<f64>, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m[i][j] += a.get(i, j, k, l) * xi[k] * xi[l];
                    }
                }
            }
        }
        m
    }

    #[test]
    fn symbol_at_zero_strain() {
        let p = params();
        let pr = 2.0 * p.delta.sqrt();
        let s = principal_symbol(&p, &StrainRate::zero(), pr, [1.0, 0.0]);
        let a = p.coefficient_tensor(&StrainRate::zero(), pr);
        let oracle = contraction_oracle(&a, [1.0, 0.0]);
        assert_relative_eq!(oracle[0][0], 1.25, max_relative = 1e-14);
        assert_relative_eq!(oracle[1][1], 0.25, max_relative = 1e-14);
        assert_relative_eq!(s.m[0][0].re, 1.25, max_relative = 1e-14);
        assert_relative_eq!(s.m[1][1].re, 0.25, max_relative = 1e-14);
        assert!(s.m[0][1].norm() < 1e-15);

        let z = principal_symbol(&p, &StrainRate::zero(), pr, [0.0, 0.0]);
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn closed_form_symbol_matches_contraction_and_is_hermitian() {
        let p = params();
        let mut rng = SampleRng::new(21);
        for _ in 0..300 {
            let eps = rng.strain(0.02);
            let pr = rng.uniform(0.5, 2.0) * p.p_star;
            let xi = [rng.normal(), rng.normal()];
            let s = principal_symbol(&p, &eps, pr, xi);
            let a = p.coefficient_tensor(&eps, pr);
            let oracle = contraction_oracle(&a, xi);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((s.m[i][j].re - oracle[i][j]).abs() <= 1e-12 * s.max_abs());
                }
            }
            assert!(s.hermitian_defect() <= 1e-12 * s.max_abs());
        }
    }

    #[test]
    fn zero_strain_min_eigenvalue_is_analytic() {
        // A_#(ξ) = c (I/e² + ξ ξᵀ) at ε = 0, so λ_min = c/e² for every unit ξ.
        let p = params();
        let pr = 3.0;
        let c = pr / (2.0 * p.delta.sqrt());
        let mut rng = SampleRng::new(2);
        let report = ellipticity_report(&p, &StrainRate::zero(), pr, 200, &mut rng);
        assert_relative_eq!(report.min_eigenvalue, c / 4.0, max_relative = 1e-12);
        assert!(report.passed());
    }

    #[test]
    fn ellipticity_holds_for_random_states() {
        let p = params();
        let mut rng = SampleRng::new(9);
        for _ in 0..50 {
            let mag = rng.log_uniform(1e-3, 1.0);
            let eps = rng.strain(mag);
            let pr = rng.uniform(0.1, 3.0) * p.p_star;
            let r = ellipticity_report(&p, &eps, pr, 20, &mut rng);
            assert!(r.passed(), "{r:?}");
            assert!(r.min_margin >= 0.0 || r.min_relative_margin >= -1e-9);
        }
    }

    #[test]
    fn boundary_form_cases() {
        let p = params();
        let eps = StrainRate::new(0.01, 0.003, -0.02);
        let a = p.coefficient_tensor(&eps, 1.0);
        let zero = [C::new(0.0, 0.0); 2];
        assert_eq!(boundary_form(&a, [1.0, 0.0], [0.0, 1.0], &zero, &zero), 0.0);

        // ξ = e1, ν = e2, u = (0, 1), v = (1, 0): d = u⊗ξ − v⊗ν has only an
        // antisymmetric part, so Δ²(d) = 0 and the form vanishes.
        let u = [C::new(0.0, 0.0), C::new(1.0, 0.0)];
        let v = [C::new(1.0, 0.0), C::new(0.0, 0.0)];
        assert_eq!(im_inner(&u, &v), 0.0);
        let form = boundary_form(&a, [1.0, 0.0], [0.0, 1.0], &u, &v);
        assert!(form.abs() <= 1e-12 * a.max_abs());

        let mut rng = SampleRng::new(4);
        let report = boundary_form_check(&p, &eps, 1.0, 2000, &mut rng);
        assert!(report.sne1_holds());
        assert!(report.sne2_holds());
        assert!(report.nondegenerate_samples > 1900);
    }

    #[test]
    fn ls_zero_strain_matches_decoupled_quadratics() {
        // At ε = 0 the determinant factors into
        //   (λ̂ + (1 − μ²)/e²) (λ̂ + (1 + 1/e²)(1 − μ²)) = 0.
        let p = params();
        let pr = 1.0;
        let probe = LsProbe {
            xi: [1.0, 0.0],
            nu: [0.0, 1.0],
            lambda: C::new(1.0, 0.0),
            eps: StrainRate::zero(),
            pressure: pr,
        };
        let report = lopatinskii_shapiro_check(&p, &probe).unwrap();
        let scale = pr / (2.0 * p.delta.sqrt());
        let lam = 1.0 / scale;
        let e2: f64 = p.e * p.e;
        let mu1 = -(1.0 + e2 * lam).sqrt();
        let mu2 = -(1.0 + lam * e2 / (e2 + 1.0)).sqrt();
        let mut expected = [mu1, mu2, -mu1, -mu2];
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut got: Vec<f64> = report.roots.iter().map(|z| z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got.iter().zip(expected.iter()) {
            assert_relative_eq!(*g, *e, max_relative = 1e-9);
        }
        assert!(report.roots.iter().all(|z| z.im.abs() < 1e-9));
        assert_eq!(report.stable, 2);

        // Oracle: explicit null vectors of the two factors.
        // factor 1 kills (−iμ, 1), factor 2 kills (1, iμ).
        let i = C::new(0.0, 1.0);
        let one = C::new(1.0, 0.0);
        let z1 = [-i * mu1, one, -i * mu1 * mu1, one * mu1];
        let z2 = [one, i * mu2, one * mu2, i * mu2 * mu2];
        let n1 = z1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let q1: Vec<C<f64>> = z1.iter().map(|z| z / n1).collect();
        let proj = q1.iter().zip(z2.iter()).fold(C::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b);
        let r2: Vec<C<f64>> = z2.iter().zip(q1.iter()).map(|(b, a)| b - a * proj).collect();
        let n2 = r2.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let q2: Vec<C<f64>> = r2.iter().map(|z| z / n2).collect();
        let w = [[q1[0], q2[0]], [q1[1], q2[1]]];
        let oracle = smallest_singular_value2(&w);
        assert!(oracle > 0.0);
        assert_relative_eq!(report.s_min, oracle, max_relative = 1e-8);
    }

    #[test]
    fn ls_degenerate_lambda_zero_uses_generalised_eigenvectors() {
        // λ = 0, ε = 0: both stable roots collapse to μ = −1.
        let p = params();
        let probe = LsProbe::from_tangent([1.0, 0.0], C::new(0.0, 0.0), StrainRate::zero(), 1.0);
        let report = lopatinskii_shapiro_check(&p, &probe).unwrap();
        let stable: Vec<_> = report.roots.iter().filter(|z| z.re < 0.0).collect();
        assert_eq!(stable.len(), 2);
        for z in stable {
            assert!((z.re + 1.0).abs() < 1e-6);
        }
        assert!(report.s_min > 1e-3);
    }

    #[test]
    fn ls_negative_lambda_breaks_root_balance() {
        let p = params();
        let pr = 1.0;
        let scale = pr / (2.0 * p.delta.sqrt());
        let probe = LsProbe::from_tangent(
            [0.6, 0.8],
            C::new(-2.0 * scale, 0.0),
            StrainRate::new(1e-3, 2e-3, -1e-3),
            pr,
        );
        assert!(matches!(
            lopatinskii_shapiro_check(&p, &probe),
            Err(LsError::RootBalance { .. })
        ));
    }

    #[test]
    fn ls_rejects_non_orthonormal_probe() {
        let p = params();
        let probe = LsProbe {
            xi: [1.0, 0.0],
            nu: [0.6, 0.8],
            lambda: C::new(1.0, 0.0),
            eps: StrainRate::zero(),
            pressure: 1.0,
        };
        assert!(matches!(
            lopatinskii_shapiro_check(&p, &probe),
            Err(LsError::InvalidProbe(_))
        ));
    }

    #[test]
    fn ls_random_probes_and_continuity() {
        let p = params();
        let mut rng = SampleRng::new(31);
        for _ in 0..200 {
            let mag = rng.log_uniform(1e-3, 1.0);
            let eps = rng.strain(mag);
            let pr = rng.uniform(0.1, 3.0);
            let scale = pr / (2.0 * p.delta_reg(&eps));
            let lambda = C::new(rng.uniform(0.0, 3.0), rng.uniform(-3.0, 3.0)) * scale;
            let probe = LsProbe::from_tangent(rng.unit2(), lambda, eps, pr);
            let r = lopatinskii_shapiro_check(&p, &probe).unwrap();
            assert!(r.s_min > 1e-8, "{r:?}");
        }
        // along a path in λ the trace conditioning moves smoothly
        let eps = StrainRate::new(0.02, -0.01, 0.005);
        let scale = 1.0 / (2.0 * p.delta_reg(&eps));
        let mut prev: Option<f64> = None;
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let probe = LsProbe::from_tangent(
                [0.8, 0.6],
                C::new(2.0 * t, 1.0 - t) * scale,
                eps,
                1.0,
            );
            let s = lopatinskii_shapiro_check(&p, &probe).unwrap().s_min;
            if let Some(q) = prev {
                assert!((s - q).abs() < 0.05, "jump {q} -> {s}");
            }
            prev = Some(s);
        }
    }

    #[test]
    fn quartic_roots_of_known_polynomial() {
        // (z − 1)(z + 2)(z − i)(z + 3i)
        let roots_true = [
            C::new(1.0, 0.0),
            C::new(-2.0, 0.0),
            C::new(0.0, 1.0),
            C::new(0.0, -3.0),
        ];
        let mut coeffs = [C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
        for (deg, r) in roots_true.into_iter().enumerate() {
            let mut next = [C::new(0.0, 0.0); 5];
            for k in 0..=deg {
                next[k + 1] += coeffs[k];
                next[k] -= coeffs[k] * r;
            }
            coeffs = next;
        }
        let got = quartic_roots(&coeffs).unwrap();
        for r in roots_true {
            assert!(got.iter().any(|g| (g - r).norm() < 1e-10));
        }
    }
}
