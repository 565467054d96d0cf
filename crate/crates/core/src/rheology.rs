//! Pointwise viscous-plastic constitutive law.
//!
//! The deformation rate `ε` is mapped through the positive semi-definite
//! operator 𝕊 (yield-ellipse ratio `e`), giving the deformation measure
//! `Δ²(ε) = εᵀ𝕊ε` and the regularised `Δ_δ = sqrt(δ + Δ²)`. The stress is
//! `σ_δ = S_δ − (P/2) I` with `S_δ = (P/2) 𝕊ε / Δ_δ`, and the coefficient
//! tensor of the quasilinear operator is the strain derivative of `S_δ`.
//!
//! Tensors over ℝ^{2×2} are flattened with the index map `(i, k) ↦ 2i + k`
//! (zero based), so `𝕊_ij^kl` is the entry `[(i,k), (j,l)]` of a 4×4 matrix.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::Real;

/// Compactness may overshoot `[0, 1]` by this much before being rejected.
pub const COMPACTNESS_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RheologyError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("negative ice thickness h = {0}")]
    NegativeThickness(f64),
    #[error("compactness a = {0} outside [0, 1]")]
    CompactnessOutOfRange(f64),
}

/// Viscosity regularisation used by [`RheologyParams::viscosities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularization {
    /// `ζ = P / (2 Δ_δ)`.
    #[default]
    SqrtDelta,
    /// `ζ' = min(P / (2 Δ_δ), ζ_max)`.
    MinCap,
    /// `ζ = ζ_max tanh(P / (2 Δ_δ ζ_max))`.
    Tanh,
}

impl Regularization {
    pub fn as_str(self) -> &'static str {
        match self {
            Regularization::SqrtDelta => "sqrt-delta",
            Regularization::MinCap => "min-cap",
            Regularization::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Regularization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regularization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt-delta" => Ok(Regularization::SqrtDelta),
            "min-cap" => Ok(Regularization::MinCap),
            "tanh" => Ok(Regularization::Tanh),
            other => Err(format!(
                "unknown regularization '{other}' (expected sqrt-delta, min-cap or tanh)"
            )),
        }
    }
}

/// Physical and regularisation constants, SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RheologyParams<T> {
    /// Yield-ellipse axis ratio.
    pub e: T,
    /// Regularisation δ, s⁻².
    pub delta: T,
    /// Ice strength p*, N·m⁻².
    pub p_star: T,
    /// Compactness decay constant.
    pub c: T,
    /// Open-water thickness threshold κ, m.
    pub kappa: T,
    pub rho_ice: T,
    pub rho_atm: T,
    pub rho_ocean: T,
    pub c_atm: T,
    pub c_ocean: T,
    /// Turning angle of the wind drag, rad.
    pub theta_atm: T,
    /// Turning angle of the ocean drag, rad.
    pub theta_ocean: T,
    /// Coriolis parameter, s⁻¹.
    pub c_cor: T,
    pub g: T,
    /// Thickness diffusivity, m²·s⁻¹.
    pub d_h: T,
    /// Compactness diffusivity, m²·s⁻¹.
    pub d_a: T,
    pub variant: Regularization,
    pub zeta_max: T,
    pub eta_max: T,
}

impl<T: Real> Default for RheologyParams<T> {
    fn default() -> Self {
        let p_star = T::lit(27500.0);
        let e = T::lit(2.0);
        // Hibler's cap ζ_max = 2.5e8 s · P at the reference strength.
        let zeta_max = T::lit(2.5e8) * p_star;
        Self {
            e,
            delta: T::lit(1e-12),
            p_star,
            c: T::lit(20.0),
            kappa: T::lit(0.1),
            rho_ice: T::lit(900.0),
            rho_atm: T::lit(1.3),
            rho_ocean: T::lit(1026.0),
            c_atm: T::lit(1.2e-3),
            c_ocean: T::lit(5.5e-3),
            theta_atm: T::zero(),
            theta_ocean: T::zero(),
            c_cor: T::lit(1.46e-4),
            g: T::lit(9.81),
            d_h: T::one(),
            d_a: T::one(),
            variant: Regularization::SqrtDelta,
            zeta_max,
            eta_max: zeta_max / (e * e),
        }
    }
}

/// Symmetric deformation-rate tensor, s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrainRate<T> {
    pub e11: T,
    pub e12: T,
    pub e22: T,
}

impl<T: Real> StrainRate<T> {
    pub fn new(e11: T, e12: T, e22: T) -> Self {
        Self { e11, e12, e22 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::one())
    }

    /// `ε_I = ε₁₁ + ε₂₂`.
    pub fn first_invariant(&self) -> T {
        self.e11 + self.e22
    }

    /// `ε_II = ε₁₁ − ε₂₂`.
    pub fn second_invariant(&self) -> T {
        self.e11 - self.e22
    }

    /// `ε_III = ε₁₂`.
    pub fn third_invariant(&self) -> T {
        self.e12
    }

    pub fn trace(&self) -> T {
        self.first_invariant()
    }

    pub fn to_mat(&self) -> Mat2<T> {
        Mat2([[self.e11, self.e12], [self.e12, self.e22]])
    }

    /// Frobenius norm squared, `Σ ε_ij²`.
    pub fn norm_sq(&self) -> T {
        self.e11 * self.e11 + T::lit(2.0) * self.e12 * self.e12 + self.e22 * self.e22
    }
}

/// Symmetric 2×2 stress-like tensor, N·m⁻².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stress2<T> {
    pub s11: T,
    pub s12: T,
    pub s22: T,
}

impl<T: Real> Stress2<T> {
    pub fn new(s11: T, s12: T, s22: T) -> Self {
        Self { s11, s12, s22 }
    }

    pub fn trace(&self) -> T {
        self.s11 + self.s22
    }

    pub fn to_mat(&self) -> Mat2<T> {
        Mat2([[self.s11, self.s12], [self.s12, self.s22]])
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.s11 * k, self.s12 * k, self.s22 * k)
    }

    /// Adds `k · I`.
    pub fn shift_diagonal(&self, k: T) -> Self {
        Self::new(self.s11 + k, self.s12, self.s22 + k)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        (self.s11 - other.s11)
            .abs()
            .max((self.s12 - other.s12).abs())
            .max((self.s22 - other.s22).abs())
    }

    pub fn max_abs(&self) -> T {
        self.s11.abs().max(self.s12.abs()).max(self.s22.abs())
    }
}

/// General (not necessarily symmetric) real 2×2 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Real> Mat2<T> {
    pub fn zero() -> Self {
        Mat2([[T::zero(); 2]; 2])
    }

    /// Flattened `(m11, m12, m21, m22)`.
    pub fn to_vec4(&self) -> [T; 4] {
        [self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]]
    }

    pub fn from_vec4(v: [T; 4]) -> Self {
        Mat2([[v[0], v[1]], [v[2], v[3]]])
    }

    /// Outer product `p ⊗ q`, entries `p_i q_j`.
    pub fn outer(p: [T; 2], q: [T; 2]) -> Self {
        Mat2([[p[0] * q[0], p[0] * q[1]], [p[1] * q[0], p[1] * q[1]]])
    }

    /// Symmetric part as a [`StrainRate`].
    pub fn sym(&self) -> StrainRate<T> {
        StrainRate::new(
            self.0[0][0],
            T::lit(0.5) * (self.0[0][1] + self.0[1][0]),
            self.0[1][1],
        )
    }
}

/// Flattened index of the tensor slot `(i, k)`.
#[inline]
pub fn pair(i: usize, k: usize) -> usize {
    2 * i + k
}

/// Coefficients `a_ij^kl` of the principal part, stored as `a[i][j][k][l]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTensor<T> {
    pub a: [[[[T; 2]; 2]; 2]; 2],
}

impl<T: Real> CoefficientTensor<T> {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.a[i][j][k][l]
    }

    /// `Σ a_ij^kl d_ik d_jl`.
    pub fn quadratic_form(&self, d: &Mat2<T>) -> T {
        let mut acc = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        acc += self.a[i][j][k][l] * d.0[i][k] * d.0[j][l];
                    }
                }
            }
        }
        acc
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m = m.max(self.a[i][j][k][l].abs());
                    }
                }
            }
        }
        m
    }

    /// Largest violation of
    /// `a_ij^kl = a_ji^lk = a_kl^ij = a_kj^il = a_il^kj = a_lk^ji`.
    pub fn max_symmetry_defect(&self) -> T {
        let a = &self.a;
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let base = a[i][j][k][l];
                        for other in [
                            a[j][i][l][k],
                            a[k][l][i][j],
                            a[k][j][i][l],
                            a[i][l][k][j],
                            a[l][k][j][i],
                        ] {
                            worst = worst.max((base - other).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Pressure value and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pressure<T> {
    pub value: T,
    /// `∂_h P = p* exp(−c(1−a))`.
    pub dp_dh: T,
    /// `∂_a P = c P`.
    pub dp_da: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viscosities<T> {
    pub zeta: T,
    pub eta: T,
}

/// Compressive stress, shear stress and signed distance to the yield ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldDiagnostics<T> {
    pub sigma_d: T,
    pub sigma_s: T,
    pub ellipse_residual: T,
}

/// Finite-difference check of the coefficient tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck<T> {
    pub max_abs_discrepancy: T,
    /// Magnitude of the analytic tensor (`P / (2 Δ_δ)`).
    pub scale: T,
}

impl<T: Real> JacobianCheck<T> {
    pub fn relative(&self) -> T {
        if self.scale > T::zero() {
            self.max_abs_discrepancy / self.scale
        } else {
            self.max_abs_discrepancy
        }
    }
}

impl<T: Real> RheologyParams<T> {
    /// Checks every positivity constraint.
    pub fn validate(&self) -> Result<(), RheologyError> {
        let positive: [(&'static str, T); 13] = [
            ("e", self.e),
            ("delta", self.delta),
            ("p_star", self.p_star),
            ("c", self.c),
            ("kappa", self.kappa),
            ("rho_ice", self.rho_ice),
            ("rho_atm", self.rho_atm),
            ("rho_ocean", self.rho_ocean),
            ("c_atm", self.c_atm),
            ("c_ocean", self.c_ocean),
            ("d_h", self.d_h),
            ("d_a", self.d_a),
            ("zeta_max", self.zeta_max),
        ];
        for (name, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(RheologyError::InvalidParameter {
                    name,
                    value: value.as_f64(),
                    reason: "must be finite and > 0",
                });
            }
        }
        if !(self.eta_max > T::zero()) {
            return Err(RheologyError::InvalidParameter {
                name: "eta_max",
                value: self.eta_max.as_f64(),
                reason: "must be > 0",
            });
        }
        for (name, value) in [
            ("theta_atm", self.theta_atm),
            ("theta_ocean", self.theta_ocean),
            ("c_cor", self.c_cor),
            ("g", self.g),
        ] {
            if !value.is_finite() {
                return Err(RheologyError::InvalidParameter {
                    name,
                    value: value.as_f64(),
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }

    fn inv_e2(&self) -> T {
        T::one() / (self.e * self.e)
    }

    /// The 4×4 matrix of 𝕊 in the `(i,k) ↦ 2i+k` flattening.
    pub fn s_matrix(&self) -> [[T; 4]; 4] {
        let r = self.inv_e2();
        let p = T::one() + r;
        let m = T::one() - r;
        let z = T::zero();
        [[p, z, z, m], [z, r, r, z], [z, r, r, z], [m, z, z, p]]
    }

    /// `𝕊_ij^kl`.
    pub fn s_entry(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.s_matrix()[pair(i, k)][pair(j, l)]
    }

    /// 𝕊 applied to an arbitrary 2×2 matrix.
    pub fn s_map_general(&self, m: &Mat2<T>) -> Mat2<T> {
        let r = self.inv_e2();
        let (m11, m12, m21, m22) = (m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1]);
        let off = r * (m12 + m21);
        Mat2([
            [(T::one() + r) * m11 + (T::one() - r) * m22, off],
            [off, (T::one() - r) * m11 + (T::one() + r) * m22],
        ])
    }

    /// `𝕊ε`.
    pub fn s_map(&self, eps: &StrainRate<T>) -> Stress2<T> {
        let m = self.s_map_general(&eps.to_mat());
        Stress2::new(m.0[0][0], m.0[0][1], m.0[1][1])
    }

    /// `Δ²(d) = d_I² + (d_II² + 4 d_III²)/e²` for an arbitrary 2×2 `d`.
    pub fn delta_sq_general(&self, d: &Mat2<T>) -> T {
        let d1 = d.0[0][0] + d.0[1][1];
        let d2 = d.0[0][0] - d.0[1][1];
        let d3 = T::lit(0.5) * (d.0[0][1] + d.0[1][0]);
        d1 * d1 + self.inv_e2() * (d2 * d2 + T::lit(4.0) * d3 * d3)
    }

    /// `Δ²(ε) = εᵀ𝕊ε`.
    pub fn delta_sq(&self, eps: &StrainRate<T>) -> T {
        let i1 = eps.first_invariant();
        let i2 = eps.second_invariant();
        let i3 = eps.third_invariant();
        i1 * i1 + self.inv_e2() * (i2 * i2 + T::lit(4.0) * i3 * i3)
    }

    /// `Δ_δ(ε) = sqrt(δ + Δ²(ε))`.
    pub fn delta_reg(&self, eps: &StrainRate<T>) -> T {
        (self.delta + self.delta_sq(eps)).sqrt()
    }

    fn delta_reg_general(&self, d: &Mat2<T>) -> T {
        (self.delta + self.delta_sq_general(d)).sqrt()
    }

    /// Ice strength `P = p* h exp(−c(1−a))` with its partial derivatives.
    ///
    /// Compactness within [`COMPACTNESS_SLACK`] of `[0, 1]` is clamped.
    pub fn pressure(&self, h: T, a: T) -> Result<Pressure<T>, RheologyError> {
        if !(h >= T::zero()) {
            return Err(RheologyError::NegativeThickness(h.as_f64()));
        }
        let a = clamp_compactness(a)?;
        let dp_dh = self.p_star * (-self.c * (T::one() - a)).exp();
        let value = dp_dh * h;
        Ok(Pressure {
            value,
            dp_dh,
            dp_da: self.c * value,
        })
    }

    /// Bulk and shear viscosities for the configured regularisation.
    pub fn viscosities(&self, eps: &StrainRate<T>, p: T) -> Viscosities<T> {
        let base = p / (T::lit(2.0) * self.delta_reg(eps));
        let zeta = match self.variant {
            Regularization::SqrtDelta => base,
            Regularization::MinCap => base.min(self.zeta_max),
            Regularization::Tanh => self.zeta_max * (base / self.zeta_max).tanh(),
        };
        let mut eta = zeta * self.inv_e2();
        if self.variant == Regularization::MinCap {
            eta = eta.min(self.eta_max);
        }
        Viscosities {
            zeta: zeta.max(T::zero()),
            eta: eta.max(T::zero()),
        }
    }

    /// `S_δ(ε, P) = (P/2) 𝕊ε / Δ_δ(ε)`.
    pub fn regularized_stress(&self, eps: &StrainRate<T>, p: T) -> Stress2<T> {
        self.s_map(eps)
            .scale(T::lit(0.5) * p / self.delta_reg(eps))
    }

    /// `S_δ` for an arbitrary (not necessarily symmetric) 2×2 argument.
    pub fn regularized_stress_general(&self, d: &Mat2<T>, p: T) -> Mat2<T> {
        let k = T::lit(0.5) * p / self.delta_reg_general(d);
        let s = self.s_map_general(d);
        Mat2([[s.0[0][0] * k, s.0[0][1] * k], [s.0[1][0] * k, s.0[1][1] * k]])
    }

    /// `σ = 2η ε + (ζ − η) tr(ε) I − (P/2) I` with the configured viscosities.
    pub fn stress_from_viscosities(&self, eps: &StrainRate<T>, p: T) -> Stress2<T> {
        let v = self.viscosities(eps, p);
        let two = T::lit(2.0);
        let bulk = (v.zeta - v.eta) * eps.trace() - T::lit(0.5) * p;
        Stress2::new(
            two * v.eta * eps.e11 + bulk,
            two * v.eta * eps.e12,
            two * v.eta * eps.e22 + bulk,
        )
    }

    /// Regularised stress `σ_δ = S_δ − (P/2) I` at thickness `h`, compactness `a`.
    pub fn stress_sigma_delta(
        &self,
        eps: &StrainRate<T>,
        h: T,
        a: T,
    ) -> Result<Stress2<T>, RheologyError> {
        let p = self.pressure(h, a)?.value;
        Ok(self
            .regularized_stress(eps, p)
            .shift_diagonal(-T::lit(0.5) * p))
    }

    /// `a_ij^kl = (P/2)(1/Δ_δ)(𝕊_ij^kl − (𝕊ε)_ik (𝕊ε)_jl / Δ_δ²)`.
    ///
    /// Always uses the square-root regularisation.
    pub fn coefficient_tensor(&self, eps: &StrainRate<T>, p: T) -> CoefficientTensor<T> {
        let s = self.s_matrix();
        let se = self.s_map(eps).to_mat();
        let dd = self.delta_reg(eps);
        let k = T::lit(0.5) * p / dd;
        let inv_d2 = T::one() / (dd * dd);
        let mut a = [[[[T::zero(); 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for kk in 0..2 {
                    for l in 0..2 {
                        a[i][j][kk][l] = k
                            * (s[pair(i, kk)][pair(j, l)] - se.0[i][kk] * se.0[j][l] * inv_d2);
                    }
                }
            }
        }
        CoefficientTensor { a }
    }

    /// Lower bound `P / (2 Δ_δ³)` of the coercivity estimate.
    pub fn coercivity_constant(&self, eps: &StrainRate<T>, p: T) -> T {
        let dd = self.delta_reg(eps);
        p / (T::lit(2.0) * dd * dd * dd)
    }

    /// Compares `coefficient_tensor` with a central finite-difference
    /// Jacobian `∂(S_δ)_ik / ∂ε_jl`, perturbing each of the four entries of
    /// `ε` independently.
    pub fn strain_derivative_check(&self, eps: &StrainRate<T>, p: T) -> JacobianCheck<T> {
        let analytic = self.coefficient_tensor(eps, p);
        let base = eps.to_mat().to_vec4();
        let step = T::lit(1e-6) * self.delta_reg(eps);
        let two = T::lit(2.0);
        let mut worst = T::zero();
        for j in 0..2 {
            for l in 0..2 {
                let mut plus = base;
                let mut minus = base;
                plus[pair(j, l)] += step;
                minus[pair(j, l)] -= step;
                let sp = self.regularized_stress_general(&Mat2::from_vec4(plus), p);
                let sm = self.regularized_stress_general(&Mat2::from_vec4(minus), p);
                for i in 0..2 {
                    for k in 0..2 {
                        let fd = (sp.0[i][k] - sm.0[i][k]) / (two * step);
                        worst = worst.max((fd - analytic.a[i][j][k][l]).abs());
                    }
                }
            }
        }
        JacobianCheck {
            max_abs_discrepancy: worst,
            scale: T::lit(0.5) * p / self.delta_reg(eps),
        }
    }

    /// Compressive stress `σ_d`, shear stress `σ_s` and the signed residual
    /// `(σ_d + P)² + e² σ_s² − P²` of the elliptical yield curve.
    pub fn yield_diagnostics(&self, sigma: &Stress2<T>, p: T) -> YieldDiagnostics<T> {
        let sigma_d = sigma.trace();
        let diff = sigma.s11 - sigma.s22;
        let sigma_s = (diff * diff + T::lit(4.0) * sigma.s12 * sigma.s12).sqrt();
        let shifted = sigma_d + p;
        YieldDiagnostics {
            sigma_d,
            sigma_s,
            ellipse_residual: shifted * shifted + self.e * self.e * sigma_s * sigma_s - p * p,
        }
    }
}

/// Clamps compactness drift within [`COMPACTNESS_SLACK`], rejects larger excursions.
pub fn clamp_compactness<T: Real>(a: T) -> Result<T, RheologyError> {
    let slack = T::lit(COMPACTNESS_SLACK);
    if !(a >= -slack && a <= T::one() + slack) {
        return Err(RheologyError::CompactnessOutOfRange(a.as_f64()));
    }
    Ok(a.max(T::zero()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SampleRng;
    use approx::assert_relative_eq;

    fn params() -> RheologyParams<f64> {
        RheologyParams {
            delta: 1e-4,
            ..Default::default()
        }
    }

    /// Explicit 4×4 matrix–vector product with 𝕊.
    fn s_oracle(p: &RheologyParams<f64>, m: &Mat2<f64>) -> [f64; 4] {
        let s = p.s_matrix();
        let v = m.to_vec4();
        let mut out = [0.0; 4];
        for r in 0..4 {
            for c in 0..4 {
                out[r] += s[r][c] * v[c];
            }
        }
        out
    }

    #[test]
    fn s_map_examples() {
        let p = params();
        let id = p.s_map(&StrainRate::identity());
        assert_relative_eq!(id.s11, 2.0, epsilon = 1e-15);
        assert_relative_eq!(id.s12, 0.0, epsilon = 1e-15);
        assert_relative_eq!(id.s22, 2.0, epsilon = 1e-15);
        assert_eq!(p.s_map(&StrainRate::zero()), Stress2::default());

        let shear = StrainRate::new(0.0, 1.0, 0.0);
        let oracle = s_oracle(&p, &shear.to_mat());
        assert_eq!(oracle, [0.0, 0.5, 0.5, 0.0]);
        let got = p.s_map(&shear);
        assert_relative_eq!(got.s12, oracle[1], epsilon = 1e-15);
        assert_relative_eq!(got.s11, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn delta_sq_examples() {
        let p = params();
        assert_relative_eq!(p.delta_sq(&StrainRate::identity()), 4.0, epsilon = 1e-14);
        assert_eq!(p.delta_sq(&StrainRate::zero()), 0.0);
        let shear = StrainRate::new(0.0, 1.0, 0.0);
        let v = shear.to_mat().to_vec4();
        let sv = s_oracle(&p, &shear.to_mat());
        let contraction: f64 = v.iter().zip(sv.iter()).map(|(a, b)| a * b).sum();
        assert_relative_eq!(contraction, 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.delta_sq(&shear), contraction, epsilon = 1e-15);
    }

    #[test]
    fn delta_reg_examples() {
        let p = params();
        assert_relative_eq!(p.delta_reg(&StrainRate::zero()), 1e-2, epsilon = 1e-16);
        let q = RheologyParams {
            delta: 0.01,
            ..params()
        };
        assert_relative_eq!(
            q.delta_reg(&StrainRate::identity()),
            4.01f64.sqrt(),
            epsilon = 1e-15
        );
        let mut rng = SampleRng::new(3);
        for _ in 0..100 {
            let eps = rng.strain(1.0);
            assert!(p.delta_reg(&eps) >= p.delta_reg(&StrainRate::zero()));
        }
    }

    #[test]
    fn pressure_examples_and_errors() {
        let p = params();
        let ps = p.p_star;
        assert_relative_eq!(p.pressure(1.0, 1.0).unwrap().value, ps);
        assert_relative_eq!(p.pressure(2.0, 1.0).unwrap().value, 2.0 * ps);
        assert_relative_eq!(
            p.pressure(1.0, 0.0).unwrap().value,
            ps * (-p.c).exp(),
            max_relative = 1e-14
        );
        let pr = p.pressure(0.0, 0.5).unwrap();
        assert_eq!(pr.value, 0.0);
        assert_relative_eq!(pr.dp_dh, ps * (-0.5 * p.c).exp(), max_relative = 1e-14);
        let pr = p.pressure(3.0, 0.7).unwrap();
        assert_relative_eq!(pr.dp_da, p.c * pr.value, max_relative = 1e-14);

        assert!(matches!(
            p.pressure(-1e-3, 0.5),
            Err(RheologyError::NegativeThickness(_))
        ));
        assert!(matches!(
            p.pressure(1.0, 1.0 + 1e-6),
            Err(RheologyError::CompactnessOutOfRange(_))
        ));
        // drift below the slack is clamped
        let clamped = p.pressure(1.0, 1.0 + 1e-12).unwrap();
        assert_eq!(clamped.value, ps);
        assert!(p.pressure(1.0, -5e-11).is_ok());
    }

    #[test]
    fn viscosity_variants() {
        let p = params();
        let eps = StrainRate::zero();
        let v = p.viscosities(&eps, 1.0);
        assert_relative_eq!(v.zeta, 50.0, max_relative = 1e-14);
        assert_relative_eq!(v.eta, 12.5, max_relative = 1e-14);

        let capped = RheologyParams {
            variant: Regularization::MinCap,
            zeta_max: 10.0,
            eta_max: 10.0 / 4.0,
            ..params()
        };
        let v = capped.viscosities(&eps, 1.0);
        assert_eq!(v.zeta, 10.0);
        assert_eq!(v.eta, 2.5);

        // tanh(x) = x − x³/3 + ..., so with a huge cap the relative gap is ~x²/3.
        let tanh = RheologyParams {
            variant: Regularization::Tanh,
            zeta_max: 1e6,
            ..params()
        };
        let mut rng = SampleRng::new(11);
        for _ in 0..50 {
            let eps = rng.strain(0.05);
            let reference = p.viscosities(&eps, 1.0).zeta;
            let approx = tanh.viscosities(&eps, 1.0).zeta;
            let x: f64 = reference / 1e6;
            assert!(((approx - reference) / reference).abs() <= x * x / 3.0 + 1e-15);
            assert!(((approx - reference) / reference).abs() <= 1e-8);
        }
    }

    #[test]
    fn min_cap_and_tanh_converge_to_sqrt_delta() {
        let p = params();
        let eps = StrainRate::new(0.01, -0.02, 0.005);
        let reference = p.viscosities(&eps, 2.0).zeta;
        let mut last_gap = f64::INFINITY;
        for cap in [1e2, 1e3, 1e4, 1e6] {
            for variant in [Regularization::MinCap, Regularization::Tanh] {
                let q = RheologyParams {
                    variant,
                    zeta_max: cap,
                    eta_max: cap,
                    ..params()
                };
                let gap = (q.viscosities(&eps, 2.0).zeta - reference).abs();
                if variant == Regularization::Tanh {
                    assert!(gap <= last_gap);
                    last_gap = gap;
                }
            }
        }
        assert!(last_gap / reference < 1e-8);
    }

    #[test]
    fn stress_examples() {
        let p = params();
        let pr = p.pressure(1.5, 0.9).unwrap().value;
        let s0 = p.stress_sigma_delta(&StrainRate::zero(), 1.5, 0.9).unwrap();
        assert_relative_eq!(s0.s11, -0.5 * pr, max_relative = 1e-14);
        assert_relative_eq!(s0.s22, -0.5 * pr, max_relative = 1e-14);
        assert_eq!(s0.s12, 0.0);

        // plastic limit: ε = I lies on the yield curve and σ → 0
        let q = RheologyParams {
            delta: 1e-20,
            ..params()
        };
        let s = q.stress_sigma_delta(&StrainRate::identity(), 1.0, 1.0).unwrap();
        assert!(s.max_abs() <= 1e-9 * q.p_star);

        let mut rng = SampleRng::new(5);
        for _ in 0..200 {
            let eps = rng.strain(0.1);
            let dual = p.stress_from_viscosities(&eps, pr);
            let direct = p.regularized_stress(&eps, pr).shift_diagonal(-0.5 * pr);
            assert!(dual.max_abs_diff(&direct) <= 1e-12 * pr);
        }
        assert!(matches!(
            p.stress_sigma_delta(&StrainRate::zero(), 1.0, 1.5),
            Err(RheologyError::CompactnessOutOfRange(_))
        ));
    }

    #[test]
    fn coefficient_tensor_at_zero_strain_is_scaled_s() {
        let p = params();
        let a = p.coefficient_tensor(&StrainRate::zero(), 3.0);
        let k = 3.0 / (2.0 * p.delta.sqrt());
        for i in 0..2 {
            for j in 0..2 {
                for kk in 0..2 {
                    for l in 0..2 {
                        assert_relative_eq!(
                            a.get(i, j, kk, l),
                            k * p.s_entry(i, j, kk, l),
                            max_relative = 1e-14
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn coefficient_tensor_symmetry_and_coercivity() {
        let p = params();
        let mut rng = SampleRng::new(7);
        for _ in 0..500 {
            let eps = rng.strain(0.05);
            let pr = rng.uniform(0.1, 5.0) * p.p_star;
            let a = p.coefficient_tensor(&eps, pr);
            assert!(a.max_symmetry_defect() <= 1e-12 * a.max_abs());
            let d = rng.mat2(1.0);
            let lower = p.coercivity_constant(&eps, pr) * p.delta * p.delta_sq_general(&d);
            assert!(a.quadratic_form(&d) >= lower - 1e-10 * a.max_abs());
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = params();
        let pr = p.p_star;
        let check = p.strain_derivative_check(&StrainRate::zero(), pr);
        assert!(check.max_abs_discrepancy <= 1e-6 * pr / p.delta.sqrt());
        let mut rng = SampleRng::new(13);
        for _ in 0..10 {
            let eps = rng.strain(0.05);
            assert!(p.strain_derivative_check(&eps, pr).relative() <= 1e-6);
        }
    }

    #[test]
    fn large_delta_suppresses_rank_one_term() {
        let p = RheologyParams {
            delta: 1e12,
            ..params()
        };
        let eps = StrainRate::new(0.3, -0.1, 0.2);
        let a = p.coefficient_tensor(&eps, 1.0);
        let k = 1.0 / (2.0 * p.delta_reg(&eps));
        for i in 0..2 {
            for j in 0..2 {
                for kk in 0..2 {
                    for l in 0..2 {
                        assert!((a.get(i, j, kk, l) - k * p.s_entry(i, j, kk, l)).abs() < 1e-9 * k);
                    }
                }
            }
        }
    }

    #[test]
    fn yield_diagnostics_examples() {
        let p = params();
        let pr = 2.0;
        let inside = p.yield_diagnostics(&Stress2::new(-1.0, 0.0, -1.0), pr);
        assert_eq!(inside.sigma_d, -2.0);
        assert_eq!(inside.sigma_s, 0.0);
        assert_eq!(inside.ellipse_residual, -4.0);

        let q = RheologyParams {
            delta: 1e-24,
            ..params()
        };
        let eps = StrainRate::identity();
        let p_id = q.pressure(1.0, 1.0).unwrap().value;
        let sigma = q.stress_sigma_delta(&eps, 1.0, 1.0).unwrap();
        let on = q.yield_diagnostics(&sigma, p_id);
        assert!(on.ellipse_residual.abs() <= 1e-9 * p_id * p_id);

        let mut rng = SampleRng::new(17);
        for _ in 0..100 {
            let s = Stress2::new(rng.normal(), rng.normal(), rng.normal());
            assert!(p.yield_diagnostics(&s, 1.0).sigma_s >= 0.0);
        }
    }

    #[test]
    fn validate_rejects_nonpositive_constants() {
        assert!(RheologyParams::<f64>::default().validate().is_ok());
        let bad = RheologyParams {
            delta: 0.0,
            ..RheologyParams::<f64>::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(RheologyError::InvalidParameter { name: "delta", .. })
        ));
    }

    #[test]
    fn single_precision_agrees_with_double() {
        let p64 = params();
        let p32 = RheologyParams::<f32> {
            delta: 1e-4,
            ..Default::default()
        };
        let e64 = StrainRate::new(0.01, 0.02, -0.03);
        let e32 = StrainRate::new(0.01f32, 0.02, -0.03);
        let d64 = p64.delta_reg(&e64);
        let d32 = p32.delta_reg(&e32);
        assert!(((d32 as f64 - d64) / d64).abs() < 1e-6);
        let a32 = p32.coefficient_tensor(&e32, 1.0);
        assert!(a32.max_symmetry_defect() <= 1e-5 * a32.max_abs());
    }
}
