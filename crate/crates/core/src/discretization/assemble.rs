use super::sparse::{BlockLayout, SparseBuilder, SparseOperator};
use super::{strain_rate_field, DiscretizationError, FieldSet, Grid};
use crate::rheology::{Pressure, RheologyError, RheologyParams, StrainRate};
use crate::Real;

/// Nodal ice strength and its partial derivatives.
pub fn pressure_field<T: Real>(
    v: &FieldSet<T>,
    params: &RheologyParams<T>,
) -> Result<Vec<Pressure<T>>, DiscretizationError> {
    v.h.iter()
        .zip(&v.a)
        .enumerate()
        .map(|(k, (h, a))| {
            params.pressure(*h, *a).map_err(|e| match e {
                RheologyError::NegativeThickness(value) => DiscretizationError::InvalidState {
                    field: "h",
                    node: k,
                    value,
                    constraint: "h >= 0",
                },
                _ => DiscretizationError::InvalidState {
                    field: "a",
                    node: k,
                    value: a.as_f64(),
                    constraint: "0 <= a <= 1",
                },
            })
        })
        .collect()
}

fn checked_state<T: Real>(
    v: &FieldSet<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
) -> Result<FieldSet<T>, DiscretizationError> {
    let mut w = v.clone();
    w.validate(grid, params)?;
    Ok(w)
}

/// Coefficients of `(𝕊 ε(u))_ij` in terms of `∂_n u_m`: `c[i][j][m][n]`.
fn s_gradient_coefficients<T: Real>(params: &RheologyParams<T>) -> [[[[T; 2]; 2]; 2]; 2] {
    let half = T::lit(0.5);
    let mut c = [[[[T::zero(); 2]; 2]; 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            // ε of the unit gradient ∂_n u_m = 1
            let eps = match (m, n) {
                (0, 0) => StrainRate::new(T::one(), T::zero(), T::zero()),
                (1, 1) => StrainRate::new(T::zero(), T::zero(), T::one()),
                _ => StrainRate::new(T::zero(), half, T::zero()),
            };
            let s = params.s_map(&eps).to_mat();
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j][m][n] = s.0[i][j];
                }
            }
        }
    }
    c
}

/// Rows of the frozen Hibler operator, each multiplied by `row_scale(node)`.
fn hibler_rows<T: Real>(
    b: &mut SparseBuilder<T>,
    grid: &Grid<T>,
    v: &FieldSet<T>,
    params: &RheologyParams<T>,
    omega: T,
    row_scale: impl Fn(usize) -> T,
) -> Result<(), DiscretizationError> {
    let n = grid.n();
    let eps0 = strain_rate_field(grid, &v.u1, &v.u2);
    let pres = pressure_field(v, params)?;
    let sg = s_gradient_coefficients(params);
    let two = T::lit(2.0);
    let (dx, dy) = (grid.dx, grid.dy);
    let (idx2, idy2, ixy) = (
        T::one() / (dx * dx),
        T::one() / (dy * dy),
        T::one() / (T::lit(4.0) * dx * dy),
    );

    for p in 0..n {
        let (pi, pj) = grid.coords(p);
        if grid.is_boundary(pi, pj) {
            b.set_dirichlet(p);
            b.set_dirichlet(n + p);
            continue;
        }
        let scale = row_scale(p);
        let a = params.coefficient_tensor(&eps0[p], pres[p].value);
        let inv = T::one() / (two * params.delta_reg(&eps0[p]));
        let grad_p = [
            (pres[p + 1].value - pres[p - 1].value) / (two * dx),
            (pres[p + grid.nx].value - pres[p - grid.nx].value) / (two * dy),
        ];
        for i in 0..2 {
            let row = i * n + p;
            let mut push = |comp: usize, di: isize, dj: isize, val: T| {
                let qi = (pi as isize + di) as usize;
                let qj = (pj as isize + dj) as usize;
                if !grid.is_boundary(qi, qj) {
                    b.push(row, comp * n + grid.idx(qi, qj), scale * val);
                }
            };
            // principal part −Σ a_ij^kl ∂_k ∂_l u_j
            for j in 0..2 {
                let c11 = a.get(i, j, 0, 0);
                let c22 = a.get(i, j, 1, 1);
                let c12 = a.get(i, j, 0, 1) + a.get(i, j, 1, 0);
                push(j, 0, 0, two * (c11 * idx2 + c22 * idy2));
                push(j, 1, 0, -c11 * idx2);
                push(j, -1, 0, -c11 * idx2);
                push(j, 0, 1, -c22 * idy2);
                push(j, 0, -1, -c22 * idy2);
                push(j, 1, 1, -c12 * ixy);
                push(j, -1, -1, -c12 * ixy);
                push(j, 1, -1, c12 * ixy);
                push(j, -1, 1, c12 * ixy);
            }
            // lower order −(1/(2Δ_δ)) Σ_j ∂_j P (𝕊ε(u))_ij
            for m in 0..2 {
                for (nd, h) in [(0usize, dx), (1usize, dy)] {
                    let coef = grad_p[0] * sg[i][0][m][nd] + grad_p[1] * sg[i][1][m][nd];
                    let w = inv * coef / (two * h);
                    let (di, dj) = if nd == 0 { (1, 0) } else { (0, 1) };
                    push(m, di, dj, -w);
                    push(m, -di, -dj, w);
                }
            }
            push(i, 0, 0, omega);
        }
    }
    Ok(())
}

/// Frozen-coefficient Hibler operator `A_D^H(v₀) + ω` on `[u1 | u2]`.
///
/// Interior rows discretise
/// `−Σ a_ij^kl(ε(u₀), P₀) ∂_k∂_l u_j − (1/(2Δ_δ(ε₀))) Σ_j ∂_j P₀ (𝕊ε(u))_ij + ω u_i`,
/// which is `−div S_δ` linearised in `u` at `u₀`. Boundary rows are identity
/// rows and interior rows drop boundary columns (homogeneous Dirichlet data).
pub fn assemble_hibler<T: Real>(
    v_frozen: &FieldSet<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
    omega: T,
) -> Result<SparseOperator<T>, DiscretizationError> {
    let v = checked_state(v_frozen, grid, params)?;
    let mut b = SparseBuilder::new(BlockLayout::Velocity { n: grid.n() });
    hibler_rows(&mut b, grid, &v, params, omega, |_| T::one())?;
    Ok(b.build())
}

fn laplacian_rows<T: Real>(b: &mut SparseBuilder<T>, grid: &Grid<T>, d: T, offset: usize) {
    let (cx, cy) = (d / (grid.dx * grid.dx), d / (grid.dy * grid.dy));
    let two = T::lit(2.0);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.idx(i, j);
            let row = offset + p;
            b.push(row, row, two * (cx + cy));
            // ghost reflection f(−1) = f(1) doubles the inward neighbour
            for (q, w) in axis_neighbours::<T>(i, grid.nx) {
                b.push(row, offset + grid.idx(q, j), -w * cx);
            }
            for (q, w) in axis_neighbours::<T>(j, grid.ny) {
                b.push(row, offset + grid.idx(i, q), -w * cy);
            }
        }
    }
}

fn axis_neighbours<T: Real>(pos: usize, count: usize) -> Vec<(usize, T)> {
    if pos == 0 {
        vec![(1, T::lit(2.0))]
    } else if pos + 1 == count {
        vec![(pos - 1, T::lit(2.0))]
    } else {
        vec![(pos - 1, T::one()), (pos + 1, T::one())]
    }
}

/// `−d Δ_N` with the five-point stencil and ghost-node reflection.
///
/// Rows sum to zero. The matrix is symmetric with respect to the trapezoid
/// inner product (`W L` is symmetric for the diagonal weight matrix `W`).
pub fn assemble_neumann_laplacian<T: Real>(grid: &Grid<T>, d: T) -> SparseOperator<T> {
    let mut b = SparseBuilder::new(BlockLayout::Scalar { n: grid.n() });
    laplacian_rows(&mut b, grid, d, 0);
    b.build()
}

/// The block upper-triangular operator `A_ω(v₀)` on `[u1 | u2 | h | a]`:
///
/// ```text
/// | (A_D^H(v₀) + ω)/(ρ h₀)   ∂_h P₀/(2ρ h₀) ∇   ∂_a P₀/(2ρ h₀) ∇ |
/// |          0                  −d_h Δ_N              0          |
/// |          0                      0              −d_a Δ_N      |
/// ```
pub fn assemble_coupled<T: Real>(
    v_frozen: &FieldSet<T>,
    grid: &Grid<T>,
    params: &RheologyParams<T>,
    omega: T,
) -> Result<SparseOperator<T>, DiscretizationError> {
    let v = checked_state(v_frozen, grid, params)?;
    let n = grid.n();
    let pres = pressure_field(&v, params)?;
    let mut b = SparseBuilder::new(BlockLayout::Coupled { n });
    let mass = |p: usize| T::one() / (params.rho_ice * v.h[p]);
    hibler_rows(&mut b, grid, &v, params, omega, mass)?;
    let two = T::lit(2.0);
    for p in 0..n {
        if grid.is_boundary_node(p) {
            continue;
        }
        let kh = pres[p].dp_dh * mass(p) / two;
        let ka = pres[p].dp_da * mass(p) / two;
        for (i, stride, h) in [(0usize, 1usize, grid.dx), (1usize, grid.nx, grid.dy)] {
            let row = i * n + p;
            for (offset, k) in [(2 * n, kh), (3 * n, ka)] {
                b.push(row, offset + p + stride, k / (two * h));
                b.push(row, offset + p - stride, -k / (two * h));
            }
        }
    }
    laplacian_rows(&mut b, grid, params.d_h, 2 * n);
    laplacian_rows(&mut b, grid, params.d_a, 3 * n);
    Ok(b.build())
}
