//! Structured collocated grid, discrete state and the sparse operators of
//! the coupled system.
//!
//! Nodes sit at the vertices of a uniform `nx × ny` lattice over
//! `[0, lx] × [0, ly]`; node `(i, j)` has flat index `j * nx + i`.
//! Discrete integrals use trapezoid weights (½ on edges, ¼ at corners), which
//! together with the first-derivative operator [`diff_x`]/[`diff_y`] satisfy
//! a summation-by-parts rule: for `u` vanishing on the boundary,
//! `Σ w (D u) h = −Σ w u (D h)` holds exactly.

mod assemble;
mod solve;
mod sparse;

pub use assemble::{
    assemble_coupled, assemble_hibler, assemble_neumann_laplacian, pressure_field,
};
pub use solve::{
    solve_linear, solve_linear_with, BandedLu, SolveError, SolveMethod, SolveOptions, SolveStats,
};
pub use sparse::{BlockLayout, SparseBuilder, SparseOperator};

use thiserror::Error;

use crate::rheology::{clamp_compactness, RheologyParams, StrainRate};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{field} = {value:e} at node {node} violates {constraint}")]
    InvalidState {
        field: &'static str,
        node: usize,
        value: f64,
        constraint: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Uniform vertex-centred grid on `[0, lx] × [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    /// Node counts per direction.
    pub nx: usize,
    pub ny: usize,
    pub lx: T,
    pub ly: T,
    pub dx: T,
    pub dy: T,
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self, DiscretizationError> {
        if nx < 3 || ny < 3 {
            return Err(DiscretizationError::InvalidGrid(format!(
                "need at least 3 nodes per direction, got {nx} × {ny}"
            )));
        }
        if !(lx > T::zero() && ly > T::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(DiscretizationError::InvalidGrid(format!(
                "extents must be positive and finite, got {lx} × {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / T::of_usize(nx - 1),
            dy: ly / T::of_usize(ny - 1),
        })
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn x(&self, i: usize) -> T {
        T::of_usize(i) * self.dx
    }

    pub fn y(&self, j: usize) -> T {
        T::of_usize(j) * self.dy
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    pub fn is_boundary_node(&self, k: usize) -> bool {
        let (i, j) = self.coords(k);
        self.is_boundary(i, j)
    }

    /// Trapezoid quadrature weight of node `(i, j)`.
    pub fn weight(&self, i: usize, j: usize) -> T {
        let half = T::lit(0.5);
        let wx = if i == 0 || i + 1 == self.nx { half } else { T::one() };
        let wy = if j == 0 || j + 1 == self.ny { half } else { T::one() };
        wx * wy * self.dx * self.dy
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.n())
            .map(|k| {
                let (i, j) = self.coords(k);
                self.weight(i, j)
            })
            .collect()
    }

    pub fn area(&self) -> T {
        self.lx * self.ly
    }

    /// Trapezoid integral of a nodal field.
    pub fn integrate(&self, f: &[T]) -> T {
        f.iter()
            .enumerate()
            .map(|(k, v)| {
                let (i, j) = self.coords(k);
                self.weight(i, j) * *v
            })
            .sum()
    }

    pub fn mean(&self, f: &[T]) -> T {
        self.integrate(f) / self.area()
    }

    /// Weighted inner product `Σ w f g`.
    pub fn inner(&self, f: &[T], g: &[T]) -> T {
        f.iter()
            .zip(g)
            .enumerate()
            .map(|(k, (a, b))| {
                let (i, j) = self.coords(k);
                self.weight(i, j) * *a * *b
            })
            .sum()
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn sample(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        (0..self.n())
            .map(|k| {
                let (i, j) = self.coords(k);
                f(self.x(i), self.y(j))
            })
            .collect()
    }
}

/// Discrete state `v = (u, h, a)` on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet<T> {
    pub u1: Vec<T>,
    pub u2: Vec<T>,
    pub h: Vec<T>,
    pub a: Vec<T>,
}

impl<T: Real> FieldSet<T> {
    /// Ice at rest with uniform thickness and compactness.
    pub fn equilibrium(grid: &Grid<T>, h: T, a: T) -> Self {
        let n = grid.n();
        Self {
            u1: vec![T::zero(); n],
            u2: vec![T::zero(); n],
            h: vec![h; n],
            a: vec![a; n],
        }
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// Stacked vector `[u1 | u2 | h | a]`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(4 * self.n());
        v.extend_from_slice(&self.u1);
        v.extend_from_slice(&self.u2);
        v.extend_from_slice(&self.h);
        v.extend_from_slice(&self.a);
        v
    }

    pub fn from_slice(v: &[T]) -> Result<Self, DiscretizationError> {
        if !v.len().is_multiple_of(4) {
            return Err(DiscretizationError::DimensionMismatch {
                expected: 4 * (v.len() / 4 + 1),
                got: v.len(),
            });
        }
        let n = v.len() / 4;
        Ok(Self {
            u1: v[..n].to_vec(),
            u2: v[n..2 * n].to_vec(),
            h: v[2 * n..3 * n].to_vec(),
            a: v[3 * n..].to_vec(),
        })
    }

    pub fn check_grid(&self, grid: &Grid<T>) -> Result<(), DiscretizationError> {
        for len in [self.u1.len(), self.u2.len(), self.h.len(), self.a.len()] {
            if len != grid.n() {
                return Err(DiscretizationError::DimensionMismatch {
                    expected: grid.n(),
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// Zeroes the velocity on boundary nodes.
    pub fn enforce_dirichlet(&mut self, grid: &Grid<T>) {
        for k in 0..grid.n() {
            if grid.is_boundary_node(k) {
                self.u1[k] = T::zero();
                self.u2[k] = T::zero();
            }
        }
    }

    /// Checks `h ≥ κ` and `a ∈ [0, 1]`, clamping compactness drift within the
    /// slack. Reports the worst offending node.
    pub fn validate(
        &mut self,
        grid: &Grid<T>,
        params: &RheologyParams<T>,
    ) -> Result<(), DiscretizationError> {
        self.check_grid(grid)?;
        let all = self
            .u1
            .iter()
            .chain(&self.u2)
            .chain(&self.h)
            .chain(&self.a)
            .all(|v| v.is_finite());
        if !all {
            let node = (0..self.n())
                .find(|&k| {
                    !(self.u1[k].is_finite()
                        && self.u2[k].is_finite()
                        && self.h[k].is_finite()
                        && self.a[k].is_finite())
                })
                .unwrap_or(0);
            return Err(DiscretizationError::InvalidState {
                field: "state",
                node,
                value: f64::NAN,
                constraint: "finite values",
            });
        }
        if let Some((node, value)) = argmin(&self.h) {
            if value < params.kappa {
                return Err(DiscretizationError::InvalidState {
                    field: "h",
                    node,
                    value: value.as_f64(),
                    constraint: "h >= kappa",
                });
            }
        }
        if let (Some((lo_node, lo)), Some((hi_node, hi))) = (argmin(&self.a), argmax(&self.a)) {
            if clamp_compactness(lo).is_err() {
                return Err(DiscretizationError::InvalidState {
                    field: "a",
                    node: lo_node,
                    value: lo.as_f64(),
                    constraint: "a >= 0",
                });
            }
            if clamp_compactness(hi).is_err() {
                return Err(DiscretizationError::InvalidState {
                    field: "a",
                    node: hi_node,
                    value: hi.as_f64(),
                    constraint: "a <= 1",
                });
            }
        }
        for a in self.a.iter_mut() {
            *a = a.max(T::zero()).min(T::one());
        }
        Ok(())
    }

    /// Largest nodal speed `|u|`.
    pub fn max_speed(&self) -> T {
        self.u1
            .iter()
            .zip(&self.u2)
            .fold(T::zero(), |m, (a, b)| m.max(a.hypot(*b)))
    }
}

fn argmin<T: Real>(f: &[T]) -> Option<(usize, T)> {
    f.iter()
        .copied()
        .enumerate()
        .fold(None, |best, (k, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((k, v)),
        })
}

fn argmax<T: Real>(f: &[T]) -> Option<(usize, T)> {
    f.iter()
        .copied()
        .enumerate()
        .fold(None, |best, (k, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((k, v)),
        })
}

/// `∂f/∂x`: centred in the interior, first-order one-sided on the two
/// boundary columns. Pairs with the trapezoid weights as a
/// summation-by-parts operator.
pub fn diff_x<T: Real>(grid: &Grid<T>, f: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); grid.n()];
    let half = T::lit(0.5);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            out[k] = if i == 0 {
                (f[k + 1] - f[k]) / grid.dx
            } else if i + 1 == grid.nx {
                (f[k] - f[k - 1]) / grid.dx
            } else {
                half * (f[k + 1] - f[k - 1]) / grid.dx
            };
        }
    }
    out
}

/// `∂f/∂y`, see [`diff_x`].
pub fn diff_y<T: Real>(grid: &Grid<T>, f: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); grid.n()];
    let half = T::lit(0.5);
    let s = grid.nx;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            out[k] = if j == 0 {
                (f[k + s] - f[k]) / grid.dy
            } else if j + 1 == grid.ny {
                (f[k] - f[k - s]) / grid.dy
            } else {
                half * (f[k + s] - f[k - s]) / grid.dy
            };
        }
    }
    out
}

/// `∂1 u1 + ∂2 u2` with the summation-by-parts pair [`diff_x`], [`diff_y`].
pub fn divergence<T: Real>(grid: &Grid<T>, u1: &[T], u2: &[T]) -> Vec<T> {
    let dx = diff_x(grid, u1);
    let dy = diff_y(grid, u2);
    dx.iter().zip(&dy).map(|(a, b)| *a + *b).collect()
}

/// Second-order derivative along one axis at node `k`: centred in the
/// interior, three-point one-sided on the boundary.
fn diff2nd<T: Real>(f: &[T], k: usize, pos: usize, count: usize, stride: usize, h: T) -> T {
    let half = T::lit(0.5);
    if pos == 0 {
        half * (-T::lit(3.0) * f[k] + T::lit(4.0) * f[k + stride] - f[k + 2 * stride]) / h
    } else if pos + 1 == count {
        half * (T::lit(3.0) * f[k] - T::lit(4.0) * f[k - stride] + f[k - 2 * stride]) / h
    } else {
        half * (f[k + stride] - f[k - stride]) / h
    }
}

/// Second-order accurate `∂f/∂x` at every node.
pub fn gradient_x<T: Real>(grid: &Grid<T>, f: &[T]) -> Vec<T> {
    (0..grid.n())
        .map(|k| {
            let (i, _) = grid.coords(k);
            diff2nd(f, k, i, grid.nx, 1, grid.dx)
        })
        .collect()
}

/// Second-order accurate `∂f/∂y` at every node.
pub fn gradient_y<T: Real>(grid: &Grid<T>, f: &[T]) -> Vec<T> {
    (0..grid.n())
        .map(|k| {
            let (_, j) = grid.coords(k);
            diff2nd(f, k, j, grid.ny, grid.nx, grid.dy)
        })
        .collect()
}

/// Nodal `ε(u) = ½(∇u + ∇uᵀ)`; centred differences in the interior,
/// second-order one-sided differences on boundary nodes.
pub fn strain_rate_field<T: Real>(grid: &Grid<T>, u1: &[T], u2: &[T]) -> Vec<StrainRate<T>> {
    let d1x = gradient_x(grid, u1);
    let d1y = gradient_y(grid, u1);
    let d2x = gradient_x(grid, u2);
    let d2y = gradient_y(grid, u2);
    let half = T::lit(0.5);
    (0..grid.n())
        .map(|k| StrainRate::new(d1x[k], half * (d1y[k] + d2x[k]), d2y[k]))
        .collect()
}
