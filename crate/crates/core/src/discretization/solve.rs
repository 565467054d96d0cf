use std::collections::VecDeque;

use thiserror::Error;

use super::sparse::{BlockLayout, SparseOperator};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("dimension mismatch: operator {expected}, right-hand side {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{method} solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged {
        method: &'static str,
        residual: f64,
        iterations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Systems up to this many unknowns are factorised directly.
    pub direct_limit: usize,
    /// Required relative residual `‖A x − b‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Iterative-refinement passes after the direct solve.
    pub refinement_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            direct_limit: 20_000,
            tol: 1e-10,
            max_iter: 5_000,
            restart: 60,
            refinement_steps: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Banded LU after reverse Cuthill–McKee reordering.
    Direct,
    /// Back substitution over the diagonal blocks of an upper block-triangular
    /// coupled operator, each block factorised directly.
    BlockDirect,
    /// Restarted GMRES with Jacobi preconditioning.
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub method: SolveMethod,
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Solves `op x = rhs` with the default [`SolveOptions`].
pub fn solve_linear<T: Real>(op: &SparseOperator<T>, rhs: &[T]) -> Result<Vec<T>, SolveError> {
    solve_linear_with(op, rhs, &SolveOptions::default()).map(|(x, _)| x)
}

/// Solves `op x = rhs`; deterministic for a given operator and right-hand side.
pub fn solve_linear_with<T: Real>(
    op: &SparseOperator<T>,
    rhs: &[T],
    opts: &SolveOptions,
) -> Result<(Vec<T>, SolveStats), SolveError> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let tol = opts.tol.max(1e3 * T::epsilon().as_f64());
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok((
            vec![T::zero(); n],
            SolveStats {
                method: SolveMethod::Direct,
                relative_residual: 0.0,
                iterations: 0,
            },
        ));
    }
    if let BlockLayout::Coupled { n: nodes } = op.layout() {
        let lower = op
            .block_max_abs(2 * nodes..4 * nodes, 0..2 * nodes)
            .max(op.block_max_abs(3 * nodes..4 * nodes, 2 * nodes..3 * nodes))
            .max(op.block_max_abs(2 * nodes..3 * nodes, 3 * nodes..4 * nodes));
        if lower == T::zero() {
            if let Ok(x) = block_solve(op, rhs, nodes, opts) {
                let res = relative_residual(op, &x, rhs, bnorm);
                if res <= tol {
                    return Ok((
                        x,
                        SolveStats {
                            method: SolveMethod::BlockDirect,
                            relative_residual: res,
                            iterations: 1,
                        },
                    ));
                }
            }
        }
    }
    if n <= opts.direct_limit {
        direct_solve(op, rhs, opts, tol)
    } else {
        gmres(op, rhs, opts, tol)
    }
}

fn block_solve<T: Real>(
    op: &SparseOperator<T>,
    rhs: &[T],
    n: usize,
    opts: &SolveOptions,
) -> Result<Vec<T>, SolveError> {
    let a_blk = op.sub_block(3 * n..4 * n, BlockLayout::Scalar { n });
    let h_blk = op.sub_block(2 * n..3 * n, BlockLayout::Scalar { n });
    let u_blk = op.sub_block(0..2 * n, BlockLayout::Velocity { n });
    let (a, _) = solve_linear_with(&a_blk, &rhs[3 * n..], opts)?;
    let (h, _) = solve_linear_with(&h_blk, &rhs[2 * n..3 * n], opts)?;
    let mut ha = h.clone();
    ha.extend_from_slice(&a);
    let coupling = op.apply_block(0..2 * n, 2 * n..4 * n, &ha);
    let ru: Vec<T> = rhs[..2 * n]
        .iter()
        .zip(&coupling)
        .map(|(b, c)| *b - *c)
        .collect();
    let (u, _) = solve_linear_with(&u_blk, &ru, opts)?;
    let mut x = u;
    x.extend_from_slice(&ha);
    Ok(x)
}

fn norm<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

fn residual<T: Real>(op: &SparseOperator<T>, x: &[T], b: &[T]) -> Vec<T> {
    let ax = op.apply(x);
    b.iter().zip(&ax).map(|(b, a)| *b - *a).collect()
}

fn relative_residual<T: Real>(op: &SparseOperator<T>, x: &[T], b: &[T], bnorm: f64) -> f64 {
    norm(&residual(op, x, b)) / bnorm
}

fn direct_solve<T: Real>(
    op: &SparseOperator<T>,
    rhs: &[T],
    opts: &SolveOptions,
    tol: f64,
) -> Result<(Vec<T>, SolveStats), SolveError> {
    let lu = BandedLu::factor(op);
    let bnorm = norm(rhs);
    let mut x = lu.solve(rhs);
    let mut res = relative_residual(op, &x, rhs, bnorm);
    let mut passes = 0;
    while !(res <= tol) && passes < opts.refinement_steps && res.is_finite() {
        let r = residual(op, &x, rhs);
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += *di;
        }
        res = relative_residual(op, &x, rhs, bnorm);
        passes += 1;
    }
    if res <= tol {
        Ok((
            x,
            SolveStats {
                method: SolveMethod::Direct,
                relative_residual: res,
                iterations: passes,
            },
        ))
    } else {
        Err(SolveError::NotConverged {
            method: "direct",
            residual: res,
            iterations: passes,
        })
    }
}

/// Reverse Cuthill–McKee ordering; `order[new] = old`.
fn rcm_order<T: Real>(op: &SparseOperator<T>) -> Vec<usize> {
    let n = op.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for &c in op.row(r).0 {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> Vec<Vec<usize>> {
        let mut seen = visited.to_vec();
        seen[start] = true;
        let mut levels = vec![vec![start]];
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        // pseudo-peripheral start node
        let mut start = seed;
        let mut depth = bfs_levels(start, &visited).len();
        for _ in 0..8 {
            let levels = bfs_levels(start, &visited);
            let cand = *levels
                .last()
                .unwrap()
                .iter()
                .min_by_key(|&&v| (degree[v], v))
                .unwrap();
            let d = bfs_levels(cand, &visited).len();
            if d > depth {
                depth = d;
                start = cand;
            } else {
                break;
            }
        }
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// LU factorisation with partial pivoting of a reordered banded matrix.
///
/// Row interchanges are recorded but earlier multipliers are not permuted;
/// [`BandedLu::solve`] applies interchanges and eliminations interleaved.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<T>,
    pivots: Vec<usize>,
    /// `order[new] = old`.
    order: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn factor(op: &SparseOperator<T>) -> Self {
        let n = op.dim();
        let order = rcm_order(op);
        let mut inv = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            let ri = inv[r];
            for &c in op.row(r).0 {
                let ci = inv[c];
                if ci < ri {
                    kl = kl.max(ri - ci);
                } else {
                    ku = ku.max(ci - ri);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            band: vec![T::zero(); n * width],
            pivots: vec![0; n],
            order,
        };
        for r in 0..n {
            let ri = inv[r];
            let (cs, vs) = op.row(r);
            for (c, v) in cs.iter().zip(vs) {
                let p = lu.pos(ri, inv[*c]);
                lu.band[p] = *v;
            }
        }
        let tiny = T::epsilon() * op.max_abs().max(T::min_positive_value());
        lu.eliminate(tiny);
        lu
    }

    /// Lower / upper bandwidth after reordering.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn pos(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn eliminate(&mut self, tiny: T) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.band[self.pos(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.band[self.pos(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            self.pivots[k] = piv;
            let last_col = (k + kl + ku).min(n - 1);
            if piv != k {
                for c in k..=last_col {
                    let (a, b) = (self.pos(k, c), self.pos(piv, c));
                    self.band.swap(a, b);
                }
            }
            let dpos = self.pos(k, k);
            if self.band[dpos].abs() == T::zero() {
                // singular: carry on so the residual check reports the failure
                self.band[dpos] = tiny;
            }
            let d = self.band[dpos];
            for i in k + 1..=last_row {
                let ip = self.pos(i, k);
                let l = self.band[ip] / d;
                self.band[ip] = l;
                if l == T::zero() {
                    continue;
                }
                for c in k + 1..=last_col {
                    let (src, dst) = (self.pos(k, c), self.pos(i, c));
                    let upd = l * self.band[src];
                    self.band[dst] -= upd;
                }
            }
        }
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut y: Vec<T> = self.order.iter().map(|&old| rhs[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                y[i] -= self.band[self.pos(i, k)] * yk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.band[self.pos(k, c)] * y[c];
            }
            y[k] = acc / self.band[self.pos(k, k)];
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

fn gmres<T: Real>(
    op: &SparseOperator<T>,
    rhs: &[T],
    opts: &SolveOptions,
    tol: f64,
) -> Result<(Vec<T>, SolveStats), SolveError> {
    let n = op.dim();
    let minv: Vec<T> = op
        .diagonal()
        .iter()
        .map(|d| if *d != T::zero() { T::one() / *d } else { T::one() })
        .collect();
    let bnorm = norm(rhs);
    let m = opts.restart.max(2);
    let mut x = vec![T::zero(); n];
    let mut total = 0;
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
    while total < opts.max_iter {
        let r = residual(op, &x, rhs);
        let beta = T::lit(norm(&r));
        if beta.as_f64() / bnorm <= tol {
            break;
        }
        let mut basis: Vec<Vec<T>> = vec![r.iter().map(|v| *v / beta).collect()];
        let mut hess = vec![vec![T::zero(); m]; m + 1];
        let (mut cs, mut sn) = (vec![T::zero(); m], vec![T::zero(); m]);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let z: Vec<T> = basis[j].iter().zip(&minv).map(|(v, d)| *v * *d).collect();
            let mut w = op.apply(&z);
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                hess[i][j] = hij;
                for (wk, qk) in w.iter_mut().zip(q) {
                    *wk -= hij * *qk;
                }
            }
            let wn = T::lit(norm(&w));
            hess[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == T::zero() {
                used = j;
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = T::zero();
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs().as_f64() / bnorm <= tol * 0.5 || wn == T::zero() || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| *v / wn).collect());
        }
        if used == 0 {
            break;
        }
        let mut yv = vec![T::zero(); used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= hess[i][k] * yv[k];
            }
            yv[i] = acc / hess[i][i];
        }
        for (k, yk) in yv.iter().enumerate() {
            for ((xi, qi), di) in x.iter_mut().zip(&basis[k]).zip(&minv) {
                *xi += *yk * *qi * *di;
            }
        }
    }
    let res = relative_residual(op, &x, rhs, bnorm);
    if res <= tol {
        Ok((
            x,
            SolveStats {
                method: SolveMethod::Gmres,
                relative_residual: res,
                iterations: total,
            },
        ))
    } else {
        Err(SolveError::NotConverged {
            method: "gmres",
            residual: res,
            iterations: total,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{assemble_neumann_laplacian, Grid, SparseBuilder};
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let op = SparseOperator::<f64>::identity(BlockLayout::Scalar { n: 5 });
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(solve_linear(&op, &b).unwrap(), b);
    }

    fn pinned_laplacian(grid: &Grid<f64>) -> (SparseOperator<f64>, Vec<f64>, Vec<f64>) {
        let l = assemble_neumann_laplacian(grid, 1.3);
        let exact = grid.sample(|x, y| (3.0 * x).cos() * (2.0 * y).sin() + x * y);
        let mut rhs = l.apply(&exact);
        let mut b = SparseBuilder::new(l.layout());
        for r in 1..l.dim() {
            let (cs, vs) = l.row(r);
            for (c, v) in cs.iter().zip(vs) {
                b.push(r, *c, *v);
            }
        }
        b.push(0, 0, 1.0);
        rhs[0] = exact[0];
        (b.build(), rhs, exact)
    }

    #[test]
    fn pinned_neumann_problem_is_solved_directly_and_iteratively() {
        let grid = Grid::new(13, 11, 1.0, 0.8).unwrap();
        let (op, rhs, exact) = pinned_laplacian(&grid);
        let (x, stats) = solve_linear_with(&op, &rhs, &SolveOptions::default()).unwrap();
        assert_eq!(stats.method, SolveMethod::Direct);
        assert!(stats.relative_residual <= 1e-10);
        let err = x.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8, "{err}");

        let opts = SolveOptions {
            direct_limit: 0,
            ..Default::default()
        };
        let (x, stats) = solve_linear_with(&op, &rhs, &opts).unwrap();
        assert_eq!(stats.method, SolveMethod::Gmres);
        let err = x.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn incompatible_singular_system_fails() {
        let grid = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let l = assemble_neumann_laplacian(&grid, 1.0);
        let rhs = vec![1.0; grid.n()];
        assert!(matches!(
            solve_linear(&l, &rhs),
            Err(SolveError::NotConverged { .. })
        ));
        let opts = SolveOptions {
            direct_limit: 0,
            max_iter: 300,
            ..Default::default()
        };
        assert!(solve_linear_with(&l, &rhs, &opts).is_err());
    }

    #[test]
    fn banded_lu_pivots_on_nonsymmetric_values() {
        let mut b = SparseBuilder::<f64>::new(BlockLayout::Scalar { n: 4 });
        let dense = [
            [0.0, 2.0, 0.0, 1.0],
            [3.0, 1.0, 0.0, 0.0],
            [0.0, 4.0, 1e-3, 2.0],
            [1.0, 0.0, 5.0, 0.0],
        ];
        for (r, row) in dense.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    b.push(r, c, *v);
                }
            }
        }
        let op = b.build();
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let rhs = op.apply(&x_true);
        let x = solve_linear(&op, &rhs).unwrap();
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn rcm_keeps_laplacian_band_narrow() {
        let grid = Grid::new(20, 20, 1.0, 1.0).unwrap();
        let l = assemble_neumann_laplacian(&grid, 1.0);
        let lu = BandedLu::factor(&l);
        let (kl, ku) = lu.bandwidths();
        assert!(kl <= 2 * grid.nx && ku <= 2 * grid.nx, "{kl} {ku}");
    }
}
