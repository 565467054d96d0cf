use std::io::{self, Write};
use std::ops::Range;

use faer::Mat;

use crate::Real;

/// Block structure of the unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLayout {
    /// One scalar per node.
    Scalar { n: usize },
    /// `[u1 | u2]`.
    Velocity { n: usize },
    /// `[u1 | u2 | h | a]`.
    Coupled { n: usize },
}

impl BlockLayout {
    pub fn dim(&self) -> usize {
        match *self {
            BlockLayout::Scalar { n } => n,
            BlockLayout::Velocity { n } => 2 * n,
            BlockLayout::Coupled { n } => 4 * n,
        }
    }

    pub fn nodes(&self) -> usize {
        match *self {
            BlockLayout::Scalar { n } | BlockLayout::Velocity { n } | BlockLayout::Coupled { n } => n,
        }
    }

    /// Named index ranges of the blocks.
    pub fn blocks(&self) -> Vec<(&'static str, Range<usize>)> {
        match *self {
            BlockLayout::Scalar { n } => vec![("scalar", 0..n)],
            BlockLayout::Velocity { n } => vec![("u", 0..2 * n)],
            BlockLayout::Coupled { n } => {
                vec![("u", 0..2 * n), ("h", 2 * n..3 * n), ("a", 3 * n..4 * n)]
            }
        }
    }
}

/// Square matrix in compressed-row form.
///
/// The sparsity pattern is kept structurally symmetric (explicit zeros are
/// stored where needed). Rows flagged as Dirichlet are identity rows; the
/// matching right-hand-side entries are expected to be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    layout: BlockLayout,
    dirichlet: Vec<bool>,
}

impl<T: Real> SparseOperator<T> {
    pub fn identity(layout: BlockLayout) -> Self {
        let dim = layout.dim();
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![T::one(); dim],
            layout,
            dirichlet: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Mask of rows that are not Dirichlet rows.
    pub fn interior_mask(&self) -> Vec<bool> {
        self.dirichlet.iter().map(|d| !d).collect()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).0.binary_search(&c).is_ok()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim, "operand length");
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *out = cols.iter().zip(vals).map(|(c, v)| *v * x[*c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry inside a rectangular block.
    pub fn block_max_abs(&self, rows: Range<usize>, cols: Range<usize>) -> T {
        let mut m = T::zero();
        for r in rows {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                if cols.contains(c) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Copy of a diagonal block as an operator of its own.
    pub fn sub_block(&self, range: Range<usize>, layout: BlockLayout) -> Self {
        let mut b = SparseBuilder::new(layout);
        for r in range.clone() {
            if self.dirichlet[r] {
                b.set_dirichlet(r - range.start);
                continue;
            }
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                if range.contains(c) {
                    b.push(r - range.start, c - range.start, *v);
                }
            }
        }
        b.build()
    }

    /// `y = A_block x` for an off-diagonal block.
    pub fn apply_block(&self, rows: Range<usize>, cols: Range<usize>, x: &[T]) -> Vec<T> {
        rows.map(|r| {
            let (cs, vs) = self.row(r);
            cs.iter()
                .zip(vs)
                .filter(|(c, _)| cols.contains(c))
                .map(|(c, v)| *v * x[*c - cols.start])
                .sum()
        })
        .collect()
    }

    /// Whether `(r, c)` stored implies `(c, r)` stored.
    pub fn pattern_is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).0.iter().all(|&c| self.contains(c, r)))
    }

    /// `alpha I + beta A` with Dirichlet rows kept as identity rows.
    pub fn shifted(&self, alpha: T, beta: T) -> Self {
        let mut out = self.clone();
        for r in 0..self.dim {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            if self.dirichlet[r] {
                continue;
            }
            for p in span {
                let v = beta * self.values[p];
                out.values[p] = if self.col_idx[p] == r { alpha + v } else { v };
            }
        }
        out
    }

    /// Sets the right-hand side of every Dirichlet row to zero.
    pub fn zero_dirichlet(&self, rhs: &mut [T]) {
        for (v, d) in rhs.iter_mut().zip(&self.dirichlet) {
            if *d {
                *v = T::zero();
            }
        }
    }

    /// Dense `f64` copy restricted to the rows and columns selected by `mask`.
    pub fn to_dense(&self, mask: Option<&[bool]>) -> Mat<f64> {
        let keep: Vec<usize> = match mask {
            Some(m) => (0..self.dim).filter(|&i| m[i]).collect(),
            None => (0..self.dim).collect(),
        };
        let mut pos = vec![usize::MAX; self.dim];
        for (p, &k) in keep.iter().enumerate() {
            pos[k] = p;
        }
        let mut d = Mat::zeros(keep.len(), keep.len());
        for (p, &r) in keep.iter().enumerate() {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                if pos[*c] != usize::MAX {
                    d[(p, pos[*c])] = v.as_f64();
                }
            }
        }
        d
    }

    /// Builder pre-filled with every stored entry and the Dirichlet flags.
    pub fn to_builder(&self) -> SparseBuilder<T> {
        let mut b = SparseBuilder::new(self.layout);
        for r in 0..self.dim {
            if self.dirichlet[r] {
                b.set_dirichlet(r);
            }
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                b.push(r, *c, *v);
            }
        }
        b
    }

    /// Writes `row col value` lines (zero-based indices), one per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in 0..self.dim {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                writeln!(w, "{} {} {:.16e}", r, c, v.as_f64())?;
            }
        }
        Ok(())
    }
}

/// Row-wise accumulator for [`SparseOperator`]. Duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct SparseBuilder<T> {
    rows: Vec<Vec<(usize, T)>>,
    layout: BlockLayout,
    dirichlet: Vec<bool>,
}

impl<T: Real> SparseBuilder<T> {
    pub fn new(layout: BlockLayout) -> Self {
        let dim = layout.dim();
        Self {
            rows: vec![Vec::new(); dim],
            layout,
            dirichlet: vec![false; dim],
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: T) {
        self.rows[r].push((c, v));
    }

    /// Turns row `r` into an identity row; later pushes to it are ignored.
    pub fn set_dirichlet(&mut self, r: usize) {
        self.dirichlet[r] = true;
    }

    pub fn build(mut self) -> SparseOperator<T> {
        let dim = self.rows.len();
        for (r, row) in self.rows.iter_mut().enumerate() {
            if self.dirichlet[r] {
                row.clear();
                row.push((r, T::one()));
            }
            merge_row(row);
        }
        // structural symmetry: add explicit zeros for missing transposes
        let mut missing: Vec<(usize, usize)> = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, _) in row {
                if self.rows[c].binary_search_by_key(&r, |e| e.0).is_err() {
                    missing.push((c, r));
                }
            }
        }
        for (r, c) in missing {
            self.rows[r].push((c, T::zero()));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in self.rows.iter_mut() {
            merge_row(row);
            for &(c, v) in row.iter() {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            dim,
            row_ptr,
            col_idx,
            values,
            layout: self.layout,
            dirichlet: self.dirichlet,
        }
    }
}

fn merge_row<T: Real>(row: &mut Vec<(usize, T)>) {
    row.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, T)> = Vec::with_capacity(row.len());
    for &(c, v) in row.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => merged.push((c, v)),
        }
    }
    *row = merged;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_merges_and_symmetrises_pattern() {
        let mut b = SparseBuilder::<f64>::new(BlockLayout::Scalar { n: 3 });
        b.push(0, 0, 2.0);
        b.push(0, 0, 1.0);
        b.push(0, 2, -1.0);
        b.push(1, 1, 4.0);
        b.push(2, 2, 5.0);
        b.set_dirichlet(1);
        b.push(1, 0, 9.0);
        let op = b.build();
        assert_eq!(op.get(0, 0), 3.0);
        assert_eq!(op.get(1, 0), 0.0);
        assert_eq!(op.get(1, 1), 1.0);
        assert!(op.contains(2, 0));
        assert_eq!(op.get(2, 0), 0.0);
        assert!(op.pattern_is_symmetric());
        assert_eq!(op.apply(&[1.0, 2.0, 3.0]), vec![0.0, 2.0, 15.0]);
        let mut rhs = vec![1.0, 1.0, 1.0];
        op.zero_dirichlet(&mut rhs);
        assert_eq!(rhs, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn shifted_keeps_dirichlet_rows() {
        let mut b = SparseBuilder::<f64>::new(BlockLayout::Scalar { n: 2 });
        b.push(0, 0, 2.0);
        b.push(0, 1, 1.0);
        b.set_dirichlet(1);
        let op = b.build().shifted(1.0, 0.5);
        assert_eq!(op.get(0, 0), 2.0);
        assert_eq!(op.get(0, 1), 0.5);
        assert_eq!(op.get(1, 1), 1.0);
    }

    #[test]
    fn coo_and_dense_export() {
        let op = SparseOperator::<f64>::identity(BlockLayout::Velocity { n: 2 });
        let mut buf = Vec::new();
        op.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("0 0 1.0000000000000000e0"));
        let d = op.to_dense(Some(&[true, false, true, true]));
        assert_eq!(d.nrows(), 3);
        assert_eq!(d[(2, 2)], 1.0);
    }
}
