//! Dense matrices over a `FieldCtx` with row-vector conventions:
//! vectors are rows and act by `v ↦ v·M`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gf::{poly_factor, rng, FieldCtx, Poly, Rng64};

#[derive(Clone, PartialEq, Eq)]
pub struct Mat {
    pub ctx: FieldCtx,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} over {:?}", self.rows, self.cols, self.ctx)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

/// dst += c·src
#[inline]
pub fn axpy(ctx: &FieldCtx, dst: &mut [u64], src: &[u64], c: u64) {
    if c == 0 {
        return;
    }
    if ctx.is_prime_field() {
        let p = ctx.p();
        if p < (1 << 32) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (*d + c * *s) % p;
            }
        } else {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = ((*d as u128 + c as u128 * *s as u128) % p as u128) as u64;
            }
        }
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            if *s != 0 {
                *d = ctx.add(*d, ctx.mul(c, *s));
            }
        }
    }
}

#[inline]
pub fn scale_in_place(ctx: &FieldCtx, v: &mut [u64], c: u64) {
    for x in v.iter_mut() {
        *x = ctx.mul(*x, c);
    }
}

pub fn dot(ctx: &FieldCtx, a: &[u64], b: &[u64]) -> u64 {
    if ctx.is_prime_field() && ctx.p() < (1 << 16) {
        let p = ctx.p();
        let mut acc = 0u64;
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            acc += x * y;
            if i & 0xffff == 0xffff {
                acc %= p;
            }
        }
        acc % p
    } else {
        a.iter().zip(b).fold(0, |acc, (x, y)| ctx.add(acc, ctx.mul(*x, *y)))
    }
}

/// v·M for a row vector v.
pub fn vec_mat(v: &[u64], m: &Mat) -> Vec<u64> {
    assert_eq!(v.len(), m.rows);
    let mut out = vec![0u64; m.cols];
    for (i, &c) in v.iter().enumerate() {
        if c != 0 {
            axpy(&m.ctx, &mut out, m.row(i), c);
        }
    }
    out
}

impl Mat {
    pub fn zeros(ctx: &FieldCtx, rows: usize, cols: usize) -> Mat {
        Mat { ctx: ctx.clone(), rows, cols, data: vec![0; rows * cols] }
    }
    pub fn identity(ctx: &FieldCtx, n: usize) -> Mat {
        let mut m = Mat::zeros(ctx, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }
    pub fn scalar(ctx: &FieldCtx, n: usize, c: u64) -> Mat {
        let mut m = Mat::zeros(ctx, n, n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }
    pub fn from_rows(ctx: &FieldCtx, rows: &[Vec<u64>]) -> Mat {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row.iter().map(|&x| x % ctx.q()));
        }
        Mat { ctx: ctx.clone(), rows: r, cols: c, data }
    }
    pub fn from_rows_cols(ctx: &FieldCtx, rows: usize, cols: usize, rows_data: &[Vec<u64>]) -> Mat {
        if rows_data.is_empty() {
            return Mat::zeros(ctx, rows, cols);
        }
        let m = Mat::from_rows(ctx, rows_data);
        assert_eq!((m.rows, m.cols), (rows, cols));
        m
    }
    pub fn from_ints(ctx: &FieldCtx, rows: &[Vec<i64>]) -> Mat {
        let conv: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().map(|&x| ctx.from_int(x)).collect()).collect();
        Mat::from_rows(ctx, &conv)
    }
    pub fn random(ctx: &FieldCtx, rows: usize, cols: usize, r: &mut Rng64) -> Mat {
        Mat { ctx: ctx.clone(), rows, cols, data: (0..rows * cols).map(|_| ctx.random(r)).collect() }
    }
    pub fn random_invertible(ctx: &FieldCtx, n: usize, r: &mut Rng64) -> Mat {
        loop {
            let m = Mat::random(ctx, n, n, r);
            if m.rank() == n {
                return m;
            }
        }
    }
    /// Random skew-symmetric matrix with zero diagonal.
    pub fn random_alternating(ctx: &FieldCtx, n: usize, r: &mut Rng64) -> Mat {
        let mut m = Mat::zeros(ctx, n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = ctx.random(r);
                m.set(i, j, v);
                m.set(j, i, ctx.neg(v));
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v;
    }
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn col(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
    pub fn row_vecs(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }
    pub fn is_identity(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j) == (i == j) as u64))
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(&self.ctx, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows, "matmul dimension mismatch");
        let ctx = &self.ctx;
        let (n, m) = (self.rows, o.cols);
        let mut out = Mat::zeros(ctx, n, m);
        if n == 0 || m == 0 {
            return out;
        }
        if ctx.is_prime_field() && ctx.p() < (1 << 16) {
            let p = ctx.p();
            // accumulate unreduced; p^2 < 2^32 so 2^31 terms are safe
            let mut acc = vec![0u64; m];
            for i in 0..n {
                acc.iter_mut().for_each(|x| *x = 0);
                let arow = self.row(i);
                let mut cnt = 0u32;
                for (k, &a) in arow.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let brow = o.row(k);
                    for (x, &b) in acc.iter_mut().zip(brow) {
                        *x += a * b;
                    }
                    cnt += 1;
                    if cnt == 1 << 30 {
                        acc.iter_mut().for_each(|x| *x %= p);
                        cnt = 0;
                    }
                }
                for (d, x) in out.row_mut(i).iter_mut().zip(&acc) {
                    *d = x % p;
                }
            }
        } else {
            for i in 0..n {
                let mut acc = vec![0u64; m];
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    if a != 0 {
                        axpy(ctx, &mut acc, o.row(k), a);
                    }
                }
                out.row_mut(i).copy_from_slice(&acc);
            }
        }
        out
    }

    pub fn add(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| self.ctx.add(*a, *b)).collect();
        Mat { ctx: self.ctx.clone(), rows: self.rows, cols: self.cols, data }
    }
    pub fn sub(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| self.ctx.sub(*a, *b)).collect();
        Mat { ctx: self.ctx.clone(), rows: self.rows, cols: self.cols, data }
    }
    pub fn scale(&self, c: u64) -> Mat {
        let data = self.data.iter().map(|a| self.ctx.mul(*a, c)).collect();
        Mat { ctx: self.ctx.clone(), rows: self.rows, cols: self.cols, data }
    }
    pub fn neg(&self) -> Mat {
        self.scale(self.ctx.neg(1))
    }
    /// Entrywise Frobenius power.
    pub fn frob(&self, t: u32) -> Mat {
        if self.ctx.is_prime_field() || t % self.ctx.k() == 0 {
            return self.clone();
        }
        let data = self.data.iter().map(|a| self.ctx.frob(*a, t)).collect();
        Mat { ctx: self.ctx.clone(), rows: self.rows, cols: self.cols, data }
    }
    pub fn pow(&self, mut e: u64) -> Mat {
        let mut r = Mat::identity(&self.ctx, self.rows);
        let mut b = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                r = r.mul(&b);
            }
            b = b.mul(&b);
            e >>= 1;
        }
        r
    }
    /// f(M) by Horner's rule.
    pub fn eval_poly(&self, f: &Poly) -> Mat {
        let n = self.rows;
        let mut r = Mat::zeros(&self.ctx, n, n);
        for &c in f.coeffs.iter().rev() {
            r = r.mul(self);
            for i in 0..n {
                let v = self.ctx.add(r.get(i, i), c);
                r.set(i, i, v);
            }
        }
        r
    }

    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat {
        let mut m = Mat::zeros(&self.ctx, r1 - r0, c1 - c0);
        for i in r0..r1 {
            m.row_mut(i - r0).copy_from_slice(&self.row(i)[c0..c1]);
        }
        m
    }
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut m = Mat::zeros(&self.ctx, idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            m.row_mut(k).copy_from_slice(self.row(i));
        }
        m
    }
    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        let mut m = Mat::zeros(&self.ctx, self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                m.set(i, k, self.get(i, j));
            }
        }
        m
    }
    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        for i in 0..b.rows {
            self.row_mut(r0 + i)[c0..c0 + b.cols].copy_from_slice(b.row(i));
        }
    }
    pub fn block_diag(ctx: &FieldCtx, blocks: &[Mat]) -> Mat {
        let r: usize = blocks.iter().map(|b| b.rows).sum();
        let c: usize = blocks.iter().map(|b| b.cols).sum();
        let mut m = Mat::zeros(ctx, r, c);
        let (mut i, mut j) = (0, 0);
        for b in blocks {
            m.set_block(i, j, b);
            i += b.rows;
            j += b.cols;
        }
        m
    }
    pub fn vstack(ctx: &FieldCtx, parts: &[&Mat], cols: usize) -> Mat {
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            assert_eq!(p.cols, cols);
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Mat { ctx: ctx.clone(), rows, cols, data }
    }
    pub fn hstack(&self, o: &Mat) -> Mat {
        assert_eq!(self.rows, o.rows);
        let mut m = Mat::zeros(&self.ctx, self.rows, self.cols + o.cols);
        m.set_block(0, 0, self);
        m.set_block(0, self.cols, o);
        m
    }
    /// [[0, A], [-Aᵀ, 0]] for an n×m corner A.
    pub fn hyperbolic(a: &Mat) -> Mat {
        let (n, m) = (a.rows, a.cols);
        let mut h = Mat::zeros(&a.ctx, n + m, n + m);
        h.set_block(0, n, a);
        h.set_block(n, 0, &a.transpose().neg());
        h
    }

    /// Companion matrix with e_i·C = e_{i+1} and last row (-f_0, …, -f_{n-1}).
    pub fn companion(f: &Poly) -> Mat {
        let f = f.monic();
        let n = f.deg();
        let ctx = &f.ctx;
        let mut c = Mat::zeros(ctx, n, n);
        for i in 0..n.saturating_sub(1) {
            c.set(i, i + 1, 1);
        }
        for j in 0..n {
            c.set(n - 1, j, ctx.neg(f.coeff(j)));
        }
        c
    }

    /// In-place reduction to RREF, applying the same row operations to `t`
    /// when given. Returns pivot columns.
    fn rref_in_place(&mut self, mut t: Option<&mut Mat>) -> Vec<usize> {
        let ctx = self.ctx.clone();
        let (n, m) = (self.rows, self.cols);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m {
            if r == n {
                break;
            }
            let Some(piv) = (r..n).find(|&i| self.get(i, c) != 0) else { continue };
            if piv != r {
                for j in 0..m {
                    self.data.swap(piv * m + j, r * m + j);
                }
                if let Some(t) = t.as_deref_mut() {
                    let tc = t.cols;
                    for j in 0..tc {
                        t.data.swap(piv * tc + j, r * tc + j);
                    }
                }
            }
            let inv = ctx.inv(self.get(r, c));
            scale_in_place(&ctx, &mut self.data[r * m + c..(r + 1) * m], inv);
            if let Some(t) = t.as_deref_mut() {
                scale_in_place(&ctx, t.row_mut(r), inv);
            }
            let prow: Vec<u64> = self.data[r * m + c..(r + 1) * m].to_vec();
            let trow: Option<Vec<u64>> = t.as_deref().map(|t| t.row(r).to_vec());
            for i in 0..n {
                if i == r {
                    continue;
                }
                let f = self.get(i, c);
                if f == 0 {
                    continue;
                }
                let nf = ctx.neg(f);
                axpy(&ctx, &mut self.data[i * m + c..(i + 1) * m], &prow, nf);
                if let (Some(t), Some(tr)) = (t.as_deref_mut(), trow.as_ref()) {
                    axpy(&ctx, t.row_mut(i), tr, nf);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    /// (R, T, pivots) with T·self = R in reduced row echelon form.
    pub fn rref(&self) -> (Mat, Mat, Vec<usize>) {
        let mut r = self.clone();
        let mut t = Mat::identity(&self.ctx, self.rows);
        let piv = r.rref_in_place(Some(&mut t));
        (r, t, piv)
    }

    pub fn rref_only(&self) -> (Mat, Vec<usize>) {
        let mut r = self.clone();
        let piv = r.rref_in_place(None);
        (r, piv)
    }

    pub fn rank(&self) -> usize {
        self.rref_only().1.len()
    }

    pub fn inverse(&self) -> Option<Mat> {
        if !self.is_square() {
            return None;
        }
        let (_, t, piv) = self.rref();
        if piv.len() == self.rows {
            Some(t)
        } else {
            None
        }
    }

    pub fn det(&self) -> u64 {
        assert!(self.is_square());
        let ctx = &self.ctx;
        let n = self.rows;
        let mut a = self.clone();
        let mut det = 1u64;
        for c in 0..n {
            let Some(piv) = (c..n).find(|&i| a.get(i, c) != 0) else { return 0 };
            if piv != c {
                for j in 0..n {
                    a.data.swap(piv * n + j, c * n + j);
                }
                det = ctx.neg(det);
            }
            let d = a.get(c, c);
            det = ctx.mul(det, d);
            let inv = ctx.inv(d);
            let prow: Vec<u64> = a.row(c).to_vec();
            for i in c + 1..n {
                let f = a.get(i, c);
                if f != 0 {
                    axpy(ctx, a.row_mut(i), &prow, ctx.neg(ctx.mul(f, inv)));
                }
            }
        }
        det
    }

    /// Basis (as rows) of {x : x·self = 0}.
    pub fn left_null_space(&self) -> Vec<Vec<u64>> {
        let (r, t, piv) = self.rref();
        let _ = r;
        (piv.len()..self.rows).map(|i| t.row(i).to_vec()).collect()
    }

    /// Basis of {x : self·x = 0}.
    pub fn right_null_space(&self) -> Vec<Vec<u64>> {
        self.transpose().left_null_space_fast()
    }

    /// Left kernel without tracking the transform when the matrix is wide.
    fn left_null_space_fast(&self) -> Vec<Vec<u64>> {
        // kernel of x ↦ x·A equals right kernel of Aᵀ; compute via RREF of Aᵀ
        let at = self.transpose();
        let (r, piv) = at.rref_only();
        let n = at.cols;
        let ctx = &self.ctx;
        let mut is_piv = vec![false; n];
        for &p in &piv {
            is_piv[p] = true;
        }
        let mut out = Vec::new();
        for free in (0..n).filter(|&j| !is_piv[j]) {
            let mut v = vec![0u64; n];
            v[free] = 1;
            for (i, &p) in piv.iter().enumerate() {
                v[p] = ctx.neg(r.get(i, free));
            }
            out.push(v);
        }
        out
    }

    /// Kernel basis of x ↦ x·self via the transpose trick (no transform).
    pub fn kernel_rows(&self) -> Vec<Vec<u64>> {
        self.left_null_space_fast()
    }

    /// Solve self·x = b.
    pub fn solve(&self, b: &[u64]) -> Option<Vec<u64>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = Mat::zeros(&self.ctx, self.rows, self.cols + 1);
        for i in 0..self.rows {
            aug.row_mut(i)[..self.cols].copy_from_slice(self.row(i));
            aug.set(i, self.cols, b[i]);
        }
        let (r, piv) = aug.rref_only();
        if piv.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![0u64; self.cols];
        for (i, &p) in piv.iter().enumerate() {
            x[p] = r.get(i, self.cols);
        }
        Some(x)
    }

    /// Solve X·self = B for X (one row per row of B).
    pub fn solve_left(&self, b: &Mat) -> Option<Mat> {
        let at = self.transpose();
        let mut out = Mat::zeros(&self.ctx, b.rows, self.rows);
        // solve all right-hand sides at once
        let mut aug = Mat::zeros(&self.ctx, at.rows, at.cols + b.rows);
        for i in 0..at.rows {
            aug.row_mut(i)[..at.cols].copy_from_slice(at.row(i));
            for k in 0..b.rows {
                aug.set(i, at.cols + k, b.get(k, i));
            }
        }
        let (r, piv) = aug.rref_only();
        if piv.iter().any(|&p| p >= at.cols) {
            return None;
        }
        for (i, &p) in piv.iter().enumerate() {
            for k in 0..b.rows {
                out.set(k, p, r.get(i, at.cols + k));
            }
        }
        Some(out)
    }
}

/// Solve A·x = b, checking that b has one entry per row of A.
pub fn solve_linear(a: &Mat, b: &[u64]) -> Result<Option<Vec<u64>>> {
    if b.len() != a.rows {
        return Err(Error::Dim(format!("rhs length {} vs {} rows", b.len(), a.rows)));
    }
    Ok(a.solve(b))
}

/// Null space {x : A·x = 0}.
pub fn null_space(a: &Mat) -> Subspace {
    Subspace::from_rows(&a.ctx, a.cols, &a.right_null_space())
}

/// Subspace of ctx^n with canonical RREF basis.
#[derive(Clone, PartialEq, Eq)]
pub struct Subspace {
    pub ctx: FieldCtx,
    pub n: usize,
    pub basis: Mat,
    pub pivots: Vec<usize>,
}

impl fmt::Debug for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Subspace(dim {} in {}) {:?}", self.dim(), self.n, self.basis.row_vecs())
    }
}

impl Subspace {
    pub fn from_rows(ctx: &FieldCtx, n: usize, rows: &[Vec<u64>]) -> Subspace {
        let m = Mat::from_rows_cols(ctx, rows.len(), n, rows);
        Subspace::from_mat(&m)
    }
    pub fn from_mat(m: &Mat) -> Subspace {
        let (r, piv) = m.rref_only();
        let basis = r.submatrix(0, piv.len(), 0, m.cols);
        Subspace { ctx: m.ctx.clone(), n: m.cols, basis, pivots: piv }
    }
    pub fn zero(ctx: &FieldCtx, n: usize) -> Subspace {
        Subspace { ctx: ctx.clone(), n, basis: Mat::zeros(ctx, 0, n), pivots: Vec::new() }
    }
    pub fn full(ctx: &FieldCtx, n: usize) -> Subspace {
        Subspace { ctx: ctx.clone(), n, basis: Mat::identity(ctx, n), pivots: (0..n).collect() }
    }
    pub fn dim(&self) -> usize {
        self.basis.rows
    }
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.basis.row_vecs()
    }
    /// Reduce v modulo the subspace (canonical remainder).
    pub fn reduce(&self, v: &[u64]) -> Vec<u64> {
        let mut w = v.to_vec();
        for (i, &p) in self.pivots.iter().enumerate() {
            let c = w[p];
            if c != 0 {
                axpy(&self.ctx, &mut w, self.basis.row(i), self.ctx.neg(c));
            }
        }
        w
    }
    pub fn contains(&self, v: &[u64]) -> bool {
        self.reduce(v).iter().all(|&x| x == 0)
    }
    /// Coordinates of v in the RREF basis (v must lie in the subspace).
    pub fn coords(&self, v: &[u64]) -> Option<Vec<u64>> {
        let c: Vec<u64> = self.pivots.iter().map(|&p| v[p]).collect();
        let back = vec_mat(&c, &self.basis);
        if back == v {
            Some(c)
        } else {
            None
        }
    }
    pub fn contains_space(&self, o: &Subspace) -> bool {
        (0..o.dim()).all(|i| self.contains(o.basis.row(i)))
    }
    pub fn sum(&self, o: &Subspace) -> Subspace {
        let m = Mat::vstack(&self.ctx, &[&self.basis, &o.basis], self.n);
        Subspace::from_mat(&m)
    }
    pub fn intersect(&self, o: &Subspace) -> Subspace {
        // x = a·B1 = b·B2  <=>  (a, -b) in left kernel of [B1; B2]
        let k1 = self.dim();
        let m = Mat::vstack(&self.ctx, &[&self.basis, &o.basis], self.n);
        let ker = m.kernel_rows();
        let rows: Vec<Vec<u64>> = ker.iter().map(|c| vec_mat(&c[..k1], &self.basis)).collect();
        Subspace::from_rows(&self.ctx, self.n, &rows)
    }
    /// Standard-basis complement spanned by non-pivot unit vectors.
    pub fn complement_basis(&self) -> Vec<Vec<u64>> {
        let mut is_piv = vec![false; self.n];
        for &p in &self.pivots {
            is_piv[p] = true;
        }
        (0..self.n)
            .filter(|&j| !is_piv[j])
            .map(|j| {
                let mut v = vec![0u64; self.n];
                v[j] = 1;
                v
            })
            .collect()
    }
    /// Image under v ↦ v·M.
    pub fn image(&self, m: &Mat) -> Subspace {
        Subspace::from_mat(&self.basis.mul(m))
    }
    /// Annihilator {w : v·wᵀ = 0 for all v in self}.
    pub fn annihilator(&self) -> Subspace {
        Subspace::from_rows(&self.ctx, self.n, &self.basis.transpose().kernel_rows())
    }
}

/// Extend independent rows `start` to a basis using rows from `pool`.
pub fn extend_basis(ctx: &FieldCtx, n: usize, start: &[Vec<u64>], pool: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let mut ech = Echelon::new(ctx, n);
    let mut out = Vec::new();
    for v in start.iter().chain(pool) {
        if ech.insert(v) {
            out.push(v.clone());
        }
    }
    out
}

/// Incremental echelon basis for independence tests.
#[derive(Clone)]
pub struct Echelon {
    ctx: FieldCtx,
    n: usize,
    rows: Vec<(usize, Vec<u64>)>,
}

impl Echelon {
    pub fn new(ctx: &FieldCtx, n: usize) -> Echelon {
        Echelon { ctx: ctx.clone(), n, rows: Vec::new() }
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn reduce(&self, v: &[u64]) -> Vec<u64> {
        let mut w = v.to_vec();
        for (p, r) in &self.rows {
            let c = w[*p];
            if c != 0 {
                axpy(&self.ctx, &mut w, r, self.ctx.neg(c));
            }
        }
        w
    }
    pub fn contains(&self, v: &[u64]) -> bool {
        self.reduce(v).iter().all(|&x| x == 0)
    }
    /// Insert; returns true when v was independent.
    pub fn insert(&mut self, v: &[u64]) -> bool {
        assert_eq!(v.len(), self.n);
        let mut w = self.reduce(v);
        let Some(p) = w.iter().position(|&x| x != 0) else { return false };
        let inv = self.ctx.inv(w[p]);
        scale_in_place(&self.ctx, &mut w, inv);
        for (_, r) in self.rows.iter_mut() {
            let c = r[p];
            if c != 0 {
                axpy(&self.ctx, r, &w, self.ctx.neg(c));
            }
        }
        self.rows.push((p, w));
        true
    }
    /// Reduce v and also report the combination of inserted rows used;
    /// only valid when rows were tracked with `insert_tracked`.
    pub fn subspace(&self) -> Subspace {
        let rows: Vec<Vec<u64>> = self.rows.iter().map(|(_, r)| r.clone()).collect();
        Subspace::from_rows(&self.ctx, self.n, &rows)
    }
}

/// Echelon basis that records how each stored row is expressed in the
/// inserted vectors, so membership comes with coefficients.
#[derive(Clone)]
pub struct TrackedEchelon {
    ctx: FieldCtx,
    n: usize,
    rows: Vec<(usize, Vec<u64>, Vec<u64>)>,
    count: usize,
}

impl TrackedEchelon {
    pub fn new(ctx: &FieldCtx, n: usize) -> Self {
        TrackedEchelon { ctx: ctx.clone(), n, rows: Vec::new(), count: 0 }
    }
    pub fn len(&self) -> usize {
        self.count
    }
    /// Returns the coefficient vector (over inserted vectors) expressing v,
    /// or inserts v and returns None.
    pub fn express_or_insert(&mut self, v: &[u64]) -> Option<Vec<u64>> {
        let ctx = self.ctx.clone();
        let mut w = v.to_vec();
        let mut comb = vec![0u64; self.count + 1];
        for (p, r, c) in &self.rows {
            let f = w[*p];
            if f != 0 {
                let nf = ctx.neg(f);
                axpy(&ctx, &mut w, r, nf);
                axpy(&ctx, &mut comb[..c.len()], c, nf);
            }
        }
        match w.iter().position(|&x| x != 0) {
            None => {
                comb.truncate(self.count);
                Some(comb.iter().map(|&x| ctx.neg(x)).collect())
            }
            Some(p) => {
                // w = v + Σ comb_i v_i ; store w with its combination
                comb[self.count] = 1;
                let inv = ctx.inv(w[p]);
                scale_in_place(&ctx, &mut w, inv);
                scale_in_place(&ctx, &mut comb, inv);
                for r in self.rows.iter_mut() {
                    r.2.push(0);
                }
                for (_, r, c) in self.rows.iter_mut() {
                    let f = r[p];
                    if f != 0 {
                        let nf = ctx.neg(f);
                        axpy(&ctx, r, &w, nf);
                        axpy(&ctx, c, &comb, nf);
                    }
                }
                self.rows.push((p, w, comb));
                self.count += 1;
                let _ = self.n;
                None
            }
        }
    }
}

/// Minimal polynomial via Krylov sequences of standard basis vectors.
pub fn min_poly(m: &Mat) -> Poly {
    assert!(m.is_square());
    let ctx = &m.ctx;
    let n = m.rows;
    let mut acc = Poly::one(ctx);
    let mut covered = Echelon::new(ctx, n);
    for i in 0..n {
        let mut e = vec![0u64; n];
        e[i] = 1;
        if covered.contains(&e) {
            continue;
        }
        let (f, krylov) = local_min_poly(m, &e);
        for v in &krylov {
            covered.insert(v);
        }
        acc = lcm(&acc, &f);
    }
    acc
}

fn lcm(a: &Poly, b: &Poly) -> Poly {
    let g = a.gcd(b);
    a.mul(b).divrem(&g).0.monic()
}

/// Minimal polynomial of v under M (the monic generator of {f : v·f(M) = 0})
/// together with the Krylov vectors v, vM, … spanning its cyclic space.
pub fn local_min_poly(m: &Mat, v: &[u64]) -> (Poly, Vec<Vec<u64>>) {
    let ctx = &m.ctx;
    let n = m.rows;
    let mut te = TrackedEchelon::new(ctx, n);
    let mut krylov = Vec::new();
    let mut cur = v.to_vec();
    loop {
        if let Some(comb) = te.express_or_insert(&cur) {
            // cur = Σ comb_i krylov_i  ⇒  x^k - Σ comb_i x^i
            let k = krylov.len();
            let mut coeffs: Vec<u64> = comb.iter().map(|&c| ctx.neg(c)).collect();
            coeffs.resize(k, 0);
            coeffs.push(1);
            return (Poly::new(ctx, coeffs), krylov);
        }
        krylov.push(cur.clone());
        cur = vec_mat(&cur, m);
    }
}

/// Characteristic polynomial det(xI - M) via Hessenberg reduction.
pub fn char_poly(m: &Mat) -> Poly {
    assert!(m.is_square());
    let ctx = m.ctx.clone();
    let n = m.rows;
    let mut h = m.clone();
    // reduce to upper Hessenberg by similarity
    for c in 0..n.saturating_sub(2) {
        let Some(piv) = (c + 1..n).find(|&i| h.get(i, c) != 0) else { continue };
        if piv != c + 1 {
            let r = c + 1;
            for j in 0..n {
                h.data.swap(piv * n + j, r * n + j);
            }
            for i in 0..n {
                h.data.swap(i * n + piv, i * n + r);
            }
        }
        let inv = ctx.inv(h.get(c + 1, c));
        for i in c + 2..n {
            let f = ctx.mul(h.get(i, c), inv);
            if f == 0 {
                continue;
            }
            // row_i -= f row_{c+1}; col_{c+1} += f col_i
            for j in 0..n {
                let v = ctx.sub(h.get(i, j), ctx.mul(f, h.get(c + 1, j)));
                h.set(i, j, v);
            }
            for r in 0..n {
                let v = ctx.add(h.get(r, c + 1), ctx.mul(f, h.get(r, i)));
                h.set(r, c + 1, v);
            }
        }
    }
    // recurrence on leading principal minors
    let mut polys: Vec<Poly> = vec![Poly::one(&ctx)];
    for k in 0..n {
        let x_minus = Poly::new(&ctx, vec![ctx.neg(h.get(k, k)), 1]);
        let mut pk = x_minus.mul(&polys[k]);
        let mut prod = 1u64;
        for i in (0..k).rev() {
            prod = ctx.mul(prod, h.get(i + 1, i));
            let c = ctx.mul(prod, h.get(i, k));
            if c != 0 {
                pk = pk.sub(&polys[i].scale(c));
            }
        }
        polys.push(pk);
    }
    polys.pop().unwrap()
}

/// One companion block of a generalized Jordan form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JordanBlock {
    pub a: Poly,
    pub c: usize,
    pub start: usize,
}

impl JordanBlock {
    pub fn size(&self) -> usize {
        self.a.deg() * self.c
    }
}

#[derive(Clone, Debug)]
pub struct JordanForm {
    pub j: Mat,
    pub p: Mat,
    pub blocks: Vec<JordanBlock>,
}

impl JordanForm {
    /// Block invariants (a, c) in canonical order.
    pub fn invariants(&self) -> Vec<(Poly, usize)> {
        self.blocks.iter().map(|b| (b.a.clone(), b.c)).collect()
    }
}

pub(crate) fn poly_order(a: &Poly, b: &Poly) -> std::cmp::Ordering {
    a.deg().cmp(&b.deg()).then_with(|| a.coeffs.cmp(&b.coeffs))
}

/// One primary component of M: irreducible a, exponent, basis rows and
/// the cyclic generators with their exponents.
#[derive(Clone, Debug)]
pub struct PrimaryPart {
    pub a: Poly,
    pub exponent: usize,
    /// (generator row vector, exponent) sorted by exponent descending
    pub gens: Vec<(Vec<u64>, usize)>,
}

/// Primary decomposition with cyclic generators per component.
pub fn primary_parts(m: &Mat) -> Vec<PrimaryPart> {
    let ctx = &m.ctx;
    let n = m.rows;
    let mp = min_poly(m);
    let facs = poly_factor(&mp).expect("nonzero minimal polynomial");
    let mut out = Vec::new();
    for (a, c) in facs {
        let na = m.eval_poly(&a);
        // restrict to primary component V_a = ker a(M)^c
        let comp = na.pow(c as u64).kernel_rows();
        let basis = Mat::from_rows_cols(ctx, comp.len(), n, &comp);
        // kernels K_j = ker N^j ∩ V_a for j = 0..=c, as subspaces of ctx^n
        let mut kers: Vec<Subspace> = vec![Subspace::zero(ctx, n)];
        let mut npow = Mat::identity(ctx, n);
        for _ in 1..=c {
            npow = npow.mul(&na);
            let k = Subspace::from_rows(ctx, n, &npow.kernel_rows());
            kers.push(k);
        }
        let _ = &basis;
        let deg = a.deg();
        let mut gens: Vec<(Vec<u64>, usize)> = Vec::new();
        // generators chosen from the top layer down; a candidate of
        // exponent j must be independent modulo K_{j-1} + N·K_{j+1} + earlier.
        for j in (1..=c).rev() {
            let mut s = Echelon::new(ctx, n);
            for v in kers[j - 1].rows() {
                s.insert(&v);
            }
            if j < c {
                for v in kers[j + 1].rows() {
                    s.insert(&vec_mat(&v, &na));
                }
            }
            for (g, e) in &gens {
                // contributions of earlier generators at this layer
                if *e >= j {
                    let mut w = g.clone();
                    for _ in 0..(*e - j) {
                        w = vec_mat(&w, &na);
                    }
                    let mut u = w;
                    for _ in 0..deg {
                        s.insert(&u);
                        u = vec_mat(&u, m);
                    }
                }
            }
            for v in kers[j].rows() {
                if !s.contains(&v) {
                    let mut u = v.clone();
                    for _ in 0..deg {
                        s.insert(&u);
                        u = vec_mat(&u, m);
                    }
                    gens.push((v, j));
                }
            }
        }
        out.push(PrimaryPart { a: a.clone(), exponent: c, gens });
    }
    out
}

/// Generalized Jordan form: P·M·P⁻¹ = J with companion blocks C(a^c).
pub fn generalized_jordan(m: &Mat) -> JordanForm {
    let ctx = &m.ctx;
    let n = m.rows;
    let parts = primary_parts(m);
    let mut blocks: Vec<(Poly, usize, Vec<u64>)> = Vec::new();
    for part in &parts {
        for (g, e) in &part.gens {
            blocks.push((part.a.clone(), *e, g.clone()));
        }
    }
    blocks.sort_by(|x, y| poly_order(&x.0, &y.0).then(y.1.cmp(&x.1)));
    let mut prows = Vec::with_capacity(n);
    let mut jb = Vec::new();
    let mut comps = Vec::new();
    for (a, c, g) in &blocks {
        let size = a.deg() * c;
        let start = prows.len();
        let mut u = g.clone();
        for _ in 0..size {
            prows.push(u.clone());
            u = vec_mat(&u, m);
        }
        jb.push(JordanBlock { a: a.clone(), c: *c, start });
        comps.push(Mat::companion(&a.pow(*c)));
    }
    let p = Mat::from_rows_cols(ctx, n, n, &prows);
    let j = Mat::block_diag(ctx, &comps);
    JordanForm { j, p, blocks: jb }
}

/// Basis of {X : X·J = J·X} for J in generalized Jordan form with the given blocks.
fn jordan_centralizer(ctx: &FieldCtx, n: usize, blocks: &[JordanBlock]) -> Vec<Mat> {
    let mut out = Vec::new();
    for bu in blocks {
        for bv in blocks {
            if bu.a != bv.a {
                continue;
            }
            let deg = bu.a.deg();
            let (cu, cv) = (bu.c, bv.c);
            let jv = Mat::companion(&bv.a.pow(cv));
            let nv = cv * deg;
            let shift = cv.saturating_sub(cu);
            // allowed generator images: a^shift · x^l, l < deg·min(cu,cv)
            let ash = bv.a.pow(shift);
            for l in 0..deg * cu.min(cv) {
                let y = ash.mul(&Poly::x(ctx).pow(l));
                let mut y_vec = y.coeffs.clone();
                y_vec.resize(nv, 0);
                let mut x = Mat::zeros(ctx, n, n);
                let mut cur = y_vec;
                for i in 0..bu.size() {
                    x.row_mut(bu.start + i)[bv.start..bv.start + nv].copy_from_slice(&cur);
                    cur = vec_mat(&cur, &jv);
                }
                out.push(x);
            }
        }
    }
    out
}

/// Basis of the centralizer {X : X·M = M·X}, built from the Jordan structure.
pub fn centralizer_basis(m: &Mat) -> Vec<Mat> {
    let jf = generalized_jordan(m);
    let pinv = jf.p.inverse().expect("Jordan transform invertible");
    jordan_centralizer(&m.ctx, m.rows, &jf.blocks).into_iter().map(|x| pinv.mul(&x).mul(&jf.p)).collect()
}

/// Centralizer by solving the n² commutation equations directly.
pub fn centralizer_basis_solve(m: &Mat) -> Vec<Mat> {
    let ctx = &m.ctx;
    let n = m.rows;
    // unknown X, equation XM - MX = 0; column index of unknown (i,k) is i*n+k
    let mut sys = Mat::zeros(ctx, n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let eq = i * n + j;
            for k in 0..n {
                // (XM)_{ij} = Σ_k X_{ik} M_{kj}
                let v = sys.get(i * n + k, eq);
                sys.set(i * n + k, eq, ctx.add(v, m.get(k, j)));
                // (MX)_{ij} = Σ_k M_{ik} X_{kj}
                let v = sys.get(k * n + j, eq);
                sys.set(k * n + j, eq, ctx.sub(v, m.get(i, k)));
            }
        }
    }
    sys.kernel_rows()
        .into_iter()
        .map(|v| Mat { ctx: ctx.clone(), rows: n, cols: n, data: v })
        .collect()
}

/// Linear combination Σ c_i S_i.
pub fn combine(ctx: &FieldCtx, s: &[Mat], c: &[u64]) -> Mat {
    let mut out = Mat::zeros(ctx, s[0].rows, s[0].cols);
    for (m, &k) in s.iter().zip(c) {
        if k != 0 {
            axpy(ctx, &mut out.data, &m.data, k);
        }
    }
    out
}

/// An invertible element of span(S), or None when the span has none.
///
/// Seeded random search first; afterwards a deterministic search that is
/// exhaustive for small spans and otherwise uses the algebra generated by
/// the span: an invertible element of span(S) exists iff a maximal-rank
/// element is invertible, and within a span closed under products the
/// rank-raising step s ↦ s + c·t terminates after n steps.
pub fn invertible_in_span(s: &[Mat]) -> Result<Option<Mat>> {
    if s.is_empty() {
        return Err(Error::Invalid("empty span".into()));
    }
    let ctx = &s[0].ctx;
    let n = s[0].rows;
    if s.iter().any(|m| m.rows != n || m.cols != n) {
        return Err(Error::Dim("span elements must be square of equal size".into()));
    }
    let mut r = rng(0xA11CE);
    for _ in 0..32 {
        let c: Vec<u64> = (0..s.len()).map(|_| ctx.random(&mut r)).collect();
        let m = combine(ctx, s, &c);
        if m.rank() == n {
            return Ok(Some(m));
        }
    }
    let dim = s.len() as u32;
    let total = (ctx.q() as f64).powi(dim as i32);
    if total <= (1u64 << 18) as f64 {
        let q = ctx.q();
        let mut c = vec![0u64; s.len()];
        loop {
            let m = combine(ctx, s, &c);
            if m.rank() == n {
                return Ok(Some(m));
            }
            let mut i = 0;
            loop {
                if i == c.len() {
                    return Ok(None);
                }
                c[i] += 1;
                if c[i] < q {
                    break;
                }
                c[i] = 0;
                i += 1;
            }
        }
    }
    // rank-raising local search: from the current best element try adding
    // scalar multiples of each basis element, accepting any rank increase
    let mut best = combine(ctx, s, &vec![1; s.len()]);
    let mut best_rank = best.rank();
    let scalars: Vec<u64> = if ctx.q() <= 64 { (1..ctx.q()).collect() } else { (0..64).map(|_| ctx.random_nonzero(&mut r)).collect() };
    let mut improved = true;
    while improved && best_rank < n {
        improved = false;
        'outer: for t in s {
            for &c in &scalars {
                let cand = best.add(&t.scale(c));
                let rk = cand.rank();
                if rk > best_rank {
                    best = cand;
                    best_rank = rk;
                    improved = true;
                    break 'outer;
                }
            }
        }
        if !improved {
            for _ in 0..256 {
                let c: Vec<u64> = (0..s.len()).map(|_| ctx.random(&mut r)).collect();
                let cand = best.add(&combine(ctx, s, &c));
                let rk = cand.rank();
                if rk > best_rank {
                    best = cand;
                    best_rank = rk;
                    improved = true;
                    break;
                }
            }
        }
    }
    Ok(if best_rank == n { Some(best) } else { None })
}

/// Random element helper used by tests and generators.
pub fn random_vec(ctx: &FieldCtx, n: usize, r: &mut Rng64) -> Vec<u64> {
    (0..n).map(|_| ctx.random(r)).collect()
}

pub fn is_zero_vec(v: &[u64]) -> bool {
    v.iter().all(|&x| x == 0)
}

/// All nonzero vectors of ctx^n up to scalars (first nonzero coordinate 1).
pub fn projective_points(ctx: &FieldCtx, n: usize) -> Vec<Vec<u64>> {
    let q = ctx.q();
    let mut out = Vec::new();
    for lead in 0..n {
        let free = n - lead - 1;
        let count = q.pow(free as u32);
        for idx in 0..count {
            let mut v = vec![0u64; n];
            v[lead] = 1;
            let mut x = idx;
            for j in lead + 1..n {
                v[j] = x % q;
                x /= q;
            }
            out.push(v);
        }
    }
    out
}

pub fn random_in_range(r: &mut Rng64, lo: usize, hi: usize) -> usize {
    r.gen_range(lo..=hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::field_make;

    fn f(p: u64) -> FieldCtx {
        FieldCtx::prime(p).unwrap()
    }

    #[test]
    fn solve_and_null_space_basics() {
        let k = f(7);
        let i3 = Mat::identity(&k, 3);
        assert_eq!(solve_linear(&i3, &[1, 2, 3]).unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(null_space(&Mat::zeros(&k, 3, 3)).dim(), 3);
        let mut r = rng(5);
        for _ in 0..20 {
            let a = Mat::random(&k, 6, 6, &mut r);
            let b = random_vec(&k, 6, &mut r);
            if let Some(x) = a.solve(&b) {
                let ax: Vec<u64> = (0..6).map(|i| dot(&k, a.row(i), &x)).collect();
                assert_eq!(ax, b);
            } else {
                assert!(a.rank() < 6);
            }
            for v in null_space(&a).rows() {
                assert!((0..6).all(|i| dot(&k, a.row(i), &v) == 0));
            }
        }
        assert!(solve_linear(&i3, &[1, 2]).is_err());
    }

    #[test]
    fn inverse_and_det() {
        let mut r = rng(1);
        for ctx in [f(2), f(5), field_make(3, 2, 1).unwrap()] {
            for _ in 0..10 {
                let a = Mat::random_invertible(&ctx, 5, &mut r);
                let ai = a.inverse().unwrap();
                assert!(a.mul(&ai).is_identity());
                let b = Mat::random(&ctx, 5, 5, &mut r);
                assert_eq!(a.mul(&b).det(), ctx.mul(a.det(), b.det()));
            }
        }
    }

    #[test]
    fn rref_canonical_and_idempotent() {
        let k = f(3);
        let mut r = rng(2);
        for _ in 0..20 {
            let a = Mat::random(&k, 4, 6, &mut r);
            let (ra, _) = a.rref_only();
            let (rra, _) = ra.rref_only();
            assert_eq!(ra, rra);
            let g = Mat::random_invertible(&k, 4, &mut r);
            assert_eq!(Subspace::from_mat(&g.mul(&a)), Subspace::from_mat(&a));
        }
    }

    #[test]
    fn min_poly_examples() {
        let k = f(5);
        assert_eq!(min_poly(&Mat::identity(&k, 3)), Poly::from_ints(&k, &[-1, 1]));
        let a = Poly::from_ints(&k, &[2, 0, 1]);
        assert_eq!(min_poly(&Mat::companion(&a)), a);
        let c = Mat::companion(&a);
        let d = Mat::block_diag(&k, &[c.clone(), c]);
        let m = min_poly(&d);
        assert_eq!(m, a);
        assert!(d.eval_poly(&m).is_zero());
    }

    #[test]
    fn min_poly_divides_char_poly() {
        let mut r = rng(3);
        for ctx in [f(2), f(3), field_make(2, 2, 0).unwrap()] {
            for _ in 0..20 {
                let n = r.gen_range(1..7);
                let a = Mat::random(&ctx, n, n, &mut r);
                let m = min_poly(&a);
                let c = char_poly(&a);
                assert_eq!(c.deg(), n);
                assert!(a.eval_poly(&c).is_zero());
                assert!(c.rem(&m).is_zero());
            }
        }
    }

    fn jordan_check(m: &Mat) -> JordanForm {
        let jf = generalized_jordan(m);
        let pinv = jf.p.inverse().expect("P invertible");
        assert_eq!(jf.p.mul(m).mul(&pinv), jf.j);
        jf
    }

    #[test]
    fn jordan_examples() {
        let k = f(3);
        let a = Poly::from_ints(&k, &[1, 0, 1]);
        let c = Mat::companion(&a.pow(2));
        let jf = jordan_check(&c);
        assert_eq!(jf.invariants(), vec![(a, 2)]);
        assert_eq!(jf.j, c);
    }

    #[test]
    fn jordan_round_trip() {
        let mut r = rng(4);
        for ctx in [f(2), f(3), f(5)] {
            for _ in 0..30 {
                let n = r.gen_range(1..9);
                let m = Mat::random(&ctx, n, n, &mut r);
                let jf = jordan_check(&m);
                let q = Mat::random_invertible(&ctx, n, &mut r);
                let conj = q.mul(&m).mul(&q.inverse().unwrap());
                let jf2 = jordan_check(&conj);
                assert_eq!(jf.j, jf2.j);
            }
        }
    }

    #[test]
    fn jordan_structured_round_trip() {
        // planted block structures with repeated factors
        let k = f(3);
        let mut r = rng(8);
        let a = Poly::from_ints(&k, &[1, 0, 1]);
        let b = Poly::from_ints(&k, &[2, 1]);
        for _ in 0..10 {
            let blocks = vec![
                Mat::companion(&a.pow(2)),
                Mat::companion(&a),
                Mat::companion(&b.pow(3)),
                Mat::companion(&b),
                Mat::companion(&b),
            ];
            let j = Mat::block_diag(&k, &blocks);
            let q = Mat::random_invertible(&k, j.rows, &mut r);
            let m = q.mul(&j).mul(&q.inverse().unwrap());
            let jf = jordan_check(&m);
            let inv: Vec<(usize, usize)> = jf.blocks.iter().map(|b| (b.a.deg(), b.c)).collect();
            assert_eq!(inv, vec![(1, 3), (1, 1), (1, 1), (2, 2), (2, 1)]);
        }
    }

    #[test]
    fn similarity_invariant_against_brute_force() {
        // all 2x2 matrices over GF(2): similar iff equal Jordan forms
        let k = f(2);
        let mats: Vec<Mat> = (0..16u64)
            .map(|b| Mat::from_rows(&k, &[vec![b & 1, (b >> 1) & 1], vec![(b >> 2) & 1, (b >> 3) & 1]]))
            .collect();
        let gl: Vec<Mat> = mats.iter().filter(|m| m.rank() == 2).cloned().collect();
        for x in &mats {
            for y in &mats {
                let similar = gl.iter().any(|g| g.mul(x) == y.mul(g));
                assert_eq!(similar, generalized_jordan(x).j == generalized_jordan(y).j);
            }
        }
    }

    #[test]
    fn centralizer_examples() {
        let k = f(3);
        let a = Poly::from_ints(&k, &[1, 2, 0, 1]);
        assert!(a.is_irreducible());
        let c = Mat::companion(&a);
        assert_eq!(centralizer_basis(&c).len(), 3);
        assert_eq!(centralizer_basis_solve(&c).len(), 3);
        assert_eq!(centralizer_basis(&Mat::identity(&k, 3)).len(), 9);
        let d = Mat::from_rows(&k, &[vec![0, 0], vec![0, 1]]);
        assert_eq!(centralizer_basis(&d).len(), 2);
    }

    #[test]
    fn centralizer_structural_matches_solve() {
        let mut r = rng(6);
        for ctx in [f(2), f(3)] {
            for _ in 0..15 {
                let n = r.gen_range(1..7);
                let m = if r.gen_bool(0.5) {
                    Mat::random(&ctx, n, n, &mut r)
                } else {
                    // many repeated eigenvalues
                    let mut d = Mat::zeros(&ctx, n, n);
                    for i in 0..n {
                        d.set(i, i, r.gen_range(0..2));
                        if i + 1 < n && r.gen_bool(0.5) {
                            d.set(i, i + 1, 1);
                        }
                    }
                    let q = Mat::random_invertible(&ctx, n, &mut r);
                    q.mul(&d).mul(&q.inverse().unwrap())
                };
                let s1 = centralizer_basis(&m);
                let s2 = centralizer_basis_solve(&m);
                for x in &s1 {
                    assert_eq!(x.mul(&m), m.mul(x));
                }
                let flat = |s: &[Mat]| Subspace::from_rows(&ctx, n * n, &s.iter().map(|x| x.data.clone()).collect::<Vec<_>>());
                assert_eq!(flat(&s1), flat(&s2));
            }
        }
    }

    #[test]
    fn invertible_in_span_examples() {
        let k = f(3);
        let i2 = Mat::identity(&k, 2);
        assert_eq!(invertible_in_span(&[i2.clone()]).unwrap(), Some(i2));
        let e11 = Mat::from_rows(&k, &[vec![1, 0], vec![0, 0]]);
        let e22 = Mat::from_rows(&k, &[vec![0, 0], vec![0, 1]]);
        let got = invertible_in_span(&[e11, e22]).unwrap().unwrap();
        assert_eq!(got.rank(), 2);
        let e12 = Mat::from_rows(&k, &[vec![0, 1], vec![0, 0]]);
        assert_eq!(invertible_in_span(&[e12]).unwrap(), None);
        assert!(invertible_in_span(&[]).is_err());
    }

    #[test]
    fn char_poly_companion() {
        let k = f(7);
        let a = Poly::from_ints(&k, &[3, 1, 4, 1]);
        assert_eq!(char_poly(&Mat::companion(&a)), a);
    }

    #[test]
    fn subspace_ops() {
        let k = f(5);
        let a = Subspace::from_rows(&k, 3, &[vec![1, 0, 0], vec![0, 1, 0]]);
        let b = Subspace::from_rows(&k, 3, &[vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(a.intersect(&b).dim(), 1);
        assert_eq!(a.sum(&b).dim(), 3);
        assert_eq!(a.annihilator(), Subspace::from_rows(&k, 3, &[vec![0, 0, 1]]));
        assert_eq!(projective_points(&k, 2).len(), 6);
    }
}
