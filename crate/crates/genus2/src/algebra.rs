//! Finite-dimensional commutative algebras over a `FieldCtx`, with elements
//! given as coordinate vectors: radicals, Frobenius-fixed parts, primitive
//! idempotents and unit tests.

use crate::gf::{upoly, FieldCtx, Poly};
use crate::linalg::{axpy, vec_mat, Mat, Subspace, TrackedEchelon};

pub trait CommAlgebra {
    fn ctx(&self) -> &FieldCtx;
    fn dim(&self) -> usize;
    fn mul(&self, a: &[u64], b: &[u64]) -> Vec<u64>;
    fn one(&self) -> Vec<u64>;

    fn add(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        a.iter().zip(b).map(|(x, y)| self.ctx().add(*x, *y)).collect()
    }
    fn sub(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        a.iter().zip(b).map(|(x, y)| self.ctx().sub(*x, *y)).collect()
    }
    fn scale(&self, a: &[u64], c: u64) -> Vec<u64> {
        a.iter().map(|x| self.ctx().mul(*x, c)).collect()
    }
    fn zero(&self) -> Vec<u64> {
        vec![0; self.dim()]
    }
    fn pow(&self, a: &[u64], mut e: u64) -> Vec<u64> {
        let mut r = self.one();
        let mut b = a.to_vec();
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(&r, &b);
            }
            b = self.mul(&b, &b);
            e >>= 1;
        }
        r
    }
    /// a ↦ a^q, an F_q-linear map in a commutative algebra.
    fn frob(&self, a: &[u64]) -> Vec<u64> {
        self.pow(a, self.ctx().q())
    }
    /// Matrix of r ↦ r·a on the algebra.
    fn mult_matrix(&self, a: &[u64]) -> Mat {
        let n = self.dim();
        let mut m = Mat::zeros(self.ctx(), n, n);
        for i in 0..n {
            let mut e = vec![0u64; n];
            e[i] = 1;
            let row = self.mul(&e, a);
            m.row_mut(i).copy_from_slice(&row);
        }
        m
    }
    fn is_unit(&self, a: &[u64]) -> bool {
        self.mult_matrix(a).rank() == self.dim()
    }
    fn inverse(&self, a: &[u64]) -> Option<Vec<u64>> {
        // solve x·M_a = 1
        let m = self.mult_matrix(a);
        let one = Mat::from_rows(self.ctx(), &[self.one()]);
        m.solve_left(&one).map(|x| x.row(0).to_vec())
    }
}

/// Algebra given by structure constants on a basis.
#[derive(Clone, Debug)]
pub struct StructAlgebra {
    pub ctx: FieldCtx,
    pub table: Vec<Vec<Vec<u64>>>,
    pub unit: Vec<u64>,
}

impl StructAlgebra {
    /// Build from a basis of square matrices closed under multiplication and
    /// containing the identity. Returns None when the span is not closed.
    pub fn from_matrices(basis: &[Mat]) -> Option<StructAlgebra> {
        let ctx = basis[0].ctx.clone();
        let n = basis.len();
        let flat: Vec<Vec<u64>> = basis.iter().map(|m| m.data.clone()).collect();
        let span = Subspace::from_rows(&ctx, flat[0].len(), &flat);
        if span.dim() != n {
            return None;
        }
        let coords = |v: &[u64]| -> Option<Vec<u64>> {
            let c = span.coords(v)?;
            // convert RREF coordinates to coordinates in `basis`
            Some(c)
        };
        // change of basis from RREF rows to the given basis
        let to_rref: Vec<Vec<u64>> = flat.iter().map(|v| coords(v).unwrap()).collect();
        let tr = Mat::from_rows(&ctx, &to_rref).inverse()?;
        let express = |v: &[u64]| -> Option<Vec<u64>> { coords(v).map(|c| vec_mat(&c, &tr)) };
        let mut table = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in 0..n {
                table[i][j] = express(&basis[i].mul(&basis[j]).data)?;
            }
        }
        let id = Mat::identity(&ctx, basis[0].rows);
        let unit = express(&id.data)?;
        Some(StructAlgebra { ctx, table, unit })
    }

    pub fn element(&self, basis: &[Mat], a: &[u64]) -> Mat {
        crate::linalg::combine(&self.ctx, basis, a)
    }
}

impl CommAlgebra for StructAlgebra {
    fn ctx(&self) -> &FieldCtx {
        &self.ctx
    }
    fn dim(&self) -> usize {
        self.unit.len()
    }
    fn mul(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let n = self.dim();
        let mut out = vec![0u64; n];
        for i in 0..n {
            if a[i] == 0 {
                continue;
            }
            for j in 0..n {
                if b[j] == 0 {
                    continue;
                }
                let c = self.ctx.mul(a[i], b[j]);
                axpy(&self.ctx, &mut out, &self.table[i][j], c);
            }
        }
        out
    }
    fn one(&self) -> Vec<u64> {
        self.unit.clone()
    }
}

/// Elements of the subspace spanned by `basis` on which `f` vanishes,
/// where `f` is linear.
fn kernel_of<F: Fn(&[u64]) -> Vec<u64>>(ctx: &FieldCtx, n: usize, basis: &[Vec<u64>], f: F) -> Vec<Vec<u64>> {
    if basis.is_empty() {
        return Vec::new();
    }
    let imgs: Vec<Vec<u64>> = basis.iter().map(|b| f(b)).collect();
    let m = Mat::from_rows(ctx, &imgs);
    let b = Mat::from_rows_cols(ctx, basis.len(), n, basis);
    m.kernel_rows().iter().map(|c| vec_mat(c, &b)).collect()
}

/// Jacobson radical of the subalgebra spanned by `basis` (nilpotent elements).
pub fn radical<A: CommAlgebra>(alg: &A, basis: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = alg.dim();
    let q = alg.ctx().q() as f64;
    let mut r = 1u32;
    while q.powi(r as i32) < n.max(1) as f64 {
        r += 1;
    }
    kernel_of(alg.ctx(), n, basis, |b| {
        let mut x = b.to_vec();
        for _ in 0..r {
            x = alg.frob(&x);
        }
        x
    })
}

/// {a in span(basis) : a^q = a}.
pub fn frobenius_fixed<A: CommAlgebra>(alg: &A, basis: &[Vec<u64>]) -> Vec<Vec<u64>> {
    kernel_of(alg.ctx(), alg.dim(), basis, |b| alg.sub(&alg.frob(b), b))
}

/// Minimal polynomial of `a` inside the algebra with identity `unit`.
pub fn element_min_poly<A: CommAlgebra>(alg: &A, a: &[u64], unit: &[u64]) -> Poly {
    let ctx = alg.ctx();
    let mut te = TrackedEchelon::new(ctx, alg.dim());
    let mut cur = unit.to_vec();
    let mut k = 0;
    loop {
        if let Some(comb) = te.express_or_insert(&cur) {
            let mut coeffs: Vec<u64> = comb.iter().map(|&c| ctx.neg(c)).collect();
            coeffs.resize(k, 0);
            coeffs.push(1);
            return Poly::new(ctx, coeffs);
        }
        k += 1;
        cur = alg.mul(&cur, a);
    }
}

/// Primitive idempotents of the commutative subalgebra spanned by `basis`
/// whose identity is `unit`. Deterministic: each Frobenius-fixed basis
/// element splits the current idempotents through Lagrange interpolation
/// at its eigenvalues (all in F_q since the element satisfies a^q = a).
pub fn primitive_idempotents<A: CommAlgebra>(alg: &A, basis: &[Vec<u64>], unit: &[u64]) -> Vec<Vec<u64>> {
    let ctx = alg.ctx().clone();
    let fixed = frobenius_fixed(alg, basis);
    let mut idems = vec![unit.to_vec()];
    for b in &fixed {
        let mut next = Vec::new();
        for e in &idems {
            let y = alg.mul(b, e);
            let f = element_min_poly(alg, &y, e);
            let roots = upoly::roots(&ctx, &f.coeffs, &mut crate::gf::rng(7));
            if roots.len() <= 1 {
                next.push(e.clone());
                continue;
            }
            for &lam in &roots {
                let mut acc = e.clone();
                for &mu in roots.iter().filter(|&&m| m != lam) {
                    let lin = alg.sub(&y, &alg.scale(e, mu));
                    let c = ctx.inv(ctx.sub(lam, mu));
                    acc = alg.scale(&alg.mul(&acc, &lin), c);
                }
                next.push(acc);
            }
        }
        idems = next;
    }
    idems
}

/// The polynomial ring F_q[x]/(m) with the monomial basis.
#[derive(Clone, Debug)]
pub struct QuotientRing {
    pub ctx: FieldCtx,
    pub m: Poly,
}

impl QuotientRing {
    pub fn new(m: &Poly) -> QuotientRing {
        QuotientRing { ctx: m.ctx.clone(), m: m.monic() }
    }
    pub fn reduce(&self, p: &Poly) -> Vec<u64> {
        let mut v = p.rem(&self.m).coeffs;
        v.resize(self.dim(), 0);
        v
    }
    pub fn x(&self) -> Vec<u64> {
        self.reduce(&Poly::x(&self.ctx))
    }
    pub fn to_poly(&self, a: &[u64]) -> Poly {
        Poly::new(&self.ctx, a.to_vec())
    }
    /// p(a) for a polynomial p.
    pub fn eval_at(&self, p: &Poly, a: &[u64]) -> Vec<u64> {
        let mut r = self.zero();
        for &c in p.coeffs.iter().rev() {
            r = self.mul(&r, a);
            r[0] = self.ctx.add(r[0], c);
        }
        r
    }
}

impl CommAlgebra for QuotientRing {
    fn ctx(&self) -> &FieldCtx {
        &self.ctx
    }
    fn dim(&self) -> usize {
        self.m.deg()
    }
    fn mul(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let prod = upoly::mul(&self.ctx, a, b);
        let mut v = upoly::rem(&self.ctx, &prod, &self.m.coeffs);
        v.resize(self.dim(), 0);
        v
    }
    fn one(&self) -> Vec<u64> {
        let mut v = vec![0u64; self.dim()];
        if !v.is_empty() {
            v[0] = 1;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_ring_idempotents_and_radical() {
        let k = FieldCtx::prime(3).unwrap();
        // m = x^2 (x-1) (x^2+1)
        let m = Poly::from_ints(&k, &[0, 0, 1]).mul(&Poly::from_ints(&k, &[-1, 1])).mul(&Poly::from_ints(&k, &[1, 0, 1]));
        let r = QuotientRing::new(&m);
        let basis: Vec<Vec<u64>> = (0..r.dim())
            .map(|i| {
                let mut v = vec![0; r.dim()];
                v[i] = 1;
                v
            })
            .collect();
        let rad = radical(&r, &basis);
        assert_eq!(rad.len(), 1);
        let idem = primitive_idempotents(&r, &basis, &r.one());
        assert_eq!(idem.len(), 3);
        let mut sum = r.zero();
        for e in &idem {
            assert_eq!(r.mul(e, e), *e);
            sum = r.add(&sum, e);
        }
        assert_eq!(sum, r.one());
        assert!(r.is_unit(&r.one()));
        assert!(!r.is_unit(&r.x()));
        let u = r.add(&r.x(), &r.scale(&r.one(), 2));
        if r.is_unit(&u) {
            let inv = r.inverse(&u).unwrap();
            assert_eq!(r.mul(&u, &inv), r.one());
        }
    }

    #[test]
    fn struct_algebra_from_diagonal_matrices() {
        let k = FieldCtx::prime(5).unwrap();
        let e11 = Mat::from_rows(&k, &[vec![1, 0], vec![0, 0]]);
        let e22 = Mat::from_rows(&k, &[vec![0, 0], vec![0, 1]]);
        let a = StructAlgebra::from_matrices(&[e11, e22]).unwrap();
        let basis = vec![vec![1, 0], vec![0, 1]];
        assert_eq!(primitive_idempotents(&a, &basis, &a.one()).len(), 2);
        assert!(radical(&a, &basis).is_empty());
    }
}
