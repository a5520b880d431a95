//! Systems of alternating forms: witnesses, radicals, centroid, residue-field
//! rewriting, adjoint algebra and genus.

use crate::algebra::{primitive_idempotents, radical, element_min_poly, CommAlgebra, StructAlgebra};
use crate::error::{Error, Result};
use crate::gf::{rng, upoly, ExtField, FieldCtx, FieldLike, Poly};
use crate::linalg::{centralizer_basis, combine, projective_points, vec_mat, Mat, Subspace};

use rand::Rng;

/// e alternating d×d Gram matrices; u∘v has coordinates (u·Φ_t·vᵀ)_t.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemOfForms {
    pub ctx: FieldCtx,
    pub d: usize,
    pub e: usize,
    pub forms: Vec<Mat>,
}

pub fn is_alternating(m: &Mat) -> bool {
    m.is_square()
        && (0..m.rows).all(|i| m.get(i, i) == 0 && (i + 1..m.rows).all(|j| m.ctx.add(m.get(i, j), m.get(j, i)) == 0))
}

impl SystemOfForms {
    pub fn new(ctx: &FieldCtx, d: usize, forms: Vec<Mat>) -> Result<SystemOfForms> {
        if forms.is_empty() {
            return Err(Error::Invalid("a system needs at least one form".into()));
        }
        for (t, f) in forms.iter().enumerate() {
            if f.rows != d || f.cols != d {
                return Err(Error::Dim(format!("form {t} is {}x{}, expected {d}x{d}", f.rows, f.cols)));
            }
            if f.ctx != *ctx {
                return Err(Error::FieldMismatch);
            }
            if !is_alternating(f) {
                return Err(Error::NotAlternating(format!("form {t}")));
            }
        }
        Ok(SystemOfForms { ctx: ctx.clone(), d, e: forms.len(), forms })
    }

    pub fn from_ints(ctx: &FieldCtx, forms: &[Vec<Vec<i64>>]) -> Result<SystemOfForms> {
        let d = forms.first().map_or(0, |f| f.len());
        SystemOfForms::new(ctx, d, forms.iter().map(|f| Mat::from_ints(ctx, f)).collect())
    }

    pub fn zero(ctx: &FieldCtx, d: usize, e: usize) -> SystemOfForms {
        SystemOfForms { ctx: ctx.clone(), d, e, forms: vec![Mat::zeros(ctx, d, d); e] }
    }

    /// u∘v as a coordinate vector of length e.
    pub fn eval(&self, u: &[u64], v: &[u64]) -> Vec<u64> {
        self.forms
            .iter()
            .map(|f| crate::linalg::dot(&self.ctx, &vec_mat(u, f), v))
            .collect()
    }

    /// The system {T·Φ_t·Tᵀ} for a k×d matrix T (restriction along T).
    pub fn congruent(&self, t: &Mat) -> SystemOfForms {
        let tt = t.transpose();
        let forms = self.forms.iter().map(|f| t.mul(f).mul(&tt)).collect();
        SystemOfForms { ctx: self.ctx.clone(), d: t.rows, e: self.e, forms }
    }

    /// The system {Σ_t h_ts Φ_t}_s for an e×e' matrix h.
    pub fn recombine(&self, h: &Mat) -> SystemOfForms {
        let forms = (0..h.cols)
            .map(|s| {
                let c: Vec<u64> = (0..self.e).map(|t| h.get(t, s)).collect();
                combine(&self.ctx, &self.forms, &c)
            })
            .collect();
        SystemOfForms { ctx: self.ctx.clone(), d: self.d, e: h.cols, forms }
    }

    /// Entrywise Frobenius twist.
    pub fn frob(&self, tau: u32) -> SystemOfForms {
        let forms = self.forms.iter().map(|f| f.frob(tau)).collect();
        SystemOfForms { ctx: self.ctx.clone(), d: self.d, e: self.e, forms }
    }

    /// Block-diagonal sum of two systems with the same e.
    pub fn direct_sum(&self, o: &SystemOfForms) -> SystemOfForms {
        assert_eq!(self.e, o.e);
        let forms = self.forms.iter().zip(&o.forms).map(|(a, b)| Mat::block_diag(&self.ctx, &[a.clone(), b.clone()])).collect();
        SystemOfForms { ctx: self.ctx.clone(), d: self.d + o.d, e: self.e, forms }
    }

    /// Concatenation [Φ_1 | … | Φ_e], whose left kernel is the radical.
    fn stacked(&self) -> Mat {
        let mut m = Mat::zeros(&self.ctx, self.d, self.d * self.e);
        for (t, f) in self.forms.iter().enumerate() {
            m.set_block(0, t * self.d, f);
        }
        m
    }

    /// Matrix with one row per pair i<j holding the value of e_i∘e_j.
    fn value_rows(&self) -> Mat {
        let mut rows = Vec::new();
        for i in 0..self.d {
            for j in i + 1..self.d {
                rows.push(self.forms.iter().map(|f| f.get(i, j)).collect::<Vec<u64>>());
            }
        }
        Mat::from_rows_cols(&self.ctx, rows.len(), self.e, &rows)
    }

    pub fn is_fully_nondegenerate(&self) -> bool {
        let (rad, _, codim) = radicals(self);
        rad.dim() == 0 && codim == 0
    }
}

/// (φ, φ̂, τ) with φ·Φ^B_s·φᵀ = Σ_t φ̂[t][s]·τ(Φ^A_t): the semilinear map
/// u ↦ τ(u)·φ carries A to B with u∘v mapping to τ(u∘v)·φ̂.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoIsometry {
    pub phi: Mat,
    pub phi_hat: Mat,
    pub tau: u32,
}

impl PseudoIsometry {
    pub fn identity(s: &SystemOfForms) -> PseudoIsometry {
        PseudoIsometry { phi: Mat::identity(&s.ctx, s.d), phi_hat: Mat::identity(&s.ctx, s.e), tau: 0 }
    }

    /// Exact check of the witness equation on all forms.
    pub fn verify(&self, a: &SystemOfForms, b: &SystemOfForms) -> bool {
        if a.ctx != b.ctx || a.d != b.d || a.e != b.e {
            return false;
        }
        if self.phi.rows != a.d || self.phi.cols != a.d || self.phi_hat.rows != a.e || self.phi_hat.cols != a.e {
            return false;
        }
        if self.phi.rank() != a.d || self.phi_hat.rank() != a.e {
            return false;
        }
        let lhs = b.congruent(&self.phi);
        let rhs = a.frob(self.tau).recombine(&self.phi_hat);
        lhs.forms == rhs.forms
    }

    /// The image system B determined by A and the witness.
    pub fn apply(&self, a: &SystemOfForms) -> SystemOfForms {
        let pinv = self.phi.inverse().expect("invertible φ");
        a.frob(self.tau).recombine(&self.phi_hat).congruent(&pinv)
    }

    /// Witness for B → A from a witness for A → B.
    pub fn inverse(&self) -> PseudoIsometry {
        let k = self.phi.ctx.k();
        let t = (k - self.tau % k) % k;
        let m = self.phi.frob(t);
        let h = self.phi_hat.frob(t);
        PseudoIsometry { phi: m.inverse().expect("invertible φ"), phi_hat: h.inverse().expect("invertible φ̂"), tau: t }
    }

    /// Witness for A → C from self: A → B and o: B → C.
    pub fn compose(&self, o: &PseudoIsometry) -> PseudoIsometry {
        let k = self.phi.ctx.k();
        PseudoIsometry {
            phi: self.phi.frob(o.tau).mul(&o.phi),
            phi_hat: self.phi_hat.frob(o.tau).mul(&o.phi_hat),
            tau: (self.tau + o.tau) % k,
        }
    }
}

/// (radical, radical, image codimension). Left and right radicals coincide
/// for alternating systems.
pub fn radicals(s: &SystemOfForms) -> (Subspace, Subspace, usize) {
    let rad = Subspace::from_rows(&s.ctx, s.d, &s.stacked().kernel_rows());
    let codim = s.e - s.value_rows().rank();
    (rad.clone(), rad, codim)
}

/// The fully nondegenerate core of a system, with the bases used.
#[derive(Clone, Debug)]
pub struct NondegCore {
    pub sys: SystemOfForms,
    /// rows: a complement of the radical (d'×d)
    pub v_basis: Mat,
    /// rows: a basis of the radical
    pub v_rad: Mat,
    /// rows: a basis of the image of ∘ (e'×e)
    pub w_basis: Mat,
    /// rows: a complement of the image
    pub w_rest: Mat,
}

impl NondegCore {
    /// [v_basis; v_rad], invertible d×d.
    pub fn v_full(&self) -> Mat {
        Mat::vstack(&self.sys.ctx, &[&self.v_basis, &self.v_rad], self.v_basis.cols)
    }
    pub fn w_full(&self) -> Mat {
        Mat::vstack(&self.sys.ctx, &[&self.w_basis, &self.w_rest], self.w_basis.cols)
    }
}

pub fn nondegenerate_core(s: &SystemOfForms) -> NondegCore {
    let ctx = &s.ctx;
    let (rad, _, _) = radicals(s);
    let comp = rad.complement_basis();
    let v_basis = Mat::from_rows_cols(ctx, comp.len(), s.d, &comp);
    let image = Subspace::from_mat(&s.value_rows());
    let w_rest_rows = image.complement_basis();
    let core_v = s.congruent(&v_basis);
    // express values in the image basis: Φ'_u = Σ_t Φ_t·c_{tu} with c a right inverse of the basis
    let wb = image.basis.clone();
    let forms = if image.dim() == s.e {
        // full image: re-express in the RREF basis, i.e. values y with value = y·wb
        let inv = wb.inverse().expect("full image basis");
        core_v.recombine(&inv)
    } else {
        // coordinates y of a value w in the image basis are w at the pivot columns
        let mut sel = Mat::zeros(ctx, s.e, image.dim());
        for (i, &p) in image.pivots.iter().enumerate() {
            sel.set(p, i, 1);
        }
        core_v.recombine(&sel)
    };
    let sys = SystemOfForms { ctx: ctx.clone(), d: v_basis.rows, e: image.dim(), forms: forms.forms };
    NondegCore {
        sys,
        v_basis,
        v_rad: rad.basis.clone(),
        w_basis: wb,
        w_rest: Mat::from_rows_cols(ctx, w_rest_rows.len(), s.e, &w_rest_rows),
    }
}

/// Extend a witness between two cores to the ambient systems (equal d and e).
pub fn extend_core_witness(a: &NondegCore, b: &NondegCore, w: &PseudoIsometry) -> PseudoIsometry {
    let ctx = &a.sys.ctx;
    let rad = a.v_rad.rows;
    let rest = a.w_rest.rows;
    let phi_mid = Mat::block_diag(ctx, &[w.phi.clone(), Mat::identity(ctx, rad)]);
    let hat_mid = Mat::block_diag(ctx, &[w.phi_hat.clone(), Mat::identity(ctx, rest)]);
    let ta = a.v_full().frob(w.tau);
    let sa = a.w_full().frob(w.tau);
    PseudoIsometry {
        phi: ta.inverse().unwrap().mul(&phi_mid).mul(&b.v_full()),
        phi_hat: sa.inverse().unwrap().mul(&hat_mid).mul(&b.w_full()),
        tau: w.tau,
    }
}

/// Centroid of a fully nondegenerate system: pairs (X, W) with
/// X·Φ_s = Σ_t W_ts·Φ_t for every s.
#[derive(Clone, Debug)]
pub struct CentroidData {
    pub ctx: FieldCtx,
    pub basis: Vec<(Mat, Mat)>,
    /// radical, as coordinate vectors over `basis`
    pub radical: Vec<Vec<u64>>,
    /// primitive idempotents, as coordinate vectors over `basis`
    pub idempotents: Vec<Vec<u64>>,
    pub is_local: bool,
    pub is_field: bool,
    /// when a field: a generator θ (coordinates) with minimal polynomial μ
    pub residue: Option<(Vec<u64>, Poly)>,
    pub alg: StructAlgebra,
}

impl CentroidData {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    /// (X, W) for a coordinate vector.
    pub fn element(&self, c: &[u64]) -> (Mat, Mat) {
        let xs: Vec<Mat> = self.basis.iter().map(|b| b.0.clone()).collect();
        let ws: Vec<Mat> = self.basis.iter().map(|b| b.1.clone()).collect();
        (combine(&self.ctx, &xs, c), combine(&self.ctx, &ws, c))
    }
}

/// An invertible combination Σ c_t Φ_t, searching projective points first
/// when e = 2 and q is small, then seeded random draws.
pub fn invertible_combination(s: &SystemOfForms) -> Option<Vec<u64>> {
    let ctx = &s.ctx;
    if s.d % 2 == 1 {
        return None;
    }
    if s.e == 2 && ctx.q() <= 256 {
        for pt in projective_points(ctx, 2) {
            if combine(ctx, &s.forms, &pt).rank() == s.d {
                return Some(pt);
            }
        }
        return None;
    }
    let mut r = rng(0xC0FFEE);
    for _ in 0..24 {
        let c: Vec<u64> = (0..s.e).map(|_| ctx.random(&mut r)).collect();
        if combine(ctx, &s.forms, &c).rank() == s.d {
            return Some(c);
        }
    }
    None
}

fn centroid_pairs(s: &SystemOfForms) -> Vec<(Mat, Mat)> {
    let ctx = &s.ctx;
    let (d, e) = (s.d, s.e);
    if let Some(c) = invertible_combination(s) {
        // X = Σ_{a,b} W_ab c_b Φ_a P⁻¹ with P = Σ c_t Φ_t; unknowns W only
        let pinv = combine(ctx, &s.forms, &c).inverse().unwrap();
        let apinv: Vec<Mat> = s.forms.iter().map(|f| f.mul(&pinv)).collect();
        let mut rows = Vec::with_capacity(e * e);
        for a in 0..e {
            let prods: Vec<Mat> = s.forms.iter().map(|f| apinv[a].mul(f)).collect();
            for b in 0..e {
                let mut row = Vec::with_capacity(e * d * d);
                for (sidx, pr) in prods.iter().enumerate() {
                    let mut blk = pr.scale(c[b]);
                    if sidx == b {
                        blk = blk.sub(&s.forms[a]);
                    }
                    row.extend_from_slice(&blk.data);
                }
                rows.push(row);
            }
        }
        let sys = Mat::from_rows(ctx, &rows);
        return sys
            .kernel_rows()
            .into_iter()
            .map(|w| {
                let wm = Mat { ctx: ctx.clone(), rows: e, cols: e, data: w.clone() };
                let mut x = Mat::zeros(ctx, d, d);
                for a in 0..e {
                    let coef = (0..e).fold(0, |acc, b| ctx.add(acc, ctx.mul(wm.get(a, b), c[b])));
                    if coef != 0 {
                        x = x.add(&apinv[a].scale(coef));
                    }
                }
                (x, wm)
            })
            .collect();
    }
    // generic: unknowns X (d²) then W (e²)
    let n = d * d + e * e;
    let mut sys = Mat::zeros(ctx, n, e * d * d);
    for sidx in 0..e {
        let f = &s.forms[sidx];
        for i in 0..d {
            for j in 0..d {
                let col = sidx * d * d + i * d + j;
                // (XΦ_s)_ij = Σ_k X_ik Φ_s[k][j]
                for k in 0..d {
                    let v = f.get(k, j);
                    if v != 0 {
                        sys.set(i * d + k, col, v);
                    }
                }
                // - Σ_t W_ts Φ_t[i][j]
                for t in 0..e {
                    let v = s.forms[t].get(i, j);
                    if v != 0 {
                        sys.set(d * d + t * e + sidx, col, ctx.neg(v));
                    }
                }
            }
        }
    }
    sys.kernel_rows()
        .into_iter()
        .map(|v| {
            let x = Mat { ctx: ctx.clone(), rows: d, cols: d, data: v[..d * d].to_vec() };
            let w = Mat { ctx: ctx.clone(), rows: e, cols: e, data: v[d * d..].to_vec() };
            (x, w)
        })
        .collect()
}

/// Centroid of a fully nondegenerate system (quotients radicals first otherwise).
pub fn centroid(s: &SystemOfForms) -> CentroidData {
    let core;
    let s = if s.is_fully_nondegenerate() {
        s
    } else {
        core = nondegenerate_core(s);
        &core.sys
    };
    let ctx = s.ctx.clone();
    let basis = centroid_pairs(s);
    let mats: Vec<Mat> = basis.iter().map(|(x, w)| Mat::block_diag(&ctx, &[x.clone(), w.clone()])).collect();
    let alg = StructAlgebra::from_matrices(&mats).expect("centroid is a unital algebra");
    let n = basis.len();
    let coords: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            let mut v = vec![0u64; n];
            v[i] = 1;
            v
        })
        .collect();
    let rad = radical(&alg, &coords);
    let idem = primitive_idempotents(&alg, &coords, &alg.one());
    let is_local = idem.len() == 1;
    let is_field = is_local && rad.is_empty();
    let residue = if is_field { Some(field_generator(&alg)) } else { None };
    CentroidData { ctx, basis, radical: rad, idempotents: idem, is_local, is_field, residue, alg }
}

/// A generator of a finite field given as a commutative algebra.
fn field_generator<A: CommAlgebra>(alg: &A) -> (Vec<u64>, Poly) {
    let n = alg.dim();
    let one = alg.one();
    let mut r = rng(0x5EED);
    let mut tries = 0usize;
    loop {
        let cand: Vec<u64> = if tries < n {
            let mut v = vec![0u64; n];
            v[tries] = 1;
            v
        } else {
            (0..n).map(|_| alg.ctx().random(&mut r)).collect()
        };
        tries += 1;
        let mp = element_min_poly(alg, &cand, &one);
        if mp.deg() == n {
            return (cand, mp);
        }
    }
}

/// One direct factor cut out by a primitive centroid idempotent.
#[derive(Clone, Debug)]
pub struct CentroidFactor {
    /// rows: basis of the factor's V (d_i×d)
    pub v_basis: Mat,
    /// rows: basis of the factor's W (e_i×e)
    pub w_basis: Mat,
    pub sys: SystemOfForms,
}

/// Split a fully nondegenerate system at its centroid idempotents.
pub fn centroid_factors(s: &SystemOfForms, c: &CentroidData) -> Vec<CentroidFactor> {
    let ctx = &s.ctx;
    let mut out = Vec::new();
    for eps in &c.idempotents {
        let (x, w) = c.element(eps);
        let vb = Subspace::from_mat(&x).basis;
        let wb = Subspace::from_mat(&w).basis;
        let restricted = s.congruent(&vb);
        // values lie in the row space of wb, read coordinates at pivots
        let wsp = Subspace::from_mat(&wb);
        let mut sel = Mat::zeros(ctx, s.e, wsp.dim());
        for (i, &p) in wsp.pivots.iter().enumerate() {
            sel.set(p, i, 1);
        }
        let sys = restricted.recombine(&sel);
        out.push(CentroidFactor { v_basis: vb, w_basis: wb, sys });
    }
    out
}

/// A system rewritten over the centroid's residue field F = F_p[θ].
#[derive(Clone, Debug)]
pub struct ResidueRewrite {
    pub sys: SystemOfForms,
    /// F_p-basis v_i·θ^l of V (row index i·r + l), as a d×d matrix
    pub cv: Mat,
    /// F_p-basis w_t·θ^l of W
    pub cw: Mat,
    pub degree: usize,
}

/// Greedy basis of a module over F_p[θ] (θ acting by `act`).
fn module_basis(ctx: &FieldCtx, n: usize, act: &Mat, r: usize) -> Vec<Vec<u64>> {
    let mut ech = crate::linalg::Echelon::new(ctx, n);
    let mut gens = Vec::new();
    for i in 0..n {
        let mut e = vec![0u64; n];
        e[i] = 1;
        if ech.contains(&e) {
            continue;
        }
        gens.push(e.clone());
        let mut u = e;
        for _ in 0..r {
            ech.insert(&u);
            u = vec_mat(&u, act);
        }
    }
    gens
}

/// Rewrite over F_p[x]/(μ) using the centroid element θ = (X_θ, W_θ) whose
/// minimal polynomial is μ. The base field must be prime when r > 1.
pub fn rewrite_with_generator(s: &SystemOfForms, xt: &Mat, wt: &Mat, mu: &Poly) -> Result<ResidueRewrite> {
    let ctx = &s.ctx;
    let r = mu.deg();
    if r == 1 {
        return Ok(ResidueRewrite {
            sys: s.clone(),
            cv: Mat::identity(ctx, s.d),
            cw: Mat::identity(ctx, s.e),
            degree: 1,
        });
    }
    if !ctx.is_prime_field() {
        return Err(Error::Unsupported("centroid larger than a non-prime base field".into()));
    }
    let big = FieldCtx::with_modulus(ctx.p(), &mu.monic().coeffs)?;
    let expand = |gens: &[Vec<u64>], act: &Mat, n: usize| {
        let mut rows = Vec::new();
        for g in gens {
            let mut u = g.clone();
            for _ in 0..r {
                rows.push(u.clone());
                u = vec_mat(&u, act);
            }
        }
        Mat::from_rows_cols(ctx, rows.len(), n, &rows)
    };
    let vg = module_basis(ctx, s.d, xt, r);
    let wg = module_basis(ctx, s.e, wt, r);
    let cv = expand(&vg, xt, s.d);
    let cw = expand(&wg, wt, s.e);
    let cw_inv = cw.inverse().ok_or_else(|| Error::Internal("W is not free over the centroid".into()))?;
    if cv.rank() != s.d {
        return Err(Error::Internal("V is not free over the centroid".into()));
    }
    let (d2, e2) = (vg.len(), wg.len());
    let mut forms = vec![Mat::zeros(&big, d2, d2); e2];
    for i in 0..d2 {
        for j in 0..d2 {
            let val = s.eval(cv.row(i * r), cv.row(j * r));
            let coords = vec_mat(&val, &cw_inv);
            for t in 0..e2 {
                let el = big.from_digits(&coords[t * r..(t + 1) * r]);
                forms[t].set(i, j, el);
            }
        }
    }
    Ok(ResidueRewrite { sys: SystemOfForms::new(&big, d2, forms)?, cv, cw, degree: r })
}

/// Rewrite over the residue field of the centroid.
pub fn rewrite_over_residue(s: &SystemOfForms, c: &CentroidData) -> Result<ResidueRewrite> {
    let (theta, mu) = c
        .residue
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("centroid is not a field (radical dimension {})", c.radical.len())))?;
    let (xt, wt) = c.element(theta);
    rewrite_with_generator(s, &xt, &wt, mu)
}

/// A centroid element of `c` with minimal polynomial `mu`, if any.
pub fn centroid_root(c: &CentroidData, mu: &Poly) -> Option<Vec<u64>> {
    let (theta, mu_c) = c.residue.as_ref()?;
    if mu.deg() != mu_c.deg() {
        return None;
    }
    let ext = ExtField::new(&c.ctx, &mu_c.monic().coeffs);
    let lifted: Vec<Vec<u64>> = mu.coeffs.iter().map(|&a| ext.from_prime(a)).collect();
    let roots = upoly::roots(&ext, &lifted, &mut rng(11));
    let root = roots.first()?;
    // root = Σ_l root_l θ^l inside the centroid
    let mut acc = c.alg.zero();
    let mut pw = c.alg.one();
    for &coef in root.iter() {
        acc = c.alg.add(&acc, &c.alg.scale(&pw, coef));
        pw = c.alg.mul(&pw, theta);
    }
    Some(acc)
}

/// Translate a witness between two residue rewrites (over the same big
/// field) into an F_p-linear witness between the underlying systems.
pub fn descend_witness(a: &ResidueRewrite, b: &ResidueRewrite, w: &PseudoIsometry) -> PseudoIsometry {
    if a.degree == 1 {
        return w.clone();
    }
    let big = &w.phi.ctx;
    let base = a.cv.ctx.clone();
    let r = a.degree;
    let lift = |m: &Mat, n: usize| -> Mat {
        // coordinate map on F_p^(n·r): basis (i, l) ↦ τ(x)^l·row_i(m)
        let x = big.from_digits(&[0, 1]);
        let tx = big.frob(x, w.tau);
        let mut g = Mat::zeros(&base, n * r, n * r);
        for i in 0..n {
            let mut pw = 1u64;
            for l in 0..r {
                for j in 0..n {
                    let el = big.mul(pw, m.get(i, j));
                    let dig = big.digits(el);
                    for (ll, &dv) in dig.iter().enumerate().take(r) {
                        g.set(i * r + l, j * r + ll, dv);
                    }
                }
                pw = big.mul(pw, tx);
            }
        }
        g
    };
    let g = lift(&w.phi, a.sys.d);
    let gh = lift(&w.phi_hat, a.sys.e);
    PseudoIsometry {
        phi: a.cv.inverse().unwrap().mul(&g).mul(&b.cv),
        phi_hat: a.cw.inverse().unwrap().mul(&gh).mul(&b.cw),
        tau: 0,
    }
}

/// The adjoint algebra: pairs (L, R) with (uL)∘v = u∘(vR), i.e.
/// L·Φ_t = Φ_t·Rᵀ for all t. The involution swaps L and R.
#[derive(Clone, Debug)]
pub struct StarAlgebra {
    pub ctx: FieldCtx,
    pub d: usize,
    pub basis: Vec<(Mat, Mat)>,
    span: Subspace,
    to_basis: Mat,
}

impl StarAlgebra {
    fn from_pairs(ctx: &FieldCtx, d: usize, basis: Vec<(Mat, Mat)>) -> StarAlgebra {
        let flat: Vec<Vec<u64>> = basis.iter().map(|(l, r)| [l.data.clone(), r.data.clone()].concat()).collect();
        let span = Subspace::from_rows(ctx, 2 * d * d, &flat);
        let rref_coords: Vec<Vec<u64>> = flat.iter().map(|v| span.coords(v).unwrap()).collect();
        let to_basis = if basis.is_empty() { Mat::zeros(ctx, 0, 0) } else { Mat::from_rows(ctx, &rref_coords).inverse().unwrap() };
        StarAlgebra { ctx: ctx.clone(), d, basis, span, to_basis }
    }
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    /// Coordinates of a pair over the basis, if it lies in the algebra.
    pub fn coords(&self, l: &Mat, r: &Mat) -> Option<Vec<u64>> {
        let v = [l.data.clone(), r.data.clone()].concat();
        self.span.coords(&v).map(|c| vec_mat(&c, &self.to_basis))
    }
    /// Coordinates of the starred basis element i.
    pub fn star(&self, i: usize) -> Vec<u64> {
        let (l, r) = &self.basis[i];
        self.coords(r, l).expect("adjoint algebra closed under the involution")
    }
    /// Product (L1,R1)(L2,R2) = (L1L2, R2R1).
    pub fn product(a: &(Mat, Mat), b: &(Mat, Mat)) -> (Mat, Mat) {
        (a.0.mul(&b.0), b.1.mul(&a.1))
    }
}

fn adjoint_generic(s: &SystemOfForms) -> Vec<(Mat, Mat)> {
    let ctx = &s.ctx;
    let d = s.d;
    let mut sys = Mat::zeros(ctx, 2 * d * d, s.e * d * d);
    for (t, f) in s.forms.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                let col = t * d * d + i * d + j;
                for k in 0..d {
                    // (LΦ)_ij = Σ_k L_ik Φ_kj ; (ΦRᵀ)_ij = Σ_k Φ_ik R_jk
                    let a = f.get(k, j);
                    if a != 0 {
                        let v = ctx.add(sys.get(i * d + k, col), a);
                        sys.set(i * d + k, col, v);
                    }
                    let b = f.get(i, k);
                    if b != 0 {
                        let v = ctx.sub(sys.get(d * d + j * d + k, col), b);
                        sys.set(d * d + j * d + k, col, v);
                    }
                }
            }
        }
    }
    sys.kernel_rows()
        .into_iter()
        .map(|v| {
            (
                Mat { ctx: ctx.clone(), rows: d, cols: d, data: v[..d * d].to_vec() },
                Mat { ctx: ctx.clone(), rows: d, cols: d, data: v[d * d..].to_vec() },
            )
        })
        .collect()
}

/// Adjoint algebra of a system. With an invertible combination P the left
/// parts form the joint centralizer of the slopes Φ_t·P⁻¹ and R = (P⁻¹LP)ᵀ.
pub fn adjoint(s: &SystemOfForms) -> StarAlgebra {
    let ctx = &s.ctx;
    let d = s.d;
    let Some(c) = invertible_combination(s).filter(|_| d > 0) else {
        return StarAlgebra::from_pairs(ctx, d, adjoint_generic(s));
    };
    let p = combine(ctx, &s.forms, &c);
    let pinv = p.inverse().unwrap();
    let slopes: Vec<Mat> = s.forms.iter().map(|f| f.mul(&pinv)).collect();
    let mut ls = centralizer_basis(&slopes[0]);
    for sl in &slopes[1..] {
        // keep combinations Σ a_i L_i commuting with sl
        let rows: Vec<Vec<u64>> = ls.iter().map(|l| l.mul(sl).sub(&sl.mul(l)).data).collect();
        let m = Mat::from_rows_cols(ctx, rows.len(), d * d, &rows);
        let ker = m.kernel_rows();
        ls = ker.iter().map(|a| combine(ctx, &ls, a)).collect();
    }
    let pairs = ls.into_iter().map(|l| {
        let r = pinv.mul(&l).mul(&p).transpose();
        (l, r)
    });
    StarAlgebra::from_pairs(ctx, d, pairs.collect())
}

/// Genus: the maximum over centroid factors of the dimension of the image
/// over the factor's residue field.
pub fn genus(s: &SystemOfForms) -> Result<usize> {
    let core = nondegenerate_core(s);
    if core.sys.d == 0 || core.sys.e == 0 {
        return Ok(0);
    }
    let c = centroid(&core.sys);
    let mut g = 0;
    for f in centroid_factors(&core.sys, &c) {
        let cf = centroid(&f.sys);
        if !cf.is_field {
            return Err(Error::Unsupported(format!(
                "centroid factor is a local ring with radical of dimension {}",
                cf.radical.len()
            )));
        }
        g = g.max(f.sys.e / cf.dim());
    }
    Ok(g)
}

/// Random alternating system.
pub fn random_system(ctx: &FieldCtx, d: usize, e: usize, r: &mut crate::gf::Rng64) -> SystemOfForms {
    let forms = (0..e).map(|_| Mat::random_alternating(ctx, d, r)).collect();
    SystemOfForms { ctx: ctx.clone(), d, e, forms }
}

/// Random pseudo-isometry (φ, φ̂, τ) of the given shape.
pub fn random_pseudo_isometry(ctx: &FieldCtx, d: usize, e: usize, r: &mut crate::gf::Rng64) -> PseudoIsometry {
    PseudoIsometry {
        phi: Mat::random_invertible(ctx, d, r),
        phi_hat: Mat::random_invertible(ctx, e, r),
        tau: r.gen_range(0..ctx.k()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::field_make;

    fn k(p: u64) -> FieldCtx {
        FieldCtx::prime(p).unwrap()
    }

    fn symplectic(ctx: &FieldCtx) -> SystemOfForms {
        SystemOfForms::from_ints(ctx, &[vec![vec![0, 1], vec![-1, 0]]]).unwrap()
    }

    /// Heisenberg form of GF(9) written over GF(3): V = F_9², W = F_9.
    fn heisenberg_gf9_over_gf3() -> SystemOfForms {
        let f3 = k(3);
        let f9 = field_make(3, 2, 1).unwrap();
        // basis of V over GF(3): (ω^l, 0), (0, ω^l); value det-like: a1 b2 - a2 b1 in F_9
        let el = |l: usize| f9.pow(f9.from_digits(&[0, 1]), l as u64);
        let mut forms = vec![Mat::zeros(&f3, 4, 4); 2];
        let vecs: Vec<(u64, u64)> = (0..4).map(|i| if i < 2 { (el(i), 0) } else { (0, el(i - 2)) }).collect();
        for i in 0..4 {
            for j in 0..4 {
                let (a1, a2) = vecs[i];
                let (b1, b2) = vecs[j];
                let v = f9.sub(f9.mul(a1, b2), f9.mul(a2, b1));
                let dg = f9.digits(v);
                forms[0].set(i, j, dg[0]);
                forms[1].set(i, j, dg[1]);
            }
        }
        SystemOfForms::new(&f3, 4, forms).unwrap()
    }

    #[test]
    fn alternating_enforced() {
        let f2 = k(2);
        let bad = Mat::from_rows(&f2, &[vec![1, 1], vec![1, 0]]);
        assert!(SystemOfForms::new(&f2, 2, vec![bad]).is_err());
    }

    #[test]
    fn radical_examples() {
        let f5 = k(5);
        let (r, _, c) = radicals(&symplectic(&f5));
        assert_eq!((r.dim(), c), (0, 0));
        let (r, _, c) = radicals(&SystemOfForms::zero(&f5, 3, 1));
        assert_eq!((r.dim(), c), (3, 1));
        let s = symplectic(&f5).direct_sum(&SystemOfForms::zero(&f5, 1, 1));
        assert_eq!(radicals(&s).0.dim(), 1);
    }

    #[test]
    fn witness_algebra() {
        let mut r = rng(1);
        for ctx in [k(3), field_make(2, 3, 0).unwrap()] {
            for _ in 0..10 {
                let a = random_system(&ctx, 5, 2, &mut r);
                let w = random_pseudo_isometry(&ctx, 5, 2, &mut r);
                let b = w.apply(&a);
                assert!(w.verify(&a, &b));
                assert!(w.inverse().verify(&b, &a));
                let w2 = random_pseudo_isometry(&ctx, 5, 2, &mut r);
                let c = w2.apply(&b);
                assert!(w.compose(&w2).verify(&a, &c));
            }
        }
    }

    #[test]
    fn centroid_examples() {
        let f5 = k(5);
        let c = centroid(&symplectic(&f5));
        assert_eq!(c.dim(), 1);
        assert!(c.is_field);
        let h = heisenberg_gf9_over_gf3();
        let c = centroid(&h);
        assert_eq!(c.dim(), 2);
        assert!(c.is_field);
        assert_eq!(genus(&h).unwrap(), 1);
        let rw = rewrite_over_residue(&h, &c).unwrap();
        assert_eq!((rw.sys.d, rw.sys.e, rw.sys.ctx.q()), (2, 1, 9));
        assert_eq!(genus(&symplectic(&f5)).unwrap(), 1);
    }

    #[test]
    fn centroid_of_direct_sum_not_local() {
        let f3 = k(3);
        let mut r = rng(3);
        let a = random_system(&f3, 4, 2, &mut r);
        let b = random_system(&f3, 4, 2, &mut r);
        // put the two summands on disjoint codomain coordinates
        let mut forms = vec![Mat::zeros(&f3, 8, 8); 4];
        for t in 0..2 {
            forms[t].set_block(0, 0, &a.forms[t]);
            forms[t + 2].set_block(4, 4, &b.forms[t]);
        }
        let s = SystemOfForms::new(&f3, 8, forms).unwrap();
        let c = centroid(&s);
        assert!(!c.is_local);
        assert_eq!(centroid_factors(&s, &c).len(), 2);
    }

    #[test]
    fn generic_sloped_pair_has_genus_two() {
        let f5 = k(5);
        let mut r = rng(4);
        let s = random_system(&f5, 6, 2, &mut r);
        let c = centroid(&s);
        assert_eq!(c.dim(), 1);
        assert_eq!(genus(&s).unwrap(), 2);
    }

    #[test]
    fn centroid_fast_path_matches_generic() {
        let f3 = k(3);
        let mut r = rng(5);
        for _ in 0..5 {
            let s = random_system(&f3, 4, 2, &mut r);
            if invertible_combination(&s).is_none() {
                continue;
            }
            let fast = centroid_pairs(&s);
            for (x, w) in &fast {
                for sidx in 0..2 {
                    let rhs = combine(&f3, &s.forms, &[w.get(0, sidx), w.get(1, sidx)]);
                    assert_eq!(x.mul(&s.forms[sidx]), rhs);
                }
            }
        }
    }

    #[test]
    fn adjoint_examples() {
        for (p, m) in [(3u64, 1usize), (3, 2)] {
            let ctx = k(p);
            let j = Mat::hyperbolic(&Mat::identity(&ctx, m));
            let s = SystemOfForms::new(&ctx, 2 * m, vec![j]).unwrap();
            assert_eq!(adjoint(&s).dim(), 4 * m * m);
            assert_eq!(adjoint_generic(&s).len(), 4 * m * m);
        }
        let f3 = k(3);
        assert_eq!(adjoint(&SystemOfForms::zero(&f3, 3, 1)).dim(), 18);
    }

    #[test]
    fn adjoint_pairs_and_involution() {
        let f3 = k(3);
        let mut r = rng(6);
        for _ in 0..5 {
            let s = random_system(&f3, 6, 2, &mut r);
            let a = adjoint(&s);
            let g = StarAlgebra::from_pairs(&f3, 6, adjoint_generic(&s));
            assert_eq!(a.span, g.span);
            for (l, rr) in &a.basis {
                for t in 0..2 {
                    assert_eq!(l.mul(&s.forms[t]), s.forms[t].mul(&rr.transpose()));
                }
            }
            for i in 0..a.dim() {
                let st = a.star(i);
                let (l, rr) = (combine(&f3, &a.basis.iter().map(|b| b.0.clone()).collect::<Vec<_>>(), &st), combine(&f3, &a.basis.iter().map(|b| b.1.clone()).collect::<Vec<_>>(), &st));
                assert_eq!((rr, l), a.basis[i].clone());
                for j in 0..a.dim() {
                    let prod = StarAlgebra::product(&a.basis[i], &a.basis[j]);
                    assert!(a.coords(&prod.0, &prod.1).is_some());
                }
            }
        }
    }

    #[test]
    fn rewrite_preserves_pseudo_isometry_class() {
        // two GF(9)-Heisenberg-type systems over GF(3) related by a planted map
        let h = heisenberg_gf9_over_gf3();
        let mut r = rng(7);
        let f3 = k(3);
        let w = random_pseudo_isometry(&f3, 4, 2, &mut r);
        let h2 = w.apply(&h);
        let (ca, cb) = (centroid(&h), centroid(&h2));
        let ra = rewrite_over_residue(&h, &ca).unwrap();
        let (_, mu) = ca.residue.clone().unwrap();
        let theta_b = centroid_root(&cb, &mu).unwrap();
        let (xb, wb) = cb.element(&theta_b);
        let rb = rewrite_with_generator(&h2, &xb, &wb, &mu).unwrap();
        assert_eq!(ra.sys.ctx, rb.sys.ctx);
        // both are nondegenerate 2x2 forms over GF(9); scale to match
        let big = &ra.sys.ctx;
        let a01 = ra.sys.forms[0].get(0, 1);
        let b01 = rb.sys.forms[0].get(0, 1);
        let wbig = PseudoIsometry {
            phi: Mat::identity(big, 2),
            phi_hat: Mat::from_rows(big, &[vec![big.div(b01, a01)]]),
            tau: 0,
        };
        assert!(wbig.verify(&ra.sys, &rb.sys));
        let down = descend_witness(&ra, &rb, &wbig);
        assert!(down.verify(&h, &h2));
    }
}
