//! The adjoint-tensor pseudo-isometry test for sloped pairs of alternating
//! forms: the commutative ring K = k[σ] attached to the slope, the K-valued
//! form it carries, the group of semilinear unit maps acting on K and the
//! transporter routines that search that group.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::algebra::{primitive_idempotents, radical, CommAlgebra, QuotientRing};
use crate::error::{Error, Result};
use crate::forms::{PseudoIsometry, SystemOfForms};
use crate::gf::{upoly, ExtField, FieldCtx, Poly};
use crate::linalg::{generalized_jordan, min_poly, primary_parts, vec_mat, Echelon, Mat, Subspace};

/// Slope σ = Φ₂Φ₁⁻¹ of a pair with Φ₁ invertible, so that B₂(u, v) = B₁(uσ, v).
pub fn slope(s: &SystemOfForms) -> Result<Mat> {
    if s.e != 2 {
        return Err(Error::Dim(format!("slope needs a pair of forms, got {}", s.e)));
    }
    let inv = s.forms[0].inverse().ok_or_else(|| Error::Unsupported("first form is degenerate".into()))?;
    Ok(s.forms[1].mul(&inv))
}

/// One primary component K_a = k[x]/(a^e) of K.
#[derive(Clone, Debug)]
pub struct Component {
    pub a: Poly,
    pub e: usize,
    /// idempotent of K_a
    pub idem: Vec<u64>,
    /// Teichmüller root of a inside K_a
    pub teich: Vec<u64>,
    /// uniformizer x·e_a − teich
    pub t: Vec<u64>,
    /// exponents of the cyclic summands of V on this component, descending
    pub vtype: Vec<usize>,
}

impl Component {
    pub fn residue(&self, ctx: &FieldCtx) -> ExtField {
        ExtField::new(ctx, &self.a.coeffs)
    }
    /// Size of the residue field.
    pub fn residue_size(&self, ctx: &FieldCtx) -> Option<u64> {
        ctx.q().checked_pow(self.a.deg() as u32)
    }
}

/// Split m into primary components with CRT idempotents and Teichmüller
/// roots. `vtype` is left empty.
pub fn ring_components(ring: &QuotientRing) -> Result<Vec<Component>> {
    let ctx = ring.ctx.clone();
    let m = &ring.m;
    let mut out = Vec::new();
    for (a, e) in crate::gf::poly_factor(m)? {
        let f = a.pow(e);
        let (g, _) = m.divrem(&f);
        let (d, u, _) = upoly::ext_gcd(&ctx, &g.coeffs, &f.coeffs);
        let c = ctx.inv(d[0]);
        let idem = ring.reduce(&Poly::new(&ctx, u).mul(&g).scale(c));
        let xe = ring.mul(&ring.x(), &idem);
        let teich = teichmuller(ring, &xe, &idem, a.deg(), e);
        let t = ring.sub(&xe, &teich);
        out.push(Component { a, e, idem, teich, t, vtype: Vec::new() });
    }
    out.sort_by(|x, y| crate::linalg::poly_order(&x.a, &y.a));
    Ok(out)
}

/// Teichmüller lift of r (an element of the component with idempotent
/// `idem`, residue degree `deg` over k and nilpotency `e`).
pub fn teichmuller(ring: &QuotientRing, r: &[u64], idem: &[u64], deg: usize, e: usize) -> Vec<u64> {
    let q = ring.ctx.q() as u128;
    let big = q.saturating_pow(deg as u32);
    let mut reps = 1;
    let mut reach = big;
    while reach < e as u128 {
        reps += 1;
        reach = reach.saturating_mul(big);
    }
    let mut x = ring.mul(r, idem);
    for _ in 0..reps * deg {
        x = ring.frob(&x);
    }
    x
}

/// The ring K = k[σ] ≅ k[x]/(m) of a sloped pair together with the K-valued
/// alternating form h defined by B₁ = λ∘h, λ the coefficient of x^{D−1}.
#[derive(Clone, Debug)]
pub struct TensorRing {
    pub ring: QuotientRing,
    pub sigma: Mat,
    pub phi1: Mat,
    pub comps: Vec<Component>,
    /// wedge table: h(e_i, e_j) at index i·d + j
    pub wedge: Vec<Vec<u64>>,
    /// σ^k for k < D
    sigma_pows: Vec<Mat>,
}

/// Build the tensor ring of (Φ₁, Φ₂) with Φ₁ invertible.
pub fn tensor_ring(s: &SystemOfForms) -> Result<TensorRing> {
    let sigma = slope(s)?;
    tensor_ring_with(&s.forms[0], &sigma)
}

/// Tensor ring of B₁ with K acting through σ (σ must be B₁-self-adjoint).
pub fn tensor_ring_with(phi1: &Mat, sigma: &Mat) -> Result<TensorRing> {
    let ctx = phi1.ctx.clone();
    let d = phi1.rows;
    let ring = QuotientRing::new(&min_poly(sigma));
    let dd = ring.dim();
    let mut comps = ring_components(&ring)?;
    for part in primary_parts(sigma) {
        if let Some(c) = comps.iter_mut().find(|c| c.a == part.a) {
            c.vtype = part.gens.iter().map(|g| g.1).collect();
            c.vtype.sort_unstable_by(|x, y| y.cmp(x));
        }
    }
    let mut hank = Mat::zeros(&ctx, dd, dd);
    let mut xp = ring.one();
    let mut lam_pows = Vec::with_capacity(2 * dd);
    for _ in 0..2 * dd {
        lam_pows.push(xp[dd - 1]);
        xp = ring.mul(&xp, &ring.x());
    }
    for j in 0..dd {
        for k in 0..dd {
            hank.set(j, k, lam_pows[j + k]);
        }
    }
    let hinv = hank.inverse().ok_or_else(|| Error::Internal("Hankel matrix singular".into()))?;
    let mut sigma_pows = vec![Mat::identity(&ctx, d)];
    for _ in 1..dd {
        sigma_pows.push(sigma_pows.last().unwrap().mul(sigma));
    }
    let grams: Vec<Mat> = sigma_pows.iter().map(|p| p.mul(phi1)).collect();
    let mut wedge = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let b: Vec<u64> = grams.iter().map(|g| g.get(i, j)).collect();
            wedge.push(vec_mat(&b, &hinv.transpose()));
        }
    }
    Ok(TensorRing { ring, sigma: sigma.clone(), phi1: phi1.clone(), comps, wedge, sigma_pows })
}

impl TensorRing {
    pub fn ctx(&self) -> &FieldCtx {
        &self.ring.ctx
    }
    pub fn dim(&self) -> usize {
        self.ring.dim()
    }
    pub fn d(&self) -> usize {
        self.phi1.rows
    }
    /// λ(r): the coefficient of x^{D−1}.
    pub fn lambda(&self, r: &[u64]) -> u64 {
        r[self.dim() - 1]
    }
    /// h(u, v) ∈ K.
    pub fn h(&self, u: &[u64], v: &[u64]) -> Vec<u64> {
        let ctx = self.ctx();
        let d = self.d();
        let mut acc = self.ring.zero();
        for i in 0..d {
            if u[i] == 0 {
                continue;
            }
            for j in 0..d {
                let c = ctx.mul(u[i], v[j]);
                if c != 0 {
                    crate::linalg::axpy(ctx, &mut acc, &self.wedge[i * d + j], c);
                }
            }
        }
        acc
    }
    /// v·r(σ) for r ∈ K.
    pub fn act(&self, v: &[u64], r: &[u64]) -> Vec<u64> {
        let ctx = self.ctx();
        let mut out = vec![0u64; self.d()];
        for (k, &c) in r.iter().enumerate() {
            if c != 0 {
                crate::linalg::axpy(ctx, &mut out, &vec_mat(v, &self.sigma_pows[k]), c);
            }
        }
        out
    }
    /// Kernel of r ↦ (λ(r), λ(b·r)).
    pub fn hat_kernel(&self, b: &[u64]) -> Subspace {
        let dd = self.dim();
        let mut m = Mat::zeros(self.ctx(), dd, 2);
        for i in 0..dd {
            let mut e = vec![0u64; dd];
            e[i] = 1;
            m.set(i, 0, self.lambda(&e));
            m.set(i, 1, self.lambda(&self.ring.mul(&e, b)));
        }
        Subspace::from_rows(self.ctx(), dd, &m.kernel_rows())
    }
    /// span{1, b}: the annihilator of `hat_kernel(b)` under (r, s) ↦ λ(rs).
    pub fn hat_dual(&self, b: &[u64]) -> Subspace {
        Subspace::from_rows(self.ctx(), self.dim(), &[self.ring.one(), b.to_vec()])
    }
}

/// X·r for a subspace X of a commutative algebra and r in it.
pub fn subspace_mul<A: CommAlgebra>(alg: &A, x: &Subspace, r: &[u64]) -> Subspace {
    x.image(&alg.mult_matrix(r))
}

/// {a : X·a ⊆ Y} as a basis.
fn conductor<A: CommAlgebra>(alg: &A, x: &Subspace, y: &Subspace) -> Vec<Vec<u64>> {
    let n = alg.dim();
    let xs = x.rows();
    let mut m = Mat::zeros(alg.ctx(), n, n * xs.len().max(1));
    for i in 0..n {
        let mut e = vec![0u64; n];
        e[i] = 1;
        for (j, xv) in xs.iter().enumerate() {
            let r = y.reduce(&alg.mul(xv, &e));
            m.row_mut(i)[j * n..(j + 1) * n].copy_from_slice(&r);
        }
    }
    m.kernel_rows()
}

/// Local summands of the subalgebra spanned by `basis`: (idempotent, radical part).
fn local_summands<A: CommAlgebra>(alg: &A, basis: &[Vec<u64>]) -> Vec<(Vec<u64>, Subspace)> {
    let n = alg.dim();
    let rad = radical(alg, basis);
    primitive_idempotents(alg, basis, &alg.one())
        .into_iter()
        .map(|e| {
            let rows: Vec<Vec<u64>> = rad.iter().map(|j| alg.mul(j, &e)).collect();
            (e, Subspace::from_rows(alg.ctx(), n, &rows))
        })
        .collect()
}

/// A unit r of the commutative algebra with X·r = Y, or None. Complete:
/// the solutions form r₀·A_X^× where A_X = {a : X·a ⊆ X}, and an element of
/// each local summand of {a : X·a ⊆ Y} outside its radical part is r₀ times
/// a local unit.
pub fn transporter_in_algebra<A: CommAlgebra>(alg: &A, x: &Subspace, y: &Subspace) -> Option<Vec<u64>> {
    if x.dim() != y.dim() {
        return None;
    }
    let s = conductor(alg, x, y);
    let ax = conductor(alg, x, x);
    if s.len() != ax.len() {
        return None;
    }
    let n = alg.dim();
    let mut r = alg.zero();
    for (e, jpart) in local_summands(alg, &ax) {
        let se: Vec<Vec<u64>> = s.iter().map(|v| alg.mul(v, &e)).collect();
        let mut js = Echelon::new(alg.ctx(), n);
        for j in jpart.rows() {
            for v in &se {
                js.insert(&alg.mul(&j, v));
            }
        }
        let pick = se.iter().find(|v| !js.contains(v))?;
        r = alg.add(&r, pick);
    }
    if alg.is_unit(&r) && subspace_mul(alg, x, &r) == *y {
        Some(r)
    } else {
        None
    }
}

/// Basis of a nilpotent ideal J adapted to J ⊇ J² ⊇ …: every J^i is spanned
/// by a tail of the list.
fn filtration_basis<A: CommAlgebra>(alg: &A, j: &Subspace) -> Vec<Vec<u64>> {
    let n = alg.dim();
    let mut layers = vec![j.clone()];
    loop {
        let last = layers.last().unwrap();
        if last.dim() == 0 {
            break;
        }
        let mut rows = Vec::new();
        for a in j.rows() {
            for b in last.rows() {
                rows.push(alg.mul(&a, &b));
            }
        }
        layers.push(Subspace::from_rows(alg.ctx(), n, &rows));
    }
    let mut ech = Echelon::new(alg.ctx(), n);
    let mut out = Vec::new();
    for layer in layers.iter().rev() {
        for v in layer.rows() {
            if ech.insert(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Order test helper: is a^n ≡ e modulo the radical part?
fn pow_is_idem<A: CommAlgebra>(alg: &A, a: &[u64], n: u64, e: &[u64], jpart: &Subspace) -> bool {
    jpart.contains(&alg.sub(&alg.pow(a, n), e))
}

/// Generators of {r unit : X·r = X}, the unit group of A_X. Each local
/// summand contributes a lift of a primitive element of its residue field and
/// the elements 1 + g^i·b (g primitive in k, i below [k:F_p], b a basis of
/// the radical part), which generate the unipotent radical as a group.
pub fn stabilizer_in_algebra<A: CommAlgebra>(alg: &A, x: &Subspace) -> Result<Vec<Vec<u64>>> {
    let ctx = alg.ctx().clone();
    let ax = conductor(alg, x, x);
    let one = alg.one();
    let mut gens = Vec::new();
    let g = ctx.primitive_element();
    for (e, jpart) in local_summands(alg, &ax) {
        let rest = alg.sub(&one, &e);
        let local: Vec<Vec<u64>> = ax.iter().map(|v| alg.mul(v, &e)).collect();
        let local_dim = Subspace::from_rows(&ctx, alg.dim(), &local).dim();
        let f = (local_dim - jpart.dim()) as u32;
        let size = ctx.q().checked_pow(f).filter(|&s| s < (1 << 62)).ok_or_else(|| Error::Unsupported("residue field too large for a primitive element".into()))?;
        let primes = crate::gf::prime_factors(size - 1);
        let mut r = crate::gf::rng(0xad7e);
        let prim = loop {
            let mut a = alg.zero();
            for v in &local {
                a = alg.add(&a, &alg.scale(v, ctx.random(&mut r)));
            }
            if jpart.contains(&a) {
                continue;
            }
            if primes.iter().all(|&p| !pow_is_idem(alg, &a, (size - 1) / p, &e, &jpart)) {
                break a;
            }
        };
        if size > 2 {
            gens.push(alg.add(&prim, &rest));
        }
        for b in filtration_basis(alg, &jpart) {
            let mut c = 1u64;
            for _ in 0..ctx.k() {
                gens.push(alg.add(&one, &alg.scale(&b, c)));
                c = ctx.mul(c, g);
            }
        }
    }
    Ok(gens)
}

/// Matrix of the k-algebra endomorphism of K sending x to s (rows s^i).
pub fn substitution_matrix(ring: &QuotientRing, s: &[u64]) -> Mat {
    let dd = ring.dim();
    let mut rows = Vec::with_capacity(dd);
    let mut cur = ring.one();
    for _ in 0..dd {
        rows.push(cur.clone());
        cur = ring.mul(&cur, s);
    }
    Mat::from_rows_cols(&ring.ctx, dd, dd, &rows)
}

/// All elements of k[x]/(a) as coefficient vectors (only for small residue fields).
fn residue_elements(ctx: &FieldCtx, deg: usize) -> impl Iterator<Item = Vec<u64>> + '_ {
    let q = ctx.q();
    let total = q.pow(deg as u32);
    (0..total).map(move |mut n| {
        let mut v = vec![0u64; deg];
        for c in v.iter_mut() {
            *c = n % q;
            n /= q;
        }
        v
    })
}

/// Generators of the group of maps r ↦ c·θ(r) (c a unit, θ a k-automorphism
/// of K preserving the module type of V), grouped by role.
#[derive(Clone, Debug)]
pub struct ActingGroup {
    /// unipotent part: multiplications by 1 + J and substitutions t ↦ t + αt^i
    pub q_gens: Vec<Mat>,
    /// multiplications by Teichmüller lifts of residue primitive elements
    pub g1: Vec<Mat>,
    /// substitutions t ↦ ξt on non-reduced components
    pub g2: Vec<Mat>,
    /// Frobenius of each residue field, fixing the uniformizer
    pub gal: Vec<Mat>,
    /// transpositions of isotypic components
    pub pi: Vec<Mat>,
    /// false when a residue field is too large for a primitive element to be
    /// certified; g1 and g2 then omit that component (the transport and
    /// stabilizer stages only use q_gens)
    pub torus_complete: bool,
}

impl ActingGroup {
    pub fn all_gens(&self) -> Vec<Mat> {
        [&self.q_gens, &self.g1, &self.g2, &self.gal, &self.pi].into_iter().flatten().cloned().collect()
    }
}

impl TensorRing {
    /// Teichmüller lift of r, componentwise.
    pub fn teich_all(&self, r: &[u64]) -> Vec<u64> {
        let mut out = self.ring.zero();
        for c in &self.comps {
            out = self.ring.add(&out, &teichmuller(&self.ring, r, &c.idem, c.a.deg(), c.e));
        }
        out
    }
    /// Roots of `a` in the residue field of component `j`, Teichmüller-lifted into K_j.
    pub fn roots_in_component(&self, a: &Poly, j: usize) -> Vec<Vec<u64>> {
        let ctx = self.ctx();
        let comp = &self.comps[j];
        let ext = comp.residue(ctx);
        let coeffs: Vec<Vec<u64>> = a.coeffs.iter().map(|&c| ext.reduce(&[c])).collect();
        let mut rng = crate::gf::rng(0x7ee1);
        let mut roots = upoly::roots(&ext, &coeffs, &mut rng);
        roots.sort();
        roots
            .into_iter()
            .map(|r| teichmuller(&self.ring, &self.ring.reduce(&Poly::new(ctx, r)), &comp.idem, comp.a.deg(), comp.e))
            .collect()
    }
    /// Components i, j can be exchanged by a type-preserving automorphism.
    pub fn isotypic(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.comps[i], &self.comps[j]);
        a.a.deg() == b.a.deg() && a.e == b.e && a.vtype == b.vtype
    }
    /// Teichmüller lift of a primitive element of the residue field of component j.
    fn residue_primitive(&self, j: usize) -> Result<Vec<u64>> {
        let ctx = self.ctx();
        let comp = &self.comps[j];
        let ext = comp.residue(ctx);
        let size = comp.residue_size(ctx).filter(|&s| s < (1 << 62)).ok_or_else(|| Error::Unsupported("residue field too large".into()))?;
        let primes = crate::gf::prime_factors(size - 1);
        let mut r = crate::gf::rng(0x9a1);
        let pw = |a: &Vec<u64>, mut e: u64| {
            let (mut acc, mut b) = (ext.reduce(&[1]), a.clone());
            while e > 0 {
                if e & 1 == 1 {
                    acc = crate::gf::FieldLike::fmul(&ext, &acc, &b);
                }
                b = crate::gf::FieldLike::fmul(&ext, &b, &b);
                e >>= 1;
            }
            acc
        };
        let one = ext.reduce(&[1]);
        let prim = loop {
            let a: Vec<u64> = (0..comp.a.deg()).map(|_| ctx.random(&mut r)).collect();
            if a.iter().all(|&c| c == 0) {
                continue;
            }
            if primes.iter().all(|&p| pw(&a, (size - 1) / p) != one) {
                break a;
            }
        };
        Ok(teichmuller(&self.ring, &self.ring.reduce(&Poly::new(ctx, prim)), &comp.idem, comp.a.deg(), comp.e))
    }
    /// x·e_j: the part of x in component j.
    fn x_part(&self, j: usize) -> Vec<u64> {
        self.ring.mul(&self.ring.x(), &self.comps[j].idem)
    }
    /// x with its component-j part replaced by `y`.
    fn replace_part(&self, j: usize, y: &[u64]) -> Vec<u64> {
        self.ring.add(&self.ring.sub(&self.ring.x(), &self.x_part(j)), y)
    }
    /// Basis of the radical J of K adapted to its powers.
    pub fn radical_basis(&self) -> Vec<Vec<u64>> {
        let rows: Vec<Vec<u64>> = self
            .comps
            .iter()
            .flat_map(|c| {
                let mut v = Vec::new();
                let mut tp = c.t.clone();
                for _ in 1..c.e {
                    let mut xp = tp.clone();
                    for _ in 0..c.a.deg() {
                        v.push(xp.clone());
                        xp = self.ring.mul(&xp, &self.ring.x());
                    }
                    tp = self.ring.mul(&tp, &c.t);
                }
                v
            })
            .collect();
        let j = Subspace::from_rows(self.ctx(), self.dim(), &rows);
        filtration_basis(&self.ring, &j)
    }
}

/// Generators of the acting group on K.
pub fn acting_group(tr: &TensorRing) -> Result<ActingGroup> {
    let ctx = tr.ctx().clone();
    let ring = &tr.ring;
    let one = ring.one();
    let g = ctx.primitive_element();
    let fp_basis: Vec<u64> = (0..ctx.k()).scan(1u64, |c, _| {
        let out = *c;
        *c = ctx.mul(*c, g);
        Some(out)
    }).collect();
    let mut grp = ActingGroup { q_gens: Vec::new(), g1: Vec::new(), g2: Vec::new(), gal: Vec::new(), pi: Vec::new(), torus_complete: true };
    for b in tr.radical_basis() {
        for &c in &fp_basis {
            grp.q_gens.push(ring.mult_matrix(&ring.add(&one, &ring.scale(&b, c))));
        }
    }
    for (j, comp) in tr.comps.iter().enumerate() {
        match tr.residue_primitive(j) {
            Ok(xi) => {
                let unit = ring.add(&xi, &ring.sub(&one, &comp.idem));
                if !(comp.a.deg() == 1 && ctx.q() == 2) {
                    grp.g1.push(ring.mult_matrix(&unit));
                    if comp.e >= 2 {
                        let y = ring.add(&comp.teich, &ring.mul(&xi, &comp.t));
                        grp.g2.push(substitution_matrix(ring, &tr.replace_part(j, &y)));
                    }
                }
            }
            Err(Error::Unsupported(_)) => grp.torus_complete = false,
            Err(e) => return Err(e),
        }
        if comp.e >= 2 {
            let mut tp = ring.mul(&comp.t, &comp.t);
            for _ in 2..comp.e {
                let mut lp = comp.idem.clone();
                for _ in 0..comp.a.deg() {
                    let lt = teichmuller(ring, &lp, &comp.idem, comp.a.deg(), comp.e);
                    for &c in &fp_basis {
                        let y = ring.add(&tr.x_part(j), &ring.scale(&ring.mul(&lt, &tp), c));
                        grp.q_gens.push(substitution_matrix(ring, &tr.replace_part(j, &y)));
                    }
                    lp = ring.mul(&lp, &ring.x());
                }
                tp = ring.mul(&tp, &comp.t);
            }
        }
        if comp.a.deg() > 1 {
            let y = ring.add(&ring.frob(&comp.teich), &comp.t);
            grp.gal.push(substitution_matrix(ring, &tr.replace_part(j, &y)));
        }
    }
    for i in 0..tr.comps.len() {
        if let Some(j) = (i + 1..tr.comps.len()).find(|&j| tr.isotypic(i, j)) {
            let (ci, cj) = (&tr.comps[i], &tr.comps[j]);
            let ri = tr.roots_in_component(&ci.a, j)[0].clone();
            let rj = tr.roots_in_component(&cj.a, i)[0].clone();
            let mut s = ring.sub(&ring.sub(&ring.x(), &tr.x_part(i)), &tr.x_part(j));
            s = ring.add(&s, &ring.add(&ri, &cj.t));
            s = ring.add(&s, &ring.add(&rj, &ci.t));
            grp.pi.push(substitution_matrix(ring, &s));
        }
    }
    Ok(grp)
}

/// Basis (rows) of a full flag fixed by a unipotent group with trivial action
/// on successive quotients; row i spans F_{i+1}/F_i.
fn unipotent_flag(ctx: &FieldCtx, n: usize, gens: &[Mat]) -> Result<Mat> {
    let mut flag = Echelon::new(ctx, n);
    let mut rows: Vec<Vec<u64>> = Vec::new();
    let ident = Mat::identity(ctx, n);
    let diffs: Vec<Mat> = gens.iter().map(|g| g.sub(&ident)).collect();
    while rows.len() < n {
        let cur = flag.subspace();
        let mut m = Mat::zeros(ctx, n, n * diffs.len().max(1));
        for i in 0..n {
            let mut e = vec![0u64; n];
            e[i] = 1;
            for (j, dm) in diffs.iter().enumerate() {
                let r = cur.reduce(&vec_mat(&e, dm));
                m.row_mut(i)[j * n..(j + 1) * n].copy_from_slice(&r);
            }
        }
        let cand = m.kernel_rows().into_iter().find(|v| !flag.contains(v)).ok_or_else(|| Error::Invalid("group is not unipotent".into()))?;
        flag.insert(&cand);
        rows.push(cand);
    }
    Ok(Mat::from_rows_cols(ctx, n, n, &rows))
}

/// Projection of a subspace (flag coordinates) to K/F_i: the columns ≥ i.
fn project(x: &Subspace, i: usize) -> Subspace {
    let n = x.n;
    Subspace::from_mat(&x.basis.submatrix(0, x.dim(), i, n))
}

fn key(s: &Subspace) -> Vec<u64> {
    s.basis.data.clone()
}

/// Descend the fixed flag of a unipotent group: returns (transporter from x
/// to y if requested and found, generators of the stabilizer of y). When
/// `x` is given and no transporter exists, returns (None, []).
fn unipotent_descent(gens: &[Mat], x: Option<&Subspace>, y: &Subspace) -> Result<(Option<Mat>, Vec<Mat>)> {
    let ctx = y.ctx.clone();
    let n = y.n;
    let p = unipotent_flag(&ctx, n, gens)?;
    let pinv = p.inverse().ok_or_else(|| Error::Internal("flag basis singular".into()))?;
    let to_flag = |m: &Mat| p.mul(m).mul(&pinv);
    let mut s: Vec<Mat> = gens.iter().map(to_flag).filter(|g| !g.is_identity()).collect();
    let yf = y.image(&pinv);
    let mut xf = x.map(|x| x.image(&pinv));
    let mut u = Mat::identity(&ctx, n);
    for i in (0..n).rev() {
        let target = project(&yf, i);
        let subs: Vec<Mat> = s.iter().map(|g| g.submatrix(i, n, i, n)).collect();
        // orbit of the target with transversal elements (full matrices)
        let mut trans: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut pts: Vec<(Subspace, Mat)> = vec![(target.clone(), Mat::identity(&ctx, n))];
        trans.insert(key(&target), 0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(idx) = queue.pop_front() {
            for (g, gs) in s.iter().zip(&subs) {
                let img = pts[idx].0.image(gs);
                if let std::collections::hash_map::Entry::Vacant(v) = trans.entry(key(&img)) {
                    v.insert(pts.len());
                    let el = pts[idx].1.mul(g);
                    pts.push((img, el));
                    queue.push_back(pts.len() - 1);
                }
            }
        }
        if let Some(xc) = xf.as_mut() {
            let z = project(xc, i);
            match trans.get(&key(&z)) {
                None => return Ok((None, Vec::new())),
                Some(&idx) => {
                    let back = pts[idx].1.inverse().expect("group element invertible");
                    u = u.mul(&back);
                    *xc = xc.image(&back);
                }
            }
        }
        if pts.len() > 1 {
            let mut seen: HashSet<Vec<u64>> = HashSet::new();
            let mut next = Vec::new();
            for (pt, el) in &pts {
                for (g, gs) in s.iter().zip(&subs) {
                    let img = pt.image(gs);
                    let j = trans[&key(&img)];
                    let sg = el.mul(g).mul(&pts[j].1.inverse().expect("invertible"));
                    if !sg.is_identity() && seen.insert(sg.data.clone()) {
                        next.push(sg);
                    }
                }
            }
            s = next;
        }
    }
    let back = |m: &Mat| pinv.mul(m).mul(&p);
    let t = xf.map(|_| back(&u));
    Ok((t, s.iter().map(back).collect()))
}

/// An element w of the unipotent group generated by `gens` with x·w = y.
pub fn unipotent_transport(gens: &[Mat], x: &Subspace, y: &Subspace) -> Result<Option<Mat>> {
    if x.dim() != y.dim() {
        return Ok(None);
    }
    Ok(unipotent_descent(gens, Some(x), y)?.0)
}

/// Generators of the stabilizer of x in the unipotent group generated by `gens`.
pub fn unipotent_stabilizer(gens: &[Mat], x: &Subspace) -> Result<Vec<Mat>> {
    Ok(unipotent_descent(gens, None, x)?.1)
}

/// Largest enumeration the staged transporter performs at any one stage.
pub const STAGE_LIMIT: usize = 1 << 16;

fn too_large(what: &str) -> Error {
    Error::Unsupported(format!("{} exceeds the staged enumeration limit", what))
}

/// Images s = θ(x) of all automorphisms generated by Galois and isotypic
/// permutations of the components.
pub fn galois_permutations(tr: &TensorRing) -> Result<Vec<Vec<u64>>> {
    let n = tr.comps.len();
    let mut count: usize = 1;
    for i in 0..n {
        count = count.saturating_mul(tr.comps[i].a.deg());
        count = count.saturating_mul((i + 1..n).filter(|&j| tr.isotypic(i, j)).count() + 1);
    }
    if count > STAGE_LIMIT {
        return Err(too_large("Galois and permutation group"));
    }
    let mut roots: HashMap<(usize, usize), Vec<Vec<u64>>> = HashMap::new();
    for i in 0..n {
        for j in 0..n {
            if tr.isotypic(i, j) {
                roots.insert((i, j), tr.roots_in_component(&tr.comps[i].a, j));
            }
        }
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    let mut partial = vec![tr.ring.zero()];
    fn rec(tr: &TensorRing, i: usize, used: &mut Vec<bool>, acc: &[u64], roots: &HashMap<(usize, usize), Vec<Vec<u64>>>, out: &mut Vec<Vec<u64>>) {
        let n = tr.comps.len();
        if i == n {
            out.push(acc.to_vec());
            return;
        }
        for j in 0..n {
            if used[j] || !tr.isotypic(i, j) {
                continue;
            }
            used[j] = true;
            for r in &roots[&(i, j)] {
                let next = tr.ring.add(acc, &tr.ring.add(r, &tr.comps[j].t));
                rec(tr, i + 1, used, &next, roots, out);
            }
            used[j] = false;
        }
    }
    rec(tr, 0, &mut used, &partial.pop().unwrap(), &roots, &mut out);
    Ok(out)
}

/// Images θ(x) of the torus of substitutions t ↦ ξt (ξ Teichmüller units).
fn scaling_substitutions(tr: &TensorRing) -> Result<Vec<Vec<u64>>> {
    let ctx = tr.ctx();
    let ring = &tr.ring;
    let mut out = vec![ring.x()];
    for (j, comp) in tr.comps.iter().enumerate() {
        if comp.e < 2 {
            continue;
        }
        let size = comp.residue_size(ctx).map(|s| s as usize).unwrap_or(usize::MAX);
        if out.len().saturating_mul(size) > STAGE_LIMIT {
            return Err(too_large("scaling torus"));
        }
        let xis: Vec<Vec<u64>> = residue_elements(ctx, comp.a.deg())
            .filter(|v| v.iter().any(|&c| c != 0))
            .map(|v| teichmuller(ring, &ring.reduce(&Poly::new(ctx, v)), &comp.idem, comp.a.deg(), comp.e))
            .collect();
        let mut next = Vec::new();
        for s in &out {
            for xi in &xis {
                let delta = ring.mul(&ring.sub(xi, &comp.idem), &comp.t);
                next.push(ring.add(s, &delta));
            }
        }
        let _ = j;
        out = next;
    }
    Ok(out)
}

/// The reduced ring K/J = k[x]/(rad m) and the reduction of subspaces.
struct Reduced {
    ring: QuotientRing,
}

impl Reduced {
    fn new(tr: &TensorRing) -> Reduced {
        let mut rad = Poly::one(tr.ctx());
        for c in &tr.comps {
            rad = rad.mul(&c.a);
        }
        Reduced { ring: QuotientRing::new(&rad) }
    }
    fn reduce(&self, x: &Subspace) -> Subspace {
        let rows: Vec<Vec<u64>> = x.rows().iter().map(|r| self.ring.reduce(&Poly::new(&x.ctx, r.clone()))).collect();
        Subspace::from_rows(&x.ctx, self.ring.dim(), &rows)
    }
    /// Units of {a : X·a ⊆ X} modulo scalars.
    fn stabilizer_units(&self, x: &Subspace) -> Result<Vec<Vec<u64>>> {
        let ctx = x.ctx.clone();
        let basis = conductor(&self.ring, x, x);
        let total = (ctx.q() as u128).checked_pow(basis.len() as u32).unwrap_or(u128::MAX);
        if total > STAGE_LIMIT as u128 * ctx.q() as u128 {
            return Err(too_large("residual unit group"));
        }
        let mut out = Vec::new();
        for coeffs in residue_elements(&ctx, basis.len()) {
            let lead = coeffs.iter().rev().find(|&&c| c != 0);
            if lead != Some(&1) {
                continue;
            }
            let mut a = self.ring.zero();
            for (b, &c) in basis.iter().zip(&coeffs) {
                a = self.ring.add(&a, &self.ring.scale(b, c));
            }
            if self.ring.is_unit(&a) {
                out.push(a);
            }
        }
        Ok(out)
    }
}

/// Shared driver: for each Galois-permutation element and each residual
/// torus element compatible modulo J, call `f(prefix, x·prefix)`; stops at the
/// first `Some`.
fn staged_search<T>(tr: &TensorRing, x: &Subspace, y: &Subspace, mut f: impl FnMut(&Mat, &Subspace) -> Result<Option<T>>) -> Result<Option<T>> {
    let ring = &tr.ring;
    let red = Reduced::new(tr);
    let ybar = red.reduce(y);
    let stab = red.stabilizer_units(&ybar)?;
    let scalings: Vec<Mat> = scaling_substitutions(tr)?.iter().map(|s| substitution_matrix(ring, s)).collect();
    if stab.len().saturating_mul(scalings.len()) > STAGE_LIMIT {
        return Err(too_large("residual torus"));
    }
    for s in galois_permutations(tr)? {
        let gp = substitution_matrix(ring, &s);
        let x1 = x.image(&gp);
        let Some(cbar) = transporter_in_algebra(&red.ring, &red.reduce(&x1), &ybar) else { continue };
        for a in &stab {
            let c = red.ring.mul(&cbar, a);
            let lift = tr.teich_all(&ring.reduce(&Poly::new(tr.ctx(), c)));
            let m1 = gp.mul(&ring.mult_matrix(&lift));
            for sc in &scalings {
                let pre = m1.mul(sc);
                let x2 = x.image(&pre);
                if let Some(out) = f(&pre, &x2)? {
                    return Ok(Some(out));
                }
            }
        }
    }
    Ok(None)
}

/// An element g of the acting group with x·g = y, found by stages: Galois
/// and permutation elements, then units modulo the radical (Rónyai), then
/// the residual torus, then the unipotent part.
pub fn staged_transport(tr: &TensorRing, grp: &ActingGroup, x: &Subspace, y: &Subspace) -> Result<Option<Mat>> {
    if x.dim() != y.dim() {
        return Ok(None);
    }
    staged_search(tr, x, y, |pre, x2| {
        if grp.q_gens.is_empty() {
            return Ok((x2 == y).then(|| pre.clone()));
        }
        Ok(unipotent_transport(&grp.q_gens, x2, y)?.map(|w| pre.mul(&w)))
    })
}

/// Generators of the stabilizer of x in the acting group.
pub fn staged_stabilizer(tr: &TensorRing, grp: &ActingGroup, x: &Subspace) -> Result<Vec<Mat>> {
    let ctx = tr.ctx();
    let mut gens: Vec<Mat> = Vec::new();
    let _ = staged_search::<()>(tr, x, x, |pre, x2| {
        let w = if grp.q_gens.is_empty() { (x2 == x).then(|| Mat::identity(ctx, tr.dim())) } else { unipotent_transport(&grp.q_gens, x2, x)? };
        if let Some(w) = w {
            let g = pre.mul(&w);
            if !g.is_identity() {
                gens.push(g);
            }
        }
        Ok(None)
    })?;
    if !grp.q_gens.is_empty() {
        gens.extend(unipotent_stabilizer(&grp.q_gens, x)?);
    }
    if ctx.q() > 2 {
        gens.push(Mat::scalar(ctx, tr.dim(), ctx.primitive_element()));
    }
    Ok(gens)
}

/// Given the tensor ring of A and another slope σ_B, find ρ and b ∈ K with
/// ρ·σ_B·ρ⁻¹ = b(σ_A) and k[b] = K; None when the centralizers of the two
/// slopes are not conjugate.
pub fn conjugate_slopes(tr: &TensorRing, sigma_b: &Mat) -> Result<Option<(Mat, Vec<u64>)>> {
    let ring = &tr.ring;
    let mut parts: Vec<(Poly, Vec<usize>)> = primary_parts(sigma_b)
        .into_iter()
        .map(|p| {
            let mut t: Vec<usize> = p.gens.iter().map(|g| g.1).collect();
            t.sort_unstable_by(|x, y| y.cmp(x));
            (p.a, t)
        })
        .collect();
    if parts.len() != tr.comps.len() {
        return Ok(None);
    }
    parts.sort_by(|x, y| x.0.deg().cmp(&y.0.deg()).then(x.1.cmp(&y.1)));
    let mut used = vec![false; tr.comps.len()];
    let mut beta = ring.zero();
    for (b, vt) in &parts {
        let Some(j) = (0..tr.comps.len()).find(|&j| !used[j] && tr.comps[j].a.deg() == b.deg() && &tr.comps[j].vtype == vt) else {
            return Ok(None);
        };
        used[j] = true;
        let root = tr.roots_in_component(b, j).into_iter().next().ok_or_else(|| Error::Internal("no root in residue field".into()))?;
        beta = ring.add(&beta, &ring.add(&root, &tr.comps[j].t));
    }
    let beta_mat = tr.sigma.eval_poly(&ring.to_poly(&beta));
    let jb = generalized_jordan(&beta_mat);
    let js = generalized_jordan(sigma_b);
    if jb.invariants() != js.invariants() {
        return Ok(None);
    }
    let pinv = jb.p.inverse().ok_or_else(|| Error::Internal("Jordan transform singular".into()))?;
    Ok(Some((pinv.mul(&js.p), beta)))
}

/// Conjugate the adjoint algebras (identified with the centralizers of the
/// slopes) of two pairs with invertible first forms: (ρ, τ) with
/// ρ·C(σ_B)·ρ⁻¹ = C(σ_{τ(A)}).
pub fn conjugate_adjoints(a: &SystemOfForms, b: &SystemOfForms) -> Result<Option<(Mat, u32)>> {
    let sb = slope(b)?;
    for tau in 0..a.ctx.k() {
        let tr = tensor_ring(&a.frob(tau))?;
        if let Some((rho, _)) = conjugate_slopes(&tr, &sb)? {
            return Ok(Some((rho, tau)));
        }
    }
    Ok(None)
}

/// One hyperbolic pair of a K-symplectic basis: h(v, w) = a^{e−exp}·e_comp
/// and v·K ≅ K_comp/(a^exp).
#[derive(Clone, Debug)]
pub struct SymplecticPair {
    pub v: Vec<u64>,
    pub w: Vec<u64>,
    pub comp: usize,
    pub exp: usize,
}

impl TensorRing {
    /// For z ∈ a^{e−c}·K_j: the class of z / a^{e−c} modulo a^c, as an element of K_j.
    pub fn divide_pi(&self, z: &[u64], j: usize, c: usize) -> Result<Vec<u64>> {
        let comp = &self.comps[j];
        let local = self.ring.to_poly(z).rem(&comp.a.pow(comp.e));
        let (g, rem) = local.divrem(&comp.a.pow(comp.e - c));
        if !rem.is_zero() {
            return Err(Error::Internal("value outside the expected ideal".into()));
        }
        let g = g.rem(&comp.a.pow(c));
        Ok(self.ring.mul(&self.ring.reduce(&g), &comp.idem))
    }
    /// Inverse of a unit g modulo a^c inside K_j.
    pub fn inverse_mod(&self, g: &[u64], j: usize, c: usize) -> Result<Vec<u64>> {
        let ctx = self.ctx();
        let comp = &self.comps[j];
        let ac = comp.a.pow(c);
        let (d, u, _) = upoly::ext_gcd(ctx, &self.ring.to_poly(g).rem(&ac).coeffs, &ac.coeffs);
        if d.len() != 1 {
            return Err(Error::Internal("non-unit K-value".into()));
        }
        let u = Poly::new(ctx, u).scale(ctx.inv(d[0]));
        Ok(self.ring.mul(&self.ring.reduce(&u), &comp.idem))
    }
}

/// Peel V into hyperbolic K-pairs for the K-valued form h, component by
/// component, choosing vectors of largest exponent first.
pub fn symplectic_pairs(tr: &TensorRing) -> Result<Vec<SymplecticPair>> {
    let ctx = tr.ctx().clone();
    let d = tr.d();
    let ring = &tr.ring;
    let mut out = Vec::new();
    for (ci, comp) in tr.comps.iter().enumerate() {
        let proj = tr.sigma.eval_poly(&ring.to_poly(&comp.idem));
        let a_s = tr.sigma.eval_poly(&comp.a);
        let mut space = Subspace::from_mat(&proj);
        while space.dim() > 0 {
            let (mut v, mut c) = (Vec::new(), 0usize);
            for u in space.rows() {
                let (mut x, mut k) = (u.clone(), 0);
                while x.iter().any(|&z| z != 0) {
                    x = vec_mat(&x, &a_s);
                    k += 1;
                }
                if k > c {
                    c = k;
                    v = u;
                }
            }
            let mut found = None;
            for u in space.rows() {
                let g = tr.divide_pi(&tr.h(&v, &u), ci, c)?;
                if !ring.to_poly(&g).rem(&comp.a).is_zero() {
                    found = Some((u, g));
                    break;
                }
            }
            let (u, g) = found.ok_or_else(|| Error::Internal("degenerate K-form".into()))?;
            let w = tr.act(&u, &tr.inverse_mod(&g, ci, c)?);
            let rows: Vec<Vec<u64>> = space
                .rows()
                .iter()
                .map(|x| -> Result<Vec<u64>> {
                    let mut y = x.clone();
                    let a1 = tr.act(&v, &tr.divide_pi(&tr.h(x, &w), ci, c)?);
                    let a2 = tr.act(&w, &tr.divide_pi(&tr.h(x, &v), ci, c)?);
                    for k in 0..d {
                        y[k] = ctx.add(ctx.sub(y[k], a1[k]), a2[k]);
                    }
                    Ok(y)
                })
                .collect::<Result<_>>()?;
            space = Subspace::from_rows(&ctx, d, &rows);
            out.push(SymplecticPair { v, w, comp: ci, exp: c });
        }
    }
    Ok(out)
}

/// Recombination making the first form invertible, or None if no rational
/// combination of the pair is nondegenerate.
fn normalizer(s: &SystemOfForms) -> Option<Mat> {
    let (l, m) = crate::pencil::find_nondeg_combination(s)?;
    let ctx = &s.ctx;
    let h = if l != 0 { Mat::from_rows(ctx, &[vec![l, 0], vec![m, 1]]) } else { Mat::from_rows(ctx, &[vec![l, 1], vec![m, 0]]) };
    Some(h)
}

/// Solve φ·Φ^B_s·φᵀ = Σ_t φ̂[t][s]·Φ^A_t for φ̂ given φ.
pub(crate) fn solve_phi_hat(a: &SystemOfForms, b: &SystemOfForms, phi: &Mat) -> Option<Mat> {
    let ctx = &a.ctx;
    let cols: Vec<Vec<u64>> = a.forms.iter().map(|f| f.data.clone()).collect();
    let sys = Mat::from_rows(ctx, &cols).transpose();
    let mut hat = Mat::zeros(ctx, a.e, b.e);
    for (s, fb) in b.forms.iter().enumerate() {
        let rhs = phi.mul(fb).mul(&phi.transpose());
        let sol = sys.solve(&rhs.data)?;
        for t in 0..a.e {
            hat.set(t, s, sol[t]);
        }
    }
    Some(hat)
}

/// Linear (τ = 0) adjoint-tensor search between pairs with invertible first forms.
fn linear_adjoint_tensor(a: &SystemOfForms, b: &SystemOfForms) -> Result<Option<PseudoIsometry>> {
    let tra = tensor_ring(a)?;
    let sb = slope(b)?;
    let Some((rho, beta)) = conjugate_slopes(&tra, &sb)? else { return Ok(None) };
    let b2 = b.congruent(&rho);
    let trb = tensor_ring_with(&b2.forms[0], &tra.sigma)?;
    if trb.ring.m != tra.ring.m {
        return Err(Error::Internal("conjugated slope generates a different ring".into()));
    }
    let x = tra.ring.x();
    let grp = acting_group(&tra)?;
    let Some(gstar) = staged_transport(&tra, &grp, &tra.hat_dual(&x), &tra.hat_dual(&beta))? else { return Ok(None) };
    let (phi, hat) = lift_dual_map(a, &tra, &b2, &trb, &beta, &gstar)?;
    let w = PseudoIsometry { phi: phi.mul(&rho), phi_hat: hat, tau: 0 };
    if !w.verify(a, b) {
        return Err(Error::Internal("adjoint-tensor witness failed verification".into()));
    }
    Ok(Some(w))
}

/// Lift a map g* of K carrying the dual of ker ∘̂_A onto the dual of
/// ker ∘̂_B (B with slope β ∈ K) to (φ, φ̂) with φ·Φ^B_s·φᵀ = Σ_t φ̂[t][s]·Φ^A_t.
fn lift_dual_map(a: &SystemOfForms, tra: &TensorRing, b2: &SystemOfForms, trb: &TensorRing, beta: &[u64], gstar: &Mat) -> Result<(Mat, Mat)> {
    let ring = &tra.ring;
    let x = ring.x();
    let cprime = gstar.row(0).to_vec();
    let cinv = ring.inverse(&cprime).ok_or_else(|| Error::Internal("transporter image of 1 is not a unit".into()))?;
    let s = ring.mul(&cinv, gstar.row(1));
    let theta = substitution_matrix(ring, &s);
    let ua = tra.hat_kernel(&x).image(&theta);
    let ub = tra.hat_kernel(beta);
    let c = transporter_in_algebra(ring, &ua, &ub).ok_or_else(|| Error::Internal("dual transport has no primal unit".into()))?;
    let pa = symplectic_pairs(&tra)?;
    let pb = symplectic_pairs(&trb)?;
    let target_comp: Vec<usize> = tra
        .comps
        .iter()
        .map(|comp| {
            let img = vec_mat(&comp.idem, &theta);
            tra.comps.iter().position(|o| o.idem == img).ok_or_else(|| Error::Internal("automorphism does not permute components".into()))
        })
        .collect::<Result<_>>()?;
    let mut used = vec![false; pb.len()];
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    for p in &pa {
        let j = (0..pb.len())
            .find(|&j| !used[j] && pb[j].comp == target_comp[p.comp] && pb[j].exp == p.exp)
            .ok_or_else(|| Error::Internal("K-module types differ".into()))?;
        used[j] = true;
        // rescale w' so that h(v'·c, w'') = c·θ(h(v, w))
        let target = vec_mat(&tra.h(&p.v, &p.w), &theta);
        let (jc, e) = (pb[j].comp, p.exp);
        let ratio = ring.mul(&trb.divide_pi(&target, jc, e)?, &trb.inverse_mod(&trb.divide_pi(&trb.h(&pb[j].v, &pb[j].w), jc, e)?, jc, e)?);
        let wb = trb.act(&pb[j].w, &ratio);
        let size = p.exp * tra.comps[p.comp].a.deg();
        // v·x^k ↦ (v'·c)·s^k and w·x^k ↦ w'·s^k with s = θ(x)
        let (mut sk, mut sp) = (ring.one(), ring.one());
        for _ in 0..size {
            src.push(tra.act(&p.v, &sk));
            src.push(tra.act(&p.w, &sk));
            dst.push(trb.act(&pb[j].v, &ring.mul(&c, &sp)));
            dst.push(trb.act(&wb, &sp));
            sk = ring.mul(&sk, &x);
            sp = ring.mul(&sp, &s);
        }
    }
    let d = a.d;
    let psrc = Mat::from_rows_cols(&a.ctx, d, d, &src);
    let pdst = Mat::from_rows_cols(&a.ctx, d, d, &dst);
    let phi = psrc.inverse().ok_or_else(|| Error::Internal("symplectic basis singular".into()))?.mul(&pdst);
    let hat = solve_phi_hat(a, b2, &phi).ok_or_else(|| Error::Internal("lift is not a pseudo-isometry".into()))?;
    Ok((phi, hat))
}

/// Pseudo-isometry test for sloped pairs through the tensor ring of the
/// slope. Errors with Unsupported when A has no rational nondegenerate
/// combination; returns None when B has none (B is then not sloped over k
/// in the same way).
pub fn adjoint_tensor_test(a: &SystemOfForms, b: &SystemOfForms) -> Result<Option<PseudoIsometry>> {
    if a.ctx != b.ctx {
        return Err(Error::FieldMismatch);
    }
    if a.e != 2 || b.e != 2 {
        return Err(Error::Unsupported("the adjoint-tensor test handles pairs of forms".into()));
    }
    if !a.is_fully_nondegenerate() {
        return Err(Error::Unsupported("pair is not fully nondegenerate".into()));
    }
    if a.d != b.d || !b.is_fully_nondegenerate() {
        return Ok(None);
    }
    let ha = normalizer(a).ok_or_else(|| Error::Unsupported("no nondegenerate combination: pair is not sloped over k".into()))?;
    let Some(hb) = normalizer(b) else { return Ok(None) };
    let an = a.recombine(&ha);
    let bn = b.recombine(&hb);
    let to_an = PseudoIsometry { phi: Mat::identity(&a.ctx, a.d), phi_hat: ha, tau: 0 };
    let to_bn = PseudoIsometry { phi: Mat::identity(&a.ctx, a.d), phi_hat: hb, tau: 0 };
    for tau in 0..a.ctx.k() {
        let at = an.frob(tau);
        if let Some(w) = linear_adjoint_tensor(&at, &bn)? {
            let fr = PseudoIsometry { phi: Mat::identity(&a.ctx, a.d), phi_hat: Mat::identity(&a.ctx, 2), tau };
            let total = to_an.compose(&fr).compose(&w).compose(&to_bn.inverse());
            debug_assert!(total.verify(a, b));
            return Ok(Some(total));
        }
    }
    Ok(None)
}

/// Generators of the pseudo-isometries of a sloped pair modulo its
/// isometries: lifts of the stabilizer of ker ∘̂ in the acting group, plus
/// one semilinear self-map per Frobenius power that admits one.
pub fn self_pseudo_isometries(a: &SystemOfForms) -> Result<Vec<PseudoIsometry>> {
    if a.e != 2 || !a.is_fully_nondegenerate() {
        return Err(Error::Unsupported("self-maps need a fully nondegenerate pair".into()));
    }
    let ha = normalizer(a).ok_or_else(|| Error::Unsupported("no nondegenerate combination: pair is not sloped over k".into()))?;
    let an = a.recombine(&ha);
    let to_an = PseudoIsometry { phi: Mat::identity(&a.ctx, a.d), phi_hat: ha, tau: 0 };
    let back = to_an.inverse();
    let tr = tensor_ring(&an)?;
    let x = tr.ring.x();
    let grp = acting_group(&tr)?;
    let mut out = Vec::new();
    for g in staged_stabilizer(&tr, &grp, &tr.hat_dual(&x))? {
        let (phi, phi_hat) = lift_dual_map(&an, &tr, &an, &tr, &x, &g)?;
        out.push(to_an.compose(&PseudoIsometry { phi, phi_hat, tau: 0 }).compose(&back));
    }
    for tau in 1..a.ctx.k() {
        if let Some(w) = linear_adjoint_tensor(&an.frob(tau), &an)? {
            let fr = PseudoIsometry { phi: Mat::identity(&a.ctx, a.d), phi_hat: Mat::identity(&a.ctx, 2), tau };
            out.push(to_an.compose(&fr).compose(&w).compose(&back));
        }
    }
    if let Some(w) = out.iter().find(|w| !w.verify(a, a)) {
        return Err(Error::Internal(format!("self-map with τ = {} failed verification", w.tau)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{random_pseudo_isometry, random_system};
    use crate::gf::{field_make, rng, Rng64};
    use crate::linalg::random_vec;
    use proptest::prelude::*;

    fn k(p: u64, e: u32) -> FieldCtx {
        field_make(p, e, 0).unwrap()
    }

    /// Pair (H(I), H(M)) with M block diagonal in the given companions; slope diag(M, Mᵀ).
    fn with_slope(ctx: &FieldCtx, polys: &[Vec<i64>]) -> SystemOfForms {
        let blocks: Vec<Mat> = polys.iter().map(|c| Mat::companion(&Poly::from_ints(ctx, c))).collect();
        let m = Mat::block_diag(ctx, &blocks);
        let n = m.rows;
        SystemOfForms::new(ctx, 2 * n, vec![Mat::hyperbolic(&Mat::identity(ctx, n)), Mat::hyperbolic(&m)]).unwrap()
    }

    fn random_subspace(ctx: &FieldCtx, n: usize, dim: usize, r: &mut Rng64) -> Subspace {
        loop {
            let rows: Vec<Vec<u64>> = (0..dim).map(|_| random_vec(ctx, n, r)).collect();
            let s = Subspace::from_rows(ctx, n, &rows);
            if s.dim() == dim {
                return s;
            }
        }
    }

    fn all_elements(ring: &QuotientRing) -> Vec<Vec<u64>> {
        residue_elements(&ring.ctx, ring.dim()).collect()
    }

    /// Group closure of matrix generators.
    fn closure(n: usize, ctx: &FieldCtx, gens: &[Mat]) -> Vec<Mat> {
        let id = Mat::identity(ctx, n);
        let mut seen: HashSet<Vec<u64>> = HashSet::from([id.data.clone()]);
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            for g in gens {
                let h = out[i].mul(g);
                if seen.insert(h.data.clone()) {
                    out.push(h);
                }
            }
            i += 1;
        }
        out
    }

    /// Every map r ↦ c·θ(r) with θ a type-preserving automorphism, by enumeration.
    fn brute_group(tr: &TensorRing) -> HashSet<Vec<u64>> {
        let ring = &tr.ring;
        let mut auts = Vec::new();
        for s in all_elements(ring) {
            if !ring.eval_at(&ring.m, &s).iter().all(|&c| c == 0) {
                continue;
            }
            let th = substitution_matrix(ring, &s);
            if th.rank() != ring.dim() {
                continue;
            }
            let ok = tr.comps.iter().enumerate().all(|(i, c)| {
                let img = vec_mat(&c.idem, &th);
                tr.comps.iter().position(|o| o.idem == img).map_or(false, |j| tr.isotypic(i, j))
            });
            if ok {
                auts.push(th);
            }
        }
        let units: Vec<Vec<u64>> = all_elements(ring).into_iter().filter(|u| ring.is_unit(u)).collect();
        let mut out = HashSet::new();
        for th in &auts {
            for c in &units {
                out.insert(th.mul(&ring.mult_matrix(c)).data);
            }
        }
        out
    }

    fn small_cases() -> Vec<(FieldCtx, Vec<Vec<i64>>)> {
        let f3 = k(3, 1);
        vec![
            (f3.clone(), vec![vec![0, 0, 0, 1]]),
            (f3.clone(), vec![vec![0, 0, 0, 0, 1]]),
            (f3.clone(), vec![vec![1, 0, 2, 0, 1]]),
            (f3.clone(), vec![vec![0, 1], vec![1, 1], vec![2, 1]]),
            (f3.clone(), vec![vec![0, 0, 1], vec![1, 2, 1]]),
            (f3.clone(), vec![vec![0, 0, 1], vec![0, 1]]),
            (f3.clone(), vec![vec![1, 0, 1], vec![0, 1], vec![1, 1]]),
            (k(2, 1), vec![vec![1, 1, 1], vec![0, 0, 1]]),
        ]
    }

    #[test]
    fn wedge_factors_both_forms() {
        let ctx = k(7, 1);
        let mut r = rng(3);
        for _ in 0..5 {
            let s = random_system(&ctx, 8, 2, &mut r);
            let Some(h) = normalizer(&s) else { continue };
            let s = s.recombine(&h);
            let tr = tensor_ring(&s).unwrap();
            let x = tr.ring.x();
            for _ in 0..10 {
                let (u, v) = (random_vec(&ctx, 8, &mut r), random_vec(&ctx, 8, &mut r));
                let huv = tr.h(&u, &v);
                let vals = s.eval(&u, &v);
                assert_eq!(tr.lambda(&huv), vals[0]);
                assert_eq!(tr.lambda(&tr.ring.mul(&x, &huv)), vals[1]);
                assert_eq!(tr.h(&vec_mat(&u, &tr.sigma), &v), tr.ring.mul(&x, &huv));
            }
        }
    }

    #[test]
    fn acting_group_matches_enumeration() {
        for (ctx, polys) in small_cases() {
            let tr = tensor_ring(&with_slope(&ctx, &polys)).unwrap();
            let grp = acting_group(&tr).unwrap();
            let gen: HashSet<Vec<u64>> = closure(tr.dim(), &ctx, &grp.all_gens()).into_iter().map(|m| m.data).collect();
            assert_eq!(gen, brute_group(&tr), "{:?}", polys);
            for g in &grp.q_gens {
                assert!(g.sub(&Mat::identity(&ctx, tr.dim())).pow(tr.dim() as u64).is_zero());
            }
        }
    }

    #[test]
    fn algebra_transporter_matches_enumeration() {
        let mut r = rng(11);
        for (ctx, polys) in small_cases() {
            let tr = tensor_ring(&with_slope(&ctx, &polys)).unwrap();
            let ring = &tr.ring;
            let n = ring.dim();
            let units: Vec<Vec<u64>> = all_elements(ring).into_iter().filter(|u| ring.is_unit(u)).collect();
            for trial in 0..40 {
                let dim = 1 + trial % (n - 1);
                let x = random_subspace(&ctx, n, dim, &mut r);
                let y = if trial % 2 == 0 { subspace_mul(ring, &x, &units[trial % units.len()]) } else { random_subspace(&ctx, n, dim, &mut r) };
                let brute = units.iter().any(|u| subspace_mul(ring, &x, u) == y);
                let found = transporter_in_algebra(ring, &x, &y);
                assert_eq!(found.is_some(), brute);
                if let Some(u) = found {
                    assert!(ring.is_unit(&u) && subspace_mul(ring, &x, &u) == y);
                }
                let stab_gens: Vec<Mat> = stabilizer_in_algebra(ring, &x).unwrap().iter().map(|g| ring.mult_matrix(g)).collect();
                let gen: HashSet<Vec<u64>> = closure(n, &ctx, &stab_gens).into_iter().map(|m| m.data).collect();
                let want: HashSet<Vec<u64>> = units.iter().filter(|u| subspace_mul(ring, &x, u) == x).map(|u| ring.mult_matrix(u).data).collect();
                assert_eq!(gen, want);
            }
        }
    }

    #[test]
    fn unipotent_and_staged_transport_match_orbits() {
        let mut r = rng(5);
        for (ctx, polys) in small_cases() {
            let tr = tensor_ring(&with_slope(&ctx, &polys)).unwrap();
            let n = tr.dim();
            let grp = acting_group(&tr).unwrap();
            let qgrp = closure(n, &ctx, &grp.q_gens);
            let full = closure(n, &ctx, &grp.all_gens());
            for trial in 0..12 {
                let dim = 1 + trial % (n - 1);
                let x = random_subspace(&ctx, n, dim, &mut r);
                let y = if trial % 3 == 0 { x.image(&full[trial * 7 % full.len()]) } else if trial % 3 == 1 { x.image(&qgrp[trial % qgrp.len()]) } else { random_subspace(&ctx, n, dim, &mut r) };
                let in_q = qgrp.iter().any(|g| x.image(g) == y);
                let w = unipotent_transport(&grp.q_gens, &x, &y).unwrap();
                assert_eq!(w.is_some(), in_q);
                if let Some(w) = w {
                    assert!(x.image(&w) == y && qgrp.iter().any(|g| *g == w));
                }
                let in_g = full.iter().any(|g| x.image(g) == y);
                let g = staged_transport(&tr, &grp, &x, &y).unwrap();
                assert_eq!(g.is_some(), in_g, "{:?} dim {}", polys, dim);
                if let Some(g) = g {
                    assert!(x.image(&g) == y && full.iter().any(|h| *h == g));
                }
                let st: HashSet<Vec<u64>> = closure(n, &ctx, &staged_stabilizer(&tr, &grp, &x).unwrap()).into_iter().map(|m| m.data).collect();
                let want: HashSet<Vec<u64>> = full.iter().filter(|g| x.image(g) == x).map(|g| g.data.clone()).collect();
                assert_eq!(st, want);
                let ust: HashSet<Vec<u64>> = closure(n, &ctx, &unipotent_stabilizer(&grp.q_gens, &x).unwrap()).into_iter().map(|m| m.data).collect();
                let uwant: HashSet<Vec<u64>> = qgrp.iter().filter(|g| x.image(g) == x).map(|g| g.data.clone()).collect();
                assert_eq!(ust, uwant);
            }
        }
    }

    #[test]
    fn conjugates_across_different_minimal_polynomials() {
        let ctx = k(3, 1);
        let a = with_slope(&ctx, &[vec![1, 0, 2, 0, 1]]);
        let b = with_slope(&ctx, &[vec![1, 1, 2, 2, 1]]);
        let (rho, tau) = conjugate_adjoints(&a, &b).unwrap().expect("conjugate");
        assert_eq!(tau, 0);
        let sa = slope(&a).unwrap();
        let conj = rho.mul(&slope(&b).unwrap()).mul(&rho.inverse().unwrap());
        let tr = tensor_ring(&a).unwrap();
        let inside = tr.ring.m.deg();
        let pows: Vec<Vec<u64>> = (0..inside).map(|i| sa.pow(i as u64).data).collect();
        let span = Subspace::from_rows(&ctx, sa.data.len(), &pows);
        assert!(span.contains(&conj.data));
        let c = with_slope(&ctx, &[vec![0, 0, 0, 0, 1]]);
        assert!(conjugate_adjoints(&a, &c).unwrap().is_none());
    }

    #[test]
    fn agrees_with_small_field_test() {
        let mut r = rng(21);
        let mut ran = 0;
        for (p, e, d) in [(3u64, 1u32, 6usize), (5, 1, 8), (3, 2, 6), (2, 2, 6), (7, 1, 8)] {
            let ctx = k(p, e);
            for trial in 0..6 {
                let a = random_system(&ctx, d, 2, &mut r);
                let b = if trial % 2 == 0 { random_pseudo_isometry(&ctx, d, 2, &mut r).apply(&a) } else { random_system(&ctx, d, 2, &mut r) };
                let Ok(at) = adjoint_tensor_test(&a, &b) else { continue };
                ran += 1;
                let sf = crate::pfaffian::small_field_test(&a, &b).unwrap();
                assert_eq!(at.is_some(), sf.is_some(), "q={} d={} trial {}", ctx.q(), d, trial);
                if let Some(w) = at {
                    assert!(w.verify(&a, &b));
                }
                if trial % 2 == 0 {
                    assert!(sf.is_some());
                }
            }
        }
        assert!(ran >= 20, "only {} instances were sloped", ran);
    }

    /// Random slope built from small primary blocks, disguised by a random
    /// congruence and recombination.
    fn random_structured(ctx: &FieldCtx, r: &mut Rng64) -> SystemOfForms {
        use rand::Rng;
        let pool: Vec<Vec<i64>> = vec![vec![0, 1], vec![1, 1], vec![2, 1], vec![0, 0, 1], vec![1, 2, 1], vec![1, 0, 1], vec![2, 1, 1], vec![0, 0, 0, 1]];
        let mut polys = Vec::new();
        let mut n = 0;
        while n < 3 {
            let c = pool[r.gen_range(0..pool.len())].clone();
            if n + c.len() - 1 > 4 {
                break;
            }
            n += c.len() - 1;
            polys.push(c);
        }
        let s = with_slope(ctx, &polys);
        if !s.is_fully_nondegenerate() {
            return random_structured(ctx, r);
        }
        random_pseudo_isometry(ctx, s.d, 2, r).apply(&s)
    }

    #[test]
    fn structured_pairs_agree_with_small_field_test() {
        let ctx = k(3, 1);
        let mut r = rng(99);
        let (mut yes, mut no) = (0, 0);
        for _ in 0..60 {
            let a = random_structured(&ctx, &mut r);
            let b = random_structured(&ctx, &mut r);
            if a.d != b.d {
                continue;
            }
            let Ok(at) = adjoint_tensor_test(&a, &b) else { continue };
            let sf = crate::pfaffian::small_field_test(&a, &b).unwrap();
            assert_eq!(at.is_some(), sf.is_some());
            if let Some(w) = at {
                assert!(w.verify(&a, &b));
                yes += 1;
            } else {
                no += 1;
            }
        }
        assert!(yes > 0 && no > 0, "yes {} no {}", yes, no);
    }

    #[test]
    fn structured_slopes_round_trip() {
        let mut r = rng(8);
        let ctx = k(3, 1);
        for polys in [vec![vec![0, 0, 1], vec![0, 1]], vec![vec![1, 0, 2, 0, 1]], vec![vec![0, 1], vec![1, 1], vec![2, 1]], vec![vec![1, 0, 1], vec![1, 0, 1]]] {
            let a = with_slope(&ctx, &polys);
            let b = random_pseudo_isometry(&ctx, a.d, 2, &mut r).apply(&a);
            let w = adjoint_tensor_test(&a, &b).unwrap_or_else(|e| panic!("{:?}: {:?}", polys, e)).expect("planted");
            assert!(w.verify(&a, &b));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn planted_pairs_are_recovered(seed in any::<u64>(), big in any::<bool>()) {
            let ctx = if big { k(7, 1) } else { k(3, 2) };
            let mut r = rng(seed);
            let a = random_system(&ctx, 8, 2, &mut r);
            let b = random_pseudo_isometry(&ctx, 8, 2, &mut r).apply(&a);
            if let Ok(w) = adjoint_tensor_test(&a, &b) {
                let w = w.expect("planted pseudo-isometry");
                prop_assert!(w.verify(&a, &b));
            }
        }
    }
}
