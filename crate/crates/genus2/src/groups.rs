//! Class-2 exponent-p groups given by commutator forms: presentations,
//! the isoclinism and isomorphism decisions, explicit isomorphisms,
//! pseudo-isometry group generators and central automorphisms.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::forms::{
    adjoint, centroid, centroid_factors, centroid_root, descend_witness, extend_core_witness, nondegenerate_core, rewrite_over_residue,
    rewrite_with_generator, NondegCore, PseudoIsometry, ResidueRewrite, SystemOfForms,
};
use crate::gf::{FieldCtx, Poly};
use crate::linalg::{vec_mat, Mat, Subspace};
use crate::pencil::{find_nondeg_combination, orth_decompose, PencilKind};
use crate::pfaffian::{lift_with_twist, pgamma_l2, self_twists, small_field_test, GammaL2};

/// Group element x₁^{a₁}⋯x_d^{a_d}·z₁^{b₁}⋯z_e^{b_e}, stored as (a, b).
pub type Element = Vec<u64>;

/// The class-2 group with generators x₁..x_d, z₁..z_e, central z's,
/// [x_i, x_j] = ∏_t z_t^{(Φ_t)_ij} and every generator of order p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Genus2Group {
    pub p: u64,
    pub d: usize,
    pub e: usize,
    pub forms: SystemOfForms,
    /// exponent p is asserted; always true for groups built here (p odd)
    pub exponent_p: bool,
}

/// Build the group presented by a system of forms over a prime field.
pub fn group_from_forms(s: &SystemOfForms) -> Result<Genus2Group> {
    if !s.ctx.is_prime_field() {
        return Err(Error::Invalid("group presentations need forms over a prime field".into()));
    }
    if s.ctx.p() == 2 {
        return Err(Error::Unsupported("p = 2: class-2 groups of exponent 2 are abelian, so the exponent-p model does not apply".into()));
    }
    Ok(Genus2Group { p: s.ctx.p(), d: s.d, e: s.e, forms: s.clone(), exponent_p: true })
}

/// The commutator forms of a presentation.
pub fn forms_from_group(g: &Genus2Group) -> SystemOfForms {
    g.forms.clone()
}

impl Genus2Group {
    pub fn ctx(&self) -> &FieldCtx {
        &self.forms.ctx
    }

    /// log_p of the order.
    pub fn log_order(&self) -> usize {
        self.d + self.e
    }

    pub fn identity(&self) -> Element {
        vec![0; self.d + self.e]
    }

    pub fn x(&self, i: usize) -> Element {
        let mut g = self.identity();
        g[i] = 1;
        g
    }

    pub fn z(&self, t: usize) -> Element {
        let mut g = self.identity();
        g[self.d + t] = 1;
        g
    }

    /// Collection cocycle c(a, a')_t = Σ_{i>j} a_i·a'_j·(Φ_t)_ij, the central
    /// part produced by moving x^{a'} left past x^{a}.
    fn cocycle(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let ctx = self.ctx();
        self.forms
            .forms
            .iter()
            .map(|f| {
                let mut acc = 0;
                for i in 0..self.d {
                    if a[i] == 0 {
                        continue;
                    }
                    for j in 0..i {
                        if b[j] != 0 {
                            acc = ctx.add(acc, ctx.mul(ctx.mul(a[i], b[j]), f.get(i, j)));
                        }
                    }
                }
                acc
            })
            .collect()
    }

    pub fn mul(&self, g: &[u64], h: &[u64]) -> Element {
        let ctx = self.ctx();
        let c = self.cocycle(&g[..self.d], &h[..self.d]);
        let mut out: Element = g.iter().zip(h).map(|(&a, &b)| ctx.add(a, b)).collect();
        for (t, ct) in c.into_iter().enumerate() {
            out[self.d + t] = ctx.add(out[self.d + t], ct);
        }
        out
    }

    pub fn inv(&self, g: &[u64]) -> Element {
        let ctx = self.ctx();
        let c = self.cocycle(&g[..self.d], &g[..self.d]);
        let mut out: Element = g.iter().map(|&a| ctx.neg(a)).collect();
        for (t, ct) in c.into_iter().enumerate() {
            out[self.d + t] = ctx.add(out[self.d + t], ct);
        }
        out
    }

    pub fn pow(&self, g: &[u64], mut n: u64) -> Element {
        let mut acc = self.identity();
        let mut base = g.to_vec();
        while n > 0 {
            if n & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            n >>= 1;
        }
        acc
    }

    /// [g, h] = g⁻¹h⁻¹gh.
    pub fn comm(&self, g: &[u64], h: &[u64]) -> Element {
        let gh = self.mul(g, h);
        let hg = self.mul(h, g);
        self.mul(&self.inv(&hg), &gh)
    }

    /// Product of a word given as (element, exponent) pairs.
    pub fn word(&self, parts: &[(Element, u64)]) -> Element {
        parts.iter().fold(self.identity(), |acc, (g, n)| self.mul(&acc, &self.pow(g, *n)))
    }
}

/// The F_p-system underlying a system over F_q (restriction of scalars):
/// basis v_i·ω^l of V and coordinates of values in the basis 1, ω, …, ω^{k−1}.
pub fn restrict_scalars(s: &SystemOfForms) -> SystemOfForms {
    let big = &s.ctx;
    let k = big.k() as usize;
    if k == 1 {
        return s.clone();
    }
    let base = big.prime_subfield();
    let w = big.from_digits(&[0, 1]);
    let pw: Vec<u64> = (0..k).map(|l| big.pow(w, l as u64)).collect();
    let (d, e) = (s.d * k, s.e * k);
    let mut forms = vec![Mat::zeros(&base, d, d); e];
    for i in 0..s.d {
        for j in 0..s.d {
            for t in 0..s.e {
                let v = s.forms[t].get(i, j);
                for l in 0..k {
                    for m in 0..k {
                        let dig = big.digits(big.mul(big.mul(pw[l], pw[m]), v));
                        for (c, &dv) in dig.iter().enumerate().take(k) {
                            forms[t * k + c].set(i * k + l, j * k + m, dv);
                        }
                    }
                }
            }
        }
    }
    SystemOfForms { ctx: base, d, e, forms }
}

/// H(R)/L for R = F_q[x]/(a^c) and L ≤ R of codimension 2: V = R ⊕ R with
/// (u₁, u₂)∘(v₁, v₂) = u₁v₂ − u₂v₁ read modulo L. Over a non-prime field the
/// system is restricted to F_p before building the group.
pub fn heisenberg_quotient(a: &Poly, c: usize, l: &Subspace) -> Result<Genus2Group> {
    group_from_forms(&restrict_scalars(&heisenberg_quotient_forms(a, c, l)?))
}

/// The system of forms of H(R)/L over F_q.
pub fn heisenberg_quotient_forms(a: &Poly, c: usize, l: &Subspace) -> Result<SystemOfForms> {
    let ctx = &a.ctx;
    if a.deg() == 0 || c == 0 {
        return Err(Error::Invalid("need a nonconstant polynomial and a positive exponent".into()));
    }
    let m = a.monic().pow(c);
    let n = m.deg();
    if l.n != n || n < 2 || l.dim() + 2 != n {
        return Err(Error::Invalid(format!("L must have codimension 2 in a ring of dimension {n}")));
    }
    // coordinates modulo L: extend a basis of L and read the last two coordinates
    let full = crate::linalg::extend_basis(ctx, n, &l.rows(), &Mat::identity(ctx, n).row_vecs());
    let basis = Mat::from_rows_cols(ctx, n, n, &full);
    let inv = basis.inverse().ok_or_else(|| Error::Internal("extended basis is singular".into()))?;
    let quot = |f: &Poly| -> [u64; 2] {
        let r = f.rem(&m);
        let v: Vec<u64> = (0..n).map(|i| r.coeff(i)).collect();
        let y = vec_mat(&v, &inv);
        [y[n - 2], y[n - 1]]
    };
    let mut forms = vec![Mat::zeros(ctx, 2 * n, 2 * n); 2];
    let x = Poly::x(ctx);
    for i in 0..n {
        for j in 0..n {
            let val = quot(&x.pow(i + j));
            for t in 0..2 {
                forms[t].set(i, n + j, val[t]);
                forms[t].set(n + j, i, ctx.neg(val[t]));
            }
        }
    }
    SystemOfForms::new(ctx, 2 * n, forms)
}

/// The group of the indecomposable flat pair of dimension 2m + 1; order p^{2m+3}.
pub fn flat_group(ctx: &FieldCtx, m: usize) -> Result<Genus2Group> {
    if m == 0 {
        return Err(Error::Invalid("flat blocks need m ≥ 1".into()));
    }
    group_from_forms(&crate::pencil::canonical_system(ctx, &[PencilKind::Flat { m }]))
}

/// The pair (H(I), H(C(f))) whose slope is C(f) ⊕ C(f)ᵀ.
pub fn slope_pair(f: &Poly) -> SystemOfForms {
    let ctx = &f.ctx;
    let n = f.deg();
    let forms = vec![Mat::hyperbolic(&Mat::identity(ctx, n)), Mat::hyperbolic(&Mat::companion(f))];
    SystemOfForms { ctx: ctx.clone(), d: 2 * n, e: 2, forms }
}

/// Which genus-2 algorithm decides pairs of forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Pfaffian route for q ≤ 64 or pairs without a rational nondegenerate
    /// combination, adjoint-tensor route otherwise
    Auto,
    Pfaffian,
    Adjten,
}

/// Largest field size routed to the Pfaffian test by `Mode::Auto`.
pub const AUTO_PFAFFIAN_MAX_Q: u64 = 64;

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "auto" => Ok(Mode::Auto),
            "pfaffian" => Ok(Mode::Pfaffian),
            "adjten" => Ok(Mode::Adjten),
            _ => Err(Error::Invalid(format!("unknown mode {s:?} (expected auto, pfaffian or adjten)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Auto => "auto",
            Mode::Pfaffian => "pfaffian",
            Mode::Adjten => "adjten",
        })
    }
}

impl Mode {
    /// The concrete algorithm used for a pair A.
    pub fn resolve(self, a: &SystemOfForms) -> Mode {
        match self {
            Mode::Auto if a.ctx.q() <= AUTO_PFAFFIAN_MAX_Q || find_nondeg_combination(a).is_none() => Mode::Pfaffian,
            Mode::Auto => Mode::Adjten,
            m => m,
        }
    }
}

/// Rows T with T·Φ·Tᵀ = [[0, I], [−I, 0]] for a nondegenerate alternating Φ
/// (symplectic Gram–Schmidt).
pub fn symplectic_basis(f: &Mat) -> Option<Mat> {
    let ctx = &f.ctx;
    let n = f.rows;
    if n % 2 == 1 {
        return None;
    }
    let b = |u: &[u64], v: &[u64]| crate::linalg::dot(ctx, &vec_mat(u, f), v);
    let mut rest = Mat::identity(ctx, n).row_vecs();
    let (mut es, mut fs) = (Vec::new(), Vec::new());
    while let Some(u) = rest.pop() {
        let j = rest.iter().position(|v| b(&u, v) != 0)?;
        let v = rest.swap_remove(j);
        let (mut v, c) = (v.clone(), ctx.inv(b(&u, &v)));
        crate::linalg::scale_in_place(ctx, &mut v, c);
        for w in rest.iter_mut() {
            let (wu, wv) = (b(w, &u), b(w, &v));
            crate::linalg::axpy(ctx, w, &u, ctx.neg(wv));
            crate::linalg::axpy(ctx, w, &v, wu);
        }
        es.push(u);
        fs.push(v);
    }
    es.extend(fs);
    Some(Mat::from_rows_cols(ctx, n, n, &es))
}

/// Genus-1 test: single nondegenerate forms are isometric iff they have the
/// same dimension.
fn genus1_test(a: &SystemOfForms, b: &SystemOfForms) -> Result<Option<PseudoIsometry>> {
    if a.d != b.d {
        return Ok(None);
    }
    let ta = symplectic_basis(&a.forms[0]).ok_or_else(|| Error::Internal("form is degenerate".into()))?;
    let tb = symplectic_basis(&b.forms[0]).ok_or_else(|| Error::Internal("form is degenerate".into()))?;
    let phi = ta.inverse().ok_or_else(|| Error::Internal("symplectic basis singular".into()))?.mul(&tb);
    Ok(Some(PseudoIsometry { phi, phi_hat: Mat::identity(&a.ctx, 1), tau: 0 }))
}

/// Genus-2 test for fully nondegenerate pairs, routed by mode.
pub fn pair_test(a: &SystemOfForms, b: &SystemOfForms, mode: Mode) -> Result<Option<PseudoIsometry>> {
    match mode.resolve(a) {
        Mode::Adjten => crate::adjten::adjoint_tensor_test(a, b),
        _ => small_field_test(a, b),
    }
}

/// Test on fully nondegenerate systems of genus at most 2 over the base
/// field or over the residue fields of their centroid factors.
pub fn core_test(a: &SystemOfForms, b: &SystemOfForms, mode: Mode) -> Result<Option<PseudoIsometry>> {
    if a.ctx != b.ctx {
        return Err(Error::FieldMismatch);
    }
    if a.d != b.d || a.e != b.e {
        return Ok(None);
    }
    let w = match a.e {
        0 => Some(PseudoIsometry::identity(a)),
        1 => genus1_test(a, b)?,
        2 => pair_test(a, b, mode)?,
        _ => factor_test(a, b, mode)?,
    };
    match w {
        Some(w) if !w.verify(a, b) => Err(Error::Internal("core witness failed verification".into())),
        w => Ok(w),
    }
}

/// One centroid factor rewritten over its residue field.
struct Factor {
    v_basis: Mat,
    w_basis: Mat,
    sys: SystemOfForms,
    cent: crate::forms::CentroidData,
}

fn split_factors(s: &SystemOfForms) -> Result<Vec<Factor>> {
    let c = centroid(s);
    let mut out = Vec::new();
    for f in centroid_factors(s, &c) {
        let cent = centroid(&f.sys);
        if !cent.is_field {
            return Err(Error::Unsupported(format!("centroid factor is a local ring with radical of dimension {}", cent.radical.len())));
        }
        out.push(Factor { v_basis: f.v_basis, w_basis: f.w_basis, sys: f.sys, cent });
    }
    Ok(out)
}

/// Witness between two centroid factors, found over A's residue field.
fn factor_pair_test(fa: &Factor, fb: &Factor, mode: Mode) -> Result<Option<PseudoIsometry>> {
    if fa.sys.d != fb.sys.d || fa.sys.e != fb.sys.e || fa.cent.dim() != fb.cent.dim() {
        return Ok(None);
    }
    let ra = rewrite_over_residue(&fa.sys, &fa.cent)?;
    let rb: ResidueRewrite = match &fa.cent.residue {
        Some((_, mu)) if ra.degree > 1 => {
            let Some(root) = centroid_root(&fb.cent, mu) else { return Ok(None) };
            let (xt, wt) = fb.cent.element(&root);
            rewrite_with_generator(&fb.sys, &xt, &wt, mu)?
        }
        _ => rewrite_over_residue(&fb.sys, &fb.cent)?,
    };
    if ra.sys.e > 2 {
        return Err(Error::Unsupported(format!("genus {} exceeds 2", ra.sys.e)));
    }
    let w = if ra.sys.e == 1 { genus1_test(&ra.sys, &rb.sys)? } else { pair_test(&ra.sys, &rb.sys, mode)? };
    Ok(w.map(|w| descend_witness(&ra, &rb, &w)))
}

/// Systems with e > 2: split at the centroid idempotents, match factors and
/// assemble the factor witnesses.
fn factor_test(a: &SystemOfForms, b: &SystemOfForms, mode: Mode) -> Result<Option<PseudoIsometry>> {
    let fa = split_factors(a)?;
    let fb = split_factors(b)?;
    if fa.len() != fb.len() {
        return Ok(None);
    }
    // pseudo-isometry of factors is an equivalence, so greedy matching is exact
    let mut used = vec![false; fb.len()];
    let mut matched = Vec::new();
    for f in &fa {
        let mut found = None;
        for (j, g) in fb.iter().enumerate() {
            if used[j] {
                continue;
            }
            if let Some(w) = factor_pair_test(f, g, mode)? {
                found = Some((j, w));
                break;
            }
        }
        let Some((j, w)) = found else { return Ok(None) };
        used[j] = true;
        matched.push((j, w));
    }
    let tau = matched[0].1.tau;
    if matched.iter().any(|(_, w)| w.tau != tau) {
        return Err(Error::Unsupported("centroid factors need different Frobenius twists".into()));
    }
    let ctx = &a.ctx;
    let va = Mat::vstack(ctx, &fa.iter().map(|f| &f.v_basis).collect::<Vec<_>>(), a.d);
    let wa = Mat::vstack(ctx, &fa.iter().map(|f| &f.w_basis).collect::<Vec<_>>(), a.e);
    let vb = Mat::vstack(ctx, &matched.iter().map(|(j, _)| &fb[*j].v_basis).collect::<Vec<_>>(), a.d);
    let wb = Mat::vstack(ctx, &matched.iter().map(|(j, _)| &fb[*j].w_basis).collect::<Vec<_>>(), a.e);
    let phi_mid = Mat::block_diag(ctx, &matched.iter().map(|(_, w)| w.phi.clone()).collect::<Vec<_>>());
    let hat_mid = Mat::block_diag(ctx, &matched.iter().map(|(_, w)| w.phi_hat.clone()).collect::<Vec<_>>());
    let inv = |m: &Mat| m.frob(tau).inverse().ok_or_else(|| Error::Internal("centroid factors do not span".into()));
    Ok(Some(PseudoIsometry { phi: inv(&va)?.mul(&phi_mid).mul(&vb), phi_hat: inv(&wa)?.mul(&hat_mid).mul(&wb), tau }))
}

/// Pseudo-isometry test for systems with equal (d, e): radical quotient,
/// core test, extension by the identity on the radical and image complement.
pub fn pseudo_isometry_test(a: &SystemOfForms, b: &SystemOfForms, mode: Mode) -> Result<Option<PseudoIsometry>> {
    if a.ctx != b.ctx {
        return Err(Error::FieldMismatch);
    }
    if a.d != b.d || a.e != b.e {
        return Ok(None);
    }
    let (ca, cb) = (nondegenerate_core(a), nondegenerate_core(b));
    let Some(w) = core_test(&ca.sys, &cb.sys, mode)? else { return Ok(None) };
    let w = extend_core_witness(&ca, &cb, &w);
    if !w.verify(a, b) {
        return Err(Error::Internal("extended witness failed verification".into()));
    }
    Ok(Some(w))
}

/// An isoclinism: f: G/Z(G) → H/Z(H) and f̂: G′ → H′, given as a
/// pseudo-isometry between the commutator cores. G/Z(G) has basis the rows
/// of `core_g.v_basis` (x-coordinates) and G′ has basis `core_g.w_basis`
/// (z-coordinates); likewise for H.
#[derive(Clone, Debug)]
pub struct Isoclinism {
    pub core_g: NondegCore,
    pub core_h: NondegCore,
    pub witness: PseudoIsometry,
}

impl Isoclinism {
    /// Matrix of f in the chosen bases of G/Z(G) and H/Z(H).
    pub fn quotient_map(&self) -> &Mat {
        &self.witness.phi
    }

    /// Matrix of f̂ in the chosen bases of G′ and H′.
    pub fn derived_map(&self) -> &Mat {
        &self.witness.phi_hat
    }

    pub fn verify(&self) -> bool {
        self.witness.tau == 0 && self.witness.verify(&self.core_g.sys, &self.core_h.sys)
    }
}

/// Decide whether G and H are isoclinic and return an isoclinism.
pub fn isoclinism_test(g: &Genus2Group, h: &Genus2Group, mode: Mode) -> Result<Option<Isoclinism>> {
    if g.p != h.p {
        return Err(Error::FieldMismatch);
    }
    let (cg, ch) = (nondegenerate_core(&g.forms), nondegenerate_core(&h.forms));
    let Some(witness) = core_test(&cg.sys, &ch.sys, mode)? else { return Ok(None) };
    let iso = Isoclinism { core_g: cg, core_h: ch, witness };
    if !iso.verify() {
        return Err(Error::Internal("isoclinism failed verification".into()));
    }
    Ok(Some(iso))
}

/// A homomorphism G → H given by the images of the generators, each image
/// an element (x-part, z-part) of H.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupMap {
    /// row i: image of x_i, a d_G × (d_H + e_H) matrix
    pub x_images: Mat,
    /// row t: image of z_t, an e_G × (d_H + e_H) matrix
    pub z_images: Mat,
}

impl GroupMap {
    pub fn identity(g: &Genus2Group) -> GroupMap {
        let id = Mat::identity(g.ctx(), g.d + g.e);
        GroupMap { x_images: id.submatrix(0, g.d, 0, g.d + g.e), z_images: id.submatrix(g.d, g.d + g.e, 0, g.d + g.e) }
    }

    /// x-parts of the images of x₁..x_d.
    pub fn x_part(&self, h: &Genus2Group) -> Mat {
        self.x_images.submatrix(0, self.x_images.rows, 0, h.d)
    }

    /// Central corrections of the images of x₁..x_d.
    pub fn central_correction(&self, h: &Genus2Group) -> Mat {
        self.x_images.submatrix(0, self.x_images.rows, h.d, h.d + h.e)
    }

    /// Image of an arbitrary element of G.
    pub fn apply(&self, g: &Genus2Group, h: &Genus2Group, el: &[u64]) -> Element {
        let mut parts: Vec<(Element, u64)> = (0..g.d).map(|i| (self.x_images.row(i).to_vec(), el[i])).collect();
        parts.extend((0..g.e).map(|t| (self.z_images.row(t).to_vec(), el[g.d + t])));
        h.word(&parts)
    }
}

/// True iff f preserves every defining relation of G (commutators, central
/// z's, p-th powers) and is bijective.
pub fn verify(g: &Genus2Group, h: &Genus2Group, f: &GroupMap) -> bool {
    let n = h.d + h.e;
    if g.p != h.p || g.log_order() != h.log_order() {
        return false;
    }
    if f.x_images.rows != g.d || f.z_images.rows != g.e || f.x_images.cols != n || f.z_images.cols != n {
        return false;
    }
    let xs: Vec<Element> = (0..g.d).map(|i| f.x_images.row(i).to_vec()).collect();
    let zs: Vec<Element> = (0..g.e).map(|t| f.z_images.row(t).to_vec()).collect();
    let one = h.identity();
    for i in 0..g.d {
        for j in i + 1..g.d {
            let rhs: Vec<(Element, u64)> = (0..g.e).map(|t| (zs[t].clone(), g.forms.forms[t].get(i, j))).collect();
            if h.comm(&xs[i], &xs[j]) != h.word(&rhs) {
                return false;
            }
        }
    }
    for (t, z) in zs.iter().enumerate() {
        if xs.iter().chain(&zs[t + 1..]).any(|y| h.comm(z, y) != one) {
            return false;
        }
    }
    if xs.iter().chain(&zs).any(|y| h.pow(y, h.p) != one) {
        return false;
    }
    // surjective onto H/Φ(H) = H/H′, hence onto H; equal orders give bijectivity
    let image = nondegenerate_core(&h.forms).w_basis;
    let mut rows = f.x_images.row_vecs();
    rows.extend(f.z_images.row_vecs());
    for w in image.row_vecs() {
        let mut r = vec![0; h.d];
        r.extend(w);
        rows.push(r);
    }
    Mat::from_rows_cols(h.ctx(), rows.len(), n, &rows).rank() == n
}

/// Decide whether two exponent-p class-2 groups are isomorphic and return a
/// verified isomorphism. The isoclinism of the stem parts is lifted with
/// zero central correction and the abelian direct factors are matched.
pub fn isomorphism_test(g: &Genus2Group, h: &Genus2Group, mode: Mode) -> Result<Option<GroupMap>> {
    if g.p != h.p {
        return Err(Error::FieldMismatch);
    }
    if !g.exponent_p || !h.exponent_p {
        return Err(Error::Unsupported("isomorphism lifting needs exponent p".into()));
    }
    if g.log_order() != h.log_order() {
        return Ok(None);
    }
    let Some(iso) = isoclinism_test(g, h, mode)? else { return Ok(None) };
    let f = lift_isoclinism(g, h, &iso)?;
    if !verify(g, h, &f) {
        return Err(Error::Internal("lifted isomorphism failed verification".into()));
    }
    Ok(Some(f))
}

fn element(x: &[u64], z: &[u64]) -> Element {
    x.iter().chain(z).copied().collect()
}

/// G = S × A with S generated by x^{v_basis} and z^{w_basis} (the stem part)
/// and A = x^{radical}·z^{image complement} central elementary abelian.
fn lift_isoclinism(g: &Genus2Group, h: &Genus2Group, iso: &Isoclinism) -> Result<GroupMap> {
    let (cg, ch, w) = (&iso.core_g, &iso.core_h, &iso.witness);
    let zero_x = |grp: &Genus2Group| vec![0u64; grp.d];
    let zero_z = |grp: &Genus2Group| vec![0u64; grp.e];
    // images of the stem generators
    let phi_v = w.phi.mul(&ch.v_basis);
    let hat_w = w.phi_hat.mul(&ch.w_basis);
    let stem_x: Vec<Element> = (0..cg.v_basis.rows).map(|k| element(phi_v.row(k), &zero_z(h))).collect();
    let stem_z: Vec<Element> = (0..cg.w_basis.rows).map(|l| element(&zero_x(h), hat_w.row(l))).collect();
    // abelian factors, matched in order
    let abel = |c: &NondegCore, grp: &Genus2Group| -> Vec<Element> {
        let mut v: Vec<Element> = c.v_rad.row_vecs().iter().map(|r| element(r, &zero_z(grp))).collect();
        v.extend(c.w_rest.row_vecs().iter().map(|r| element(&zero_x(grp), r)));
        v
    };
    let (ag, ah) = (abel(cg, g), abel(ch, h));
    if ag.len() != ah.len() {
        return Err(Error::Internal("abelian factors of isoclinic groups of equal order differ".into()));
    }
    let v_inv = cg.v_full().inverse().ok_or_else(|| Error::Internal("radical complement singular".into()))?;
    let w_inv = cg.w_full().inverse().ok_or_else(|| Error::Internal("image complement singular".into()))?;
    let (dc, ec, nr) = (cg.v_basis.rows, cg.w_basis.rows, cg.v_rad.rows);
    let image_of = |el: &[u64]| -> Element {
        // el = (∏ u_k^α_k ∏ r_k^β_k)·(central remainder)
        let y = vec_mat(&el[..g.d], &v_inv);
        let mut src: Vec<(Element, u64)> = Vec::new();
        let mut dst: Vec<(Element, u64)> = Vec::new();
        for k in 0..dc {
            src.push((element(cg.v_basis.row(k), &zero_z(g)), y[k]));
            dst.push((stem_x[k].clone(), y[k]));
        }
        for k in 0..nr {
            src.push((element(cg.v_rad.row(k), &zero_z(g)), y[dc + k]));
            dst.push((ah[k].clone(), y[dc + k]));
        }
        let rem = g.mul(&g.inv(&g.word(&src)), el);
        debug_assert!(rem[..g.d].iter().all(|&c| c == 0));
        let gam = vec_mat(&rem[g.d..], &w_inv);
        for l in 0..ec {
            dst.push((stem_z[l].clone(), gam[l]));
        }
        for l in ec..gam.len() {
            dst.push((ah[nr + l - ec].clone(), gam[l]));
        }
        h.word(&dst)
    };
    let n = h.d + h.e;
    let xs: Vec<Element> = (0..g.d).map(|i| image_of(&g.x(i))).collect();
    let zs: Vec<Element> = (0..g.e).map(|t| image_of(&g.z(t))).collect();
    Ok(GroupMap { x_images: Mat::from_rows_cols(g.ctx(), g.d, n, &xs), z_images: Mat::from_rows_cols(g.ctx(), g.e, n, &zs) })
}

/// The d·e central automorphisms x_i ↦ x_i·z_t (identity on the other
/// generators).
pub fn central_automorphisms(g: &Genus2Group) -> Vec<GroupMap> {
    let mut out = Vec::new();
    for i in 0..g.d {
        for t in 0..g.e {
            let mut f = GroupMap::identity(g);
            f.x_images.set(i, g.d + t, 1);
            out.push(f);
        }
    }
    out
}

/// Generators of ΨIsom(S) for a fully nondegenerate pair: lifts of
/// generators of its image in ΓL(2, q) and generators of Isom(S).
#[derive(Clone, Debug)]
pub struct PseudoIsometryGroup {
    /// lifts (φ, α) of generators α of the image in ΓL(2, q)
    pub twists: Vec<PseudoIsometry>,
    /// isometries (φ̂ = id, τ = 0)
    pub isometries: Vec<PseudoIsometry>,
    /// true if the image in PΓL(2, q) is all of PΓL(2, q)
    pub full_image: bool,
}

impl PseudoIsometryGroup {
    pub fn generators(&self) -> Vec<PseudoIsometry> {
        self.twists.iter().chain(&self.isometries).cloned().collect()
    }
}

/// Number of random conjugates used to harvest isometries.
pub const ISOMETRY_ROUNDS: usize = 12;

/// Standard generators of ΓL(2, q): diag(ω, 1), a transvection, the swap
/// and the Frobenius.
fn gamma_l2_generators(ctx: &FieldCtx) -> Vec<GammaL2> {
    let w = ctx.primitive_element();
    let mut out = vec![
        GammaL2 { g: Mat::from_rows(ctx, &[vec![w, 0], vec![0, 1]]), tau: 0 },
        GammaL2 { g: Mat::from_rows(ctx, &[vec![1, 1], vec![0, 1]]), tau: 0 },
        GammaL2 { g: Mat::from_rows(ctx, &[vec![0, 1], vec![1, 0]]), tau: 0 },
    ];
    if ctx.k() > 1 {
        out.push(GammaL2 { g: Mat::identity(ctx, 2), tau: 1 });
    }
    out
}

/// (g, τ) with g scaled so that its first nonzero entry is 1.
fn projective_key(a: &GammaL2) -> (Vec<u64>, u32) {
    let ctx = &a.g.ctx;
    let lead = a.g.data.iter().copied().find(|&c| c != 0).unwrap_or(1);
    (a.g.scale(ctx.inv(lead)).data, a.tau)
}

/// Closure in PΓL(2, q) of a generating list.
fn projective_closure(ctx: &FieldCtx, gens: &[GammaL2]) -> HashSet<(Vec<u64>, u32)> {
    let id = GammaL2::identity(ctx);
    let mut seen = HashSet::from([projective_key(&id)]);
    let mut queue = vec![id];
    while let Some(x) = queue.pop() {
        for g in gens {
            let y = x.then(g);
            if seen.insert(projective_key(&y)) {
                queue.push(y);
            }
        }
    }
    seen
}

/// Isometries of S: Cayley transforms (1 − L)(1 + L)⁻¹ of random skew
/// elements of the adjoint algebra (p odd), and T_S⁻¹·T_{S^g}·g for random
/// g, where T is the canonical decomposition basis.
pub fn isometry_generators(s: &SystemOfForms, rounds: usize, seed: u64) -> Result<Vec<PseudoIsometry>> {
    let ctx = &s.ctx;
    let mut r = crate::gf::rng(seed);
    let mut out: Vec<PseudoIsometry> = Vec::new();
    let id_hat = Mat::identity(ctx, s.e);
    let push = |phi: Mat, out: &mut Vec<PseudoIsometry>| -> Result<()> {
        let w = PseudoIsometry { phi, phi_hat: id_hat.clone(), tau: 0 };
        if !w.verify(s, s) {
            return Err(Error::Internal("isometry generator failed verification".into()));
        }
        if !w.phi.is_identity() && !out.contains(&w) {
            out.push(w);
        }
        Ok(())
    };
    if ctx.p() != 2 {
        let star = adjoint(s);
        let sums: Vec<Vec<u64>> = star.basis.iter().map(|(l, rr)| l.add(rr).data).collect();
        let skew = Mat::from_rows_cols(ctx, sums.len(), s.d * s.d, &sums).kernel_rows();
        if !skew.is_empty() {
            let one = Mat::identity(ctx, s.d);
            for _ in 0..rounds {
                let c = crate::linalg::random_vec(ctx, skew.len(), &mut r);
                let coeffs = vec_mat(&c, &Mat::from_rows_cols(ctx, skew.len(), star.dim(), &skew));
                let l = crate::linalg::combine(ctx, &star.basis.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>(), &coeffs);
                if let Some(inv) = one.add(&l).inverse() {
                    push(one.sub(&l).mul(&inv), &mut out)?;
                }
            }
        }
    }
    let ts = orth_decompose(s)?.t;
    let ts_inv = ts.inverse().ok_or_else(|| Error::Internal("decomposition basis singular".into()))?;
    for _ in 0..rounds {
        let g = Mat::random_invertible(ctx, s.d, &mut r);
        let tg = orth_decompose(&s.congruent(&g))?.t;
        push(ts_inv.mul(&tg).mul(&g), &mut out)?;
    }
    Ok(out)
}

/// Generators of ΨIsom(S) for a fully nondegenerate pair S. For q ≤ 64
/// the image in PΓL(2, q) is enumerated through Pfaffian matching; for
/// larger q it comes from the staged stabilizer of the sloped part (or is
/// all of ΓL(2, q) when S is flat).
pub fn pseudo_isometry_group(s: &SystemOfForms, seed: u64) -> Result<PseudoIsometryGroup> {
    let ctx = &s.ctx;
    if s.e != 2 || !s.is_fully_nondegenerate() {
        return Err(Error::Unsupported("pseudo-isometry groups are computed for fully nondegenerate pairs".into()));
    }
    let dec = orth_decompose(s)?;
    let sloped: Vec<usize> = dec.blocks.iter().enumerate().filter(|(_, b)| !b.kind.is_flat()).map(|(i, _)| i).collect();
    let scalar = GammaL2 { g: Mat::scalar(ctx, 2, ctx.primitive_element()), tau: 0 };
    let (alphas, full_image) = if sloped.is_empty() {
        (gamma_l2_generators(ctx), true)
    } else if ctx.q() <= AUTO_PFAFFIAN_MAX_Q {
        let matched = self_twists(s)?;
        if matched.len() == pgamma_l2(ctx).len() {
            (gamma_l2_generators(ctx), true)
        } else {
            let mut gens: Vec<GammaL2> = Vec::new();
            let mut closure = projective_closure(ctx, &gens);
            for a in matched {
                if !closure.contains(&projective_key(&a)) {
                    gens.push(a);
                    closure = projective_closure(ctx, &gens);
                }
            }
            gens.push(scalar);
            (gens, false)
        }
    } else {
        // sloped part as its own pair, then lift each twist to all of S
        let rows: Vec<Vec<u64>> = sloped
            .iter()
            .flat_map(|&i| {
                let b = &dec.blocks[i];
                (b.start..b.start + b.kind.dim()).map(|k| dec.t.row(k).to_vec()).collect::<Vec<_>>()
            })
            .collect();
        let part = s.congruent(&Mat::from_rows_cols(ctx, rows.len(), s.d, &rows));
        let mut gens: Vec<GammaL2> = crate::adjten::self_pseudo_isometries(&part)?.iter().map(GammaL2::of_witness).collect();
        gens.push(scalar);
        (gens, false)
    };
    let mut twists = Vec::new();
    for a in &alphas {
        let w = lift_with_twist(s, s, a)?.ok_or_else(|| Error::Internal("stabilizing twist does not lift".into()))?;
        twists.push(w);
    }
    let isometries = isometry_generators(s, ISOMETRY_ROUNDS, seed)?;
    Ok(PseudoIsometryGroup { twists, isometries, full_image })
}

/// Irreducible quartics a₁ = x⁴+x³+x²+1, a₂ = x⁴+2x²+2, a₃ = x⁴+x³+2x+1
/// over F₃, defining the quotients H(F₃[x]/(a_i))/⟨1, x⟩.
pub fn quartic_polynomials() -> Vec<Poly> {
    let ctx = FieldCtx::prime(3).expect("3 is prime");
    [[1i64, 0, 1, 1, 1], [2, 0, 2, 0, 1], [1, 2, 0, 1, 1]].iter().map(|c| Poly::from_ints(&ctx, c)).collect()
}

/// The three groups of order 3¹⁰ built from `quartic_polynomials`.
pub fn quartic_quotient_groups() -> Result<Vec<Genus2Group>> {
    let ctx = FieldCtx::prime(3)?;
    let l = Subspace::from_rows(&ctx, 4, &[vec![1, 0, 0, 0], vec![0, 1, 0, 0]]);
    quartic_polynomials().iter().map(|a| heisenberg_quotient(a, 1, &l)).collect()
}

/// The pair {H(I₄), H(L_i)} with L₁ = diag(0, 1, C), L₂ = diag(0, 0, C) and
/// C the companion matrix of x² − x − 1 (irreducible over F₃): equal
/// multisets of indecomposable factor dimensions, yet not pseudo-isometric.
pub fn equal_factor_pair(ctx: &FieldCtx, first: bool) -> SystemOfForms {
    let mut l = Mat::zeros(ctx, 4, 4);
    if first {
        l.set(1, 1, 1);
    }
    l.set(2, 3, 1);
    l.set(3, 2, 1);
    l.set(3, 3, 1);
    SystemOfForms { ctx: ctx.clone(), d: 8, e: 2, forms: vec![Mat::hyperbolic(&Mat::identity(ctx, 4)), Mat::hyperbolic(&l)] }
}

/// The pairs with slopes C((x² + 1)²) and C((x² + x + 2)²) over F₃: both
/// have tensor ring F₉[t]/(t²), so they are pseudo-isometric, but their
/// slopes are not similar, so they are not isometric.
pub fn heisenberg_pairs() -> (SystemOfForms, SystemOfForms) {
    let ctx = FieldCtx::prime(3).expect("3 is prime");
    (slope_pair(&Poly::from_ints(&ctx, &[1, 0, 1]).pow(2)), slope_pair(&Poly::from_ints(&ctx, &[2, 1, 1]).pow(2)))
}
