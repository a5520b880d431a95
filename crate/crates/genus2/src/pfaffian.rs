//! Generalized Pfaffians of pairs of alternating forms, the ΓL(2,q) action on
//! binary forms and the small-field pseudo-isometry test.

use crate::error::{Error, Result};
use crate::forms::{PseudoIsometry, SystemOfForms};
use crate::gf::{FieldCtx, Poly};
use crate::linalg::Mat;
use crate::pencil::{isotropic_split, kronecker_decompose, orth_decompose, KroneckerKind, PencilDecomposition, PencilKind};

/// Homogeneous binary form Σ c_i x^{n−i} y^i, coefficients listed from x^n to y^n.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryForm {
    pub ctx: FieldCtx,
    pub n: usize,
    pub coeffs: Vec<u64>,
}

impl std::fmt::Debug for BinaryForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut terms = Vec::new();
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (ex, ey) = (self.n - i, i);
            let mut t = if c == 1 && (ex + ey) > 0 { String::new() } else { c.to_string() };
            for (v, e) in [("x", ex), ("y", ey)] {
                match e {
                    0 => {}
                    1 => t.push_str(v),
                    _ => t.push_str(&format!("{v}^{e}")),
                }
            }
            terms.push(t);
        }
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

impl BinaryForm {
    pub fn new(ctx: &FieldCtx, coeffs: Vec<u64>) -> BinaryForm {
        assert!(!coeffs.is_empty(), "a binary form needs n+1 coefficients");
        BinaryForm { ctx: ctx.clone(), n: coeffs.len() - 1, coeffs }
    }

    pub fn from_ints(ctx: &FieldCtx, coeffs: &[i64]) -> BinaryForm {
        BinaryForm::new(ctx, coeffs.iter().map(|&c| ctx.from_int(c)).collect())
    }

    pub fn zero(ctx: &FieldCtx, n: usize) -> BinaryForm {
        BinaryForm::new(ctx, vec![0; n + 1])
    }

    pub fn one(ctx: &FieldCtx) -> BinaryForm {
        BinaryForm::new(ctx, vec![1])
    }

    /// a·x + b·y
    pub fn linear(ctx: &FieldCtx, a: u64, b: u64) -> BinaryForm {
        BinaryForm::new(ctx, vec![a, b])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn mul(&self, o: &BinaryForm) -> BinaryForm {
        let ctx = &self.ctx;
        let mut out = vec![0u64; self.n + o.n + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] = ctx.add(out[i + j], ctx.mul(a, b));
            }
        }
        BinaryForm::new(ctx, out)
    }

    pub fn pow(&self, e: usize) -> BinaryForm {
        let mut r = BinaryForm::one(&self.ctx);
        for _ in 0..e {
            r = r.mul(self);
        }
        r
    }

    pub fn scale(&self, c: u64) -> BinaryForm {
        BinaryForm::new(&self.ctx, self.coeffs.iter().map(|&a| self.ctx.mul(a, c)).collect())
    }

    fn add(&self, o: &BinaryForm) -> BinaryForm {
        assert_eq!(self.n, o.n);
        BinaryForm::new(&self.ctx, self.coeffs.iter().zip(&o.coeffs).map(|(&a, &b)| self.ctx.add(a, b)).collect())
    }

    /// Rescaled so the first nonzero coefficient is 1.
    pub fn monic(&self) -> BinaryForm {
        match self.coeffs.iter().find(|&&c| c != 0) {
            Some(&c) => self.scale(self.ctx.inv(c)),
            None => self.clone(),
        }
    }

    /// y^n·f(−x/y) for a univariate f of degree n.
    pub fn from_char_poly(f: &Poly) -> BinaryForm {
        let ctx = &f.ctx;
        let n = f.deg();
        let mut c = vec![0u64; n + 1];
        for i in 0..=n {
            let v = f.coeff(i);
            c[n - i] = if i % 2 == 1 { ctx.neg(v) } else { v };
        }
        BinaryForm::new(ctx, c)
    }

    /// f^τ(a·x + b·y, c·x + d·y) for α̂ = ([[a, b], [c, d]], τ).
    pub fn act(&self, g: &GammaL2) -> BinaryForm {
        let ctx = &self.ctx;
        let xs = BinaryForm::linear(ctx, g.g.get(0, 0), g.g.get(0, 1));
        let ys = BinaryForm::linear(ctx, g.g.get(1, 0), g.g.get(1, 1));
        let mut xp = vec![BinaryForm::one(ctx)];
        let mut yp = vec![BinaryForm::one(ctx)];
        for _ in 0..self.n {
            xp.push(xp.last().unwrap().mul(&xs));
            yp.push(yp.last().unwrap().mul(&ys));
        }
        let mut out = BinaryForm::zero(ctx, self.n);
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let term = xp[self.n - i].mul(&yp[i]).scale(ctx.frob(c, g.tau));
            out = out.add(&term);
        }
        out
    }
}

/// c with f = c·g, if any.
pub fn proj_equal(f: &BinaryForm, g: &BinaryForm) -> Option<u64> {
    if f.n != g.n || f.ctx != g.ctx {
        return None;
    }
    let ctx = &f.ctx;
    let mut c = None;
    for (&a, &b) in f.coeffs.iter().zip(&g.coeffs) {
        match (a == 0, b == 0) {
            (true, true) => {}
            (false, false) => {
                let r = ctx.div(a, b);
                if *c.get_or_insert(r) != r {
                    return None;
                }
            }
            _ => return None,
        }
    }
    Some(c.unwrap_or(1))
}

/// Element (g, τ) of ΓL(2, q); acts on binary forms by f ↦ f^τ(g·(x, y)ᵀ).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaL2 {
    pub g: Mat,
    pub tau: u32,
}

impl GammaL2 {
    pub fn new(g: Mat, tau: u32) -> Result<GammaL2> {
        if g.rows != 2 || g.cols != 2 || g.det() == 0 {
            return Err(Error::Invalid("ΓL(2) element needs an invertible 2×2 matrix".into()));
        }
        Ok(GammaL2 { g, tau })
    }

    pub fn identity(ctx: &FieldCtx) -> GammaL2 {
        GammaL2 { g: Mat::identity(ctx, 2), tau: 0 }
    }

    /// The product acting as `self` first, then `o`.
    pub fn then(&self, o: &GammaL2) -> GammaL2 {
        let k = self.g.ctx.k();
        GammaL2 { g: self.g.frob(o.tau).mul(&o.g), tau: (self.tau + o.tau) % k }
    }

    pub fn inverse(&self) -> GammaL2 {
        let k = self.g.ctx.k();
        let t = (k - self.tau % k) % k;
        GammaL2 { g: self.g.frob(t).inverse().expect("invertible"), tau: t }
    }

    /// The (φ̂, τ) part of a pseudo-isometry of pairs.
    pub fn of_witness(w: &PseudoIsometry) -> GammaL2 {
        GammaL2 { g: w.phi_hat.clone(), tau: w.tau }
    }
}

/// Representatives of PGL(2, q): [[1, b], [c, d]] and [[0, 1], [c, d]].
pub fn pgl2_representatives(ctx: &FieldCtx) -> Vec<Mat> {
    let q = ctx.q();
    let mut out = Vec::new();
    for b in 0..q {
        for c in 0..q {
            for d in 0..q {
                if d != ctx.mul(b, c) {
                    out.push(Mat::from_rows(ctx, &[vec![1, b], vec![c, d]]));
                }
            }
        }
    }
    for c in 1..q {
        for d in 0..q {
            out.push(Mat::from_rows(ctx, &[vec![0, 1], vec![c, d]]));
        }
    }
    out
}

/// Representatives of ΓL(2, q) modulo scalars, which act trivially on
/// binary forms up to proportionality.
pub fn pgamma_l2(ctx: &FieldCtx) -> Vec<GammaL2> {
    let reps = pgl2_representatives(ctx);
    (0..ctx.k()).flat_map(|tau| reps.iter().map(move |g| GammaL2 { g: g.clone(), tau })).collect()
}

/// Pfaffian of a canonical block: det(xΨ₁ + yΨ₂) for its corner pair.
pub fn kind_pfaffian(ctx: &FieldCtx, kind: &PencilKind) -> BinaryForm {
    match kind {
        PencilKind::Sloped { a, c } => BinaryForm::from_char_poly(&a.pow(*c)).monic(),
        PencilKind::Infinite { c } => {
            let mut v = vec![0u64; c + 1];
            v[*c] = 1;
            BinaryForm::new(ctx, v)
        }
        PencilKind::Flat { m } => BinaryForm::zero(ctx, *m),
    }
}

/// det(xΨ₁ + yΨ₂) up to a scalar, monicized; zero if the pencil is singular.
pub fn pencil_pfaffian(p1: &Mat, p2: &Mat) -> Result<BinaryForm> {
    let ctx = &p1.ctx;
    if p1.rows != p1.cols {
        return Ok(BinaryForm::zero(ctx, p1.rows.min(p1.cols)));
    }
    let kf = kronecker_decompose(p1, p2)?;
    let mut f = BinaryForm::one(ctx);
    for b in &kf.blocks {
        match &b.kind {
            KroneckerKind::Finite { a, c } => f = f.mul(&BinaryForm::from_char_poly(&a.pow(*c))),
            KroneckerKind::Infinite { c } => f = f.mul(&BinaryForm::linear(ctx, 0, 1).pow(*c)),
            _ => return Ok(BinaryForm::zero(ctx, p1.rows)),
        }
    }
    Ok(f.monic())
}

/// Generalized Pfaffian of a pair of alternating forms, computed from the
/// corner of a totally isotropic splitting.
pub fn pfaffian(s: &SystemOfForms) -> Result<BinaryForm> {
    let (e, f) = isotropic_split(s)?;
    let corner: Vec<Mat> = s.forms.iter().map(|p| e.mul(p).mul(&f.transpose())).collect();
    pencil_pfaffian(&corner[0], &corner[1])
}

/// Perfect matching σ with act(A_i, α̂) ≡ B_{σ(i)} modulo scalars.
pub fn pfaffian_match(a: &[BinaryForm], b: &[BinaryForm], alpha: &GammaL2) -> Option<Vec<usize>> {
    if a.len() != b.len() {
        return None;
    }
    let twisted: Vec<BinaryForm> = a.iter().map(|f| f.act(alpha)).collect();
    let adj: Vec<Vec<usize>> = twisted.iter().map(|f| (0..b.len()).filter(|&j| proj_equal(f, &b[j]).is_some()).collect()).collect();
    bipartite_matching(&adj, b.len())
}

/// Kuhn's augmenting-path matching; Some(σ) if every left vertex is matched.
pub fn bipartite_matching(adj: &[Vec<usize>], right: usize) -> Option<Vec<usize>> {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none() || augment(owner[v].unwrap(), adj, seen, owner) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    for u in 0..adj.len() {
        let mut seen = vec![false; right];
        if !augment(u, adj, &mut seen, &mut owner) {
            return None;
        }
    }
    let mut sigma = vec![0; adj.len()];
    for (v, o) in owner.iter().enumerate() {
        if let Some(u) = o {
            sigma[*u] = v;
        }
    }
    Some(sigma)
}

/// The system A' = τ(A) recombined by g, i.e. the target of (·, g, τ).
pub fn twist(s: &SystemOfForms, alpha: &GammaL2) -> SystemOfForms {
    s.frob(alpha.tau).recombine(&alpha.g)
}

/// φ with φ·Φ^B·φᵀ = twist(A, α̂), when twist(A, α̂) and B have the same
/// canonical decomposition. φ = T_{A'}⁻¹·T_B.
fn lift_by_canonical_forms(a: &SystemOfForms, b_dec: &PencilDecomposition, alpha: &GammaL2) -> Result<Option<PseudoIsometry>> {
    let a2 = twist(a, alpha);
    let da = orth_decompose(&a2)?;
    if da.kinds() != b_dec.kinds() {
        return Ok(None);
    }
    let ta_inv = da.t.inverse().ok_or_else(|| Error::Internal("decomposition basis singular".into()))?;
    Ok(Some(PseudoIsometry { phi: ta_inv.mul(&b_dec.t), phi_hat: alpha.g.clone(), tau: alpha.tau }))
}

/// A witness A → B whose (φ̂, τ) part is exactly α, or None.
pub fn lift_with_twist(a: &SystemOfForms, b: &SystemOfForms, alpha: &GammaL2) -> Result<Option<PseudoIsometry>> {
    if a.ctx != b.ctx {
        return Err(Error::FieldMismatch);
    }
    if a.e != 2 || b.e != 2 || a.d != b.d {
        return Ok(None);
    }
    let db = orth_decompose(b)?;
    match lift_by_canonical_forms(a, &db, alpha)? {
        Some(w) if w.verify(a, b) => Ok(Some(w)),
        Some(_) => Err(Error::Internal("twisted lift failed verification".into())),
        None => Ok(None),
    }
}

/// Isometry test (φ̂ = id, τ = 0) for pairs.
pub fn isometry_test(a: &SystemOfForms, b: &SystemOfForms) -> Result<Option<PseudoIsometry>> {
    lift_with_twist(a, b, &GammaL2::identity(&a.ctx))
}

/// Every α in ΓL(2, q) modulo scalars that carries the block Pfaffians of
/// A to themselves: the image of ΨIsom(A) in PΓL(2, q).
pub fn self_twists(a: &SystemOfForms) -> Result<Vec<GammaL2>> {
    let da = orth_decompose(a)?;
    let (pa, _) = block_invariants(&a.ctx, &da);
    Ok(pgamma_l2(&a.ctx).into_iter().filter(|alpha| pfaffian_match(&pa, &pa, alpha).is_some()).collect())
}

/// Lift a Pfaffian match of two indecomposable sloped blocks to φ with
/// (φ, α̂) a pseudo-isometry A → B.
pub fn lift_sloped(a: &SystemOfForms, b: &SystemOfForms, alpha: &GammaL2) -> Result<Mat> {
    let db = orth_decompose(b)?;
    if db.blocks.len() != 1 || db.blocks[0].kind.is_flat() {
        return Err(Error::Invalid("lift_sloped needs indecomposable sloped blocks".into()));
    }
    let pa = pfaffian(a)?.act(alpha);
    if proj_equal(&pa, &kind_pfaffian(&b.ctx, &db.blocks[0].kind)).is_none() {
        return Err(Error::Invalid("Pfaffians do not match under the given twist".into()));
    }
    let w = lift_by_canonical_forms(a, &db, alpha)?.ok_or_else(|| Error::Internal("matching Pfaffians but different blocks".into()))?;
    Ok(w.phi)
}

/// Pseudo-isometry (φ, α̂) of the canonical flat block of size m.
pub fn flat_lift(ctx: &FieldCtx, alpha: &GammaL2, m: usize) -> Result<PseudoIsometry> {
    let s = crate::pencil::canonical_system(ctx, &[PencilKind::Flat { m }]);
    let db = orth_decompose(&s)?;
    let w = lift_by_canonical_forms(&s, &db, alpha)?.ok_or_else(|| Error::Internal("flat block not preserved by ΓL(2)".into()))?;
    if !w.verify(&s, &s) {
        return Err(Error::Internal("flat lift failed verification".into()));
    }
    Ok(w)
}

/// Block Pfaffians (sloped) and flat sizes of a decomposition.
pub fn block_invariants(ctx: &FieldCtx, dec: &PencilDecomposition) -> (Vec<BinaryForm>, Vec<usize>) {
    let mut pf = Vec::new();
    let mut flats = Vec::new();
    for b in &dec.blocks {
        match b.kind {
            PencilKind::Flat { m } => flats.push(m),
            _ => pf.push(kind_pfaffian(ctx, &b.kind)),
        }
    }
    flats.sort_unstable();
    (pf, flats)
}

/// Exhaustive test over ΓL(2, q) modulo scalars: a pseudo-isometry A → B or none.
pub fn small_field_test(a: &SystemOfForms, b: &SystemOfForms) -> Result<Option<PseudoIsometry>> {
    if a.e != 2 || b.e != 2 {
        return Err(Error::Dim("small-field test needs pairs of forms".into()));
    }
    if a.ctx != b.ctx {
        return Err(Error::FieldMismatch);
    }
    if a.d != b.d {
        return Ok(None);
    }
    let ctx = &a.ctx;
    let da = orth_decompose(a)?;
    let db = orth_decompose(b)?;
    let (pa, fa) = block_invariants(ctx, &da);
    let (pb, fb) = block_invariants(ctx, &db);
    if fa != fb || pa.len() != pb.len() {
        return Ok(None);
    }
    for alpha in pgamma_l2(ctx) {
        if pfaffian_match(&pa, &pb, &alpha).is_none() {
            continue;
        }
        if let Some(w) = lift_by_canonical_forms(a, &db, &alpha)? {
            if !w.verify(a, b) {
                return Err(Error::Internal("small-field witness failed verification".into()));
            }
            return Ok(Some(w));
        }
        return Err(Error::Internal("Pfaffians match but the twisted decomposition differs".into()));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{random_pseudo_isometry, random_system};
    use crate::gf::{field_make, rng};
    use proptest::prelude::*;

    fn k(p: u64) -> FieldCtx {
        FieldCtx::prime(p).unwrap()
    }

    /// det(xΨ₁ + yΨ₂) by the Leibniz expansion over binary forms.
    fn det_oracle(p1: &Mat, p2: &Mat) -> BinaryForm {
        let ctx = &p1.ctx;
        let n = p1.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut total = BinaryForm::zero(ctx, n);
        fn next_perm(p: &mut [usize]) -> bool {
            let n = p.len();
            if n < 2 {
                return false;
            }
            let mut i = n - 1;
            while i > 0 && p[i - 1] >= p[i] {
                i -= 1;
            }
            if i == 0 {
                return false;
            }
            let mut j = n - 1;
            while p[j] <= p[i - 1] {
                j -= 1;
            }
            p.swap(i - 1, j);
            p[i..].reverse();
            true
        }
        loop {
            let inversions = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| perm[i] > perm[j]).count();
            let mut term = BinaryForm::one(ctx);
            for (i, &j) in perm.iter().enumerate() {
                term = term.mul(&BinaryForm::linear(ctx, p1.get(i, j), p2.get(i, j)));
            }
            if inversions % 2 == 1 {
                term = term.scale(ctx.neg(1));
            }
            total = BinaryForm::new(ctx, total.coeffs.iter().zip(&term.coeffs).map(|(&a, &b)| ctx.add(a, b)).collect());
            if !next_perm(&mut perm) {
                break;
            }
        }
        total.monic()
    }

    #[test]
    fn action_examples() {
        let ctx = k(3);
        let f = BinaryForm::from_ints(&ctx, &[1, 0, 1]);
        assert_eq!(f.act(&GammaL2::identity(&ctx)), f);
        let g = GammaL2::new(Mat::from_ints(&ctx, &[vec![1, 1], vec![0, 1]]), 0).unwrap();
        assert_eq!(f.act(&g), BinaryForm::from_ints(&ctx, &[1, 2, 2]));
        let swap = GammaL2::new(Mat::from_ints(&ctx, &[vec![0, 1], vec![1, 0]]), 0).unwrap();
        assert_eq!(BinaryForm::linear(&ctx, 1, 0).act(&swap), BinaryForm::linear(&ctx, 0, 1));
    }

    #[test]
    fn projective_equality() {
        let ctx = k(5);
        let f = BinaryForm::from_ints(&ctx, &[1, 3, 4]);
        assert_eq!(proj_equal(&f, &f), Some(1));
        assert_eq!(proj_equal(&f.scale(2), &f), Some(2));
        assert_eq!(proj_equal(&BinaryForm::from_ints(&ctx, &[1, 0, 0]), &BinaryForm::from_ints(&ctx, &[0, 1, 0])), None);
    }

    #[test]
    fn pfaffian_examples() {
        let ctx = field_make(3, 2, 0).unwrap();
        let w = ctx.primitive_element();
        let p = pencil_pfaffian(&Mat::identity(&ctx, 1), &Mat::scalar(&ctx, 1, w)).unwrap();
        assert_eq!(p, BinaryForm::linear(&ctx, 1, w));
        let ctx = k(3);
        let flat = crate::pencil::canonical_system(&ctx, &[PencilKind::Flat { m: 2 }]);
        assert!(pfaffian(&flat).unwrap().is_zero());
        for a in [vec![1i64, 0, 1], vec![2, 1, 1], vec![1, 1]] {
            let a = Poly::from_ints(&ctx, &a);
            for c in 1..=2 {
                let f = a.pow(c);
                let (p1, p2) = (Mat::identity(&ctx, f.deg()), Mat::companion(&f));
                assert_eq!(pencil_pfaffian(&p1, &p2).unwrap(), det_oracle(&p1, &p2));
                assert_eq!(kind_pfaffian(&ctx, &PencilKind::Sloped { a: a.clone(), c }), det_oracle(&p1, &p2));
            }
        }
    }

    #[test]
    fn equal_factor_pair_never_matches() {
        let ctx = k(3);
        let (a, b) = (crate::groups::equal_factor_pair(&ctx, true), crate::groups::equal_factor_pair(&ctx, false));
        let (pa, _) = block_invariants(&ctx, &orth_decompose(&a).unwrap());
        let (pb, _) = block_invariants(&ctx, &orth_decompose(&b).unwrap());
        for alpha in pgamma_l2(&ctx) {
            assert!(pfaffian_match(&pa, &pb, &alpha).is_none());
        }
        assert!(small_field_test(&a, &b).unwrap().is_none());
        assert!(small_field_test(&a, &a).unwrap().is_some());
    }

    #[test]
    fn flat_lifts() {
        let ctx = k(3);
        for (g, m) in [(vec![vec![1, 0], vec![0, 1]], 1), (vec![vec![2, 0], vec![0, 2]], 2), (vec![vec![0, 1], vec![1, 0]], 2)] {
            let alpha = GammaL2::new(Mat::from_ints(&ctx, &g), 0).unwrap();
            let w = flat_lift(&ctx, &alpha, m).unwrap();
            assert_eq!(w.phi_hat, alpha.g);
        }
    }

    #[test]
    fn planted_pfaffian_match_recovers_permutation() {
        let ctx = k(5);
        let mut r = rng(7);
        let forms: Vec<BinaryForm> = [vec![1i64, 1], vec![1, 0, 2], vec![1, 4, 4], vec![0, 1]].iter().map(|c| BinaryForm::from_ints(&ctx, c)).collect();
        let alpha = GammaL2::new(Mat::random_invertible(&ctx, 2, &mut r), 0).unwrap();
        let sigma = [2usize, 0, 3, 1];
        let mut b = vec![BinaryForm::zero(&ctx, 0); 4];
        for (i, f) in forms.iter().enumerate() {
            b[sigma[i]] = f.act(&alpha).scale(3);
        }
        assert_eq!(pfaffian_match(&forms, &b, &alpha), Some(sigma.to_vec()));
        assert_eq!(pfaffian_match(&forms, &forms, &GammaL2::identity(&ctx)), Some(vec![0, 1, 2, 3]));
    }

    #[test]
    fn lift_sloped_planted() {
        let ctx = field_make(3, 2, 0).unwrap();
        let mut r = rng(2);
        let a = crate::pencil::canonical_system(&ctx, &[PencilKind::Sloped { a: crate::gf::random_irreducible(&ctx, 2, &mut r), c: 1 }]);
        let w = random_pseudo_isometry(&ctx, 4, 2, &mut r);
        let b = w.apply(&a);
        let alpha = GammaL2::of_witness(&w);
        let phi = lift_sloped(&a, &b, &alpha).unwrap();
        assert!(PseudoIsometry { phi, phi_hat: alpha.g, tau: alpha.tau }.verify(&a, &b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn action_is_a_right_action(seed in any::<u64>()) {
            let ctx = field_make(2, 3, 0).unwrap();
            let mut r = rng(seed);
            let f = BinaryForm::new(&ctx, (0..4).map(|_| ctx.random(&mut r)).collect());
            let g = GammaL2::new(Mat::random_invertible(&ctx, 2, &mut r), (seed % 3) as u32).unwrap();
            let h = GammaL2::new(Mat::random_invertible(&ctx, 2, &mut r), ((seed / 3) % 3) as u32).unwrap();
            prop_assert_eq!(f.act(&g).act(&h), f.act(&g.then(&h)));
            prop_assert_eq!(f.act(&g).act(&g.inverse()), f);
        }

        #[test]
        fn pencil_pfaffian_matches_leibniz(seed in any::<u64>(), n in 1usize..=4, p in prop::sample::select(vec![2u64, 3, 5])) {
            let ctx = k(p);
            let mut r = rng(seed);
            let (p1, p2) = (Mat::random(&ctx, n, n, &mut r), Mat::random(&ctx, n, n, &mut r));
            prop_assert_eq!(pencil_pfaffian(&p1, &p2).unwrap(), det_oracle(&p1, &p2));
        }

        #[test]
        fn pfaffians_follow_pseudo_isometries(seed in any::<u64>(), half in 1usize..=5, p in prop::sample::select(vec![3u64, 5, 7])) {
            let ctx = k(p);
            let mut r = rng(seed);
            let a = random_system(&ctx, 2 * half, 2, &mut r);
            prop_assume!(a.is_fully_nondegenerate());
            let w = random_pseudo_isometry(&ctx, 2 * half, 2, &mut r);
            let b = w.apply(&a);
            let alpha = GammaL2::of_witness(&w);
            prop_assert!(proj_equal(&pfaffian(&a).unwrap().act(&alpha), &pfaffian(&b).unwrap()).is_some());
            let (pa, _) = block_invariants(&ctx, &orth_decompose(&a).unwrap());
            let (pb, _) = block_invariants(&ctx, &orth_decompose(&b).unwrap());
            prop_assert!(pfaffian_match(&pa, &pb, &alpha).is_some());
        }

        #[test]
        fn small_field_test_finds_planted(seed in any::<u64>(), d in 2usize..=10, p in prop::sample::select(vec![2u64, 3, 5])) {
            let ctx = k(p);
            let mut r = rng(seed);
            let a = random_system(&ctx, d, 2, &mut r);
            prop_assume!(a.is_fully_nondegenerate());
            let w = random_pseudo_isometry(&ctx, d, 2, &mut r);
            let b = w.apply(&a);
            let found = small_field_test(&a, &b).unwrap().expect("planted instance");
            prop_assert!(found.verify(&a, &b));
            let back = small_field_test(&b, &a).unwrap().expect("symmetric");
            prop_assert!(back.verify(&b, &a));
        }
    }
}
