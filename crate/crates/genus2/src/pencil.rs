//! Kronecker–Dieudonné theory for pairs of matrices and pairs of
//! alternating forms: canonical decomposition of pencils, totally isotropic
//! splittings and fully refined orthogonal decompositions.

use std::cmp::Ordering;

use crate::algebra::CommAlgebra;
use crate::error::{Error, Result};
use crate::forms::SystemOfForms;
use crate::gf::{FieldCtx, Poly};
use crate::linalg::{combine, generalized_jordan, poly_order, projective_points, vec_mat, Echelon, Mat, Subspace};

/// Kind of an indecomposable block of a pencil (Ψ₁, Ψ₂).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KroneckerKind {
    /// square (I, C(a^c))
    Finite { a: Poly, c: usize },
    /// square (C(x^c), I): eigenvalue at infinity
    Infinite { c: usize },
    /// m×(m+1) pair ([I|0], [0|I])
    L { m: usize },
    /// (m+1)×m pair, the transpose of `L`
    LT { m: usize },
}

impl KroneckerKind {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            KroneckerKind::Finite { a, c } => (a.deg() * c, a.deg() * c),
            KroneckerKind::Infinite { c } => (*c, *c),
            KroneckerKind::L { m } => (*m, m + 1),
            KroneckerKind::LT { m } => (m + 1, *m),
        }
    }

    /// The canonical pair realizing this block.
    pub fn canonical(&self, ctx: &FieldCtx) -> (Mat, Mat) {
        match self {
            KroneckerKind::Finite { a, c } => {
                let n = a.deg() * c;
                (Mat::identity(ctx, n), Mat::companion(&a.pow(*c)))
            }
            KroneckerKind::Infinite { c } => (Mat::companion(&Poly::x(ctx).pow(*c)), Mat::identity(ctx, *c)),
            KroneckerKind::L { m } => {
                let (mut p1, mut p2) = (Mat::zeros(ctx, *m, m + 1), Mat::zeros(ctx, *m, m + 1));
                for i in 0..*m {
                    p1.set(i, i, 1);
                    p2.set(i, i + 1, 1);
                }
                (p1, p2)
            }
            KroneckerKind::LT { m } => {
                let (p1, p2) = KroneckerKind::L { m: *m }.canonical(ctx);
                (p1.transpose(), p2.transpose())
            }
        }
    }

    fn rank_key(&self) -> u8 {
        match self {
            KroneckerKind::Finite { .. } => 0,
            KroneckerKind::Infinite { .. } => 1,
            KroneckerKind::L { .. } => 2,
            KroneckerKind::LT { .. } => 3,
        }
    }

    /// Canonical block order: finite by (deg a, a, c descending), then
    /// infinite, L and Lᵀ blocks, each by descending size.
    pub fn canonical_cmp(&self, o: &KroneckerKind) -> Ordering {
        use KroneckerKind::*;
        self.rank_key().cmp(&o.rank_key()).then_with(|| match (self, o) {
            (Finite { a, c }, Finite { a: b, c: d }) => poly_order(a, b).then(d.cmp(c)),
            (Infinite { c }, Infinite { c: d }) => d.cmp(c),
            (L { m }, L { m: n }) | (LT { m }, LT { m: n }) => n.cmp(m),
            _ => Ordering::Equal,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KroneckerBlock {
    pub kind: KroneckerKind,
    pub row0: usize,
    pub col0: usize,
}

/// X·Ψ_i·Y block-diagonal with canonical blocks.
#[derive(Clone, Debug)]
pub struct KroneckerForm {
    pub x: Mat,
    pub y: Mat,
    pub blocks: Vec<KroneckerBlock>,
}

impl KroneckerForm {
    pub fn kinds(&self) -> Vec<KroneckerKind> {
        self.blocks.iter().map(|b| b.kind.clone()).collect()
    }

    /// The canonical block-diagonal pair.
    pub fn canonical_pair(&self, ctx: &FieldCtx) -> (Mat, Mat) {
        let (n, m) = (self.x.rows, self.y.rows);
        let (mut c1, mut c2) = (Mat::zeros(ctx, n, m), Mat::zeros(ctx, n, m));
        for b in &self.blocks {
            let (p1, p2) = b.kind.canonical(ctx);
            c1.set_block(b.row0, b.col0, &p1);
            c2.set_block(b.row0, b.col0, &p2);
        }
        (c1, c2)
    }
}

/// {v : v·M ∈ S} for a row-vector map M.
pub fn preimage(m: &Mat, s: &Subspace) -> Subspace {
    let stacked = Mat::vstack(&m.ctx, &[m, &s.basis], m.cols);
    let ker = stacked.kernel_rows();
    let rows: Vec<Vec<u64>> = ker.iter().map(|v| v[..m.rows].to_vec()).collect();
    Subspace::from_rows(&m.ctx, m.rows, &rows)
}

/// Limits of the Wong sequences for the row-vector pencil (E, A):
/// 𝒱 = lim 𝒱_{j+1} = A⁻¹(𝒱_j E), 𝒲 = lim 𝒲_{j+1} = E⁻¹(𝒲_j A).
pub fn wong_limits(e: &Mat, a: &Mat) -> (Subspace, Subspace) {
    let ctx = &e.ctx;
    let n = e.rows;
    let mut v = Subspace::full(ctx, n);
    loop {
        let next = preimage(a, &v.image(e));
        if next.dim() == v.dim() {
            break;
        }
        v = next;
    }
    let mut w = Subspace::zero(ctx, n);
    loop {
        let next = preimage(e, &w.image(a));
        if next.dim() == w.dim() {
            break;
        }
        w = next;
    }
    (v, w)
}

/// Rows of `sub` followed by rows completing to a basis of `sup`.
fn adapted_rows(sub: &Subspace, sup: &Subspace) -> (Vec<Vec<u64>>, Vec<Vec<u64>>) {
    let mut ech = Echelon::new(&sub.ctx, sub.n);
    let a = sub.rows();
    for r in &a {
        ech.insert(r);
    }
    let mut b = Vec::new();
    for r in sup.rows() {
        if ech.insert(&r) {
            b.push(r);
        }
    }
    (a, b)
}

/// For block-triangular [[M11, M12], [0, M22]] (both pencils), find X, Y with
/// M11·X + Y·M22 = −M12 for both; then [I Y; 0 I]·M·[I X; 0 I] is block diagonal.
fn decouple(m11: (&Mat, &Mat), m12: (&Mat, &Mat), m22: (&Mat, &Mat)) -> Option<(Mat, Mat)> {
    let ctx = &m11.0.ctx;
    let (r1, c1) = (m11.0.rows, m11.0.cols);
    let (r2, c2) = (m22.0.rows, m22.0.cols);
    let nx = c1 * c2;
    let ny = r1 * r2;
    if r1 * c2 == 0 {
        return Some((Mat::zeros(ctx, c1, c2), Mat::zeros(ctx, r1, r2)));
    }
    // unknown layout: X_{kj} at k*c2+j, Y_{il} at nx + i*r2 + l; equation (pencil, i, j)
    let neq = 2 * r1 * c2;
    let mut sys = Mat::zeros(ctx, nx + ny, neq + 1);
    for (p, (a11, a22)) in [(m11.0, m22.0), (m11.1, m22.1)].into_iter().enumerate() {
        for i in 0..r1 {
            for j in 0..c2 {
                let col = p * r1 * c2 + i * c2 + j;
                for k in 0..c1 {
                    let v = a11.get(i, k);
                    if v != 0 {
                        sys.set(k * c2 + j, col, v);
                    }
                }
                for l in 0..r2 {
                    let v = a22.get(l, j);
                    if v != 0 {
                        sys.set(nx + i * r2 + l, col, v);
                    }
                }
            }
        }
    }
    // solve sol·S = -rhs, i.e. S^T sol^T = -rhs
    let s = sys.submatrix(0, nx + ny, 0, neq).transpose();
    let mut rhs = Vec::with_capacity(neq);
    for a12 in [m12.0, m12.1] {
        for i in 0..r1 {
            for j in 0..c2 {
                rhs.push(ctx.neg(a12.get(i, j)));
            }
        }
    }
    let sol = s.solve(&rhs)?;
    let x = Mat { ctx: ctx.clone(), rows: c1, cols: c2, data: sol[..nx].to_vec() };
    let y = Mat { ctx: ctx.clone(), rows: r1, cols: r2, data: sol[nx..].to_vec() };
    Some((x, y))
}

/// Minimal polynomial kernel basis of a pencil with only L blocks.
/// Returns (X, Y, sizes) with X·(E, A)·Y = ⊕ L_m.
///
/// Kernel chains A·w₀ = 0, E·w_{j−1} + A·w_j = 0, E·w_ε = 0 are parametrized
/// as w_j = N·w_{j−1} + K·t_j with N = −A⁺E and K a kernel basis of A, so
/// only the final condition E·w_ε = 0 is solved, in the parameters t.
fn canonicalize_pure_l(e: &Mat, a: &Mat) -> Result<(Mat, Mat, Vec<usize>)> {
    let ctx = &e.ctx;
    let (r, c) = (e.rows, e.cols);
    if c == 0 {
        return Ok((Mat::zeros(ctx, 0, 0), Mat::zeros(ctx, 0, 0), Vec::new()));
    }
    let not_pure = || Error::Internal("pencil part is not of pure L type".into());
    let a_plus = if r > 0 { a.transpose().solve_left(&Mat::identity(ctx, r)).ok_or_else(not_pure)?.transpose() } else { Mat::zeros(ctx, c, 0) };
    let kern = a.right_null_space();
    if kern.is_empty() {
        return Err(not_pure());
    }
    let kb = kern.len();
    let kmat = Mat::from_rows(ctx, &kern).transpose();
    let nmat = a_plus.mul(e).neg();
    // g[s] = E·N^s·K
    let mut nk = vec![kmat.clone()];
    let mut g = vec![e.mul(&kmat)];
    let mut gens: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut total = 0usize;
    let mut eps = 0usize;
    while total < c {
        if eps > r {
            return Err(not_pure());
        }
        if eps > 0 {
            let next = nmat.mul(nk.last().unwrap());
            g.push(e.mul(&next));
            nk.push(next);
        }
        let nun = kb * (eps + 1);
        // constraint columns for t_i: E·N^{ε−i}·K
        let mut cons = Mat::zeros(ctx, r, nun);
        for i in 0..=eps {
            cons.set_block(0, i * kb, &g[eps - i]);
        }
        let sols = cons.right_null_space();
        let mut ech = Echelon::new(ctx, nun);
        for (deg, t) in &gens {
            for shift in 0..=(eps - deg) {
                let mut v = vec![0u64; nun];
                v[shift * kb..shift * kb + t.len()].copy_from_slice(t);
                ech.insert(&v);
            }
        }
        for sol in sols {
            if ech.insert(&sol) {
                gens.push((eps, sol));
                total += eps + 1;
            }
        }
        eps += 1;
    }
    if total != c {
        return Err(Error::Internal("minimal indices do not account for all columns".into()));
    }
    gens.sort_by(|x, y| y.0.cmp(&x.0));
    let mut ycols = Vec::new();
    let mut ucols = Vec::new();
    let mut sizes = Vec::new();
    for (deg, t) in &gens {
        sizes.push(*deg);
        let mut w = vec![0u64; c];
        for j in 0..=*deg {
            let mut next = if j == 0 { vec![0u64; c] } else { nmat.mul(&Mat::from_rows(ctx, &[w.clone()]).transpose()).col(0) };
            let kt = kmat.mul(&Mat::from_rows(ctx, &[t[j * kb..(j + 1) * kb].to_vec()]).transpose()).col(0);
            for (x, y) in next.iter_mut().zip(kt) {
                *x = ctx.add(*x, y);
            }
            w = next;
            let wj: Vec<u64> = if j % 2 == 1 { w.iter().map(|&x| ctx.neg(x)).collect() } else { w.clone() };
            if j < *deg {
                ucols.push(e.mul(&Mat::from_rows(ctx, &[wj.clone()]).transpose()).col(0));
            }
            ycols.push(wj);
        }
    }
    let y = Mat::from_rows_cols(ctx, c, c, &ycols).transpose();
    let u = Mat::from_rows_cols(ctx, r, r, &ucols).transpose();
    let x = u.inverse().ok_or_else(|| Error::Internal("L-block images are dependent".into()))?;
    if y.rank() != c {
        return Err(Error::Internal("L-block kernel vectors are dependent".into()));
    }
    Ok((x, y, sizes))
}

fn block_diag_rect(ctx: &FieldCtx, parts: &[&Mat]) -> Mat {
    let r: usize = parts.iter().map(|p| p.rows).sum();
    let c: usize = parts.iter().map(|p| p.cols).sum();
    let mut m = Mat::zeros(ctx, r, c);
    let (mut i, mut j) = (0, 0);
    for p in parts {
        m.set_block(i, j, p);
        i += p.rows;
        j += p.cols;
    }
    m
}

/// Canonical decomposition of a regular square pencil.
fn canonicalize_regular(e: &Mat, a: &Mat) -> Result<(Mat, Mat, Vec<KroneckerKind>)> {
    let ctx = &e.ctx;
    let n = e.rows;
    if n == 0 {
        return Ok((Mat::zeros(ctx, 0, 0), Mat::zeros(ctx, 0, 0), Vec::new()));
    }
    // column-vector Wong spaces via transposes: x ↦ xᵀ·Eᵀ
    let (et, at) = (e.transpose(), a.transpose());
    let (vf, wi) = wong_limits(&et, &at);
    if vf.dim() + wi.dim() != n {
        return Err(Error::Internal("pencil part is not regular".into()));
    }
    // T = [V | W] columns; S⁻¹ = [E V | A W] columns
    let tcols: Vec<Vec<u64>> = vf.rows().into_iter().chain(wi.rows()).collect();
    let t = Mat::from_rows(ctx, &tcols).transpose();
    let ev = vf.basis.mul(&et);
    let aw = wi.basis.mul(&at);
    let s_inv = Mat::vstack(ctx, &[&ev, &aw], n).transpose();
    let s = s_inv.inverse().ok_or_else(|| Error::Internal("regular split failed".into()))?;
    let (e2, a2) = (s.mul(e).mul(&t), s.mul(a).mul(&t));
    let f = vf.dim();
    let (ef, af) = (e2.submatrix(0, f, 0, f), a2.submatrix(0, f, 0, f));
    let (ei, ai) = (e2.submatrix(f, n, f, n), a2.submatrix(f, n, f, n));
    let mut kinds = Vec::new();
    // finite: X = P·E⁻¹, Y = P⁻¹ with P·(E⁻¹A)·P⁻¹ = J
    let (xf, yf) = if f > 0 {
        let efi = ef.inverse().ok_or_else(|| Error::Internal("finite part singular".into()))?;
        let jf = generalized_jordan(&efi.mul(&af));
        for b in &jf.blocks {
            kinds.push(KroneckerKind::Finite { a: b.a.clone(), c: b.c });
        }
        (jf.p.mul(&efi), jf.p.inverse().unwrap())
    } else {
        (Mat::zeros(ctx, 0, 0), Mat::zeros(ctx, 0, 0))
    };
    let (xi, yi) = if n > f {
        let aii = ai.inverse().ok_or_else(|| Error::Internal("infinite part singular".into()))?;
        let jf = generalized_jordan(&aii.mul(&ei));
        for b in &jf.blocks {
            if b.a.deg() != 1 || b.a.coeff(0) != 0 {
                return Err(Error::Internal("infinite part not nilpotent".into()));
            }
            kinds.push(KroneckerKind::Infinite { c: b.c });
        }
        (jf.p.mul(&aii), jf.p.inverse().unwrap())
    } else {
        (Mat::zeros(ctx, 0, 0), Mat::zeros(ctx, 0, 0))
    };
    let x = Mat::block_diag(ctx, &[xf, xi]).mul(&s);
    let y = t.mul(&Mat::block_diag(ctx, &[yf, yi]));
    Ok((x, y, kinds))
}

/// Kronecker canonical decomposition of the pencil (Ψ₁, Ψ₂) under
/// (Ψ₁, Ψ₂) ↦ (XΨ₁Y, XΨ₂Y).
pub fn kronecker_decompose(p1: &Mat, p2: &Mat) -> Result<KroneckerForm> {
    if p1.rows != p2.rows || p1.cols != p2.cols {
        return Err(Error::Dim("pencil matrices differ in shape".into()));
    }
    let ctx = &p1.ctx;
    let (n, m) = (p1.rows, p1.cols);
    let (e, a) = (p1, p2);
    let (et, at) = (e.transpose(), a.transpose());
    // domain (columns of Ψ) Wong spaces
    let (v, w) = wong_limits(&et, &at);
    let p1s = v.intersect(&w);
    let vw = v.sum(&w);
    let (pa, ra) = adapted_rows(&p1s, &vw);
    let (_, qa) = adapted_rows(&vw, &Subspace::full(ctx, m));
    // codomain: E𝒱 ∩ A𝒲 inside E𝒱 + A𝒲
    let ev = v.image(&et);
    let aw = w.image(&at);
    let p2s = ev.intersect(&aw);
    let s2 = ev.sum(&aw);
    let (pb, rb) = adapted_rows(&p2s, &s2);
    let (_, qb) = adapted_rows(&s2, &Subspace::full(ctx, n));
    let dims_dom = [pa.len(), ra.len(), qa.len()];
    let dims_cod = [pb.len(), rb.len(), qb.len()];
    let tcols: Vec<Vec<u64>> = pa.into_iter().chain(ra).chain(qa).collect();
    let scols: Vec<Vec<u64>> = pb.into_iter().chain(rb).chain(qb).collect();
    let t = Mat::from_rows_cols(ctx, m, m, &tcols).transpose();
    let s = Mat::from_rows_cols(ctx, n, n, &scols).transpose().inverse().ok_or_else(|| Error::Internal("codomain basis singular".into()))?;
    let mut x = s;
    let mut y = t;
    let (mut e2, mut a2) = (x.mul(e).mul(&y), x.mul(a).mul(&y));
    // decouple block 1 from blocks 2–3, then block 2 from block 3
    let splits = [
        (0, dims_cod[0], 0, dims_dom[0]),
        (dims_cod[0], dims_cod[0] + dims_cod[1], dims_dom[0], dims_dom[0] + dims_dom[1]),
    ];
    for (rs0, rsplit, cs0, csplit) in splits {
        let b11 = (e2.submatrix(rs0, rsplit, cs0, csplit), a2.submatrix(rs0, rsplit, cs0, csplit));
        let b12 = (e2.submatrix(rs0, rsplit, csplit, m), a2.submatrix(rs0, rsplit, csplit, m));
        let b22 = (e2.submatrix(rsplit, n, csplit, m), a2.submatrix(rsplit, n, csplit, m));
        let (xx, yy) = decouple((&b11.0, &b11.1), (&b12.0, &b12.1), (&b22.0, &b22.1))
            .ok_or_else(|| Error::Internal("pencil blocks could not be decoupled".into()))?;
        let mut left = Mat::identity(ctx, n);
        left.set_block(rs0, rsplit, &yy);
        let mut right = Mat::identity(ctx, m);
        right.set_block(cs0, csplit, &xx);
        x = left.mul(&x);
        y = y.mul(&right);
        e2 = x.mul(e).mul(&y);
        a2 = x.mul(a).mul(&y);
    }
    let [r0, r1, _] = dims_cod;
    let [c0, c1, _] = dims_dom;
    let blk = |mm: &Mat, ra: usize, rb: usize, ca: usize, cb: usize| mm.submatrix(ra, rb, ca, cb);
    // L part
    let (xl, yl, lsz) = canonicalize_pure_l(&blk(&e2, 0, r0, 0, c0), &blk(&a2, 0, r0, 0, c0))?;
    // regular part
    let (xr, yr, rkinds) = canonicalize_regular(&blk(&e2, r0, r0 + r1, c0, c0 + c1), &blk(&a2, r0, r0 + r1, c0, c0 + c1))?;
    // Lᵀ part via the transposed pencil
    let (eq, aq) = (blk(&e2, r0 + r1, n, c0 + c1, m), blk(&a2, r0 + r1, n, c0 + c1, m));
    let (xq, yq, qsz) = canonicalize_pure_l(&eq.transpose(), &aq.transpose())?;
    let (xq, yq) = (yq.transpose(), xq.transpose());
    let xall = block_diag_rect(ctx, &[&xl, &xr, &xq]).mul(&x);
    let yall = y.mul(&block_diag_rect(ctx, &[&yl, &yr, &yq]));
    // assemble blocks in the L, regular, Lᵀ layout, then sort canonically
    let mut raw: Vec<KroneckerBlock> = Vec::new();
    let (mut ri, mut ci) = (0, 0);
    for mm in lsz {
        raw.push(KroneckerBlock { kind: KroneckerKind::L { m: mm }, row0: ri, col0: ci });
        ri += mm;
        ci += mm + 1;
    }
    for k in rkinds {
        let (h, wd) = k.shape();
        raw.push(KroneckerBlock { kind: k, row0: ri, col0: ci });
        ri += h;
        ci += wd;
    }
    for mm in qsz {
        raw.push(KroneckerBlock { kind: KroneckerKind::LT { m: mm }, row0: ri, col0: ci });
        ri += mm + 1;
        ci += mm;
    }
    let form = reorder_blocks(ctx, &xall, &yall, raw);
    let (c1m, c2m) = form.canonical_pair(ctx);
    if form.x.mul(p1).mul(&form.y) != c1m || form.x.mul(p2).mul(&form.y) != c2m {
        return Err(Error::Internal("Kronecker transforms do not reproduce the canonical pair".into()));
    }
    Ok(form)
}

/// Stable sort of blocks into canonical order, permuting X rows and Y columns.
fn reorder_blocks(ctx: &FieldCtx, x: &Mat, y: &Mat, mut raw: Vec<KroneckerBlock>) -> KroneckerForm {
    raw.sort_by(|p, q| p.kind.canonical_cmp(&q.kind));
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut blocks = Vec::new();
    for b in raw {
        let (h, w) = b.kind.shape();
        blocks.push(KroneckerBlock { kind: b.kind, row0: rows.len(), col0: cols.len() });
        rows.extend(b.row0..b.row0 + h);
        cols.extend(b.col0..b.col0 + w);
    }
    let _ = ctx;
    KroneckerForm { x: x.select_rows(&rows), y: y.select_cols(&cols), blocks }
}

/// First projective point [λ:μ] with λΦ₁ + μΦ₂ invertible, scanning
/// [1:0], [1:1], …, [1:q−1], [0:1].
pub fn find_nondeg_combination(s: &SystemOfForms) -> Option<(u64, u64)> {
    if s.e != 2 {
        return None;
    }
    for pt in projective_points(&s.ctx, 2) {
        if combine(&s.ctx, &s.forms, &pt).rank() == s.d {
            return Some((pt[0], pt[1]));
        }
    }
    None
}

pub(crate) fn rows_of(ctx: &FieldCtx, n: usize, rows: &[Vec<u64>]) -> Mat {
    Mat::from_rows_cols(ctx, rows.len(), n, rows)
}

pub(crate) fn apply_rows(rows: &[Vec<u64>], m: &Mat) -> Vec<Vec<u64>> {
    rows.iter().map(|r| vec_mat(r, m)).collect()
}

fn gram(rows: &Mat, phi: &Mat) -> Mat {
    rows.mul(phi).mul(&rows.transpose())
}

/// Correct a complement C of F₀ inside F₀^⊥ and a complement E₀ of F₀^⊥ so
/// that the flat part E ⊕ F₀ is orthogonal to C and E is totally isotropic.
fn split_flat(s: &SystemOfForms, f0: &Mat, e0: &Mat, c0: &Mat) -> Result<(Mat, Mat, Mat)> {
    let ctx = &s.ctx;
    let (nf, ne, nc) = (f0.rows, e0.rows, c0.rows);
    let be_f: Vec<Mat> = s.forms.iter().map(|p| e0.mul(p).mul(&f0.transpose())).collect();
    let be_c: Vec<Mat> = s.forms.iter().map(|p| e0.mul(p).mul(&c0.transpose())).collect();
    let bc_c: Vec<Mat> = s.forms.iter().map(|p| gram(c0, p)).collect();
    // φ: C → F₀ and ψ: E₀ → C with B(e + ψe, c + φc) = 0
    let (c_new, e_mid) = if nc > 0 && ne > 0 {
        let nphi = nc * nf;
        let nun = nphi + ne * nc;
        let neq = s.e * ne * nc;
        let mut sys = Mat::zeros(ctx, neq, nun);
        let mut rhs = vec![0u64; neq];
        for i in 0..s.e {
            for a in 0..ne {
                for b in 0..nc {
                    let row = (i * ne + a) * nc + b;
                    for f in 0..nf {
                        sys.set(row, b * nf + f, be_f[i].get(a, f));
                    }
                    for c in 0..nc {
                        sys.set(row, nphi + a * nc + c, bc_c[i].get(c, b));
                    }
                    rhs[row] = ctx.neg(be_c[i].get(a, b));
                }
            }
        }
        let sol = sys.solve(&rhs).ok_or_else(|| Error::Internal("flat part does not split off".into()))?;
        let phi = Mat { ctx: ctx.clone(), rows: nc, cols: nf, data: sol[..nphi].to_vec() };
        let psi = Mat { ctx: ctx.clone(), rows: ne, cols: nc, data: sol[nphi..].to_vec() };
        (c0.add(&phi.mul(f0)), e0.add(&psi.mul(c0)))
    } else {
        (c0.clone(), e0.clone())
    };
    // canonical corner between E and F₀, then χ: E → F₀ making E totally isotropic
    let (e_mid, f0) = if ne > 0 {
        let c1 = e_mid.mul(&s.forms[0]).mul(&f0.transpose());
        let c2 = e_mid.mul(&s.forms[1]).mul(&f0.transpose());
        let (xl, yl, _) = canonicalize_pure_l(&c1, &c2)?;
        (xl.mul(&e_mid), yl.transpose().mul(f0))
    } else {
        (e_mid, f0.clone())
    };
    let e_new = if ne > 1 {
        let psi_f: Vec<Mat> = s.forms.iter().map(|p| e_mid.mul(p).mul(&f0.transpose())).collect();
        let m: Vec<Mat> = s.forms.iter().map(|p| gram(&e_mid, p)).collect();
        let chi = solve_isotropy_graph(&psi_f, &m).map_or_else(|| solve_isotropy_dense(&psi_f, &m), Ok)?;
        e_mid.add(&chi.mul(&f0))
    } else {
        e_mid
    };
    Ok((e_new, f0, c_new))
}

/// Solve Ψ_i·Xᵀ − (Ψ_i·Xᵀ)ᵀ = −M_i when every row of every Ψ_i is a unit
/// vector: each equation is then x_u − x_v = c, solved along a spanning forest.
fn solve_isotropy_graph(psi: &[Mat], m: &[Mat]) -> Option<Mat> {
    let ctx = &psi[0].ctx;
    let (ne, nf) = (psi[0].rows, psi[0].cols);
    let mut pis = Vec::new();
    for p in psi {
        let mut pi = Vec::with_capacity(ne);
        for a in 0..ne {
            let nz: Vec<usize> = (0..nf).filter(|&f| p.get(a, f) != 0).collect();
            if nz.len() != 1 || p.get(a, nz[0]) != 1 {
                return None;
            }
            pi.push(nz[0]);
        }
        pis.push(pi);
    }
    let n = ne * nf;
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (i, pi) in pis.iter().enumerate() {
        for a in 0..ne {
            for b in a + 1..ne {
                // x_u − x_v = c
                let (u, v) = (b * nf + pi[a], a * nf + pi[b]);
                let c = ctx.neg(m[i].get(a, b));
                adj[u].push((v, ctx.neg(c)));
                adj[v].push((u, c));
            }
        }
    }
    // adj[x] holds (y, w) meaning x_y = x_x + w
    let mut val: Vec<Option<u64>> = vec![None; n];
    for root in 0..n {
        if val[root].is_some() {
            continue;
        }
        val[root] = Some(0);
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            let vx = val[x].unwrap();
            for &(y, w) in &adj[x] {
                let want = ctx.add(vx, w);
                match val[y] {
                    None => {
                        val[y] = Some(want);
                        stack.push(y);
                    }
                    Some(have) if have != want => return None,
                    _ => {}
                }
            }
        }
    }
    Some(Mat { ctx: ctx.clone(), rows: ne, cols: nf, data: val.into_iter().map(|v| v.unwrap()).collect() })
}

fn solve_isotropy_dense(psi: &[Mat], m: &[Mat]) -> Result<Mat> {
    let ctx = &psi[0].ctx;
    let (ne, nf) = (psi[0].rows, psi[0].cols);
    let pairs: Vec<(usize, usize)> = (0..ne).flat_map(|a| (a + 1..ne).map(move |b| (a, b))).collect();
    let neq = psi.len() * pairs.len();
    let mut sys = Mat::zeros(ctx, neq, ne * nf);
    let mut rhs = vec![0u64; neq];
    for (i, p) in psi.iter().enumerate() {
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let row = i * pairs.len() + k;
            for f in 0..nf {
                let v = ctx.add(sys.get(row, b * nf + f), p.get(a, f));
                sys.set(row, b * nf + f, v);
                let v = ctx.sub(sys.get(row, a * nf + f), p.get(b, f));
                sys.set(row, a * nf + f, v);
            }
            rhs[row] = ctx.neg(m[i].get(a, b));
        }
    }
    let sol = sys.solve(&rhs).ok_or_else(|| Error::Internal("flat part has no isotropic complement".into()))?;
    Ok(Mat { ctx: ctx.clone(), rows: ne, cols: nf, data: sol })
}

/// Hyperbolic peeling of a nondegenerate alternating form B with a
/// B-self-adjoint operator S (B₂(u, v) = B(uS, v)); returns totally
/// isotropic (E, F) with E ⊕ F the whole space.
fn peel_selfadjoint(b: &Mat, s: &Mat) -> Result<(Vec<Vec<u64>>, Vec<Vec<u64>>)> {
    let ctx = &b.ctx;
    let n = b.rows;
    let (mut e_rows, mut f_rows) = (Vec::new(), Vec::new());
    if n == 0 {
        return Ok((e_rows, f_rows));
    }
    let mp = crate::linalg::min_poly(s);
    for (a, _) in crate::gf::poly_factor(&mp)? {
        let mult = (0..=n).find(|&k| !mp.rem(&a.pow(k + 1)).is_zero()).unwrap_or(n);
        let comp = s.eval_poly(&a.pow(mult)).kernel_rows();
        let mut space = Subspace::from_rows(ctx, n, &comp);
        let a_s = s.eval_poly(&a);
        while space.dim() > 0 {
            // vector of maximal exponent
            let (mut best, mut c) = (Vec::new(), 0usize);
            for u in space.rows() {
                let mut x = u.clone();
                let mut k = 0;
                while !crate::linalg::is_zero_vec(&x) {
                    x = vec_mat(&x, &a_s);
                    k += 1;
                }
                if k > c {
                    c = k;
                    best = u;
                }
            }
            let m = a.pow(c);
            let dd = m.deg();
            let ring = crate::algebra::QuotientRing::new(&m);
            // Hankel matrix of λ = coefficient of x^{D-1}
            let mut hank = Mat::zeros(ctx, dd, dd);
            for j in 0..dd {
                for k in 0..dd {
                    let r = Poly::x(ctx).pow(j + k).rem(&m);
                    hank.set(j, k, r.coeff(dd - 1));
                }
            }
            let hinv = hank.inverse().ok_or_else(|| Error::Internal("Hankel matrix singular".into()))?;
            let powers = |v: &[u64]| {
                let mut out = vec![v.to_vec()];
                for _ in 1..dd {
                    out.push(vec_mat(out.last().unwrap(), s));
                }
                out
            };
            // columns S^j B yᵀ so that h(u, y) = H⁻¹ (u·cols)
            let pair_cols = |y: &[u64]| {
                let byt = b.mul(&Mat::from_rows(ctx, &[y.to_vec()]).transpose());
                let mut cols = vec![byt.col(0)];
                for _ in 1..dd {
                    let prev = Mat::from_rows(ctx, &[cols.last().unwrap().clone()]).transpose();
                    cols.push(s.mul(&prev).col(0));
                }
                Mat::from_rows(ctx, &cols).transpose()
            };
            let h_with = |u: &[u64], cols: &Mat| -> Vec<u64> {
                let bvec = vec_mat(u, cols);
                hinv.mul(&Mat::from_rows(ctx, &[bvec]).transpose()).col(0)
            };
            let v = best;
            let vpow = powers(&v);
            // h(v, u) = -h(u, v)
            let vcols = pair_cols(&v);
            let mut w = None;
            for u in space.rows() {
                let huv = h_with(&u, &vcols);
                let hvu: Vec<u64> = huv.iter().map(|&x| ctx.neg(x)).collect();
                if !ring.to_poly(&hvu).rem(&a).is_zero() {
                    let inv = ring.inverse(&hvu).ok_or_else(|| Error::Internal("unit not invertible".into()))?;
                    let upow = powers(&u);
                    let mut wv = vec![0u64; n];
                    for (k, &ck) in inv.iter().enumerate() {
                        crate::linalg::axpy(ctx, &mut wv, &upow[k], ck);
                    }
                    w = Some(wv);
                    break;
                }
            }
            let w = w.ok_or_else(|| Error::Internal("no hyperbolic partner found".into()))?;
            let wpow = powers(&w);
            let wcols = pair_cols(&w);
            let mut rest = Vec::new();
            for u in space.rows() {
                let huw = h_with(&u, &wcols);
                let huv = h_with(&u, &vcols);
                let mut x = u.clone();
                for k in 0..dd {
                    crate::linalg::axpy(ctx, &mut x, &vpow[k], ctx.neg(huw[k]));
                    crate::linalg::axpy(ctx, &mut x, &wpow[k], huv[k]);
                }
                rest.push(x);
            }
            let next = Subspace::from_rows(ctx, n, &rest);
            if next.dim() + 2 * dd != space.dim() {
                return Err(Error::Internal("hyperbolic peeling lost dimension".into()));
            }
            e_rows.extend(vpow);
            f_rows.extend(wpow);
            space = next;
        }
    }
    Ok((e_rows, f_rows))
}

/// Totally isotropic E, F (for every form) with V = E ⊕ F. Requires a
/// fully nondegenerate pair. Flat blocks contribute their smaller side to E.
pub fn isotropic_split(s: &SystemOfForms) -> Result<(Mat, Mat)> {
    if s.e != 2 {
        return Err(Error::Dim(format!("isotropic splitting needs a pair of forms, got {}", s.e)));
    }
    if !s.is_fully_nondegenerate() {
        return Err(Error::Invalid("isotropic splitting needs a fully nondegenerate pair".into()));
    }
    let ctx = &s.ctx;
    let d = s.d;
    let (p1, p2) = (&s.forms[0], &s.forms[1]);
    let (vw, ww) = wong_limits(p1, p2);
    let f0s = vw.intersect(&ww);
    let f0 = f0s.basis.clone();
    let (e_flat, f0, c_rows) = if f0.rows > 0 {
        let pair = p1.mul(&f0.transpose()).hstack(&p2.mul(&f0.transpose()));
        let u = Subspace::from_rows(ctx, d, &pair.kernel_rows());
        let (_, crest) = adapted_rows(&f0s, &u);
        let (_, erest) = adapted_rows(&u, &Subspace::full(ctx, d));
        let c0 = rows_of(ctx, d, &crest);
        let e0 = rows_of(ctx, d, &erest);
        split_flat(s, &f0, &e0, &c0)?
    } else {
        (Mat::zeros(ctx, 0, d), f0, Mat::identity(ctx, d))
    };
    // sloped part: regular pencil on C, split into finite and infinite parts
    let g1 = gram(&c_rows, p1);
    let g2 = gram(&c_rows, p2);
    let nc = c_rows.rows;
    let (mut e_all, mut f_all) = (e_flat.row_vecs(), f0.row_vecs());
    if nc > 0 {
        let (vf, wi) = wong_limits(&g1, &g2);
        if vf.dim() + wi.dim() != nc {
            return Err(Error::Internal("sloped part is not regular".into()));
        }
        for (sub, first) in [(&vf, true), (&wi, false)] {
            if sub.dim() == 0 {
                continue;
            }
            let h1 = gram(&sub.basis, &g1);
            let h2 = gram(&sub.basis, &g2);
            let (bm, b2) = if first { (h1, h2) } else { (h2, h1) };
            let binv = bm.inverse().ok_or_else(|| Error::Internal("restricted form singular".into()))?;
            let op = b2.mul(&binv);
            let (er, fr) = peel_selfadjoint(&bm, &op)?;
            let lift = sub.basis.mul(&c_rows);
            e_all.extend(apply_rows(&er, &lift));
            f_all.extend(apply_rows(&fr, &lift));
        }
    }
    Ok((rows_of(ctx, d, &e_all), rows_of(ctx, d, &f_all)))
}

/// Indecomposable summand of a fully nondegenerate pair of alternating forms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PencilKind {
    /// hyperbolic with corner (I, C(a^c)), dimension 2·c·deg a
    Sloped { a: Poly, c: usize },
    /// hyperbolic with corner (C(x^c), I), dimension 2c
    Infinite { c: usize },
    /// hyperbolic with corner ([I|0], [0|I]) of shape m×(m+1), dimension 2m+1
    Flat { m: usize },
}

impl PencilKind {
    fn kron(&self) -> KroneckerKind {
        match self {
            PencilKind::Sloped { a, c } => KroneckerKind::Finite { a: a.clone(), c: *c },
            PencilKind::Infinite { c } => KroneckerKind::Infinite { c: *c },
            PencilKind::Flat { m } => KroneckerKind::L { m: *m },
        }
    }

    /// Sizes (E side, F side) of the hyperbolic block.
    pub fn sides(&self) -> (usize, usize) {
        self.kron().shape()
    }

    pub fn dim(&self) -> usize {
        let (a, b) = self.sides();
        a + b
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, PencilKind::Flat { .. })
    }

    /// The canonical pair of alternating forms of this block.
    pub fn canonical_forms(&self, ctx: &FieldCtx) -> (Mat, Mat) {
        let (p1, p2) = self.kron().canonical(ctx);
        (Mat::hyperbolic(&p1), Mat::hyperbolic(&p2))
    }

    pub fn canonical_cmp(&self, o: &PencilKind) -> Ordering {
        self.kron().canonical_cmp(&o.kron())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PencilBlock {
    pub kind: PencilKind,
    pub start: usize,
}

/// Rows of `t` form a basis in which both forms are the orthogonal sum of
/// the canonical blocks, in canonical order.
#[derive(Clone, Debug)]
pub struct PencilDecomposition {
    pub t: Mat,
    pub blocks: Vec<PencilBlock>,
}

impl PencilDecomposition {
    pub fn kinds(&self) -> Vec<PencilKind> {
        self.blocks.iter().map(|b| b.kind.clone()).collect()
    }

    /// The canonical system T·Φ_i·Tᵀ.
    pub fn canonical_system(&self, ctx: &FieldCtx) -> SystemOfForms {
        canonical_system(ctx, &self.kinds())
    }

    pub fn sloped_dim(&self) -> usize {
        self.blocks.iter().filter(|b| !b.kind.is_flat()).map(|b| b.kind.dim()).sum()
    }
}

/// Orthogonal sum of canonical blocks.
pub fn canonical_system(ctx: &FieldCtx, kinds: &[PencilKind]) -> SystemOfForms {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for k in kinds {
        let (x, y) = k.canonical_forms(ctx);
        a.push(x);
        b.push(y);
    }
    let d = a.iter().map(|m| m.rows).sum();
    let forms = vec![Mat::block_diag(ctx, &a), Mat::block_diag(ctx, &b)];
    SystemOfForms { ctx: ctx.clone(), d, e: 2, forms }
}

/// Fully refined orthogonal decomposition of a fully nondegenerate pair:
/// isotropic splitting, Kronecker decomposition of the corner, then
/// regrouping into hyperbolic blocks.
pub fn orth_decompose(s: &SystemOfForms) -> Result<PencilDecomposition> {
    let ctx = &s.ctx;
    let (e, f) = isotropic_split(s)?;
    let corner: Vec<Mat> = s.forms.iter().map(|p| e.mul(p).mul(&f.transpose())).collect();
    let kf = kronecker_decompose(&corner[0], &corner[1])?;
    let e2 = kf.x.mul(&e);
    let f2 = kf.y.transpose().mul(&f);
    let mut parts: Vec<(PencilKind, Vec<Vec<u64>>)> = Vec::new();
    for b in &kf.blocks {
        let (h, w) = b.kind.shape();
        let er: Vec<Vec<u64>> = (b.row0..b.row0 + h).map(|i| e2.row(i).to_vec()).collect();
        let fr: Vec<Vec<u64>> = (b.col0..b.col0 + w).map(|i| f2.row(i).to_vec()).collect();
        let (kind, rows) = match &b.kind {
            KroneckerKind::Finite { a, c } => (PencilKind::Sloped { a: a.clone(), c: *c }, [er, fr].concat()),
            KroneckerKind::Infinite { c } => (PencilKind::Infinite { c: *c }, [er, fr].concat()),
            KroneckerKind::L { m } => (PencilKind::Flat { m: *m }, [er, fr].concat()),
            KroneckerKind::LT { m } => {
                let neg: Vec<Vec<u64>> = er.iter().map(|r| r.iter().map(|&x| ctx.neg(x)).collect()).collect();
                (PencilKind::Flat { m: *m }, [fr, neg].concat())
            }
        };
        parts.push((kind, rows));
    }
    parts.sort_by(|x, y| x.0.canonical_cmp(&y.0));
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for (kind, r) in parts {
        blocks.push(PencilBlock { kind, start: rows.len() });
        rows.extend(r);
    }
    let t = rows_of(ctx, s.d, &rows);
    let dec = PencilDecomposition { t, blocks };
    let canon = dec.canonical_system(ctx);
    if s.congruent(&dec.t).forms != canon.forms {
        return Err(Error::Internal("orthogonal decomposition failed verification".into()));
    }
    Ok(dec)
}

/// (X, Y) with X·Ψ₁·Y = [I_n|0] and X·Ψ₂·Y = [0|I_n] for an indecomposable
/// flat pair of shape n×(n+1).
pub fn standardize_flat(p1: &Mat, p2: &Mat) -> Result<(Mat, Mat)> {
    if p1.cols != p1.rows + 1 {
        return Err(Error::Invalid("flat pair must have shape n×(n+1)".into()));
    }
    let kf = kronecker_decompose(p1, p2)?;
    match kf.kinds().as_slice() {
        [KroneckerKind::L { .. }] => Ok((kf.x, kf.y)),
        _ => Err(Error::Invalid("pair is not an indecomposable flat block".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::{random_irreducible, rng, Rng64};
    use proptest::prelude::*;
    use rand::Rng;

    fn k(p: u64) -> FieldCtx {
        FieldCtx::prime(p).unwrap()
    }

    fn sorted(mut v: Vec<KroneckerKind>) -> Vec<KroneckerKind> {
        v.sort_by(|a, b| a.canonical_cmp(b));
        v
    }

    fn sorted_p(mut v: Vec<PencilKind>) -> Vec<PencilKind> {
        v.sort_by(|a, b| a.canonical_cmp(b));
        v
    }

    fn random_kinds(ctx: &FieldCtx, budget: usize, singular: bool, r: &mut Rng64) -> Vec<KroneckerKind> {
        let mut out = Vec::new();
        let mut used = 0;
        while used < budget {
            let kind = match r.gen_range(0..if singular { 4 } else { 2 }) {
                0 => KroneckerKind::Finite { a: random_irreducible(ctx, r.gen_range(1..3), r), c: r.gen_range(1..3) },
                1 => KroneckerKind::Infinite { c: r.gen_range(1..3) },
                2 => KroneckerKind::L { m: r.gen_range(0..3) },
                _ => KroneckerKind::LT { m: r.gen_range(0..3) },
            };
            let (h, w) = kind.shape();
            used += h.max(w).max(1);
            out.push(kind);
        }
        out
    }

    fn assemble(ctx: &FieldCtx, kinds: &[KroneckerKind]) -> (Mat, Mat) {
        let (a, b): (Vec<Mat>, Vec<Mat>) = kinds.iter().map(|k| k.canonical(ctx)).unzip();
        (block_diag_rect(ctx, &a.iter().collect::<Vec<_>>()), block_diag_rect(ctx, &b.iter().collect::<Vec<_>>()))
    }

    #[test]
    fn canonical_pair_is_fixed() {
        let ctx = k(5);
        let a = Poly::from_ints(&ctx, &[2, 0, 1]);
        let (p1, p2) = (Mat::identity(&ctx, 2), Mat::companion(&a));
        let kf = kronecker_decompose(&p1, &p2).unwrap();
        assert_eq!(kf.kinds(), vec![KroneckerKind::Finite { a, c: 1 }]);
    }

    #[test]
    fn scalar_pencil_splits_into_two_blocks() {
        let ctx = k(5);
        let p1 = Mat::identity(&ctx, 2);
        let p2 = Mat::scalar(&ctx, 2, 2);
        let kf = kronecker_decompose(&p1, &p2).unwrap();
        let a = Poly::from_ints(&ctx, &[-2, 1]);
        assert_eq!(kf.kinds(), vec![KroneckerKind::Finite { a: a.clone(), c: 1 }, KroneckerKind::Finite { a, c: 1 }]);
    }

    #[test]
    fn random_rectangular_pencil_is_flat() {
        let ctx = k(3);
        let mut r = rng(4);
        let p1 = Mat::random(&ctx, 3, 4, &mut r);
        let p2 = Mat::random(&ctx, 3, 4, &mut r);
        let kf = kronecker_decompose(&p1, &p2).unwrap();
        let (c1, c2) = kf.canonical_pair(&ctx);
        assert_eq!(kf.x.mul(&p1).mul(&kf.y), c1);
        assert_eq!(kf.x.mul(&p2).mul(&kf.y), c2);
    }

    #[test]
    fn flat_pairs_standardize() {
        for (p, n, seed) in [(3u64, 3usize, 1u64), (7, 1, 2), (5, 4, 3)] {
            let ctx = k(p);
            let mut r = rng(seed);
            let (p1, p2) = KroneckerKind::L { m: n }.canonical(&ctx);
            let a = Mat::random_invertible(&ctx, n, &mut r);
            let b = Mat::random_invertible(&ctx, n + 1, &mut r);
            let (s1, s2) = (a.mul(&p1).mul(&b), a.mul(&p2).mul(&b));
            let (x, y) = standardize_flat(&s1, &s2).unwrap();
            assert_eq!(x.mul(&s1).mul(&y), p1);
            assert_eq!(x.mul(&s2).mul(&y), p2);
        }
        let ctx = k(3);
        let (p1, p2) = (Mat::identity(&ctx, 2), Mat::identity(&ctx, 2));
        assert!(standardize_flat(&p1, &p2).is_err());
    }

    #[test]
    fn nondegenerate_combination_scan() {
        let ctx = k(3);
        let sys = canonical_system(&ctx, &[PencilKind::Sloped { a: Poly::from_ints(&ctx, &[0, 1]), c: 1 }]);
        assert_eq!(find_nondeg_combination(&sys), Some((1, 0)));
        let swapped = SystemOfForms { forms: vec![sys.forms[1].clone(), sys.forms[0].clone()], ..sys.clone() };
        assert_eq!(find_nondeg_combination(&swapped), Some((1, 1)));
        // every point of P¹(GF(3)) is an eigenvalue
        let kinds: Vec<PencilKind> = (0..3)
            .map(|w| PencilKind::Sloped { a: Poly::from_ints(&ctx, &[-w, 1]), c: 1 })
            .chain([PencilKind::Infinite { c: 1 }])
            .collect();
        assert_eq!(find_nondeg_combination(&canonical_system(&ctx, &kinds)), None);
        let dec = orth_decompose(&canonical_system(&ctx, &kinds)).unwrap();
        assert_eq!(dec.kinds(), sorted_p(kinds));
    }

    #[test]
    fn equal_factor_pair_has_three_sloped_blocks() {
        // ω² = ω + 1 over GF(3): L₁ = diag(0, 1, [[0,1],[b,a]]) with a = b = 1
        let ctx = k(3);
        let sys = crate::groups::equal_factor_pair(&ctx, true);
        let dec = orth_decompose(&sys).unwrap();
        let polys: Vec<Poly> = dec
            .kinds()
            .into_iter()
            .map(|k| match k {
                PencilKind::Sloped { a, c: 1 } => a,
                other => panic!("unexpected block {other:?}"),
            })
            .collect();
        assert_eq!(polys, vec![Poly::from_ints(&ctx, &[0, 1]), Poly::from_ints(&ctx, &[-1, 1]), Poly::from_ints(&ctx, &[-1, -1, 1])]);
    }

    #[test]
    fn mixed_blocks_round_trip_under_congruence() {
        let ctx = k(3);
        let mut r = rng(10);
        let kinds = vec![
            PencilKind::Sloped { a: Poly::from_ints(&ctx, &[1, 0, 1]), c: 1 },
            PencilKind::Sloped { a: Poly::from_ints(&ctx, &[1, 1]), c: 2 },
            PencilKind::Infinite { c: 1 },
            PencilKind::Flat { m: 2 },
            PencilKind::Flat { m: 1 },
        ];
        let sys = canonical_system(&ctx, &kinds);
        for _ in 0..5 {
            let t = Mat::random_invertible(&ctx, sys.d, &mut r);
            let dec = orth_decompose(&sys.congruent(&t)).unwrap();
            assert_eq!(dec.kinds(), sorted_p(kinds.clone()));
        }
    }

    #[test]
    fn characteristic_two_peeling() {
        let ctx = k(2);
        let mut r = rng(12);
        let kinds = vec![
            PencilKind::Sloped { a: Poly::from_ints(&ctx, &[1, 1, 1]), c: 2 },
            PencilKind::Sloped { a: Poly::from_ints(&ctx, &[0, 1]), c: 3 },
            PencilKind::Sloped { a: Poly::from_ints(&ctx, &[0, 1]), c: 1 },
            PencilKind::Flat { m: 1 },
        ];
        let sys = canonical_system(&ctx, &kinds);
        for _ in 0..5 {
            let t = Mat::random_invertible(&ctx, sys.d, &mut r);
            assert_eq!(orth_decompose(&sys.congruent(&t)).unwrap().kinds(), sorted_p(kinds.clone()));
        }
    }

    #[test]
    fn isotropic_split_is_isotropic() {
        let ctx = k(5);
        let mut r = rng(3);
        let sys = crate::forms::random_system(&ctx, 9, 2, &mut r);
        let (e, f) = isotropic_split(&sys).unwrap();
        assert_eq!(e.rows + f.rows, 9);
        for p in &sys.forms {
            assert!(gram(&e, p).is_zero());
            assert!(gram(&f, p).is_zero());
        }
        assert_eq!(rows_of(&ctx, 9, &[e.row_vecs(), f.row_vecs()].concat()).rank(), 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn kronecker_round_trip(seed in any::<u64>(), p in prop::sample::select(vec![2u64, 3, 5])) {
            let ctx = k(p);
            let mut r = rng(seed);
            let kinds = random_kinds(&ctx, 6, true, &mut r);
            let (p1, p2) = assemble(&ctx, &kinds);
            let x = Mat::random_invertible(&ctx, p1.rows, &mut r);
            let y = Mat::random_invertible(&ctx, p1.cols, &mut r);
            let kf = kronecker_decompose(&x.mul(&p1).mul(&y), &x.mul(&p2).mul(&y)).unwrap();
            prop_assert_eq!(kf.kinds(), sorted(kinds));
            let again = kronecker_decompose(&kf.canonical_pair(&ctx).0, &kf.canonical_pair(&ctx).1).unwrap();
            prop_assert_eq!(again.kinds(), kf.kinds());
        }

        #[test]
        fn orth_decompose_is_congruence_invariant(seed in any::<u64>(), p in prop::sample::select(vec![2u64, 3, 5, 7]), d in 2usize..=12) {
            let ctx = k(p);
            let mut r = rng(seed);
            let sys = crate::forms::random_system(&ctx, d, 2, &mut r);
            prop_assume!(sys.is_fully_nondegenerate());
            let dec = orth_decompose(&sys).unwrap();
            let total: usize = dec.kinds().iter().map(|k| k.dim()).sum();
            prop_assert_eq!(total, d);
            for b in dec.kinds() {
                if b.is_flat() {
                    prop_assert_eq!(b.dim() % 2, 1);
                }
            }
            let t = Mat::random_invertible(&ctx, d, &mut r);
            prop_assert_eq!(orth_decompose(&sys.congruent(&t)).unwrap().kinds(), dec.kinds());
        }
    }
}
