//! Exhaustive oracles for tiny instances: pseudo-isometries by row-wise
//! backtracking over GL(d, q) for every (φ̂, τ), and group isomorphisms by
//! generator-image search.

use crate::forms::{nondegenerate_core, PseudoIsometry, SystemOfForms};
use crate::gf::FieldCtx;
use crate::groups::{Element, Genus2Group};
use crate::linalg::{dot, vec_mat, Echelon, Mat};

/// Every vector of F_q^n in lexicographic order of base-q digits.
pub fn all_vectors(ctx: &FieldCtx, n: usize) -> Vec<Vec<u64>> {
    let q = ctx.q();
    let total = q.pow(n as u32);
    (0..total)
        .map(|mut i| {
            (0..n)
                .map(|_| {
                    let c = i % q;
                    i /= q;
                    c
                })
                .collect()
        })
        .collect()
}

/// Every invertible n×n matrix over F_q.
pub fn all_invertible(ctx: &FieldCtx, n: usize) -> Vec<Mat> {
    let vecs = all_vectors(ctx, n);
    let mut out = Vec::new();
    let mut rows: Vec<Vec<u64>> = Vec::new();
    fn rec(ctx: &FieldCtx, n: usize, vecs: &[Vec<u64>], rows: &mut Vec<Vec<u64>>, out: &mut Vec<Mat>) {
        if rows.len() == n {
            out.push(Mat::from_rows_cols(ctx, n, n, rows));
            return;
        }
        for v in vecs {
            let mut ech = Echelon::new(ctx, n);
            rows.iter().for_each(|r| {
                ech.insert(r);
            });
            if ech.insert(v) {
                rows.push(v.clone());
                rec(ctx, n, vecs, rows, out);
                rows.pop();
            }
        }
    }
    rec(ctx, n, &vecs, &mut rows, &mut out);
    out
}

/// Visit every invertible φ with φ·Φ^B_s·φᵀ = T_s for all s; the visitor
/// returns true to stop. Returns true if stopped.
fn search_phi(b: &SystemOfForms, targets: &[Mat], vecs: &[Vec<u64>], visit: &mut dyn FnMut(&Mat) -> bool) -> bool {
    let ctx = &b.ctx;
    let d = b.d;
    fn rec(
        ctx: &FieldCtx,
        b: &SystemOfForms,
        targets: &[Mat],
        vecs: &[Vec<u64>],
        rows: &mut Vec<Vec<u64>>,
        images: &mut Vec<Vec<Vec<u64>>>,
        ech: &Echelon,
        visit: &mut dyn FnMut(&Mat) -> bool,
    ) -> bool {
        let i = rows.len();
        if i == b.d {
            return visit(&Mat::from_rows_cols(ctx, b.d, b.d, rows));
        }
        for v in vecs {
            if ech.contains(v) {
                continue;
            }
            // v·Φ^B_s against earlier rows must match the targets
            let ok = (0..b.e).all(|s| (0..i).all(|j| dot(ctx, &images[j][s], v) == targets[s].get(j, i)));
            if !ok {
                continue;
            }
            let mut e2 = ech.clone();
            e2.insert(v);
            rows.push(v.clone());
            images.push(b.forms.iter().map(|f| vec_mat(v, f)).collect());
            let stop = rec(ctx, b, targets, vecs, rows, images, &e2, visit);
            rows.pop();
            images.pop();
            if stop {
                return true;
            }
        }
        false
    }
    let mut rows = Vec::new();
    let mut images = Vec::new();
    rec(ctx, b, targets, vecs, &mut rows, &mut images, &Echelon::new(ctx, d), visit)
}

/// Visit every pseudo-isometry A → B; the visitor returns true to stop.
pub fn for_each_pseudo_isometry(a: &SystemOfForms, b: &SystemOfForms, visit: &mut dyn FnMut(PseudoIsometry) -> bool) {
    if a.ctx != b.ctx || a.d != b.d || a.e != b.e {
        return;
    }
    let ctx = &a.ctx;
    let vecs = all_vectors(ctx, a.d);
    for tau in 0..ctx.k() {
        let at = a.frob(tau);
        for hat in all_invertible(ctx, a.e) {
            let targets = at.recombine(&hat).forms;
            let stop = search_phi(b, &targets, &vecs, &mut |phi| visit(PseudoIsometry { phi: phi.clone(), phi_hat: hat.clone(), tau }));
            if stop {
                return;
            }
        }
    }
}

pub fn pseudo_isometry_exists(a: &SystemOfForms, b: &SystemOfForms) -> bool {
    let mut found = false;
    for_each_pseudo_isometry(a, b, &mut |_| {
        found = true;
        true
    });
    found
}

/// |ΨIsom(S)| as a count of triples (φ, φ̂, τ).
pub fn pseudo_isometry_count(s: &SystemOfForms) -> usize {
    let mut n = 0;
    for_each_pseudo_isometry(s, s, &mut |_| {
        n += 1;
        false
    });
    n
}

/// Exhaustive search for an isomorphism G → H by images of generators:
/// z-images range over tuples of central elements, x-images over
/// representatives modulo H′ (which leaves all relations unchanged).
pub fn group_isomorphism_exists(g: &Genus2Group, h: &Genus2Group) -> bool {
    if g.p != h.p || g.log_order() != h.log_order() {
        return false;
    }
    let ctx = h.ctx().clone();
    let n = h.d + h.e;
    let core = nondegenerate_core(&h.forms);
    let derived = core.w_basis.row_vecs();
    let elements: Vec<Element> = all_vectors(&ctx, n);
    let one = h.identity();
    let gens: Vec<Element> = (0..h.d).map(|i| h.x(i)).collect();
    let central: Vec<Element> = elements.iter().filter(|el| gens.iter().all(|x| h.comm(el, x) == one)).cloned().collect();
    // representatives: z-part reduced modulo H′
    let mut ech = Echelon::new(&ctx, h.e);
    derived.iter().for_each(|w| {
        ech.insert(w);
    });
    let reps: Vec<Element> = elements.iter().filter(|el| ech.reduce(&el[h.d..]) == el[h.d..]).cloned().collect();
    let surjective = |xs: &[Element], zs: &[Element]| {
        let mut rows: Vec<Vec<u64>> = xs.iter().chain(zs).cloned().collect();
        for w in &derived {
            let mut r = vec![0; h.d];
            r.extend(w.iter().copied());
            rows.push(r);
        }
        Mat::from_rows_cols(&ctx, rows.len(), n, &rows).rank() == n
    };
    // commutators of representatives, computed once in H
    let table: Vec<Vec<Element>> = reps.iter().map(|u| reps.iter().map(|v| h.comm(u, v)).collect()).collect();
    fn rec(g: &Genus2Group, table: &[Vec<Element>], rhs: &[Element], xs: &mut Vec<usize>, leaf: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        let i = xs.len();
        if i == g.d {
            return leaf(xs);
        }
        for v in 0..table.len() {
            if (0..i).all(|j| table[xs[j]][v] == rhs[j * g.d + i]) {
                xs.push(v);
                if rec(g, table, rhs, xs, leaf) {
                    return true;
                }
                xs.pop();
            }
        }
        false
    }
    let mut idx = vec![0usize; g.e];
    loop {
        let zs: Vec<Element> = idx.iter().map(|&k| central[k].clone()).collect();
        // rhs[j·d + i] = ∏_t f(z_t)^{(Φ_t)_ji}
        let rhs: Vec<Element> = (0..g.d * g.d)
            .map(|ji| h.word(&(0..g.e).map(|t| (zs[t].clone(), g.forms.forms[t].get(ji / g.d, ji % g.d))).collect::<Vec<_>>()))
            .collect();
        let mut leaf = |xs: &[usize]| surjective(&xs.iter().map(|&k| reps[k].clone()).collect::<Vec<_>>(), &zs);
        if rec(g, &table, &rhs, &mut Vec::new(), &mut leaf) {
            return true;
        }
        let mut t = 0;
        loop {
            if t == g.e {
                return false;
            }
            idx[t] += 1;
            if idx[t] < central.len() {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}
