//! Seeded random instances: a pair of alternating forms and a copy twisted
//! by a planted (g, h), i.e. {gΦ₁gᵀ, gΦ₂gᵀ} recombined by h.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forms::{random_system, PseudoIsometry, SystemOfForms};
use crate::gf::{rng, FieldCtx, Rng64};
use crate::linalg::Mat;
use crate::pencil::{canonical_system, find_nondeg_combination, orth_decompose, PencilKind};

/// Shape of the generated pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// every indecomposable block sloped; d must be even
    Sloped,
    /// one indecomposable flat block; d must be odd
    Flat,
    /// an unconstrained random pair (flat blocks appear whenever d is odd)
    Mixed,
}

impl FromStr for Flavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Flavor> {
        match s {
            "sloped" => Ok(Flavor::Sloped),
            "flat" => Ok(Flavor::Flat),
            "mixed" => Ok(Flavor::Mixed),
            _ => Err(Error::Invalid(format!("unknown flavor {s:?} (sloped, flat, mixed)"))),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Flavor::Sloped => "sloped",
            Flavor::Flat => "flat",
            Flavor::Mixed => "mixed",
        })
    }
}

/// Redraw budget for the sloped flavor.
pub const SLOPED_ATTEMPTS: usize = 1000;

/// A generated instance: B = planted(A).
#[derive(Clone, Debug)]
pub struct Instance {
    pub a: SystemOfForms,
    pub b: SystemOfForms,
    pub planted: PseudoIsometry,
    pub flavor: Flavor,
    pub seed: u64,
}

/// True iff the pair has no flat block: some rational combination is
/// invertible, or the decomposition finds only sloped and infinite blocks.
pub fn is_sloped(s: &SystemOfForms) -> bool {
    if s.e != 2 || !s.is_fully_nondegenerate() {
        return false;
    }
    if find_nondeg_combination(s).is_some() {
        return true;
    }
    orth_decompose(s).is_ok_and(|dec| dec.kinds().iter().all(|k| !k.is_flat()))
}

fn draw_sloped(ctx: &FieldCtx, d: usize, r: &mut Rng64) -> Result<SystemOfForms> {
    for _ in 0..SLOPED_ATTEMPTS {
        let s = random_system(ctx, d, 2, r);
        if is_sloped(&s) {
            return Ok(s);
        }
    }
    Err(Error::Unsupported(format!("no sloped pair found in {SLOPED_ATTEMPTS} draws")))
}

/// The base system A of an instance.
pub fn base_system(ctx: &FieldCtx, d: usize, flavor: Flavor, r: &mut Rng64) -> Result<SystemOfForms> {
    if d < 2 {
        return Err(Error::Invalid("d must be at least 2".into()));
    }
    match flavor {
        Flavor::Sloped if d % 2 == 1 => Err(Error::Invalid(format!("sloped pairs need even d, got {d}"))),
        Flavor::Sloped => draw_sloped(ctx, d, r),
        Flavor::Flat if d % 2 == 0 => Err(Error::Invalid(format!("flat blocks need odd d, got {d}"))),
        Flavor::Flat => {
            let flat = canonical_system(ctx, &[PencilKind::Flat { m: (d - 1) / 2 }]);
            Ok(flat.congruent(&Mat::random_invertible(ctx, d, r)))
        }
        Flavor::Mixed => Ok(random_system(ctx, d, 2, r)),
    }
}

/// Generate (A, B, (g, h)) deterministically from the seed.
pub fn generate(ctx: &FieldCtx, d: usize, flavor: Flavor, seed: u64) -> Result<Instance> {
    let mut r = rng(seed);
    let a = base_system(ctx, d, flavor, &mut r)?;
    let planted = PseudoIsometry { phi: Mat::random_invertible(ctx, d, &mut r), phi_hat: Mat::random_invertible(ctx, 2, &mut r), tau: 0 };
    let b = planted.apply(&a);
    Ok(Instance { a, b, planted, flavor, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{group_from_forms, isomorphism_test, verify, Mode};

    fn k(p: u64) -> FieldCtx {
        FieldCtx::prime(p).unwrap()
    }

    #[test]
    fn flavors_parse_and_print() {
        for f in [Flavor::Sloped, Flavor::Flat, Flavor::Mixed] {
            assert_eq!(f.to_string().parse::<Flavor>().unwrap(), f);
        }
        assert!("round".parse::<Flavor>().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        for flavor in [Flavor::Sloped, Flavor::Mixed] {
            let (x, y) = (generate(&k(5), 6, flavor, 42).unwrap(), generate(&k(5), 6, flavor, 42).unwrap());
            assert_eq!((x.a, x.b, x.planted), (y.a, y.b, y.planted));
        }
        let (x, y) = (generate(&k(5), 6, Flavor::Sloped, 1).unwrap(), generate(&k(5), 6, Flavor::Sloped, 2).unwrap());
        assert_ne!(x.a, y.a);
    }

    #[test]
    fn flavors_have_the_requested_blocks() {
        for seed in 0..5 {
            let s = generate(&k(3), 8, Flavor::Sloped, seed).unwrap();
            assert!(is_sloped(&s.a) && is_sloped(&s.b));
            let f = generate(&k(5), 5, Flavor::Flat, seed).unwrap();
            assert_eq!(orth_decompose(&f.a).unwrap().kinds(), vec![PencilKind::Flat { m: 2 }]);
            assert!(f.planted.verify(&f.a, &f.b));
        }
        assert!(generate(&k(5), 5, Flavor::Sloped, 0).is_err());
        assert!(generate(&k(5), 4, Flavor::Flat, 0).is_err());
        assert!(generate(&k(5), 1, Flavor::Mixed, 0).is_err());
    }

    #[test]
    fn generated_pairs_are_isomorphic() {
        for (p, d, flavor) in [(5, 4, Flavor::Sloped), (3, 8, Flavor::Sloped), (5, 3, Flavor::Flat), (7, 7, Flavor::Mixed)] {
            let inst = generate(&k(p), d, flavor, 9).unwrap();
            let (g, h) = (group_from_forms(&inst.a).unwrap(), group_from_forms(&inst.b).unwrap());
            if flavor == Flavor::Flat {
                assert_eq!(g.log_order(), d + 2);
            }
            let f = isomorphism_test(&g, &h, Mode::Auto).unwrap().expect("planted pair");
            assert!(verify(&g, &h, &f));
        }
    }
}
