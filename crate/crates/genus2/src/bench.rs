//! Benchmark trials: generate a planted instance, time the full isomorphism
//! test, and record the block structure of the base system.

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forms::{nondegenerate_core, SystemOfForms};
use crate::gen::{generate, Flavor};
use crate::gf::{rng, FieldCtx};
use crate::groups::{group_from_forms, isomorphism_test, pseudo_isometry_test, Mode};
use crate::linalg::Mat;
use crate::pencil::orth_decompose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Iso,
    NonIso,
    Unsupported,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Outcome::Iso => "iso",
            Outcome::NonIso => "non-iso",
            Outcome::Unsupported => "unsupported",
        })
    }
}

/// One row of the benchmark CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub p: u64,
    pub k: u32,
    pub d: usize,
    pub flavor: Flavor,
    pub seed: u64,
    pub mode: Mode,
    pub outcome: Outcome,
    pub ms: f64,
    /// number of indecomposable summands of the nondegenerate core
    pub blocks: usize,
    /// dimension of the largest indecomposable summand
    pub max_block: usize,
}

pub const CSV_HEADER: [&str; 10] = ["p", "k", "d", "flavor", "seed", "mode", "outcome", "ms", "blocks", "max_block"];

impl BenchRecord {
    pub fn csv_fields(&self) -> [String; 10] {
        [
            self.p.to_string(),
            self.k.to_string(),
            self.d.to_string(),
            self.flavor.to_string(),
            self.seed.to_string(),
            self.mode.to_string(),
            self.outcome.to_string(),
            format!("{:.3}", self.ms),
            self.blocks.to_string(),
            self.max_block.to_string(),
        ]
    }
}

/// (number of blocks, largest block dimension) of the nondegenerate core;
/// (0, 0) when the core is not a decomposable pair.
pub fn block_statistics(s: &SystemOfForms) -> (usize, usize) {
    let core = nondegenerate_core(s);
    if core.sys.e != 2 || core.sys.d == 0 {
        return (0, 0);
    }
    match orth_decompose(&core.sys) {
        Ok(dec) => (dec.blocks.len(), dec.kinds().iter().map(|k| k.dim()).max().unwrap_or(0)),
        Err(_) => (0, 0),
    }
}

/// Seed of trial `i` at dimension d, a fixed mix of the run seed.
pub fn trial_seed(seed: u64, d: usize, i: usize) -> u64 {
    let mut z = seed ^ ((d as u64) << 32) ^ (i as u64);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Time the decision on a pair: the group isomorphism test over prime
/// fields, the pseudo-isometry test otherwise.
pub fn timed_test(a: &SystemOfForms, b: &SystemOfForms, mode: Mode) -> Result<(Outcome, f64)> {
    let start = Instant::now();
    let found = if a.ctx.is_prime_field() && a.ctx.p() > 2 {
        let (g, h) = (group_from_forms(a)?, group_from_forms(b)?);
        isomorphism_test(&g, &h, mode).map(|f| f.is_some())
    } else {
        pseudo_isometry_test(a, b, mode).map(|w| w.is_some())
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match found {
        Ok(true) => Ok((Outcome::Iso, ms)),
        Ok(false) => Ok((Outcome::NonIso, ms)),
        Err(Error::Unsupported(_)) => Ok((Outcome::Unsupported, ms)),
        Err(e) => Err(e),
    }
}

pub fn run_trial(ctx: &FieldCtx, d: usize, flavor: Flavor, seed: u64, mode: Mode) -> Result<BenchRecord> {
    let inst = generate(ctx, d, flavor, seed)?;
    let (outcome, ms) = timed_test(&inst.a, &inst.b, mode)?;
    let (blocks, max_block) = block_statistics(&inst.a);
    Ok(BenchRecord { p: ctx.p(), k: ctx.k(), d, flavor, seed, mode, outcome, ms, blocks, max_block })
}

/// One record per (d, trial), in that order.
pub fn bench(ctx: &FieldCtx, ds: &[usize], trials: usize, seed: u64, flavor: Flavor, mode: Mode) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::with_capacity(ds.len() * trials);
    for &d in ds {
        for i in 0..trials {
            out.push(run_trial(ctx, d, flavor, trial_seed(seed, d, i), mode)?);
        }
    }
    Ok(out)
}

/// Size at which the dense solver is timed for the baseline.
pub const BASELINE_CALIBRATION_N: usize = 600;

/// Wall time in ms of Gaussian elimination on a random n × (n+1) system.
pub fn dense_solve_ms(ctx: &FieldCtx, n: usize, seed: u64) -> f64 {
    let m = Mat::random(ctx, n, n + 1, &mut rng(seed));
    let start = Instant::now();
    let _ = m.rref_only();
    start.elapsed().as_secs_f64() * 1e3
}

/// Cost in ms of a dense linear solve in d² variables: measured directly
/// when d² ≤ BASELINE_CALIBRATION_N, otherwise measured at the calibration
/// size and scaled by the cubic cost of elimination.
pub fn linear_solve_baseline_ms(ctx: &FieldCtx, d: usize, seed: u64) -> f64 {
    let n = d * d;
    if n <= BASELINE_CALIBRATION_N {
        return dense_solve_ms(ctx, n, seed);
    }
    let c = BASELINE_CALIBRATION_N;
    dense_solve_ms(ctx, c, seed) * (n as f64 / c as f64).powi(3)
}

/// ln(test time) / ln(baseline time), both in microseconds.
pub fn log_ratio(test_ms: f64, baseline_ms: f64) -> f64 {
    (test_ms * 1e3).max(std::f64::consts::E).ln() / (baseline_ms * 1e3).max(std::f64::consts::E).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_rows_are_ordered_and_successful() {
        let ctx = FieldCtx::prime(5).unwrap();
        let ds: Vec<usize> = (4..=12).step_by(4).collect();
        let rows = bench(&ctx, &ds, 2, 7, Flavor::Sloped, Mode::Auto).unwrap();
        assert_eq!(rows.len(), 6);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.d, ds[i / 2]);
            assert_eq!(r.outcome, Outcome::Iso);
            assert!(r.blocks >= 1 && r.max_block <= r.d);
            assert_eq!(r.csv_fields().len(), CSV_HEADER.len());
        }
        assert!(bench(&ctx, &[], 3, 7, Flavor::Sloped, Mode::Auto).unwrap().is_empty());
        let again = bench(&ctx, &ds, 2, 7, Flavor::Sloped, Mode::Auto).unwrap();
        assert!(rows.iter().zip(&again).all(|(x, y)| (x.seed, x.blocks, x.outcome) == (y.seed, y.blocks, y.outcome)));
    }

    #[test]
    fn block_statistics_of_flat_and_mixed() {
        let ctx = FieldCtx::prime(3).unwrap();
        let f = generate(&ctx, 7, Flavor::Flat, 1).unwrap();
        assert_eq!(block_statistics(&f.a), (1, 7));
        assert_eq!(block_statistics(&SystemOfForms::zero(&ctx, 4, 2)), (0, 0));
    }

    #[test]
    fn baseline_grows_with_d() {
        let ctx = FieldCtx::prime(5).unwrap();
        assert!(linear_solve_baseline_ms(&ctx, 40, 1) > linear_solve_baseline_ms(&ctx, 10, 1));
        assert!(log_ratio(1.0, 1000.0) < 1.0);
    }
}
