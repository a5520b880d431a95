//! Python bindings. Systems of forms and witnesses cross the boundary in the
//! text formats of `genus2::io`, so files written by the CLI load directly.

use pyo3::exceptions::{PyNotImplementedError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use genus2::bench::{bench as run_bench, Outcome};
use genus2::forms::SystemOfForms;
use genus2::gen::{generate as gen_instance, Flavor};
use genus2::gf::field_make;
use genus2::groups::{self, Mode};
use genus2::io::{FormsFile, WitnessFile};
use genus2::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Unsupported(m) => PyNotImplementedError::new_err(m),
        Error::Internal(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn forms(text: &str) -> PyResult<SystemOfForms> {
    FormsFile::parse(text).map(|f| f.sys).map_err(py_err)
}

fn mode(s: &str) -> PyResult<Mode> {
    s.parse().map_err(py_err)
}

/// Generate a pair (A, B) with B a planted twist of A, as forms-file texts.
#[pyfunction]
#[pyo3(signature = (p, d, flavor = "sloped", seed = 0, k = 1))]
fn generate(p: u64, d: usize, flavor: &str, seed: u64, k: u32) -> PyResult<(String, String)> {
    let ctx = field_make(p, k, 0).map_err(py_err)?;
    let flavor: Flavor = flavor.parse().map_err(py_err)?;
    let inst = gen_instance(&ctx, d, flavor, seed).map_err(py_err)?;
    Ok((FormsFile::new(inst.a, Some(seed)).serialize(), FormsFile::new(inst.b, Some(seed)).serialize()))
}

/// Decide pseudo-isometry of two forms files. Returns ("iso", witness text),
/// ("non-iso", None) or ("unsupported", None).
#[pyfunction]
#[pyo3(name = "test", signature = (a, b, mode = "auto"))]
fn test_pair(a: &str, b: &str, mode: &str) -> PyResult<(String, Option<String>)> {
    let (sa, sb, m) = (forms(a)?, forms(b)?, self::mode(mode)?);
    match groups::pseudo_isometry_test(&sa, &sb, m) {
        Ok(Some(w)) => Ok((Outcome::Iso.to_string(), Some(WitnessFile::new(&sa.ctx, sa.d, sa.e, vec![w]).serialize()))),
        Ok(None) => Ok((Outcome::NonIso.to_string(), None)),
        Err(Error::Unsupported(_)) => Ok((Outcome::Unsupported.to_string(), None)),
        Err(e) => Err(py_err(e)),
    }
}

/// True iff every witness in the file maps A to B.
#[pyfunction]
fn check_witness(a: &str, b: &str, witness: &str) -> PyResult<bool> {
    let w = WitnessFile::parse(witness).map_err(py_err)?;
    Ok(!w.witnesses.is_empty() && w.verify(&forms(a)?, &forms(b)?))
}

/// Decide group isomorphism of the exponent-p groups presented by two forms
/// files over a prime field; returns (x_images, z_images) as integer rows.
#[pyfunction]
#[pyo3(signature = (a, b, mode = "auto"))]
fn isomorphism(a: &str, b: &str, mode: &str) -> PyResult<Option<(Vec<Vec<u64>>, Vec<Vec<u64>>)>> {
    let g = groups::group_from_forms(&forms(a)?).map_err(py_err)?;
    let h = groups::group_from_forms(&forms(b)?).map_err(py_err)?;
    let f = groups::isomorphism_test(&g, &h, self::mode(mode)?).map_err(py_err)?;
    Ok(f.map(|f| (f.x_images.row_vecs(), f.z_images.row_vecs())))
}

/// Generators of the pseudo-isometry group, as a witness-file text.
#[pyfunction]
#[pyo3(signature = (a, seed = 0))]
fn pseudo_isometry_group(a: &str, seed: u64) -> PyResult<String> {
    let s = forms(a)?;
    let grp = groups::pseudo_isometry_group(&s, seed).map_err(py_err)?;
    Ok(WitnessFile::new(&s.ctx, s.d, s.e, grp.generators()).serialize())
}

/// Fixture systems as (name, forms-file text) pairs.
#[pyfunction]
fn fixtures() -> PyResult<Vec<(String, String)>> {
    let gf3 = genus2::gf::FieldCtx::prime(3).map_err(py_err)?;
    let quartic = groups::quartic_quotient_groups().map_err(py_err)?;
    let (h1, h2) = groups::heisenberg_pairs();
    let mut out: Vec<(String, SystemOfForms)> =
        quartic.iter().enumerate().map(|(i, g)| (format!("quartic-{}", i + 1), groups::forms_from_group(g))).collect();
    out.push(("equal-factor-1".into(), groups::equal_factor_pair(&gf3, true)));
    out.push(("equal-factor-2".into(), groups::equal_factor_pair(&gf3, false)));
    out.push(("heisenberg-1".into(), h1));
    out.push(("heisenberg-2".into(), h2));
    Ok(out.into_iter().map(|(n, s)| (n, FormsFile::new(s, None).serialize())).collect())
}

/// Benchmark rows (p, k, d, flavor, seed, mode, outcome, ms, blocks, max_block).
#[pyfunction]
#[pyo3(name = "bench", signature = (p, ds, trials = 1, seed = 0, flavor = "sloped", mode = "auto"))]
#[allow(clippy::type_complexity)]
fn benchmark(
    p: u64,
    ds: Vec<usize>,
    trials: usize,
    seed: u64,
    flavor: &str,
    mode: &str,
) -> PyResult<Vec<(u64, u32, usize, String, u64, String, String, f64, usize, usize)>> {
    let ctx = field_make(p, 1, 0).map_err(py_err)?;
    let flavor: Flavor = flavor.parse().map_err(py_err)?;
    let rows = run_bench(&ctx, &ds, trials, seed, flavor, self::mode(mode)?).map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.p, r.k, r.d, r.flavor.to_string(), r.seed, r.mode.to_string(), r.outcome.to_string(), r.ms, r.blocks, r.max_block))
        .collect())
}

#[pymodule]
fn genus2_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(test_pair, m)?)?;
    m.add_function(wrap_pyfunction!(check_witness, m)?)?;
    m.add_function(wrap_pyfunction!(isomorphism, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_isometry_group, m)?)?;
    m.add_function(wrap_pyfunction!(fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    Ok(())
}
