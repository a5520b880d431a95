//! `genus2`: generate planted instances, decide pseudo-isometry of systems of
//! forms (isoclinism of the corresponding groups), benchmark, write the
//! fixture systems and compute pseudo-isometry group generators.
//!
//! Exit codes: 0 isomorphic (or success), 1 not isomorphic (or an invalid
//! witness), 2 unsupported configuration, 3 any other error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genus2::bench::{bench, linear_solve_baseline_ms, log_ratio, BenchRecord, Outcome, CSV_HEADER};
use genus2::forms::{centroid, genus, nondegenerate_core, SystemOfForms};
use genus2::gen::{generate, Flavor};
use genus2::gf::{field_make, FieldCtx};
use genus2::groups::{
    equal_factor_pair, forms_from_group, heisenberg_pairs, pseudo_isometry_group, pseudo_isometry_test, quartic_quotient_groups, Mode,
};
use genus2::io::{FormsFile, WitnessFile};
use genus2::Error;

const EXIT_ISO: u8 = 0;
const EXIT_NON_ISO: u8 = 1;
const EXIT_UNSUPPORTED: u8 = 2;
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "genus2", version, about = "Isomorphism testing for p-groups of genus 2")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random system A and a planted twist B of it
    Gen {
        #[arg(long, default_value_t = 5)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value = "sloped")]
        flavor: Flavor,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// also write the planted witness A → B
        #[arg(long)]
        planted: Option<PathBuf>,
        out_a: PathBuf,
        out_b: PathBuf,
    },
    /// Decide whether two systems are pseudo-isometric
    Test {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "auto")]
        mode: Mode,
        /// write the verified witness here
        #[arg(long)]
        witness: Option<PathBuf>,
        /// verify a witness file against A and B instead of searching
        #[arg(long, conflicts_with = "witness")]
        check_witness: Option<PathBuf>,
    },
    /// Time planted instances and write one CSV row per trial
    Bench {
        #[arg(long, default_value_t = 5)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        /// dimensions: `LO..HI` (inclusive), `LO..HI:STEP` or `D1,D2,...`
        #[arg(long)]
        d: String,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sloped")]
        flavor: Flavor,
        #[arg(long, default_value = "auto")]
        mode: Mode,
        /// CSV destination (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// print, per dimension, the log-time ratio against a dense d²-variable solve
        #[arg(long)]
        baseline: bool,
    },
    /// Write the fixture systems into a directory
    Fixtures {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generators of the pseudo-isometry group of a pair of forms
    Pig {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = if matches!(e, Error::Unsupported(_)) { EXIT_UNSUPPORTED } else { EXIT_ERROR };
        Failure { code, msg: e.to_string() }
    }
}

fn fail(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_ERROR, msg: msg.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn read_forms(path: &Path) -> Result<SystemOfForms, Failure> {
    FormsFile::parse(&read(path)?).map(|f| f.sys).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_ISO };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Command::Gen { p, k, d, flavor, seed, planted, out_a, out_b } => cmd_gen(p, k, d, flavor, seed, planted, &out_a, &out_b),
        Command::Test { a, b, mode, witness, check_witness } => cmd_test(&a, &b, mode, witness, check_witness),
        Command::Bench { p, k, d, trials, seed, flavor, mode, out, baseline } => cmd_bench(p, k, &d, trials, seed, flavor, mode, out, baseline),
        Command::Fixtures { out } => cmd_fixtures(&out),
        Command::Pig { input, out, seed } => cmd_pig(&input, &out, seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(p: u64, k: u32, d: usize, flavor: Flavor, seed: u64, planted: Option<PathBuf>, out_a: &Path, out_b: &Path) -> Result<u8, Failure> {
    let ctx = field_make(p, k, 0)?;
    let inst = generate(&ctx, d, flavor, seed)?;
    write(out_a, &FormsFile::new(inst.a.clone(), Some(seed)).serialize())?;
    write(out_b, &FormsFile::new(inst.b.clone(), Some(seed)).serialize())?;
    if let Some(path) = planted {
        write(&path, &WitnessFile::new(&ctx, d, 2, vec![inst.planted]).serialize())?;
    }
    println!("wrote {flavor} pair over GF({p}^{k}), d = {d}, seed = {seed}");
    Ok(EXIT_ISO)
}

fn describe(s: &SystemOfForms, mode: Mode) -> Vec<String> {
    let ctx = &s.ctx;
    let mut lines = vec![format!("field: GF({}^{}), q = {}", ctx.p(), ctx.k(), ctx.q()), format!("dimensions: d = {}, e = {}", s.d, s.e)];
    let core = nondegenerate_core(s);
    lines.push(format!("nondegenerate core: d = {}, e = {}", core.sys.d, core.sys.e));
    match genus(s) {
        Ok(g) => lines.push(format!("genus: {g}")),
        Err(e) => lines.push(format!("genus: unavailable ({e})")),
    }
    if core.sys.d > 0 && core.sys.e > 0 {
        let c = centroid(&core.sys);
        lines.push(format!("centroid: dimension {}, local {}, field {}", c.dim(), c.is_local, c.is_field));
    }
    let (blocks, max_block) = genus2::bench::block_statistics(s);
    lines.push(format!("blocks: {blocks}, largest {max_block}"));
    let resolved = if core.sys.e == 2 { mode.resolve(&core.sys) } else { mode };
    lines.push(format!("mode: {mode} (resolved {resolved})"));
    lines
}

fn cmd_test(a: &Path, b: &Path, mode: Mode, witness: Option<PathBuf>, check: Option<PathBuf>) -> Result<u8, Failure> {
    let (sa, sb) = (read_forms(a)?, read_forms(b)?);
    if sa.ctx != sb.ctx {
        return Err(fail("the two files are over different fields"));
    }
    if let Some(path) = check {
        let w = WitnessFile::parse(&read(&path)?).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        let ok = !w.witnesses.is_empty() && w.verify(&sa, &sb);
        println!("witness: {}", if ok { "valid" } else { "invalid" });
        return Ok(if ok { EXIT_ISO } else { EXIT_NON_ISO });
    }
    for line in describe(&sa, mode) {
        println!("{line}");
    }
    match pseudo_isometry_test(&sa, &sb, mode) {
        Ok(Some(w)) => {
            if !w.verify(&sa, &sb) {
                return Err(fail("witness failed verification"));
            }
            println!("result: isomorphic");
            if let Some(path) = witness {
                write(&path, &WitnessFile::new(&sa.ctx, sa.d, sa.e, vec![w]).serialize())?;
                println!("witness: verified, written to {}", path.display());
            }
            Ok(EXIT_ISO)
        }
        Ok(None) => {
            println!("result: not isomorphic");
            Ok(EXIT_NON_ISO)
        }
        Err(Error::Unsupported(msg)) => {
            println!("result: unsupported ({msg})");
            Ok(EXIT_UNSUPPORTED)
        }
        Err(e) => Err(e.into()),
    }
}

/// `LO..HI` (inclusive), `LO..HI:STEP` or a comma-separated list.
fn parse_dims(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || fail(format!("bad dimension range {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1),
        };
        if step == 0 {
            return Err(bad());
        }
        return Ok((num(lo)?..=hi).step_by(step).collect());
    }
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(num).collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(p: u64, k: u32, d: &str, trials: usize, seed: u64, flavor: Flavor, mode: Mode, out: Option<PathBuf>, baseline: bool) -> Result<u8, Failure> {
    let ctx = field_make(p, k, 0)?;
    let ds = parse_dims(d)?;
    let rows = bench(&ctx, &ds, trials, seed, flavor, mode)?;
    let sink: Box<dyn Write> = match &out {
        Some(path) => Box::new(fs::File::create(path).map_err(|e| fail(format!("{}: {e}", path.display())))?),
        None => Box::new(std::io::stdout()),
    };
    write_csv(sink, &rows).map_err(|e| fail(format!("csv: {e}")))?;
    if baseline {
        print_baseline(&ctx, &ds, &rows, seed);
    }
    let failures = rows.iter().filter(|r| r.outcome != Outcome::Iso).count();
    if failures > 0 {
        eprintln!("{failures} of {} planted trials were not recovered", rows.len());
    }
    Ok(EXIT_ISO)
}

fn write_csv(sink: Box<dyn Write>, rows: &[BenchRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

fn print_baseline(ctx: &FieldCtx, ds: &[usize], rows: &[BenchRecord], seed: u64) {
    eprintln!("d,mean_ms,baseline_ms,log_ratio");
    for &d in ds {
        let times: Vec<f64> = rows.iter().filter(|r| r.d == d).map(|r| r.ms).collect();
        if times.is_empty() {
            continue;
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let base = linear_solve_baseline_ms(ctx, d, seed);
        eprintln!("{d},{mean:.3},{base:.3},{:.4}", log_ratio(mean, base));
    }
}

fn fixture_systems() -> Result<Vec<(&'static str, &'static str, SystemOfForms)>, Failure> {
    let gf3 = FieldCtx::prime(3)?;
    let quartic = quartic_quotient_groups()?;
    let (h1, h2) = heisenberg_pairs();
    Ok(vec![
        ("quartic-1", "H(F3[x]/(x^4+x^3+x^2+1)) modulo <1, x>", forms_from_group(&quartic[0])),
        ("quartic-2", "H(F3[x]/(x^4+2x^2+2)) modulo <1, x>", forms_from_group(&quartic[1])),
        ("quartic-3", "H(F3[x]/(x^4+x^3+2x+1)) modulo <1, x>", forms_from_group(&quartic[2])),
        ("equal-factor-1", "{H(I4), H(diag(0, 1, C))}, C companion of x^2-x-1", equal_factor_pair(&gf3, true)),
        ("equal-factor-2", "{H(I4), H(diag(0, 0, C))}, C companion of x^2-x-1", equal_factor_pair(&gf3, false)),
        ("heisenberg-1", "slope pair of (x^2+1)^2 over F3", h1),
        ("heisenberg-2", "slope pair of (x^2+x+2)^2 over F3", h2),
    ])
}

fn cmd_fixtures(out: &Path) -> Result<u8, Failure> {
    fs::create_dir_all(out).map_err(|e| fail(format!("{}: {e}", out.display())))?;
    for (name, what, sys) in fixture_systems()? {
        let path = out.join(format!("{name}.forms"));
        let text = format!("# {what}\n{}", FormsFile::new(sys, None).serialize());
        write(&path, &text)?;
        println!("{}: {what}", path.display());
    }
    Ok(EXIT_ISO)
}

fn cmd_pig(input: &Path, out: &Path, seed: u64) -> Result<u8, Failure> {
    let s = read_forms(input)?;
    let grp = pseudo_isometry_group(&s, seed)?;
    let gens = grp.generators();
    if !gens.iter().all(|w| w.verify(&s, &s)) {
        return Err(fail("a generator failed verification"));
    }
    write(out, &WitnessFile::new(&s.ctx, s.d, s.e, gens).serialize())?;
    println!("twist generators: {}", grp.twists.len());
    println!("isometry generators: {}", grp.isometries.len());
    println!("image: {}", if grp.full_image { "all of GammaL(2, q)" } else { "proper subgroup of GammaL(2, q)" });
    println!("written to {}", out.display());
    Ok(EXIT_ISO)
}
