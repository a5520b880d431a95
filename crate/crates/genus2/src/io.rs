//! Text formats for systems of forms and witness lists.
//!
//! A forms file is a version line, a header of `key value` lines (p, k,
//! modulus, d, e, seed) and e blocks `form t` of d rows each. Field elements
//! are written as integers whose base-p digits are the polynomial
//! coefficients, low degree first. A witness file shares the field header and
//! holds a list of (τ, φ, φ̂) triples. Blank lines and lines starting with `#`
//! are ignored on input; output is canonical, so parse ∘ serialize is the
//! identity on serialized files.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::forms::{PseudoIsometry, SystemOfForms};
use crate::gf::FieldCtx;
use crate::linalg::Mat;

pub const FORMS_VERSION: &str = "genus2-forms v1";
pub const WITNESS_VERSION: &str = "genus2-witness v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormsFile {
    pub sys: SystemOfForms,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessFile {
    pub ctx: FieldCtx,
    pub d: usize,
    pub e: usize,
    pub witnesses: Vec<PseudoIsometry>,
}

/// Non-comment lines with their 1-based line numbers.
struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Lines { lines, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let l = self.lines.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: self.last_line(),
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(l)
    }

    /// The value of a `key value` line.
    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next(key)?;
        let mut it = l.splitn(2, char::is_whitespace);
        if it.next() != Some(key) {
            return Err(Error::Parse { line: n, msg: format!("expected `{key}`") });
        }
        Ok((n, it.next().unwrap_or("").trim()))
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, v) = self.keyed(key)?;
        v.parse().map_err(|_| Error::Parse { line: n, msg: format!("bad value for `{key}`: {v:?}") })
    }

    fn finish(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            Some(&(n, _)) => Err(Error::Parse { line: n, msg: "trailing content".into() }),
            None => Ok(()),
        }
    }
}

fn parse_ints(n: usize, s: &str) -> Result<Vec<u64>> {
    s.split_whitespace()
        .map(|w| w.parse().map_err(|_| Error::Parse { line: n, msg: format!("bad integer {w:?}") }))
        .collect()
}

fn parse_version(lines: &mut Lines, version: &str) -> Result<()> {
    let (n, l) = lines.next("version line")?;
    if l != version {
        return Err(Error::Parse { line: n, msg: format!("expected `{version}`, found {l:?}") });
    }
    Ok(())
}

/// `p`, `k` and `modulus` lines.
fn parse_field(lines: &mut Lines) -> Result<FieldCtx> {
    let p: u64 = lines.number("p")?;
    let (kn, kv) = lines.keyed("k")?;
    let k: u32 = kv.parse().map_err(|_| Error::Parse { line: kn, msg: format!("bad value for `k`: {kv:?}") })?;
    let (mn, mv) = lines.keyed("modulus")?;
    let at = |e: Error| Error::Parse { line: mn, msg: e.to_string() };
    if k == 1 {
        if mv != "-" {
            return Err(Error::Parse { line: mn, msg: "prime fields take `modulus -`".into() });
        }
        return FieldCtx::prime(p).map_err(at);
    }
    let m = parse_ints(mn, mv)?;
    if m.len() != k as usize + 1 {
        return Err(Error::Parse { line: mn, msg: format!("modulus needs {} coefficients", k + 1) });
    }
    FieldCtx::with_modulus(p, &m).map_err(at)
}

fn write_field(out: &mut String, ctx: &FieldCtx) {
    let modulus = match ctx.modulus() {
        Some(m) => m.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "),
        None => "-".into(),
    };
    let _ = write!(out, "p {}\nk {}\nmodulus {modulus}\n", ctx.p(), ctx.k());
}

fn parse_matrix(lines: &mut Lines, ctx: &FieldCtx, rows: usize, cols: usize) -> Result<Mat> {
    let mut m = Mat::zeros(ctx, rows, cols);
    for i in 0..rows {
        let (n, l) = lines.next("matrix row")?;
        let row = parse_ints(n, l)?;
        if row.len() != cols {
            return Err(Error::Parse { line: n, msg: format!("expected {cols} entries, found {}", row.len()) });
        }
        for (j, &v) in row.iter().enumerate() {
            if v >= ctx.q() {
                return Err(Error::Parse { line: n, msg: format!("entry {v} is not below q = {}", ctx.q()) });
            }
            m.set(i, j, v);
        }
    }
    Ok(m)
}

fn write_matrix(out: &mut String, m: &Mat) {
    for i in 0..m.rows {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn expect_line(lines: &mut Lines, want: &str) -> Result<()> {
    let (n, l) = lines.next(want)?;
    if l != want {
        return Err(Error::Parse { line: n, msg: format!("expected `{want}`, found {l:?}") });
    }
    Ok(())
}

impl FormsFile {
    pub fn new(sys: SystemOfForms, seed: Option<u64>) -> FormsFile {
        FormsFile { sys, seed }
    }

    pub fn parse(text: &str) -> Result<FormsFile> {
        let mut lines = Lines::new(text);
        parse_version(&mut lines, FORMS_VERSION)?;
        let ctx = parse_field(&mut lines)?;
        let d: usize = lines.number("d")?;
        let e: usize = lines.number("e")?;
        let (sn, sv) = lines.keyed("seed")?;
        let seed = match sv {
            "-" => None,
            v => Some(v.parse().map_err(|_| Error::Parse { line: sn, msg: format!("bad seed {v:?}") })?),
        };
        let mut forms = Vec::with_capacity(e);
        for t in 0..e {
            let start = lines.lines.get(lines.pos).map_or(lines.last_line(), |l| l.0);
            expect_line(&mut lines, &format!("form {t}"))?;
            let f = parse_matrix(&mut lines, &ctx, d, d)?;
            if !crate::forms::is_alternating(&f) {
                return Err(Error::Parse { line: start, msg: format!("form {t} is not alternating") });
            }
            forms.push(f);
        }
        lines.finish()?;
        let sys = SystemOfForms::new(&ctx, d, forms).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        Ok(FormsFile { sys, seed })
    }

    pub fn serialize(&self) -> String {
        let s = &self.sys;
        let mut out = format!("{FORMS_VERSION}\n");
        write_field(&mut out, &s.ctx);
        let seed = self.seed.map_or("-".to_string(), |v| v.to_string());
        let _ = write!(out, "d {}\ne {}\nseed {seed}\n", s.d, s.e);
        for (t, f) in s.forms.iter().enumerate() {
            let _ = writeln!(out, "form {t}");
            write_matrix(&mut out, f);
        }
        out
    }
}

impl WitnessFile {
    pub fn new(ctx: &FieldCtx, d: usize, e: usize, witnesses: Vec<PseudoIsometry>) -> WitnessFile {
        WitnessFile { ctx: ctx.clone(), d, e, witnesses }
    }

    pub fn parse(text: &str) -> Result<WitnessFile> {
        let mut lines = Lines::new(text);
        parse_version(&mut lines, WITNESS_VERSION)?;
        let ctx = parse_field(&mut lines)?;
        let d: usize = lines.number("d")?;
        let e: usize = lines.number("e")?;
        let count: usize = lines.number("count")?;
        let mut witnesses = Vec::with_capacity(count);
        for w in 0..count {
            expect_line(&mut lines, &format!("witness {w}"))?;
            let (tn, tau): (usize, u32) = {
                let (n, v) = lines.keyed("tau")?;
                (n, v.parse().map_err(|_| Error::Parse { line: n, msg: format!("bad tau {v:?}") })?)
            };
            if tau >= ctx.k() {
                return Err(Error::Parse { line: tn, msg: format!("tau must be below k = {}", ctx.k()) });
            }
            expect_line(&mut lines, "phi")?;
            let phi = parse_matrix(&mut lines, &ctx, d, d)?;
            expect_line(&mut lines, "phi_hat")?;
            let phi_hat = parse_matrix(&mut lines, &ctx, e, e)?;
            witnesses.push(PseudoIsometry { phi, phi_hat, tau });
        }
        lines.finish()?;
        Ok(WitnessFile { ctx, d, e, witnesses })
    }

    pub fn serialize(&self) -> String {
        let mut out = format!("{WITNESS_VERSION}\n");
        write_field(&mut out, &self.ctx);
        let _ = write!(out, "d {}\ne {}\ncount {}\n", self.d, self.e, self.witnesses.len());
        for (i, w) in self.witnesses.iter().enumerate() {
            let _ = write!(out, "witness {i}\ntau {}\nphi\n", w.tau);
            write_matrix(&mut out, &w.phi);
            out.push_str("phi_hat\n");
            write_matrix(&mut out, &w.phi_hat);
        }
        out
    }

    /// Every witness is a pseudo-isometry A → B.
    pub fn verify(&self, a: &SystemOfForms, b: &SystemOfForms) -> bool {
        self.ctx == a.ctx && self.d == a.d && self.e == a.e && self.witnesses.iter().all(|w| w.verify(a, b))
    }
}
