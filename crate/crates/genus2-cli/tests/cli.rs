use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genus2::io::{FormsFile, WitnessFile};

fn genus2(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genus2")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixtures(dir: &Path) -> PathBuf {
    let out = genus2(&["fixtures", "--out", "fx"], dir);
    assert_eq!(code(&out), 0);
    dir.join("fx")
}

#[test]
fn self_test_is_isomorphic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let f = fx.join("quartic-1.forms");
    let f = f.to_str().unwrap();
    let out = genus2(&["test", f, f], dir.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("result: isomorphic"));
    assert!(stdout(&out).contains("genus: 2"));
}

#[test]
fn fixture_exit_codes_agree_across_modes() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let cases = [
        ("quartic-2", "quartic-3", 1),
        ("quartic-1", "quartic-3", 1),
        ("equal-factor-1", "equal-factor-2", 1),
        ("heisenberg-1", "heisenberg-2", 0),
    ];
    for (a, b, want) in cases {
        let (a, b) = (format!("fx/{a}.forms"), format!("fx/{b}.forms"));
        for mode in ["auto", "pfaffian", "adjten"] {
            let out = genus2(&["test", &a, &b, "--mode", mode], dir.path());
            assert_eq!(code(&out), want, "{a} {b} {mode}");
        }
    }
}

#[test]
fn fixture_files_have_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let f = FormsFile::parse(&std::fs::read_to_string(fx.join("quartic-1.forms")).unwrap()).unwrap();
    assert_eq!((f.sys.ctx.p(), f.sys.d, f.sys.e), (3, 8, 2));
    let g = FormsFile::parse(&std::fs::read_to_string(fx.join("equal-factor-1.forms")).unwrap()).unwrap();
    assert_eq!((g.sys.d, g.sys.e), (8, 2));
}

#[test]
fn witnesses_replay_through_check_witness() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (flavor, d) in [("sloped", "6"), ("flat", "5"), ("mixed", "7")] {
        let out = genus2(&["gen", "--p", "5", "--d", d, "--flavor", flavor, "--seed", "11", "a.forms", "b.forms", "--planted", "pl.txt"], p);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(code(&genus2(&["test", "a.forms", "b.forms", "--witness", "w.txt"], p)), 0);
        assert_eq!(code(&genus2(&["test", "a.forms", "b.forms", "--check-witness", "w.txt"], p)), 0);
        assert_eq!(code(&genus2(&["test", "a.forms", "b.forms", "--check-witness", "pl.txt"], p)), 0);
        // the witness does not map B to A unless it happens to be an involution
        let w = WitnessFile::parse(&std::fs::read_to_string(p.join("w.txt")).unwrap()).unwrap();
        let a = FormsFile::parse(&std::fs::read_to_string(p.join("a.forms")).unwrap()).unwrap().sys;
        let b = FormsFile::parse(&std::fs::read_to_string(p.join("b.forms")).unwrap()).unwrap().sys;
        let reverse = code(&genus2(&["test", "b.forms", "a.forms", "--check-witness", "w.txt"], p));
        assert_eq!(reverse == 0, w.verify(&b, &a));
        assert!(w.verify(&a, &b));
    }
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    genus2(&["gen", "--d", "8", "--seed", "5", "a1.forms", "b1.forms"], p);
    genus2(&["gen", "--d", "8", "--seed", "5", "a2.forms", "b2.forms"], p);
    let read = |n: &str| std::fs::read_to_string(p.join(n)).unwrap();
    assert_eq!(read("a1.forms"), read("a2.forms"));
    assert_eq!(read("b1.forms"), read("b2.forms"));
    assert!(read("a1.forms").contains("seed 5"));
    let r1 = stdout(&genus2(&["test", "a1.forms", "b1.forms"], p));
    let r2 = stdout(&genus2(&["test", "a2.forms", "b2.forms"], p));
    assert_eq!(r1, r2);
}

#[test]
fn errors_and_unsupported_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    genus2(&["gen", "--d", "6", "a.forms", "b.forms"], p);
    let text = std::fs::read_to_string(p.join("a.forms")).unwrap();
    std::fs::write(p.join("trunc.forms"), &text[..text.len() / 2]).unwrap();
    let out = genus2(&["test", "trunc.forms", "b.forms"], p);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
    assert_eq!(code(&genus2(&["test", "missing.forms", "b.forms"], p)), 3);
    assert_eq!(code(&genus2(&["bogus"], p)), 3);
    assert_eq!(code(&genus2(&["gen", "--d", "5", "--flavor", "sloped", "x.forms", "y.forms"], p)), 3);
    // over GF(3) a different-field pair is an error
    genus2(&["gen", "--p", "3", "--d", "6", "c.forms", "d.forms"], p);
    assert_eq!(code(&genus2(&["test", "a.forms", "c.forms"], p)), 3);
    // H(F3[x]/(x^3)) has a local centroid with a radical and genus 3
    let mut local = String::from("genus2-forms v1\np 3\nk 1\nmodulus -\nd 6\ne 3\nseed -\n");
    for t in 0..3 {
        local.push_str(&format!("form {t}\n"));
        for r in 0..6 {
            let row: Vec<&str> = (0..6)
                .map(|c| match (r < 3, c < 3) {
                    (true, false) if r + c - 3 == t => "1",
                    (false, true) if r - 3 + c == t => "2",
                    _ => "0",
                })
                .collect();
            local.push_str(&row.join(" "));
            local.push('\n');
        }
    }
    std::fs::write(p.join("local.forms"), local).unwrap();
    let out = genus2(&["test", "local.forms", "local.forms"], p);
    assert_eq!(code(&out), 2, "{}", stdout(&out));
}

#[test]
fn bench_writes_ordered_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = genus2(&["bench", "--d", "4..16:4", "--trials", "2", "--seed", "3", "--out", "b.csv"], p);
    assert_eq!(code(&out), 0);
    let mut rdr = csv::Reader::from_path(p.join("b.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["p", "k", "d", "flavor", "seed", "mode", "outcome", "ms", "blocks", "max_block"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[2].parse::<usize>().unwrap(), 4 * (i / 2 + 1));
        assert_eq!(&r[6], "iso");
    }
    let empty = stdout(&genus2(&["bench", "--d", "8..4"], p));
    assert_eq!(empty.trim(), "p,k,d,flavor,seed,mode,outcome,ms,blocks,max_block");
}

#[test]
fn pig_writes_verified_generators() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    for name in ["heisenberg-1", "equal-factor-2"] {
        let input = fx.join(format!("{name}.forms"));
        let out = genus2(&["pig", input.to_str().unwrap(), "--out", "g.txt"], dir.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let s = FormsFile::parse(&std::fs::read_to_string(&input).unwrap()).unwrap().sys;
        let w = WitnessFile::parse(&std::fs::read_to_string(dir.path().join("g.txt")).unwrap()).unwrap();
        assert!(!w.witnesses.is_empty() && w.verify(&s, &s));
    }
}
