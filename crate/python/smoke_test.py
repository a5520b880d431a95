"""Smoke test for the genus2_py extension module.

Build first with `cargo build -p genus2-py` (or `--release`); the script
loads target/{release,debug}/libgenus2_py.so, or the path in GENUS2_PY_LIB.
"""

import importlib.machinery
import importlib.util
import os
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    candidates = [os.environ.get("GENUS2_PY_LIB")]
    candidates += [str(ROOT / "target" / prof / "libgenus2_py.so") for prof in ("release", "debug")]
    path = next((c for c in candidates if c and Path(c).exists()), None)
    if path is None:
        sys.exit("libgenus2_py.so not found; run `cargo build -p genus2-py` first")
    loader = importlib.machinery.ExtensionFileLoader("genus2_py", path)
    spec = importlib.util.spec_from_file_location("genus2_py", path, loader=loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    g2 = load()

    a, b = g2.generate(5, 6, "sloped", 7)
    assert a.startswith("genus2-forms v1") and "seed 7" in a
    outcome, witness = g2.test(a, b)
    assert outcome == "iso", outcome
    assert g2.check_witness(a, b, witness)
    images = g2.isomorphism(a, b)
    assert images is not None and len(images[0]) == 6

    fx = dict(g2.fixtures())
    assert g2.test(fx["quartic-2"], fx["quartic-3"], "pfaffian")[0] == "non-iso"
    assert g2.test(fx["quartic-2"], fx["quartic-3"], "adjten")[0] == "non-iso"
    assert g2.test(fx["equal-factor-1"], fx["equal-factor-2"])[0] == "non-iso"
    assert g2.test(fx["heisenberg-1"], fx["heisenberg-2"])[0] == "iso"

    gens = g2.pseudo_isometry_group(fx["heisenberg-1"])
    assert g2.check_witness(fx["heisenberg-1"], fx["heisenberg-1"], gens)

    rows = g2.bench(5, [4, 8], 2, 1)
    assert len(rows) == 4 and all(r[6] == "iso" for r in rows)

    try:
        g2.test("genus2-forms v1\np 3\n", a)
    except ValueError as e:
        assert "parse error" in str(e)
    else:
        raise AssertionError("truncated input was accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
