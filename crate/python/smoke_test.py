"""Smoke test for the Python bindings.

Build first with `cargo build --release -p cilab-py`, then run
`python3 python/smoke_test.py`. The shared library is copied next to a
temporary module path and imported as `cilab_py`.
"""

import importlib
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libcilab_py.so"
        if lib.exists():
            break
    else:
        sys.exit("libcilab_py.so not found; run `cargo build --release -p cilab-py`")
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "cilab_py.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("cilab_py"), tmp


def main():
    lab, tmp = load()

    lab.regime(2.0, 1.5)
    try:
        lab.regime(2.0, 2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("1/p + 1/q = 1 was accepted")

    s = lab.schedule(3, 2.0, 1.5, 8.0, mode="desk", mu=8, kappa=4, sigma=2)
    assert (s["mu"], s["kappa"], s["sigma"]) == (8, 4, 2), s
    assert s["required_grid"] == (64, 32), s

    rows = {(part, r, m): v for part, r, m, v in lab.block_norms(8.0, n=256)}
    assert rows[("density", 2.0, 0)] > 0.0

    osc = lab.oscillator(4, n_time=1024)
    assert abs(osc["pairing_mean"] - 1.0) < 1e-10
    assert max(abs(v) for v in osc["h"]) <= 1.0 + 1e-8

    residual, defect = lab.preset_defect()
    assert residual < 1e-10 and defect > 0.0

    out = tmp / "run"
    summary = lab.run_config(
        f"n_space = 32\nn_time = 32\nmu = 8\nkappa = 4\nsigma = 1\nout_dir = {out}\n"
    )
    assert len(summary["defects"]) == 2 and all(math.isfinite(v) for v in summary["defects"])
    assert max(summary["residuals"]) < 1e-5
    assert summary["endpoints_preserved"]
    assert (out / "ledger.csv").exists()

    print("python smoke test passed")


if __name__ == "__main__":
    main()
