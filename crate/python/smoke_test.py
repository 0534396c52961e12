"""Smoke test for the Python bindings.

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import json
import math
import pathlib
import tempfile

import bergman_ke as bk

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main():
    curve = bk.Curve([-1, 0, 0, 0, 0, 0, 1])
    assert curve.genus == 2
    assert len(curve.branch_points) == 6
    assert bk.riemann_roch_count(2, 4) == (2 * 4 - 1) * (2 - 1)

    engine = bk.Engine(curve, m0=3, final_level=8)
    engine.run()
    trace = engine.trace()
    assert [r["m"] for r in trace] == list(range(3, 9))
    for row in trace[1:]:
        assert abs(row["trace_integral"] / (row["N_m"] + 1) - 1) < 1e-6
        assert row["log_integral"] <= math.log(row["holder_bound"]) + 1e-6
    print("level", engine.level, "normalized mass", trace[-1]["normalized_integral"])

    # A checkpoint restores the same state.
    before = engine.log_density(0.3 + 0.2j)
    engine.restore(engine.checkpoint())
    assert engine.log_density(0.3 + 0.2j) == before

    totals = bk.verify(engine.candidate(), residual_grid=48)
    assert totals["gauss_bonnet"]["candidate_target"] == 2.0
    print("relative residual", totals["relative_sup"])

    fixture = (ROOT / "crates/core/tests/fixtures/poincare.json").read_text()
    assert bk.verify(fixture)["relative_sup"] < 1e-5

    with tempfile.TemporaryDirectory() as out:
        code = bk.main(["verify", str(ROOT / "crates/core/tests/fixtures/constant.json"), "--out", out, "--threshold", "1e-3"])
        assert code == 1
        saved = json.loads((pathlib.Path(out) / "verify.json").read_text())
        assert saved["relative_sup"] == 1.0

    print("ok")


if __name__ == "__main__":
    main()
