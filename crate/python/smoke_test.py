"""Smoke test for the `polyvi` extension module.

Builds the extension if needed, copies it next to this script as polyvi.so
and exercises the bindings on the two reference problems.

    python3 python/smoke_test.py
"""

import glob
import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_extension():
    pattern = os.path.join(ROOT, "target", "*", "libpolyvi_py.so")
    found = sorted(glob.glob(pattern), key=os.path.getmtime)
    if not found:
        subprocess.run(
            ["cargo", "build", "-p", "polyvi-py", "--features", "extension-module"],
            cwd=ROOT,
            check=True,
        )
        found = sorted(glob.glob(pattern), key=os.path.getmtime)
    if not found:
        sys.exit("libpolyvi_py.so not found under target/")
    return found[-1]


def load():
    tmp = tempfile.mkdtemp(prefix="polyvi-smoke-")
    shutil.copy(locate_extension(), os.path.join(tmp, "polyvi.so"))
    sys.path.insert(0, tmp)
    import polyvi

    return polyvi


def main():
    pv = load()
    orthant = pv.PolyhedralSet.nonnegative_orthant(2)
    half_plane = pv.PolyhedralSet(2, C=[[-1.0, 0.0]], b=[0.0])
    sq = pv.PolynomialMap(2, 2, [[0, 0, 0, 1, -2, 1]] * 2)
    cubic = pv.PolynomialMap(2, 3, [[0, 0, 0, 0, 0, 0, 1, 0, 0, 0], [0, 0, 0, 0, 0, 0, 0, 0, 0, 1]])

    assert sq([3.0, 1.0]) == [4.0, 4.0]
    assert pv.PolynomialMap.from_json(cubic.to_json()).coeffs == cubic.coeffs
    assert half_plane.contains([0.0, -5.0]) and not half_plane.contains([-1.0, 0.0])
    assert not orthant.is_bounded

    sol = pv.solve(half_plane, cubic, p=[-8.0, -27.0])
    assert len(sol) == 1 and sol.status == "complete", sol
    x = sol.points[0]
    assert abs(x[0] - 2.0) < 1e-8 and abs(x[1] - 3.0) < 1e-8, x
    assert pv.verify_solution(half_plane, cubic, x, p=[-8.0, -27.0])
    assert json.loads(sol.to_json())["status"] == "complete"

    line = pv.solve(orthant, sq, p=[0.0, 0.0])
    assert line.nonisolated
    assert all(abs(s[0] - s[1]) < 1e-6 for c in line.components for s in c)

    r0 = pv.is_r0_pair(orthant, sq)
    assert r0.status == "not_r0"
    w = r0.witness
    assert abs(w[0] - w[1]) < 1e-6 and abs(math.hypot(*w) - 1.0) < 1e-9
    assert pv.is_r0_pair(half_plane, cubic).status == "r0"

    assert pv.copositivity_check(orthant, sq).status == "copositive_numeric"
    assert pv.existence_certificate(orthant, sq, p=[1.0, 2.0]).status == "nonempty_bounded"
    assert pv.existence_certificate(orthant, sq, p=[-1.0, -1.0]).status == "no_certificate"

    fit = pv.hoelder_fit(half_plane, cubic, [0.0, 0.0])
    assert 0.30 <= fit.c <= 0.37, fit.c

    sweep = pv.solution_map_sweep(orthant, sq, [[1.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])
    assert sweep.labels[:2] == ["unique", "unique"], sweep.labels
    assert sweep.labels[2].startswith("nonisolated"), sweep.labels

    a = pv.genericity_experiment(2, 2, orthant, 10, seed=7)
    b = pv.genericity_experiment(2, 2, orthant, 10, seed=7)
    assert a.to_json() == b.to_json() and a.count_positive == 10

    try:
        pv.PolynomialMap(2, 1, [[0.0, 1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("dimension mismatch accepted")

    print("polyvi smoke test: ok")


if __name__ == "__main__":
    main()
