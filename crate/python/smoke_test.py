#!/usr/bin/env python3
"""Smoke test for the dykstra_net_py extension module.

Builds nothing itself: run `cargo build -p dykstra-net-py` first (or pass
--release and build that profile), then execute this script with the
repository root as the working directory or from anywhere:

    python3 python/smoke_test.py
"""

import argparse
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def import_extension(profile: str):
    built = REPO_ROOT / "target" / profile / "libdykstra_net_py.so"
    if not built.exists():
        sys.exit(
            f"{built} not found; run `cargo build -p dykstra-net-py"
            + (" --release`" if profile == "release" else "`")
        )
    stage = Path(tempfile.mkdtemp(prefix="dykstra_net_py_"))
    shutil.copy2(built, stage / "dykstra_net_py.so")
    sys.path.insert(0, str(stage))
    import dykstra_net_py

    return dykstra_net_py


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--release", action="store_true", help="use target/release")
    args = parser.parse_args()
    dn = import_extension("release" if args.release else "debug")

    # Generated instance: solve, certify, and cross-check the oracle.
    inst = dn.Instance.generate(kind="mixed", m=3, graph="cycle:5", seed=7)
    assert inst.m == 3 and inst.n_vertices == 5
    assert inst.is_normalized
    assert inst.x_star == [0.0, 0.0, 0.0]

    res = dn.run(inst, policy="cyclic_v_first")
    assert res.stop_reason == "gap_certified", res.stop_reason
    assert res.cycles + 1 == len(res.boundary_f)
    assert res.certified_gap is not None and res.certified_gap <= 1e-8
    assert res.distance_to_optimum <= res.certified_gap + 1e-10
    worst = max(math.hypot(*p) for p in res.points)
    assert worst <= 1e-7, worst
    # Dual values never rise along cycle boundaries.
    for a, b in zip(res.boundary_f, res.boundary_f[1:]):
        assert b <= a + 1e-12 * (1.0 + abs(a))
    assert res.rate is not None and 0.0 < res.rate < 1.0
    assert res.r_squared > 0.9
    assert res.warnings == []

    orc = dn.oracle(inst)
    assert orc.converged
    assert max(abs(v) for v in orc.point) <= 1e-8
    agree = max(
        max(abs(a - b) for a, b in zip(p, orc.point)) for p in res.points
    )
    assert agree <= 1e-5, agree
    assert dn.certify(inst, orc.point) <= 1e-8

    # The JSON round trip matches the CLI file format.
    back = dn.Instance.from_json(inst.to_json())
    assert back.to_json() == inst.to_json()

    # Schedules agree with each other.
    res2 = dn.run(inst, policy="random_coverage", seed=3)
    assert res2.stop_reason == "gap_certified"
    cross = max(
        max(abs(a - b) for a, b in zip(p, q)) for p, q in zip(res.points, res2.points)
    )
    assert cross <= 1e-5, cross

    # Consensus: per-vertex anchors reduce to their mean, and whole-space
    # instances settle there.
    anchors = [[1.0, 2.0], [3.0, -1.0], [5.0, 8.0]]
    mean, shift = dn.reduce_anchors(anchors)
    assert mean == [3.0, 3.0]
    expected_shift = sum(
        0.5 * sum((a - m) ** 2 for a, m in zip(anchor, mean)) for anchor in anchors
    )
    assert abs(shift - expected_shift) <= 1e-12

    cons = dn.Instance.generate(kind="consensus", m=2, graph="star:4", seed=1)
    cres = dn.run(cons)
    assert cres.stop_reason == "plateau"
    drift = max(
        max(abs(a - b) for a, b in zip(p, cons.anchor)) for p in cres.points
    )
    assert drift <= 1e-9, drift

    # Errors surface as Python exceptions.
    for bad in (
        lambda: dn.Instance.generate(kind="donuts", m=2, graph="path:3"),
        lambda: dn.Instance.generate(kind="balls", m=2, graph="blob:3"),
        lambda: dn.run(inst, policy="alphabetical"),
        lambda: dn.Instance.from_json("{}"),
    ):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("smoke test: OK")


if __name__ == "__main__":
    main()
