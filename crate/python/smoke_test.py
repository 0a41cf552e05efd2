"""Smoke test for the difflab extension module.

Build and install first, e.g. ``maturin build -m crates/python/Cargo.toml``
and ``pip install`` the wheel, then run ``python python/smoke_test.py``.
"""

import json
import math
import pathlib
import tempfile

import difflab

ROOT = pathlib.Path(__file__).resolve().parent.parent


def heat_decay():
    form = difflab.Form.from_scale(0.0, math.pi, 400, left="dirichlet", right="dirichlet")
    u = [math.sin(x) for x in form.positions]
    out = form.evolve(u, 1.0)
    err = max(abs(a - math.exp(-0.5) * b) for a, b in zip(out, u))
    assert err < 5e-3, err


def sticky_merge():
    form = difflab.Form.from_scale(0.0, 1.0, 20, knots=[(0.0, 0.0), (0.4, 0.4), (0.6, 0.4), (1.0, 0.8)])
    assert form.merged_groups, form
    assert abs(sum(form.masses) - 1.0) < 1e-12
    times, values = form.simulate(0, 0.5, seed=3)
    assert times[0] == 0.0 and len(times) == len(values)
    assert form.energy(form.positions, form.positions) > 0.0


def boundaries_and_stats():
    ok, integral = difflab.classify_boundary(0.0, 1.0, (0.0, 1.0), "left", 0.5)
    assert ok and integral == 0.125
    ok, integral = difflab.classify_boundary(0.0, float("inf"), (0.0, 1.0), "right", 0.5)
    assert not ok and math.isinf(integral)
    stat, crit = difflab.ks_two_sample([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert stat == 0.0 and crit > 0.0
    p = difflab.brownian_modulus_bound(1.0, 0.5, 0.05, 0.4, n_mc=2000, seed=1)
    assert 0.0 <= p <= 1.0


def scenario_round_trip():
    text = (ROOT / "scenarios" / "smoke.json").read_text()
    normalized = json.loads(difflab.validate_config(text))
    assert normalized["grid_N"] == 60
    try:
        difflab.validate_config(json.dumps({**json.loads(text), "grid_N": 2}))
    except ValueError as e:
        assert "grid_N" in str(e)
    else:
        raise AssertionError("grid_N = 2 accepted")
    with tempfile.TemporaryDirectory() as out:
        gates = difflab.run_scenario(text, out, ["boundary", "mosco"])
        assert [g[0] for g in gates] == ["mosco"] and gates[0][1], gates
        assert (pathlib.Path(out) / "manifest.json").exists()


if __name__ == "__main__":
    for check in (heat_decay, sticky_merge, boundaries_and_stats, scenario_round_trip):
        check()
        print(f"ok  {check.__name__}")
