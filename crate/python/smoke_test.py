"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import csv
import io
import json
import math

import tiercache_py as tc


def main():
    pis = tc.square_root([0.8, 0.1, 0.002], 1.0)
    assert abs(sum(pis) - 1.0) < 1e-12
    assert [round(p, 2) for p in pis[:2]] == [0.71, 0.25]

    assert abs(tc.occupancy(0.5, 1.0, k_threshold=1) - 0.25) < 1e-12
    assert tc.miss_prob(0.0, 10, 1.0, 0.3) == 0.7
    assert math.isinf(tc.bang_bang([0.1], 10.0, 25.0)[0])

    pis, _, kkt = tc.quadratic_knapsack([1.0, 2.0], [-1.0, -1.0], 1.0)
    assert abs(sum(pis) - 1.0) < 1e-12 and kkt < 1e-9

    exp = tc.Experiment.scenario("ttl_tradeoff")
    rows = list(csv.DictReader(io.StringIO(exp.analytic()["ttl_sweep_argmin.csv"].decode())))
    assert len(rows) == 3

    small = tc.Experiment.from_json(json.dumps({
        "topology": {"tiers": [{"n_caches": 5, "hop_rate": 10.0, "ttl": 0.2}]},
        "contents": {"rates": [1.0], "mu": [2.0]},
        "cost": {"model": "fixed", "cost": 1.0},
        "experiment": {"horizon": {"requests": 1000}},
    }))
    report = json.loads(small.simulate(seed=3)["report.json"])
    assert report["requests"] == 1000

    try:
        tc.Experiment.scenario("nope")
    except tc.TierCacheError:
        pass
    else:
        raise AssertionError("unknown scenario accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
