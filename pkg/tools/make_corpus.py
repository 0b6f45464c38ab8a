"""Regenerate the randomized corpus instances and their frozen reports.

Run from the repository root: ``python3 tools/make_corpus.py``. Instances
are drawn from a fixed seed, so rerunning only changes the expected reports
if solver output changes.
"""

import json

import numpy as np

from cmot.io import corpus_path, emit_report, parse_scenario
from cmot.runner import run_scenario


def _measure(rng, n, spread=3.0):
    atoms = np.unique(np.round(rng.uniform(-spread, spread, n), 2))
    w = rng.integers(1, 6, atoms.size)
    return {"atoms": atoms.tolist(), "weights": (w / w.sum()).round(12).tolist()}


def _spread_out(rng, alpha):
    """Target measure dominating ``alpha`` in convex order: split each atom two ways."""
    ys, ws = [], []
    for x, w in zip(alpha["atoms"], alpha["weights"]):
        lo, hi = x - rng.integers(1, 4), x + rng.integers(1, 4)
        p = (hi - x) / (hi - lo)
        ys += [lo, hi]
        ws += [w * p, w * (1 - p)]
    atoms, inv = np.unique(np.round(ys, 2), return_inverse=True)
    weights = np.bincount(inv, weights=ws)
    return {"atoms": atoms.tolist(), "weights": (weights / weights.sum()).tolist()}


def _integral_capacity(rng):
    n, m = rng.integers(3, 6), rng.integers(3, 6)
    B = (rng.random((n, m)) < 0.5).astype(int)
    B[np.arange(n), rng.integers(0, m, n)] = 1
    B[rng.integers(0, n, m), np.arange(m)] = 1
    pattern = B | (rng.random((n, m)) < 0.4)
    r, c, N = B.sum(1), B.sum(0), B.sum()
    R = pattern / pattern.sum(1, keepdims=True)
    bound = np.where(pattern, pattern.sum(1, keepdims=True) / r[:, None], 0.0)
    xs = np.sort(rng.choice(np.arange(-20, 21), n, replace=False)) / 4
    ys = np.sort(rng.choice(np.arange(-20, 21), m, replace=False)) / 4
    noise = rng.uniform(0, 1e-3, (n, m))
    table = (ys[None, :] - xs[:, None]) ** 2 + noise
    return {
        "alpha": {"atoms": xs.tolist(), "weights": (r / N).tolist()},
        "beta": {"atoms": ys.tolist(), "weights": (c / N).tolist()},
        "capacity": {"reference": R.tolist(), "bound": bound.tolist()},
        "cost": {"table": table.round(9).tolist()},
    }


def build(seed=20240611):
    rng = np.random.default_rng(seed)
    docs = []
    for k in range(20):
        name = f"random_{k:02d}"
        if k < 12:
            alpha = _measure(rng, int(rng.integers(2, 5)))
            beta = _spread_out(rng, alpha)
            cons = {"kind": "martingale"} if k >= 8 else {"kind": "martingale_ball", "radius": float(rng.integers(2, 5))}
            cost = {"h": "exp"} if k % 2 == 0 else {"h": "power", "p": 3}
            doc = {"kind": "solve", "alpha": alpha, "beta": beta, "constraint": cons, "cost": cost}
        elif k < 16:
            alpha = _measure(rng, int(rng.integers(2, 4)), 2.0)
            beta = _measure(rng, int(rng.integers(3, 6)), 4.0)
            doc = {"kind": "feasibility", "alpha": alpha, "beta": beta,
                   "constraint": {"kind": "martingale_ball", "radius": float(rng.integers(2, 6))}}
        else:
            doc = {"kind": "capacity", **_integral_capacity(rng)}
        doc["name"] = name
        docs.append((name, doc))
    return docs


def main():
    for name, doc in build():
        path = corpus_path(f"{name}.json")
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for path in sorted(corpus_path().glob("*.json")):
        sc = parse_scenario(json.loads(path.read_text()), str(path))
        res = run_scenario(sc)
        corpus_path(f"expected/{path.stem}.report.json").write_bytes(emit_report(res.report))
        print(path.name, res.report.status)


if __name__ == "__main__":
    main()
