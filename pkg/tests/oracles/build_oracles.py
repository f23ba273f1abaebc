"""Independent reference values, frozen into tests/data.

Uses only numpy and cvxpy; nothing from the package under test. Run from the
repository root:

    python3 tests/oracles/build_oracles.py
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import cvxpy as cp
import numpy as np

DATA = Path(__file__).resolve().parents[1] / "data"
MC_PAIRS = 4_000_000
MC_CASES = [(3, 2.0), (3, 2.5), (2, 1.5), (4, 3.0)]
QP_INSTANCES = 20


# -- cell self-energy -----------------------------------------------------------

def mc_cell_constant(n, alpha, seed):
    """Mean of |x - y|**(alpha - n) for x, y uniform in the unit cube."""
    rng = np.random.default_rng(seed)
    vals = []
    left = MC_PAIRS
    while left:
        m = min(left, 500_000)
        d = rng.random((m, n)) - rng.random((m, n))
        r = np.sqrt(np.sum(d * d, axis=1))
        vals.append(r ** (alpha - n))
        left -= m
    v = np.concatenate(vals)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def closed_forms():
    # mean inverse distance in the unit cube and the unit square
    s2 = math.sqrt(2.0)
    square = (2.0 / 3.0) * (1.0 + (1.0 - 2.0 * s2)) + 4.0 * math.log(1.0 + s2)
    return {
        "3,2.0": 1.8823126443896601,
        "2,1.0": (4.0 / 3.0) * (1.0 - s2) + 4.0 * math.log(1.0 + s2),
        "2,1.0_alt": square,
    }


# -- knapsack projection by breakpoint enumeration -----------------------------------

def breakpoint_projection(w, g, a, sigma):
    """Exact projection: the mass is piecewise linear in lam between breakpoints."""
    bps = np.concatenate([-w / g, (sigma - w) / g])
    bps = np.unique(bps[np.isfinite(bps)])

    def mass(lam):
        return float(np.sum(g * np.clip(w + lam * g, 0.0, sigma)))

    masses = np.array([mass(b) for b in bps])
    k = int(np.searchsorted(masses, a))
    if k == 0:
        lam = bps[0]
    elif k >= len(bps):
        raise ValueError("infeasible")
    else:
        l0, l1 = bps[k - 1], bps[k]
        m0, m1 = masses[k - 1], masses[k]
        lam = l0 + (a - m0) * (l1 - l0) / (m1 - m0)
    return np.clip(w + lam * g, 0.0, sigma)


def projection_cases():
    out = []
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        n = 50
        w = rng.normal(0.0, 1.0, n)
        g = rng.uniform(0.5, 2.0, n)
        sigma = rng.uniform(0.05, 1.0, n)
        a = float(np.sum(g * sigma) * rng.uniform(0.2, 0.8))
        p = breakpoint_projection(w, g, a, sigma)
        out.append({"w": w.tolist(), "g": g.tolist(), "a": a, "sigma": sigma.tolist(),
                    "projection": p.tolist()})
    return out


# -- reference QP ------------------------------------------------------------------

def qp_instance(seed):
    rng = np.random.default_rng(1000 + seed)
    n1, n2 = (int(x) for x in rng.integers(20, 61, size=2))
    p1 = rng.random((n1, 3))
    p2 = rng.random((n2, 3)) + np.array([1.5, 0.0, 0.0])
    alpha = float(rng.choice([1.0, 1.5, 2.0, 2.5]))
    eps = float(rng.uniform(0.1, 0.5))
    g = [rng.uniform(0.5, 2.0, n1), rng.uniform(0.5, 2.0, n2)]
    a = rng.uniform(0.5, 2.0, 2)
    sig = []
    for gi, ai, ni in zip(g, a, (n1, n2)):
        s = rng.uniform(0.1, 1.0, ni)
        sig.append(s * ai * rng.uniform(1.5, 4.0) / float(np.sum(gi * s)))
    f = [rng.uniform(-1.0, 1.0, n1), rng.uniform(-1.0, 1.0, n2)]
    return dict(p1=p1, p2=p2, alpha=alpha, eps=eps, g1=g[0], g2=g[1], a=a,
                s1=sig[0], s2=sig[1], f1=f[0], f2=f[1])


def imq_signed_matrix(inst):
    pts = np.vstack([inst["p1"], inst["p2"]])
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    k = (d2 + inst["eps"] ** 2) ** ((inst["alpha"] - 3.0) / 2.0)
    s = np.concatenate([np.ones(len(inst["p1"])), -np.ones(len(inst["p2"]))])
    return s[:, None] * k * s[None, :]


def clarabel_solve(inst):
    Q = imq_signed_matrix(inst)
    Q = 0.5 * (Q + Q.T)
    n1 = len(inst["p1"])
    f = np.concatenate([inst["f1"], inst["f2"]])
    sig = np.concatenate([inst["s1"], inst["s2"]])
    w = cp.Variable(Q.shape[0])
    L = np.linalg.cholesky(Q)
    obj = cp.sum_squares(L.T @ w) + 2 * f @ w
    cons = [w >= 0, w <= sig,
            inst["g1"] @ w[:n1] == inst["a"][0],
            inst["g2"] @ w[n1:] == inst["a"][1]]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-13, tol_gap_rel=1e-13,
               tol_feas=1e-13, tol_ktratio=1e-10, max_iter=500)
    x = np.asarray(w.value)
    return float(x @ Q @ x + 2 * f @ x), x, prob.status


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    cells = {}
    for i, (n, alpha) in enumerate(MC_CASES):
        mean, se = mc_cell_constant(n, alpha, seed=7 + i)
        cells[f"{n},{alpha}"] = {"mean": mean, "stderr": se, "pairs": MC_PAIRS}
    oracles = {
        "cell_constant_mc": cells,
        "cell_constant_closed": closed_forms(),
        "kernel_value_15_3_111": 3.0 ** -0.75,
        "kelvin_distance_sqrt13_over_6": math.sqrt(13.0) / 6.0,
        "unit_ball_volume": 4.0 * math.pi / 3.0,
        "projection": projection_cases(),
    }
    (DATA / "oracles.json").write_text(json.dumps(oracles, indent=1), encoding="utf-8")

    arrays = {}
    summary = []
    for k in range(QP_INSTANCES):
        inst = qp_instance(k)
        val, x, status = clarabel_solve(inst)
        for key, v in inst.items():
            arrays[f"{k}_{key}"] = np.asarray(v)
        arrays[f"{k}_w"] = x
        arrays[f"{k}_objective"] = np.asarray(val)
        summary.append((k, len(inst["p1"]), len(inst["p2"]), inst["alpha"], val, status))
    np.savez_compressed(DATA / "qp_reference.npz", **arrays)
    for row in summary:
        print(*row)


if __name__ == "__main__":
    main()
