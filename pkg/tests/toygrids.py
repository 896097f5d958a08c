"""Small grid documents for tests: a builder and a seeded random generator."""
from __future__ import annotations

import numpy as np

R = X = 0.01


def grid_doc(subs, others, lines, loads, dgs=(), T=1, vlim=(0.917, 1.05), op_min=30,
             name="test grid"):
    """``lines`` holds ``(i, j, kind, r, x, f_max[, id])`` with kind fixed|sec|tie."""
    nodes = [{"id": s, "substation": True} for s in subs] + [{"id": n} for n in others]
    L, S = [], []
    for spec in lines:
        i, j, kind, r, x, f = spec[:6]
        lid = spec[6] if len(spec) > 6 else f"{i}-{j}"
        sw = None
        if kind in ("sec", "tie"):
            sw = ("S-" if kind == "sec" else "T-") + lid
            S.append({"id": sw, "kind": "sectionalizing" if kind == "sec" else "tie",
                      "actuation": "manual", "op_time_min": op_min})
        L.append({"id": lid, "from": i, "to": j, "r": r, "x": x, "f_max": f, "switch": sw})
    LD = []
    for n, imp, brk, p, q in loads:
        d = {"node": n, "importance": imp, "breaker": brk, "p": list(p), "q": list(q)}
        if brk:
            d["breaker_time_min"] = 0.5
        LD.append(d)
    return {"schema_version": "1.0", "name": name, "base_mva": 1.0, "base_kv": 11.4,
            "slack_voltage": 1.0, "v_limits": {"min": vlim[0], "max": vlim[1]},
            "time_grid": {"start": "09:00", "step_hours": 1.0, "count": T},
            "nodes": nodes, "lines": L, "switches": S, "dgs": list(dgs), "loads": LD}


def fault_doc(faulted, opened, period=None, name="test fault"):
    d = {"schema_version": "1.0", "name": name, "faulted_elements": list(faulted),
         "isolation_openings": list(opened)}
    if period:
        d["restorative_period"] = {"start_step": period[0], "count": period[1]}
    return d


def random_toy(seed: int) -> tuple[dict, dict]:
    """A faulted feeder head with 3-5 outaged nodes and 1-3 ties to healthy feeders."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 3))
    n_out = int(rng.integers(3, 6))
    out = [str(k) for k in range(1, n_out + 1)]
    lines = [("S1", "1", "sec", R, X, 2.0)]
    for k in range(2, n_out + 1):
        par = str(int(rng.integers(1, k)))
        kind = "sec" if rng.random() < 0.5 else "fixed"
        lines.append((par, str(k), kind, R, X, 2.0))
    n_ties = int(rng.integers(1, 4))
    subs = ["S1"] + [f"S{k}" for k in range(2, n_ties + 2)]
    healthy = [f"h{k}" for k in range(2, n_ties + 2)]
    for k, (s, h) in enumerate(zip(subs[1:], healthy)):
        lines.append((s, h, "fixed", R, X, 2.0))
        end = out[int(rng.integers(0, n_out))]
        cap = float(np.round(rng.uniform(0.08, 0.35), 3))
        lines.append((h, end, "tie", R, X, cap, f"T{k + 1}"))
    if n_out >= 4 and rng.random() < 0.4:
        a, b = rng.choice(n_out, 2, replace=False)
        if not any({l[0], l[1]} == {out[a], out[b]} for l in lines):
            lines.append((out[a], out[b], "tie", R, X, 2.0, "T9"))
    loads = []
    for n in out + healthy:
        base = float(np.round(rng.uniform(0.04, 0.12), 3))
        mult = np.round(rng.uniform(0.8, 1.2, T), 3)
        imp = int(rng.choice([1, 1, 2, 5]))
        brk = bool(rng.random() < 0.7)
        loads.append((n, imp, brk, [round(base * m, 4) for m in mult],
                      [round(0.3 * base * m, 4) for m in mult]))
    dgs = []
    if rng.random() < 0.3:
        dgs.append({"id": "G1", "node": out[-1], "kind": "dispatchable",
                    "p_max": 0.06, "s_max": 0.08})
    grid = grid_doc(subs, out + healthy, lines, loads, dgs, T=T, name=f"random toy {seed}")
    return grid, fault_doc(["S1-1"], ["S1-1"])
