#!/usr/bin/env python3
"""Generate the 24/30/118-bus test cases (.m + emission sidecars).

The systems are patterned after the standard IEEE test networks (bus,
generator, and load-bus counts match) with synthesized branch data. Line
limits are sized from nominal DC flows so the designated "tight" lines are
the only congested elements at peak load. Deterministic given the seeds.
"""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "cases"


def ring_plus_chords(n, extra, rng, forbidden_cross=()):
    edges = [(i, i % n + 1) for i in range(1, n + 1)]  # 1-based ring
    have = {tuple(sorted(e)) for e in edges}
    while len(edges) < n + extra:
        a, b = rng.integers(1, n + 1, size=2)
        if a == b:
            continue
        key = tuple(sorted((int(a), int(b))))
        if key in have or key in forbidden_cross:
            continue
        have.add(key)
        edges.append((int(a), int(b)))
    return edges


def nominal_dispatch(loads_total, a, b, pmax):
    """Interior equal-marginal dispatch over a range check at u in {0.7, 1}."""
    inv2a = 1.0 / (2.0 * a)
    disp = {}
    for u in (0.7, 1.0):
        lam = (u * loads_total + np.sum(b * inv2a)) / np.sum(inv2a)
        p = (lam - b) * inv2a
        disp[u] = p
        if np.any(p <= 0) or np.any(p >= pmax):
            raise SystemExit(f"dispatch not interior at u={u}: {p} vs {pmax}")
    return disp[1.0]


def ptdf(n_bus, edges, x, slack1b):
    L = len(edges)
    A = np.zeros((L, n_bus))
    for k, (f, t) in enumerate(edges):
        A[k, f - 1] = 1.0
        A[k, t - 1] = -1.0
    Bd = np.diag(1.0 / x)
    Bbus = A.T @ Bd @ A
    keep = [i for i in range(n_bus) if i != slack1b - 1]
    G = np.zeros((n_bus, n_bus))
    G[np.ix_(keep, keep)] = np.linalg.inv(Bbus[np.ix_(keep, keep)])
    return Bd @ A @ G


def build_case(name, n_bus, gen_buses, gammas, load_map, shares, acoef,
               lam_nom, chord_count, seed, tight=None, pmax_margin=1.6,
               limit_margin=1.3):
    rng = np.random.default_rng(seed)
    edges = ring_plus_chords(n_bus, chord_count, rng)
    x = rng.uniform(0.03, 0.20, size=len(edges)).round(4)

    d = np.zeros(n_bus)
    for bus, mw in load_map.items():
        d[bus - 1] = mw
    total = d.sum()

    shares = np.asarray(shares, dtype=float)
    shares /= shares.sum()
    a = np.asarray(acoef, dtype=float)
    p_nom = shares * total
    b = lam_nom - 2.0 * a * p_nom
    if np.any(b <= 0):
        raise SystemExit(f"{name}: negative linear cost, raise lam_nom: {b}")
    pmax = np.ceil(p_nom * pmax_margin)
    p_check = nominal_dispatch(total, a, b, pmax)

    inj = -d.copy()
    for g, bus in enumerate(gen_buses):
        inj[bus - 1] += p_check[g]
    H = ptdf(n_bus, edges, x, slack1b=gen_buses[0])
    flows = H @ inj

    limits = np.maximum(np.abs(flows) * limit_margin, 15.0)
    limits = np.ceil(limits)
    tight = tight or {}
    for k, factor in tight.items():
        limits[k] = round(abs(flows[k]) * factor, 1)

    emis = total * float(np.dot(shares, gammas))
    print(f"{name}: load {total:.1f} MW, nominal dispatch {p_check.round(1)}")
    print(f"  nominal emission ~{emis:,.0f} lbs ({emis / 2000:.1f} tons)")
    top = np.argsort(-np.abs(flows))[:6]
    for k in top:
        print(f"  line {k} {edges[k]}: flow {flows[k]:7.1f}  limit {limits[k]}")

    lines = []
    lines.append(f"function mpc = {name}")
    lines.append("mpc.version = '2';")
    lines.append("mpc.baseMVA = 100;")
    lines.append("")
    lines.append("%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin")
    lines.append("mpc.bus = [")
    for i in range(1, n_bus + 1):
        btype = 3 if i == gen_buses[0] else (2 if i in gen_buses else 1)
        lines.append(f"\t{i}\t{btype}\t{d[i - 1]:g}\t0\t0\t0\t1\t1\t0\t138\t1\t1.05\t0.95;")
    lines.append("];")
    lines.append("")
    lines.append("%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin")
    lines.append("mpc.gen = [")
    for g, bus in enumerate(gen_buses):
        lines.append(
            f"\t{bus}\t{p_nom[g]:.2f}\t0\t0\t0\t1\t100\t1\t{pmax[g]:g}\t0"
            "\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;")
    lines.append("];")
    lines.append("")
    lines.append("%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax")
    lines.append("mpc.branch = [")
    for k, (f, t) in enumerate(edges):
        lines.append(f"\t{f}\t{t}\t0\t{x[k]:g}\t0\t{limits[k]:g}\t0\t0\t0\t0\t1\t-360\t360;")
    lines.append("];")
    lines.append("")
    lines.append("%% 2 startup shutdown n c2 c1 c0")
    lines.append("mpc.gencost = [")
    for g in range(len(gen_buses)):
        lines.append(f"\t2\t0\t0\t3\t{a[g]:g}\t{b[g]:.4f}\t0;")
    lines.append("];")
    (OUT / f"{name}.m").write_text("\n".join(lines) + "\n")
    (OUT / f"{name}.emissions.json").write_text(
        json.dumps({"emission_rates_lbs_per_mwh": [float(g) for g in gammas]},
                   indent=2) + "\n")


def main():
    rng = np.random.default_rng(7)

    # 24-bus: 10 plants, 17 load buses, RTS-scale peak load
    load24 = {b: mw for b, mw in zip(
        [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 13, 14, 15, 16, 18, 19, 20],
        [108, 97, 180, 74, 71, 136, 125, 171, 175, 195, 265, 194, 317, 100,
         333, 181, 128])}
    g24 = [13, 1, 2, 7, 15, 16, 18, 21, 22, 23]
    gam24 = rng.uniform(350, 2100, size=len(g24)).round(0)
    sh24 = rng.uniform(0.6, 1.4, size=len(g24))
    a24 = rng.uniform(0.02, 0.08, size=len(g24)).round(4)
    build_case("case24", 24, g24, gam24, load24, sh24, a24,
               lam_nom=90.0, chord_count=14, seed=24)

    # 30-bus: six plants with the published emission-rate profile; one tight
    # corridor so nominal operation is congested
    load30 = {2: 21.7, 3: 2.4, 4: 7.6, 7: 22.8, 8: 30.0, 10: 5.8, 12: 11.2,
              14: 6.2, 15: 8.2, 16: 3.5, 17: 9.0, 18: 3.2, 19: 9.5, 20: 2.2,
              21: 17.5, 23: 3.2, 24: 8.7, 26: 3.5, 29: 2.4, 30: 10.6}
    g30 = [1, 2, 22, 27, 23, 13]
    gam30 = [565.0, 1890.0, 1145.0, 1446.0, 644.0, 961.0]
    sh30 = [0.28, 0.26, 0.10, 0.10, 0.16, 0.10]
    a30 = [0.40, 0.35, 1.00, 1.00, 0.60, 1.00]
    # the two cleanest plants get extra capacity headroom so the
    # congestion-limited emission floor stays below the 95-ton cap scenario
    build_case("case30", 30, g30, gam30, load30, sh30, a30,
               lam_nom=65.0, chord_count=11, seed=30,
               tight={36: 0.685},
               pmax_margin=np.array([1.6, 1.6, 1.6, 1.6, 2.4, 2.4]))

    # 118-bus: 54 plants, 99 load buses
    rng118 = np.random.default_rng(118)
    load_buses = sorted(rng118.choice(np.arange(1, 119), size=99,
                                      replace=False))
    raw = rng118.uniform(10, 80, size=99)
    raw *= 4242.0 / raw.sum()
    load118 = {int(b): round(float(mw), 1) for b, mw in zip(load_buses, raw)}
    g118 = sorted(rng118.choice(np.arange(1, 119), size=54, replace=False))
    g118 = [int(b) for b in g118]
    gam118 = rng118.uniform(300, 2150, size=54).round(0)
    sh118 = rng118.uniform(0.5, 1.5, size=54)
    a118 = rng118.uniform(0.03, 0.12, size=54).round(4)
    build_case("case118", 118, g118, gam118, load118, sh118, a118,
               lam_nom=60.0, chord_count=68, seed=118)


if __name__ == "__main__":
    main()
