#!/usr/bin/env python3
"""Deterministic generator for the bundled 118-bus benchmark fixture.

Produces data/ieee118.json: a synthetic, self-consistent network with the
canonical 118-bus component mix (118 buses, 175 lines, 11 transformers,
53 generators). Topology, impedances and loading are authored here, not
copied from any published data set; the script solves its own AC power flow
to calibrate branch ratings (double the base flow, 100 MVA floor, which
leaves single outages mostly survivable) and to verify the base case is
healthy before writing the file.

Usage: python3 scripts/make_fixture.py [out.json]
"""

import json
import math
import random
import sys

BASE_MVA = 100.0
FREQUENCY = 50.0
N_CORE = 112
N_SPUR = 6
N_BUS = N_CORE + N_SPUR
N_CHORD_LINES = 57
SEED = 118


def build_topology(rng):
    lines = []     # (from, to)
    used = set()

    def add_edge(container, a, b):
        key = (min(a, b), max(a, b))
        if a == b or key in used:
            return False
        used.add(key)
        container.append((a, b))
        return True

    # Meshed core: a ring plus random chords.
    for i in range(N_CORE):
        add_edge(lines, i, (i + 1) % N_CORE)
    while len(lines) < N_CORE + N_CHORD_LINES:
        a = rng.randrange(N_CORE)
        b = rng.randrange(N_CORE)
        if abs(a - b) <= 1 or abs(a - b) == N_CORE - 1:
            continue  # parallel to a ring edge
        add_edge(lines, min(a, b), max(a, b))

    # Radial spurs: single-line taps, the structural source of N-1 islanding.
    for k in range(N_SPUR):
        add_edge(lines, 3 + 18 * k, N_CORE + k)

    # Interties modeled as transformers: long chords across the ring.
    transformers = []
    k = 0
    step = 9
    while len(transformers) < 11:
        a = (7 + step * k) % N_CORE
        b = (a + N_CORE // 2 + (k % 5)) % N_CORE
        if not add_edge(transformers, min(a, b), max(a, b)):
            step += 1
            continue
        k += 1
    return lines, transformers


def place_generators(rng):
    buses = sorted({round(k * (N_CORE - 1) / 52) for k in range(53)})
    assert len(buses) == 53, len(buses)
    units = []
    total_cap = 0.0
    for idx, bus in enumerate(buses):
        if idx % 8 == 0:
            p_max = 420.0 + 20.0 * (idx % 3)
            h, xd = 5.5, 0.25
        elif idx % 3 == 0:
            p_max = 180.0 + 10.0 * (idx % 5)
            h, xd = 4.0, 0.30
        else:
            p_max = 70.0 + 6.0 * (idx % 7)
            h, xd = 3.2, 0.35
        units.append({
            "bus": bus,
            "p_max": p_max,
            "inertia_h": h,
            "xd_transient": xd,
        })
        total_cap += p_max
    return units, total_cap


def main():
    out_path = sys.argv[1] if len(sys.argv) > 1 else "data/ieee118.json"
    rng = random.Random(SEED)

    lines, transformers = build_topology(rng)
    assert len(lines) == 175 and len(transformers) == 11

    units, total_cap = place_generators(rng)
    gen_buses = {u["bus"] for u in units}

    # Loads: most buses draw 15-55 MW, spurs a bit less, scaled to ~62% of
    # installed capacity.
    raw = {}
    for b in range(N_BUS):
        if b >= N_CORE:
            raw[b] = rng.uniform(10.0, 25.0)
        elif rng.random() < 0.84 or b not in gen_buses:
            raw[b] = rng.uniform(15.0, 55.0)
        else:
            raw[b] = 0.0
    scale = 0.62 * total_cap / sum(raw.values())
    load_p = {b: round(raw[b] * scale, 1) for b in range(N_BUS)}
    load_q = {b: round(load_p[b] * 0.30, 1) for b in range(N_BUS)}
    total_load = sum(load_p.values())

    # Dispatch ~ proportional to size at ~ load * 1.01, slack unit near the
    # electrical middle of the ring.
    slack_bus = min(gen_buses, key=lambda b: abs(b - 56))
    dispatch_total = total_load * 1.01
    for u in units:
        u["p_set"] = round(dispatch_total * u["p_max"] / total_cap, 1)
        u["q_max"] = round(max(0.8 * u["p_max"], 95.0), 1)
        u["q_min"] = round(-max(0.6 * u["p_max"], 70.0), 1)
        u["mva_base"] = round(u["p_max"] * 1.15)
        u["damping_d"] = 2.0
    # Keep the slack unit lightly loaded so it can swing both ways.
    for u in units:
        if u["bus"] == slack_bus:
            u["p_set"] = round(u["p_set"] * 0.6, 1)

    # Near-uniform setpoints; spread voltage targets would circulate vars
    # between electrically close machines.
    setpoints = {}
    for idx, u in enumerate(units):
        setpoints[u["bus"]] = round(1.02 + 0.002 * (idx % 3), 3)
    setpoints[slack_bus] = 1.025

    branches = []
    for i, (a, b) in enumerate(lines):
        x = round(rng.uniform(0.03, 0.15), 4)
        branches.append({
            "kind": "line", "id": i, "from_bus": a, "to_bus": b,
            "r": round(x / 4.0, 4), "x": x,
            "b_shunt": round(rng.uniform(0.01, 0.05), 4),
            "tap_ratio": 1.0, "rating": 0.0, "in_service": True,
        })
    for i, (a, b) in enumerate(transformers):
        x = round(rng.uniform(0.05, 0.10), 4)
        # Taps stay near unity: both sides regulate to similar setpoints and
        # a large step across a low impedance would just circulate vars.
        branches.append({
            "kind": "transformer", "id": i, "from_bus": a, "to_bus": b,
            "r": round(x / 20.0, 5), "x": x, "b_shunt": 0.0,
            "tap_ratio": round(rng.choice([0.98, 0.99, 1.0, 1.01, 1.02]), 3),
            "rating": 0.0, "in_service": True,
        })

    buses = []
    for b in range(N_BUS):
        kind = "slack" if b == slack_bus else ("pv" if b in gen_buses else "pq")
        buses.append({
            "id": b, "kind": kind,
            "voltage_setpoint": setpoints.get(b, 1.0),
            "load_p": load_p[b] / BASE_MVA, "load_q": load_q[b] / BASE_MVA,
            "vmin": 0.94, "vmax": 1.06,
        })

    generators = []
    for i, u in enumerate(units):
        generators.append({
            "id": i, "bus": u["bus"],
            "p_set": u["p_set"] / BASE_MVA, "p_min": 0.0,
            "p_max": u["p_max"] / BASE_MVA,
            "q_min": u["q_min"] / BASE_MVA, "q_max": u["q_max"] / BASE_MVA,
            "mva_base": float(u["mva_base"]),
            "inertia_h": u["inertia_h"], "damping_d": u["damping_d"],
            "xd_transient": u["xd_transient"], "in_service": True,
        })

    flows, report = solve_and_check(buses, branches, generators, slack_bus)
    print(report)

    # Ratings: double the solved base flow with a 100 MVA floor. Wide enough
    # that single outages rarely overload, tight enough that stressed double
    # outages still do.
    for i, br in enumerate(branches):
        s = max(flows[i]) * BASE_MVA
        br["rating"] = round(max(2.0 * s, 100.0) / BASE_MVA + 0.049, 2)

    doc = {
        "name": "ieee118-mix-benchmark",
        "source": "synthetic benchmark authored by scripts/make_fixture.py (seed 118); "
                  "canonical 118-bus component mix: 175 lines, 11 transformers, 53 generators; "
                  "parameters are original to this project, not the published test-case data",
        "base_mva": BASE_MVA,
        "frequency": FREQUENCY,
        "buses": buses,
        "branches": branches,
        "generators": generators,
    }
    with open(out_path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    print(f"wrote {out_path}")


def solve_and_check(buses, branches, generators, slack_bus):
    """Flat-start NR solve; raises if the base case is not healthy."""
    import numpy as np

    n = len(buses)
    ybus = np.zeros((n, n), dtype=complex)
    for br in branches:
        ys = 1.0 / complex(br["r"], br["x"])
        yc = complex(0.0, br["b_shunt"] / 2.0)
        a = br["tap_ratio"]
        f, t = br["from_bus"], br["to_bus"]
        ybus[f, f] += (ys + yc) / (a * a)
        ybus[t, t] += ys + yc
        ybus[f, t] -= ys / a
        ybus[t, f] -= ys / a

    p_spec = np.array([-b["load_p"] for b in buses])
    q_spec = np.array([-b["load_q"] for b in buses])
    is_pv = np.zeros(n, dtype=bool)
    vset = np.ones(n)
    for g in generators:
        p_spec[g["bus"]] += g["p_set"]
        is_pv[g["bus"]] = True
    for b in buses:
        vset[b["id"]] = b["voltage_setpoint"]

    vm = np.where(is_pv, vset, 1.0)
    vm[slack_bus] = vset[slack_bus]
    va = np.zeros(n)

    pv = [i for i in range(n) if is_pv[i] and i != slack_bus]
    pq = [i for i in range(n) if not is_pv[i] and i != slack_bus]
    ang = pv + pq

    for iteration in range(40):
        v = vm * np.exp(1j * va)
        s = v * np.conj(ybus @ v)
        dp = p_spec - s.real
        dq = q_spec - s.imag
        mis = np.concatenate([dp[ang], dq[pq]])
        if np.max(np.abs(mis)) < 1e-10:
            break
        # numeric Jacobian is fine at this size
        m = len(ang) + len(pq)
        jac = np.zeros((m, m))
        eps = 1e-6
        for col, bus in enumerate(ang):
            va2 = va.copy()
            va2[bus] += eps
            v2 = vm * np.exp(1j * va2)
            s2 = v2 * np.conj(ybus @ v2)
            jac[: len(ang), col] = (s2.real - s.real)[ang] / eps
            jac[len(ang):, col] = (s2.imag - s.imag)[pq] / eps
        for col, bus in enumerate(pq):
            vm2 = vm.copy()
            vm2[bus] += eps
            v2 = vm2 * np.exp(1j * va)
            s2 = v2 * np.conj(ybus @ v2)
            jac[: len(ang), len(ang) + col] = (s2.real - s.real)[ang] / eps
            jac[len(ang):, len(ang) + col] = (s2.imag - s.imag)[pq] / eps
        dx = np.linalg.solve(jac, mis)
        va[ang] += dx[: len(ang)]
        vm[pq] += dx[len(ang):]
    else:
        raise SystemExit("base case did not converge")

    v = vm * np.exp(1j * va)
    flows = []
    for br in branches:
        ys = 1.0 / complex(br["r"], br["x"])
        yc = complex(0.0, br["b_shunt"] / 2.0)
        a = br["tap_ratio"]
        f, t = br["from_bus"], br["to_bus"]
        i_f = (ys + yc) / (a * a) * v[f] - ys / a * v[t]
        i_t = (ys + yc) * v[t] - ys / a * v[f]
        flows.append((abs(v[f] * np.conj(i_f)), abs(v[t] * np.conj(i_t))))

    vmin, vmax = vm.min(), vm.max()
    if vmin < 0.955 or vmax > 1.05:
        raise SystemExit(f"base voltage profile out of band: [{vmin:.4f}, {vmax:.4f}]")
    report = (f"base solve: {iteration} iterations, V in [{vmin:.4f}, {vmax:.4f}], "
              f"max flow {max(max(fl) for fl in flows) * BASE_MVA:.1f} MVA")
    return flows, report


if __name__ == "__main__":
    main()
