#!/usr/bin/env python3
"""Regenerate data/ieee39.case from the New England 39-bus tables.

Solves the AC power flow (Newton-Raphson, polar form) on the standard bus,
branch and generator data, then writes the solved bus voltages together with
the classical-model generator constants consumed by the C++ library.

    python3 tools/make_case39.py > data/ieee39.case

Requires numpy.
"""
import math
import sys

import numpy as np

BASE_MVA = 100.0
FREQUENCY_HZ = 60.0

# id, Pd (MW), Qd (MVAr)
BUSES = [
    (1, 97.6, 44.2), (2, 0, 0), (3, 322, 2.4), (4, 500, 184), (5, 0, 0), (6, 0, 0),
    (7, 233.8, 84), (8, 522, 176.6), (9, 6.5, -66.6), (10, 0, 0), (11, 0, 0),
    (12, 8.53, 88), (13, 0, 0), (14, 0, 0), (15, 320, 153), (16, 329, 32.3),
    (17, 0, 0), (18, 158, 30), (19, 0, 0), (20, 680, 103), (21, 274, 115),
    (22, 0, 0), (23, 247.5, 84.6), (24, 308.6, -92.2), (25, 224, 47.2),
    (26, 139, 17), (27, 281, 75.5), (28, 206, 27.6), (29, 283.5, 26.9),
    (30, 0, 0), (31, 9.2, 4.6), (32, 0, 0), (33, 0, 0), (34, 0, 0), (35, 0, 0),
    (36, 0, 0), (37, 0, 0), (38, 0, 0), (39, 1104, 250),
]

# from, to, r, x, b (total line charging), off-nominal tap at the from end (0 = none)
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987, 0), (1, 39, 0.001, 0.025, 0.75, 0),
    (2, 3, 0.0013, 0.0151, 0.2572, 0), (2, 25, 0.007, 0.0086, 0.146, 0),
    (2, 30, 0, 0.0181, 0, 1.025), (3, 4, 0.0013, 0.0213, 0.2214, 0),
    (3, 18, 0.0011, 0.0133, 0.2138, 0), (4, 5, 0.0008, 0.0128, 0.1342, 0),
    (4, 14, 0.0008, 0.0129, 0.1382, 0), (5, 6, 0.0002, 0.0026, 0.0434, 0),
    (5, 8, 0.0008, 0.0112, 0.1476, 0), (6, 7, 0.0006, 0.0092, 0.113, 0),
    (6, 11, 0.0007, 0.0082, 0.1389, 0), (6, 31, 0, 0.025, 0, 1.07),
    (7, 8, 0.0004, 0.0046, 0.078, 0), (8, 9, 0.0023, 0.0363, 0.3804, 0),
    (9, 39, 0.001, 0.025, 1.2, 0), (10, 11, 0.0004, 0.0043, 0.0729, 0),
    (10, 13, 0.0004, 0.0043, 0.0729, 0), (10, 32, 0, 0.02, 0, 1.07),
    (12, 11, 0.0016, 0.0435, 0, 1.006), (12, 13, 0.0016, 0.0435, 0, 1.006),
    (13, 14, 0.0009, 0.0101, 0.1723, 0), (14, 15, 0.0018, 0.0217, 0.366, 0),
    (15, 16, 0.0009, 0.0094, 0.171, 0), (16, 17, 0.0007, 0.0089, 0.1342, 0),
    (16, 19, 0.0016, 0.0195, 0.304, 0), (16, 21, 0.0008, 0.0135, 0.2548, 0),
    (16, 24, 0.0003, 0.0059, 0.068, 0), (17, 18, 0.0007, 0.0082, 0.1319, 0),
    (17, 27, 0.0013, 0.0173, 0.3216, 0), (19, 20, 0.0007, 0.0138, 0, 1.06),
    (19, 33, 0.0007, 0.0142, 0, 1.07), (20, 34, 0.0009, 0.018, 0, 1.009),
    (21, 22, 0.0008, 0.014, 0.2565, 0), (22, 23, 0.0006, 0.0096, 0.1846, 0),
    (22, 35, 0, 0.0143, 0, 1.025), (23, 24, 0.0022, 0.035, 0.361, 0),
    (23, 36, 0.0005, 0.0272, 0, 1.0), (25, 26, 0.0032, 0.0323, 0.531, 0),
    (25, 37, 0.0006, 0.0232, 0, 1.025), (26, 27, 0.0014, 0.0147, 0.2396, 0),
    (26, 28, 0.0043, 0.0474, 0.7802, 0), (26, 29, 0.0057, 0.0625, 1.029, 0),
    (28, 29, 0.0014, 0.0151, 0.249, 0), (29, 38, 0.0008, 0.0156, 0, 1.025),
]

# bus, Pg (MW), Vg setpoint, H (s, system base), xd' (pu, system base).
# Bus 31 is the slack.
GENERATORS = [
    (30, 250.0, 1.0499, 42.0, 0.031), (31, 677.871, 0.982, 30.3, 0.0697),
    (32, 650.0, 0.9841, 35.8, 0.0531), (33, 632.0, 0.9972, 28.6, 0.0436),
    (34, 508.0, 1.0123, 26.0, 0.132), (35, 650.0, 1.0494, 34.8, 0.05),
    (36, 560.0, 1.0636, 26.4, 0.049), (37, 540.0, 1.0275, 24.3, 0.057),
    (38, 830.0, 1.0265, 34.5, 0.057), (39, 1000.0, 1.03, 500.0, 0.006),
]
SLACK_BUS = 31

# Damping chosen so that omega_s * D / (2 H) = 0.4 1/s for every machine.
DAMPING_RATE = 0.4


def admittance_matrix(nb):
    y = np.zeros((nb, nb), dtype=complex)
    for f, t, r, x, b, tap in BRANCHES:
        f -= 1
        t -= 1
        a = tap if tap else 1.0
        ys = 1.0 / complex(r, x)
        bc = 0.5j * b
        y[f, f] += (ys + bc) / (a * a)
        y[t, t] += ys + bc
        y[f, t] -= ys / a
        y[t, f] -= ys / a
    return y


def solve_power_flow(tol=1e-13, max_iter=50):
    nb = len(BUSES)
    y = admittance_matrix(nb)
    pd = np.array([b[1] for b in BUSES]) / BASE_MVA
    qd = np.array([b[2] for b in BUSES]) / BASE_MVA
    pg = np.zeros(nb)
    vm = np.ones(nb)
    va = np.zeros(nb)
    slack = SLACK_BUS - 1
    pv = []
    for bus, p, v, _, _ in GENERATORS:
        pg[bus - 1] = p / BASE_MVA
        vm[bus - 1] = v
        if bus - 1 != slack:
            pv.append(bus - 1)
    pq = [i for i in range(nb) if i not in pv and i != slack]
    ns = [i for i in range(nb) if i != slack]
    for _ in range(max_iter):
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        mis = np.r_[(s.real - (pg - pd))[ns], (s.imag + qd)[pq]]
        if np.max(np.abs(mis)) < tol:
            break
        ibus = y @ v
        dva = 1j * np.diag(v) @ np.conj(np.diag(ibus) - y @ np.diag(v))
        dvm = np.diag(v) @ np.conj(y @ np.diag(np.exp(1j * va))) + \
            np.diag(np.exp(1j * va)) @ np.conj(np.diag(ibus))
        jac = np.block([[dva.real[np.ix_(ns, ns)], dvm.real[np.ix_(ns, pq)]],
                        [dva.imag[np.ix_(pq, ns)], dvm.imag[np.ix_(pq, pq)]]])
        dx = np.linalg.solve(jac, -mis)
        va[ns] += dx[:len(ns)]
        vm[pq] += dx[len(ns):]
    else:
        sys.exit("power flow did not converge")
    v = vm * np.exp(1j * va)
    sgen = v * np.conj(y @ v) + pd + 1j * qd
    return vm, va, sgen, pd, qd


def main():
    vm, va, sgen, pd, qd = solve_power_flow()
    ws = 2.0 * math.pi * FREQUENCY_HZ
    out = sys.stdout
    out.write("dse-case 1\n")
    out.write("# IEEE 39-bus (New England) system, classical generator model.\n")
    out.write("# Per-unit on the system base; angles in radians; H in seconds;\n")
    out.write("# D in pu power per rad/s of speed deviation.\n")
    out.write(f"base_mva {BASE_MVA:.17g}\n")
    out.write(f"frequency_hz {FREQUENCY_HZ:.17g}\n")
    out.write("\n[buses]\n# id load_p load_q vm va\n")
    for i, (bid, _, _) in enumerate(BUSES):
        out.write(f"{bid} {pd[i]:.17g} {qd[i]:.17g} {vm[i]:.17g} {va[i]:.17g}\n")
    out.write("\n[branches]\n# from to r x b tap\n")
    for f, t, r, x, b, tap in BRANCHES:
        out.write(f"{f} {t} {r:.17g} {x:.17g} {b:.17g} {(tap if tap else 1.0):.17g}\n")
    out.write("\n[generators]\n# bus h d xd_prime pm e\n")
    for bus, _, _, h, xd in GENERATORS:
        k = bus - 1
        vt = vm[k] * np.exp(1j * va[k])
        it = np.conj(sgen[k] / vt)
        emf = vt + 1j * xd * it
        d = 2.0 * h * DAMPING_RATE / ws
        out.write(f"{bus} {h:.17g} {d:.17g} {xd:.17g} {sgen[k].real:.17g} {abs(emf):.17g}\n")


if __name__ == "__main__":
    main()
