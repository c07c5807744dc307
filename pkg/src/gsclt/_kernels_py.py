"""Pure-Python heat-bath sweeps, the reference for the compiled kernel.

Arithmetic is done in the same order as the Cython code so that, given the
same uniforms, both produce identical trajectories.
"""

from __future__ import annotations

import math

import numpy as np


def heat_bath_sweeps(spins, fields, J, uniforms, D, h, S, trace=None):
    T, n, N = uniforms.shape
    if spins.shape != (n, N) or fields.shape != (n, N) or J.shape != (N, N):
        raise ValueError("shape mismatch")
    nstate = 2 * S + 1
    states = list(range(-S, S + 1))
    sq = [D * (s * s) for s in states]
    changes = 0
    exp = math.exp
    for t in range(T):
        for r in range(n):
            row_f = fields[r]
            row_s = spins[r]
            u_row = uniforms[t, r].tolist()
            for i in range(N):
                a = float(row_f[i]) + h
                lw = [a * s + q for s, q in zip(states, sq)]
                mx = max(lw)
                w = [exp(x - mx) for x in lw]
                tot = 0.0
                for x in w:
                    tot = tot + x
                target = u_row[i] * tot
                c = 0.0
                new = S
                for k in range(nstate):
                    c = c + w[k]
                    if c > target:
                        new = k - S
                        break
                old = int(row_s[i])
                if new != old:
                    changes += 1
                    row_s[i] = new
                    row_f += float(new - old) * J[i]
            if trace is not None:
                trace[t, r] = row_s
    return changes
