# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled heat-bath sweeps; must stay bit-identical to ``_kernels_py``."""

from libc.math cimport exp


def heat_bath_sweeps(
    signed char[:, ::1] spins,
    double[:, ::1] fields,
    const double[:, ::1] J,
    const double[:, :, ::1] uniforms,
    double D,
    double h,
    int S,
    signed char[:, :, ::1] trace=None,
):
    """Run ``uniforms.shape[0]`` sequential heat-bath sweeps in place.

    ``fields[r, i]`` must hold sum_j J[i, j] spins[r, j] on entry and is kept
    in sync.  ``uniforms[t, r, i]`` drives site i of replica r in sweep t.
    Returns the number of accepted spin changes.
    """
    cdef Py_ssize_t T = uniforms.shape[0]
    cdef Py_ssize_t n = spins.shape[0]
    cdef Py_ssize_t N = spins.shape[1]
    cdef Py_ssize_t t, r, i, j, k
    cdef int nstate = 2 * S + 1
    cdef int s, old, new
    cdef double lw[256]
    cdef double a, mx, tot, target, c, delta
    cdef long long changes = 0
    cdef bint record = trace is not None
    if nstate > 256:
        raise ValueError("S too large")
    if J.shape[0] != N or J.shape[1] != N or fields.shape[0] != n or fields.shape[1] != N:
        raise ValueError("shape mismatch")
    if uniforms.shape[1] != n or uniforms.shape[2] != N:
        raise ValueError("uniforms shape mismatch")
    with nogil:
        for t in range(T):
            for r in range(n):
                for i in range(N):
                    a = fields[r, i] + h
                    mx = -1e308
                    for k in range(nstate):
                        s = k - S
                        lw[k] = a * s + D * (s * s)
                        if lw[k] > mx:
                            mx = lw[k]
                    tot = 0.0
                    for k in range(nstate):
                        lw[k] = exp(lw[k] - mx)
                        tot = tot + lw[k]
                    target = uniforms[t, r, i] * tot
                    c = 0.0
                    new = S
                    for k in range(nstate):
                        c = c + lw[k]
                        if c > target:
                            new = k - S
                            break
                    old = spins[r, i]
                    if new != old:
                        changes += 1
                        delta = new - old
                        spins[r, i] = <signed char> new
                        for j in range(N):
                            fields[r, j] = fields[r, j] + delta * J[i, j]
                if record:
                    for i in range(N):
                        trace[t, r, i] = spins[r, i]
    return changes
