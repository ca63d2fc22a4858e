"""numba-compiled kernels; same contract as the numpy backend."""
import math
import warnings

import numpy as np
from numba import njit, prange

# old system TBB; numba falls back to its own thread pool
warnings.filterwarnings("ignore", message="The TBB threading layer")

TINY = 1e-300
T_MAX = 100.0
T_MIN = 1e-30
GROW = 1.25
# a start where an observed outcome has relative weight below this sits in a
# log(0) funnel of the likelihood and is skipped
FEASIBLE = 1e-12


@njit(cache=True)
def _form(g, a, b):
    s = 0.0
    for u in range(4):
        acc = 0.0
        for v in range(4):
            acc += g[u, v] * b[v]
        s += a[u] * acc
    return s


@njit(cache=True, parallel=True)
def outcome_weights(bloch, forms):
    n = bloch.shape[0]
    k = forms.shape[0]
    q = np.empty((n, k))
    for j in prange(n):
        r = np.empty(4)
        r[0] = 1.0
        r[1] = bloch[j, 0]
        r[2] = bloch[j, 1]
        r[3] = bloch[j, 2]
        for i in range(k):
            q[j, i] = _form(forms[i], r, r)
    return q


@njit(cache=True, parallel=True)
def score_trials(q, u, bloch, guesses):
    n, k = q.shape
    outcome = np.empty(n, dtype=np.int64)
    fid = np.empty(n)
    for j in prange(n):
        total = q[j, 0]
        for i in range(1, k):
            total += q[j, i]
        if not total > 0:
            outcome[j] = -1
            o = 0
        else:
            thresh = u[j] * total
            cum = 0.0
            o = -1
            for i in range(k):
                cum += q[j, i]
                if cum > thresh:
                    o = i
                    break
            if o < 0:
                o = k - 1
                while q[j, o] <= 0:
                    o -= 1
            outcome[j] = o
        dot = bloch[j, 0] * guesses[o, 0] + bloch[j, 1] * guesses[o, 1] + bloch[j, 2] * guesses[o, 2]
        fid[j] = 0.5 * (1.0 + dot)
    return outcome, fid


# ----------------------------------------------------------------- MLE


@njit(cache=True)
def _homog(m):
    r = np.empty(4)
    r[0] = 1.0
    r[1] = m[0]
    r[2] = m[1]
    r[3] = m[2]
    return r


@njit(cache=True)
def _value(c, ctot, forms, fsum, m):
    r = _homog(m)
    s = 0.0
    for i in range(forms.shape[0]):
        if c[i] > 0:
            s += c[i] * math.log(max(_form(forms[i], r, r), TINY))
    return s - ctot * math.log(max(_form(fsum, r, r), TINY))


@njit(cache=True)
def _grad(c, ctot, forms, fsum, m):
    r = _homog(m)
    g = np.zeros(3)
    for i in range(forms.shape[0]):
        if c[i] > 0:
            w = c[i] / max(_form(forms[i], r, r), TINY)
            for a in range(3):
                acc = 0.0
                for b in range(4):
                    acc += forms[i, a + 1, b] * r[b]
                g[a] += 2.0 * w * acc
    wq = ctot / max(_form(fsum, r, r), TINY)
    for a in range(3):
        acc = 0.0
        for b in range(4):
            acc += fsum[a + 1, b] * r[b]
        g[a] -= 2.0 * wq * acc
    return g


@njit(cache=True)
def _delta(c, ctot, forms, fsum, z, y):
    ry = _homog(y)
    d = np.zeros(4)
    s = np.empty(4)
    for a in range(3):
        d[a + 1] = z[a] - y[a]
    for a in range(4):
        s[a] = 2.0 * ry[a] + d[a]
    out = 0.0
    for i in range(forms.shape[0]):
        if c[i] > 0:
            q = max(_form(forms[i], ry, ry), TINY)
            out += c[i] * math.log1p(_form(forms[i], d, s) / q)
    big = max(_form(fsum, ry, ry), TINY)
    return out - ctot * math.log1p(_form(fsum, d, s) / big)


@njit(cache=True)
def _tnorm(g, x):
    gx = g[0] * x[0] + g[1] * x[1] + g[2] * x[2]
    s = 0.0
    for a in range(3):
        v = g[a] - gx * x[a]
        s += v * v
    return math.sqrt(s)


@njit(cache=True)
def _feasible(c, forms, fsum, m):
    r = _homog(m)
    big = _form(fsum, r, r)
    for i in range(forms.shape[0]):
        if c[i] > 0 and not _form(forms[i], r, r) > FEASIBLE * big:
            return False
    return True


@njit(cache=True)
def _apg_one(c, ctot, forms, fsum, start, tol, maxiter):
    x = start.copy()
    if not _feasible(c, forms, fsum, x):
        return x, False, np.inf, 0
    x_prev = x.copy()
    y = x.copy()
    t = 1.0
    theta = 1.0
    y_is_x = True
    gx = _grad(c, ctot, forms, fsum, x)
    gy = gx.copy()
    gnorm = _tnorm(gx, x)
    if not math.isfinite(gnorm):
        return x, False, np.inf, 0
    if gnorm < tol:
        return x, True, gnorm, 0
    it = 0
    z = np.empty(3)
    while it < maxiter:
        it += 1
        wn = 0.0
        for a in range(3):
            z[a] = y[a] + t * gy[a]
            wn += z[a] * z[a]
        wn = math.sqrt(wn)
        if not wn > 0:
            t *= 0.5
            if t < T_MIN:
                break
            continue
        gdz = 0.0
        dz2 = 0.0
        for a in range(3):
            z[a] /= wn
            dza = z[a] - y[a]
            gdz += gy[a] * dza
            dz2 += dza * dza
        df = _delta(c, ctot, forms, fsum, z, y)
        if not df >= gdz - dz2 / (2.0 * t):
            t *= 0.5
            if t < T_MIN:
                break
            continue
        if _delta(c, ctot, forms, fsum, z, x) < 0 and not y_is_x:
            theta = 1.0
            y[:] = x
            gy[:] = gx
            y_is_x = True
            continue
        x_prev[:] = x
        x[:] = z
        gx = _grad(c, ctot, forms, fsum, x)
        gnorm = _tnorm(gx, x)
        if gnorm < tol:
            return x, True, gnorm, it
        th_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        beta = (theta - 1.0) / th_new
        theta = th_new
        yn = 0.0
        for a in range(3):
            y[a] = x[a] + beta * (x[a] - x_prev[a])
            yn += y[a] * y[a]
        yn = math.sqrt(yn)
        for a in range(3):
            y[a] /= yn
        y_is_x = beta == 0.0
        if y_is_x:
            gy[:] = gx
        else:
            gy = _grad(c, ctot, forms, fsum, y)
        t = min(t * GROW, T_MAX)
    return x, False, gnorm, it


@njit(cache=True, parallel=True)
def _apg_batch(freqs, forms, starts, tol, maxiter):
    nb = freqs.shape[0]
    ns = starts.shape[0]
    fsum = forms.sum(axis=0)
    out_x = np.empty((nb, 3))
    out_f = np.empty(nb)
    out_c = np.zeros(nb, dtype=np.bool_)
    out_g = np.empty(nb)
    out_i = np.zeros(nb, dtype=np.int64)
    for b in prange(nb):
        c = freqs[b]
        ctot = c.sum()
        best = -1
        best_f = 0.0
        fallback = 0
        fallback_g = np.inf
        xs = np.empty((ns, 3))
        gs = np.empty(ns)
        fs = np.empty(ns)
        for s in range(ns):
            x, conv, gn, it = _apg_one(c, ctot, forms, fsum, starts[s], tol, maxiter)
            xs[s] = x
            gs[s] = gn
            fs[s] = _value(c, ctot, forms, fsum, x)
            out_i[b] += it
            if conv:
                if best < 0 or fs[s] > best_f + 1e-12:
                    best = s
                    best_f = fs[s]
            elif gn < fallback_g:
                fallback = s
                fallback_g = gn
        if best >= 0:
            out_c[b] = True
        else:
            best = fallback
        out_x[b] = xs[best]
        out_f[b] = fs[best]
        out_g[b] = gs[best]
    return out_x, out_f, out_c, out_g, out_i


def apg_mle_batch(freqs, forms, starts, tol=1e-10, maxiter=10_000):
    return _apg_batch(
        np.ascontiguousarray(freqs, dtype=np.float64),
        np.ascontiguousarray(forms, dtype=np.float64),
        np.ascontiguousarray(starts, dtype=np.float64),
        float(tol),
        int(maxiter),
    )
