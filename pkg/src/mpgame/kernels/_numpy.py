"""Vectorized numpy kernels (fallback backend)."""
import numpy as np

TINY = 1e-300
T_MAX = 100.0
T_MIN = 1e-30
GROW = 1.25
# a start where an observed outcome has relative weight below this sits in a
# log(0) funnel of the likelihood and is skipped
FEASIBLE = 1e-12


def _homog(m):
    return np.concatenate([np.ones(m.shape[:-1] + (1,)), m], axis=-1)


def outcome_weights(bloch, forms):
    """q[n, i] = r_n . G_i . r_n with r = (1, m)."""
    r = _homog(np.asarray(bloch, dtype=np.float64))
    gr = np.einsum("iab,nb->nia", forms, r)
    return np.einsum("na,nia->ni", r, gr)


def score_trials(q, u, bloch, guesses):
    """Draw one outcome per trial from the renormalized weights and score it.

    Returns (outcome, fidelity); outcome is -1 where every weight is zero.
    """
    n, k = q.shape
    total = q[:, 0].copy()
    for i in range(1, k):
        total += q[:, i]
    thresh = u * total
    outcome = np.full(n, k - 1, dtype=np.int64)
    cum = np.zeros(n)
    undecided = np.ones(n, dtype=bool)
    for i in range(k):
        cum = cum + q[:, i]
        hit = undecided & (cum > thresh)
        outcome[hit] = i
        undecided &= ~hit
    # rounding can leave the draw past the last cumulative value
    last_nonzero = k - 1 - np.argmax(q[:, ::-1] > 0, axis=1)
    outcome = np.where(undecided, last_nonzero, outcome)
    outcome[~(total > 0)] = -1
    g = guesses[np.clip(outcome, 0, k - 1)]
    dot = bloch[:, 0] * g[:, 0] + bloch[:, 1] * g[:, 1] + bloch[:, 2] * g[:, 2]
    return outcome, 0.5 * (1.0 + dot)


# ----------------------------------------------------------------- MLE


class _Lik:
    """Normalized-outcome log-likelihood over unit Bloch vectors, batched."""

    def __init__(self, freqs, forms):
        self.c = freqs
        self.ctot = freqs.sum(axis=1)
        self.forms = forms
        self.fsum = forms.sum(axis=0)

    def parts(self, m, idx):
        r = _homog(m)
        gr = np.einsum("iab,nb->nia", self.forms, r)
        q = np.einsum("na,nia->ni", r, gr)
        gs = r @ self.fsum.T
        big_q = np.einsum("na,na->n", r, gs)
        return r, gr, q, gs, big_q

    def feasible(self, m, idx):
        _, _, q, _, big_q = self.parts(m, idx)
        ok = (q > FEASIBLE * big_q[:, None]) | (self.c[idx] <= 0)
        return ok.all(axis=1)

    def value(self, m, idx):
        _, _, q, _, big_q = self.parts(m, idx)
        c = self.c[idx]
        lq = np.where(c > 0, np.log(np.maximum(q, TINY)), 0.0)
        return (c * lq).sum(axis=1) - self.ctot[idx] * np.log(np.maximum(big_q, TINY))

    def grad(self, m, idx):
        _, gr, q, gs, big_q = self.parts(m, idx)
        c = self.c[idx]
        w = np.where(c > 0, c / np.maximum(q, TINY), 0.0)
        g = 2.0 * np.einsum("ni,nia->na", w, gr)[:, 1:]
        g -= 2.0 * (self.ctot[idx] / np.maximum(big_q, TINY))[:, None] * gs[:, 1:]
        return g

    def delta(self, z, y, idx):
        """f(z) - f(y) evaluated through weight differences (no cancellation)."""
        ry = _homog(y)
        d = np.zeros_like(ry)
        d[:, 1:] = z - y
        s = 2.0 * ry + d
        q = np.einsum("na,iab,nb->ni", ry, self.forms, ry)
        dq = np.einsum("na,iab,nb->ni", d, self.forms, s)
        big_q = np.einsum("na,ab,nb->n", ry, self.fsum, ry)
        dbig = np.einsum("na,ab,nb->n", d, self.fsum, s)
        c = self.c[idx]
        terms = np.where(c > 0, np.log1p(dq / np.maximum(q, TINY)), 0.0)
        return (c * terms).sum(axis=1) - self.ctot[idx] * np.log1p(dbig / np.maximum(big_q, TINY))


def _normalize(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _tangential_norm(g, x):
    return np.linalg.norm(g - np.sum(g * x, axis=1, keepdims=True) * x, axis=1)


def _apg_many(lik, prob, start, tol, maxiter):
    """Run the restarted projected-gradient ascent for many problems at once.

    ``prob`` maps each run to its row of frequencies.
    """
    nrun = len(prob)
    x = start.copy()
    x_prev = x.copy()
    y = x.copy()
    t = np.ones(nrun)
    theta = np.ones(nrun)
    y_is_x = np.ones(nrun, dtype=bool)
    gx = lik.grad(x, prob)
    gy = gx.copy()
    gnorm = _tangential_norm(gx, x)
    converged = gnorm < tol
    stalled = ~np.isfinite(gnorm) | ~lik.feasible(x, prob)
    converged &= ~stalled
    gnorm[stalled] = np.inf
    iters = np.zeros(nrun, dtype=np.int64)
    active = np.flatnonzero(~converged)
    while active.size:
        iters[active] += 1
        a = active
        p = prob[a]
        w = y[a] + t[a, None] * gy[a]
        wn = np.linalg.norm(w, axis=1)
        ok_w = wn > 0
        z = np.where(ok_w[:, None], w / np.where(ok_w, wn, 1.0)[:, None], y[a])
        dz = z - y[a]
        df = lik.delta(z, y[a], p)
        model = np.sum(gy[a] * dz, axis=1) - np.sum(dz * dz, axis=1) / (2.0 * t[a])
        accept = ok_w & (df >= model)

        rej = a[~accept]
        t[rej] *= 0.5
        stalled[rej[t[rej] < T_MIN]] = True

        acc_local = np.flatnonzero(accept)
        b = a[acc_local]
        zb = z[acc_local]
        dfx = lik.delta(zb, x[b], prob[b])
        restart = (dfx < 0) & ~y_is_x[b]
        rs = b[restart]
        theta[rs] = 1.0
        y[rs] = x[rs]
        gy[rs] = gx[rs]
        y_is_x[rs] = True

        mv_local = ~restart
        mv = b[mv_local]
        x_prev[mv] = x[mv]
        x[mv] = zb[mv_local]
        gx[mv] = lik.grad(x[mv], prob[mv])
        gnorm[mv] = _tangential_norm(gx[mv], x[mv])
        done = gnorm[mv] < tol
        converged[mv[done]] = True
        cont = mv[~done]
        th_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta[cont] ** 2))
        beta = (theta[cont] - 1.0) / th_new
        theta[cont] = th_new
        yc = _normalize(x[cont] + beta[:, None] * (x[cont] - x_prev[cont]))
        y[cont] = yc
        y_is_x[cont] = beta == 0.0
        gy[cont] = np.where(y_is_x[cont][:, None], gx[cont], lik.grad(yc, prob[cont]))
        t[cont] = np.minimum(t[cont] * GROW, T_MAX)

        active = active[~(converged[active] | stalled[active] | (iters[active] >= maxiter))]
    return x, converged, gnorm, iters


def apg_mle_batch(freqs, forms, starts, tol=1e-10, maxiter=10_000):
    """Multi-start ML reconstruction for a batch of frequency vectors.

    Returns (x, loglik, converged, gradnorm, iters) per problem. Among
    converged starts the highest likelihood wins; ties within 1e-12 go to the
    earliest start.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    forms = np.asarray(forms, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.float64)
    nb, ns = freqs.shape[0], starts.shape[0]
    lik = _Lik(freqs, forms)
    prob = np.repeat(np.arange(nb), ns)
    x0 = np.tile(starts, (nb, 1))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        x, conv, gnorm, iters = _apg_many(lik, prob, x0, tol, maxiter)
        f = lik.value(x, prob)

    x = x.reshape(nb, ns, 3)
    f = f.reshape(nb, ns)
    conv = conv.reshape(nb, ns)
    gnorm = gnorm.reshape(nb, ns)
    iters = iters.reshape(nb, ns)
    out_x = np.empty((nb, 3))
    out_f = np.empty(nb)
    out_c = np.zeros(nb, dtype=bool)
    out_g = np.empty(nb)
    out_i = iters.sum(axis=1)
    for b in range(nb):
        best = -1
        for s in range(ns):
            if not conv[b, s]:
                continue
            if best < 0 or f[b, s] > f[b, best] + 1e-12:
                best = s
        if best < 0:
            best = int(np.argmin(gnorm[b]))
        else:
            out_c[b] = True
        out_x[b] = x[b, best]
        out_f[b] = f[b, best]
        out_g[b] = gnorm[b, best]
    return out_x, out_f, out_c, out_g, out_i
