"""Pure-NumPy kernels: forward filter pass and quadrature log-likelihood.

This is the fallback backend; the compiled extension implements the same
two entry points with identical semantics.  Both operate on plain arrays
so they stay importable without any package context.

Conventions shared by both backends:
  * step 0 carries the initial moments (mean 0, variance 1) and no update;
  * the mode solve is a safeguarded Newton on the score, starting at the
    predictive mean, falling back to bisection on an analytic bracket
    [m + v*(usum - J) - 1, m + v*usum + 1] that always contains the root
    (a Newton step is also rejected when it stops halving the step size);
  * failures are reported as index tuples, never exceptions (wrappers in
    the filtering/likelihood modules translate them).
"""

import numpy as np

BACKEND = "python"

_SCORE_TOL = 1e-10
_MAX_NEWTON = 50


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def filter_pass(usum, beta, state_var):
    """Forward Gaussian-approximation filter for all subjects at once.

    Parameters
    ----------
    usum : (I, N) array
        Per-subject, per-step sums of the hemispace indicators over trials.
    beta : (J,) array
        Per-trial intercepts.
    state_var : float
        Innovation variance of the latent random walk.

    Returns
    -------
    pred_mean, pred_var, filt_mean, filt_var : (I, N) arrays
    err_i, err_n : int
        Index of the first non-converged update, or (-1, -1) on success.
    """
    usum = np.ascontiguousarray(usum, dtype=float)
    beta = np.ascontiguousarray(beta, dtype=float)
    I, N = usum.shape
    J = beta.size
    pred_mean = np.zeros((I, N))
    pred_var = np.ones((I, N))
    filt_mean = np.zeros((I, N))
    filt_var = np.ones((I, N))
    for n in range(1, N):
        m = filt_mean[:, n - 1].copy()
        v = filt_var[:, n - 1] + state_var
        pred_mean[:, n] = m
        pred_var[:, n] = v
        if J == 0:
            filt_mean[:, n] = m
            filt_var[:, n] = v
            continue
        un = usum[:, n]
        z = m.copy()
        lo = m + v * (un - J) - 1.0
        hi = m + v * un + 1.0
        dxold = hi - lo
        conv = np.zeros(I, dtype=bool)
        curv = np.full(I, np.nan)
        for _ in range(_MAX_NEWTON):
            sig = _sigmoid(beta[None, :] + z[:, None])
            s = (m - z) / v + un - sig.sum(axis=1)
            c = -1.0 / v - (sig * (1.0 - sig)).sum(axis=1)
            newly = ~conv & (np.abs(s) < _SCORE_TOL)
            curv[newly] = c[newly]
            conv |= newly
            if conv.all():
                break
            upd = ~conv
            lo = np.where(upd & (s > 0), z, lo)
            hi = np.where(upd & (s <= 0), z, hi)
            # take the Newton step only while it stays inside the bracket
            # AND keeps halving the step size; otherwise bisect, so a
            # ping-ponging Newton cannot stall the safeguard
            newton = z - s / c
            reject = (
                (newton <= lo) | (newton >= hi)
                | (np.abs(2.0 * s) > np.abs(dxold * c))
            )
            znew = np.where(reject, 0.5 * (lo + hi), newton)
            dxold = np.where(upd, np.abs(znew - z), dxold)
            z = np.where(upd, znew, z)
        if not conv.all():
            i = int(np.argmax(~conv))
            return pred_mean, pred_var, filt_mean, filt_var, i, n
        filt_mean[:, n] = z
        filt_var[:, n] = -1.0 / curv
    return pred_mean, pred_var, filt_mean, filt_var, -1, -1


def loglik_terms(F1, F2, beta, pred_mean, pred_var, gh_x, gh_w):
    """Sum of per-observation log marginal densities by Gauss-Hermite.

    F1, F2 : (I, J, N) arrays of the two von Mises component densities
    evaluated at each observed angle.  pred_mean/pred_var are the filter's
    predictive moments (step 0 holding the initial prior).

    Returns (total, err_i, err_j, err_n); error indices are -1 on success
    and point at the first non-positive or non-finite integrand otherwise.
    """
    I, J, N = F1.shape
    wbar = gh_w / np.sqrt(np.pi)
    total = 0.0
    for i in range(I):
        nodes = pred_mean[i][:, None] + np.sqrt(2.0 * pred_var[i])[:, None] * gh_x[None, :]
        t = beta[None, :, None] + nodes[:, None, :]  # (N, J, M)
        E = _sigmoid(t) @ wbar  # (N, J)
        dens = F2[i].T + (F1[i] - F2[i]).T * E  # (N, J)
        bad = ~np.isfinite(dens) | (dens <= 0.0)
        if bad.any():
            n, j = np.argwhere(bad)[0]
            return np.nan, i, int(j), int(n)
        total += float(np.log(dens).sum())
    return total, -1, -1, -1
