"""Hot numeric kernels, written in numba-compatible numpy.

Everything here is defined inside :func:`make_kernels` so the same source can
be compiled with ``@njit`` or left as plain python.  The kernels draw their
randomness from ``np.random`` seeded at entry: under numba this is numba's
internal per-thread generator, under plain python the legacy numpy global
state.  Either way a fixed seed gives a fixed draw sequence within one mode.
"""

import math
from types import SimpleNamespace

import numpy as np

# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_2PI = math.log(2.0 * math.pi)


def make_kernels(decorate):
    """Build the kernel namespace, decorating each function with `decorate`."""

    @decorate
    def ndtri(p):
        # Acklam approximation refined by one Halley step with erfc.
        if p <= 0.0:
            return -np.inf
        if p >= 1.0:
            return np.inf
        plow = 0.02425
        if p < plow:
            q = math.sqrt(-2.0 * math.log(p))
            x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
        elif p > 1.0 - plow:
            q = math.sqrt(-2.0 * math.log(1.0 - p))
            x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                  / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
        else:
            q = p - 0.5
            r = q * q
            x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
                 / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
        if abs(x) < 37.0:  # exp(x^2/2) overflows beyond ~38.6
            e = 0.5 * math.erfc(-x / _SQRT2) - p
            u = e * _SQRT_2PI * math.exp(0.5 * x * x)
            x = x - u / (1.0 + 0.5 * x * u)
        return x

    @decorate
    def log_ndtr(z):
        if z > -1.0:
            return math.log(0.5 * math.erfc(-z / _SQRT2))
        if z > -30.0:
            v = 0.5 * math.erfc(-z / _SQRT2)
            return math.log(v)
        # asymptotic expansion of the lower tail
        z2 = z * z
        return (-0.5 * z2 - 0.5 * _LOG_2PI - math.log(-z)
                + math.log(1.0 - 1.0 / z2 + 3.0 / (z2 * z2)))

    @decorate
    def truncnorm_lower(mu, sd, lo):
        """One draw from N(mu, sd^2) restricted to [lo, inf)."""
        if lo == -np.inf:
            return mu + sd * np.random.standard_normal()
        a = (lo - mu) / sd
        if a > 4.0:
            # Robert's exponential rejection for the far tail
            alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
            while True:
                z = a - math.log(np.random.random()) / alpha
                d = z - alpha
                if np.random.random() <= math.exp(-0.5 * d * d):
                    return mu + sd * z
        qc = 0.5 * math.erfc(a / _SQRT2)  # upper-tail mass at a
        u = np.random.random()
        z = -ndtri((1.0 - u) * qc)
        if z < a:
            z = a
        return mu + sd * z

    @decorate
    def truncnorm_upper(mu, sd, hi):
        return -truncnorm_lower(-mu, sd, -hi)

    @decorate
    def gibbs_truncated(prec, mu, x0, n_keep, burn_in, seed):
        """Component-wise Gibbs for N(mu, prec^-1) truncated to x >= 0.

        Returns an (n_keep, m) array of post-burn-in states, one per sweep.
        """
        np.random.seed(seed)
        m = mu.shape[0]
        x = x0.copy()
        w = prec @ (x - mu)
        out = np.empty((n_keep, m))
        total = burn_in + n_keep
        for sweep in range(total):
            for i in range(m):
                pii = prec[i, i]
                cond_var = 1.0 / pii
                w_excl = w[i] - pii * (x[i] - mu[i])
                cond_mean = mu[i] - cond_var * w_excl
                new = truncnorm_lower(cond_mean, math.sqrt(cond_var), 0.0)
                delta = new - x[i]
                if delta != 0.0:
                    for j in range(m):
                        w[j] += prec[j, i] * delta
                    x[i] = new
            if sweep >= burn_in:
                out[sweep - burn_in, :] = x
        return out

    @decorate
    def gibbs_relu(M, P, h, x0, n_keep, burn_in, seed):
        """Component-wise Gibbs for the ReLU-likelihood posterior.

        Target: exp(-0.5 relu(x)^T M relu(x) + h^T relu(x) - 0.5 x^T P x),
        i.e. the likelihood acts on relu(x) while the prior acts on raw x.
        Each full conditional is a two-piece truncated normal; the piece is
        chosen by its exact (log) mass.
        """
        np.random.seed(seed)
        m = x0.shape[0]
        x = x0.copy()
        y = np.maximum(x, 0.0)
        v = M @ y   # likelihood-side linear state
        s = P @ x   # prior-side linear state
        out = np.empty((n_keep, m))
        total = burn_in + n_keep
        for sweep in range(total):
            for i in range(m):
                pii = P[i, i]
                mii = M[i, i]
                d = v[i] - mii * y[i] - h[i]
                sp = s[i] - pii * x[i]
                # negative piece: prior only
                var0 = 1.0 / pii
                sd0 = math.sqrt(var0)
                m0 = -sp * var0
                lm0 = 0.5 * sp * sp * var0 + 0.5 * math.log(var0) + log_ndtr(-m0 / sd0)
                # positive piece: likelihood and prior combine
                q = mii + pii
                var1 = 1.0 / q
                sd1 = math.sqrt(var1)
                m1 = -(sp + d) * var1
                lm1 = 0.5 * (sp + d) * (sp + d) * var1 + 0.5 * math.log(var1) + log_ndtr(m1 / sd1)
                # choose the piece by relative mass
                if lm0 > lm1:
                    p_neg = 1.0 / (1.0 + math.exp(lm1 - lm0))
                else:
                    e = math.exp(lm0 - lm1)
                    p_neg = e / (1.0 + e)
                if np.random.random() < p_neg:
                    new = truncnorm_upper(m0, sd0, 0.0)
                else:
                    new = truncnorm_lower(m1, sd1, 0.0)
                ynew = max(new, 0.0)
                dy = ynew - y[i]
                dx = new - x[i]
                if dy != 0.0:
                    for j in range(m):
                        v[j] += M[j, i] * dy
                if dx != 0.0:
                    for j in range(m):
                        s[j] += P[j, i] * dx
                x[i] = new
                y[i] = ynew
            if sweep >= burn_in:
                out[sweep - burn_in, :] = x
        return out

    @decorate
    def pgd_bb(H, g, x0, lower_bounded, tol, max_iter):
        """Minimize 0.5 x^T H x - g^T x, optionally subject to x >= 0.

        Projected gradient with Barzilai-Borwein steps and a monotone
        backtracking safeguard.  Every fifth iteration takes a projected
        Newton step on the current free set, which keeps convergence fast
        when H is severely ill conditioned and plain gradient steps stall.
        Returns (x, n_iter, converged).
        """
        m = g.shape[0]
        x = x0.copy()
        if lower_bounded:
            x = np.maximum(x, 0.0)
        grad = H @ x - g
        fx = 0.5 * np.dot(x, grad - g)

        # stationarity measure: ||x - proj(x - grad)||_inf
        def_res = 0.0
        for i in range(m):
            step = x[i] - grad[i]
            if lower_bounded and step < 0.0:
                step = 0.0
            r = abs(x[i] - step)
            if r > def_res:
                def_res = r
        if def_res <= tol:
            return x, 0, True

        hmax = 0.0
        for i in range(m):
            if abs(H[i, i]) > hmax:
                hmax = abs(H[i, i])
        alpha = 1.0 / hmax if hmax > 0.0 else 1.0

        n_iter = 0
        converged = False
        while n_iter < max_iter:
            n_iter += 1
            newton = n_iter % 5 == 1
            if newton:
                # Newton direction restricted to coordinates that are free
                # (strictly positive, or at the bound with inward gradient)
                k = 0
                idx = np.empty(m, dtype=np.int64)
                for i in range(m):
                    if (not lower_bounded) or x[i] > 0.0 or grad[i] < 0.0:
                        idx[k] = i
                        k += 1
                if k == 0:
                    newton = False
                else:
                    Hff = np.empty((k, k))
                    gf = np.empty(k)
                    for a in range(k):
                        gf[a] = grad[idx[a]]
                        for b in range(k):
                            Hff[a, b] = H[idx[a], idx[b]]
                    df = np.linalg.solve(Hff, gf)
                    d = np.zeros(m)
                    for a in range(k):
                        d[idx[a]] = -df[a]
                    tstep = 1.0
                    accepted = False
                    fn = fx
                    xn = x
                    gn = grad
                    for _bt in range(60):
                        xn = x + tstep * d
                        if lower_bounded:
                            xn = np.maximum(xn, 0.0)
                        gn = H @ xn - g
                        fn = 0.5 * np.dot(xn, gn - g)
                        if fn <= fx + 1e-14 * (1.0 + abs(fx)):
                            accepted = True
                            break
                        tstep *= 0.5
                    if not accepted:
                        newton = False
            if not newton:
                # backtrack until monotone decrease
                for _bt in range(60):
                    xn = x - alpha * grad
                    if lower_bounded:
                        xn = np.maximum(xn, 0.0)
                    gn = H @ xn - g
                    fn = 0.5 * np.dot(xn, gn - g)
                    if fn <= fx + 1e-14 * (1.0 + abs(fx)):
                        break
                    alpha *= 0.5
            sv = xn - x
            yv = gn - grad
            x = xn
            grad = gn
            fx = fn
            res = 0.0
            for i in range(m):
                step = x[i] - grad[i]
                if lower_bounded and step < 0.0:
                    step = 0.0
                r = abs(x[i] - step)
                if r > res:
                    res = r
            if res <= tol:
                converged = True
                break
            sy = np.dot(sv, yv)
            ss = np.dot(sv, sv)
            if sy > 1e-300 and ss > 0.0:
                alpha = ss / sy  # BB1
                if alpha < 1e-12:
                    alpha = 1e-12
                elif alpha > 1e12:
                    alpha = 1e12
        return x, n_iter, converged

    return SimpleNamespace(
        ndtri=ndtri,
        log_ndtr=log_ndtr,
        truncnorm_lower=truncnorm_lower,
        truncnorm_upper=truncnorm_upper,
        gibbs_truncated=gibbs_truncated,
        gibbs_relu=gibbs_relu,
        pgd_bb=pgd_bb,
    )
