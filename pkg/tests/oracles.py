"""Slow, loop-based reference implementations used only by the tests.

Everything here is written from the defining formulas with scipy.stats and
plain Gauss-Legendre rules; nothing is shared with the package beyond the
fitted nuisance parameters themselves (kernel centres, bandwidths, supports,
regression coefficients).
"""

from __future__ import annotations

import numpy as np
from scipy import stats

CLAMP = 1e-10


def bisect_quantile(p, tol=1e-14):
    if p > 0.5:
        # upper tail through the survival function keeps full relative precision
        return -bisect_quantile(1.0 - p, tol)
    lo, hi = -40.0, 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stats.norm.cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gl(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def tanh_sinh(lo, hi, level=5, span=3.2):
    """Double-exponential rule on ``[lo, hi]``; robust to algebraic endpoint behaviour."""
    h = 2.0 ** -level
    t = np.arange(-span, span + h / 2, h)
    u = 0.5 * np.pi * np.sinh(t)
    x = np.tanh(u)
    w = h * 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    keep = np.abs(x) < 1.0
    return 0.5 * (hi - lo) * x[keep] + 0.5 * (hi + lo), 0.5 * (hi - lo) * w[keep]


class RefKernelDensity:
    """Truncated Gaussian-kernel conditional density of one arm."""

    def __init__(self, fit, support):
        self.s, self.x, self.h, self.hx = fit.s, fit.x, fit.h_s, fit.h_x
        self.lo, self.hi = support

    def weights(self, x):
        if self.x.shape[1] == 0:
            return np.full(self.s.size, 1.0 / self.s.size)
        k = np.prod(stats.norm.pdf((x[None, :] - self.x) / self.hx), axis=1)
        return k / k.sum()

    def raw(self, s, x):
        w = self.weights(x)
        s = np.asarray(s, dtype=float)[..., None]
        pdf = stats.norm.pdf(s, loc=self.s, scale=self.h) @ w
        cdf = stats.norm.cdf(s, loc=self.s, scale=self.h) @ w
        return pdf, cdf

    def __call__(self, s, x):
        """Truncated, renormalised density and CDF on ``[lo, hi]``."""
        p, F = self.raw(s, x)
        _, Fb = self.raw(np.array([self.lo, self.hi]), x)
        mass = Fb[1] - Fb[0]
        s = np.asarray(s, dtype=float)
        inside = (s >= self.lo) & (s <= self.hi)
        return np.where(inside, p / mass, 0.0), np.clip((F - Fb[0]) / mass, 0.0, 1.0)


def gaussian_copula(rho, u, v):
    a = stats.norm.ppf(np.clip(u, CLAMP, 1 - CLAMP))
    b = stats.norm.ppf(np.clip(v, CLAMP, 1 - CLAMP))
    if rho == 0.0:
        return np.ones(np.broadcast_shapes(np.shape(a), np.shape(b)))
    cov = np.array([[1.0, rho], [rho, 1.0]])
    a, b = np.broadcast_arrays(a, b)
    pts = np.stack([a, b], axis=-1)
    # scipy squeezes singleton axes of the result; restore the grid shape
    joint = np.reshape(stats.multivariate_normal(mean=[0.0, 0.0], cov=cov).pdf(pts), a.shape)
    return joint / (stats.norm.pdf(a) * stats.norm.pdf(b))


def gaussian_copula_scores(rho, u, v):
    """d log c / du and d log c / dv by the chain rule through the normal scores."""
    a = stats.norm.ppf(np.clip(u, CLAMP, 1 - CLAMP))
    b = stats.norm.ppf(np.clip(v, CLAMP, 1 - CLAMP))
    # log c = -0.5 log(1-rho^2) - (rho^2 (a^2+b^2) - 2 rho a b) / (2 (1-rho^2))
    dla = -(rho * rho * a - rho * b) / (1 - rho * rho)
    dlb = -(rho * rho * b - rho * a) / (1 - rho * rho)
    return dla / stats.norm.pdf(a), dlb / stats.norm.pdf(b)


class BruteForce:
    """Dense-quadrature estimating equations, one observation at a time.

    All integrals use tanh-sinh rules. The score corrections integrate the
    bounded product ``c_u (1(S <= s) - F)`` directly, piece by piece on
    ``[lo, S]`` and ``[S, hi]``, and the weighting estimator divides ``e`` by
    ``p_z`` literally.
    """

    def __init__(self, inputs, level=5):
        self.inp = inputs
        pdm = inputs.pd_model
        self.rho = pdm.copula.rho
        self.d1 = RefKernelDensity(inputs.nuisance.density1, pdm.support1)
        self.d0 = RefKernelDensity(inputs.nuisance.density0, pdm.support0)
        self.sup1, self.sup0 = pdm.support1, pdm.support0
        self.level = level

    def basis(self, wm, s1, s0):
        s1, s0 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s0, float))
        return np.stack([s1 ** j * s0 ** k for j, k in wm.terms], axis=-1)

    def mu(self, z, s, x):
        c = self.inp.nuisance.outcome(z).coefficients
        return c[0] + c[1] * np.asarray(s) + x @ c[2:]

    def pi(self, x):
        b = self.inp.nuisance.propensity.coefficients
        p = 1.0 / (1.0 + np.exp(-(b[0] + x @ b[1:])))
        eps = self.inp.nuisance.propensity.clamp
        return min(max(p, eps), 1 - eps)

    def block(self, z, wm, x, t1, t0):
        """Integrand pieces on the tensor grid ``t1 x t0``: G (.., q), G*mu, G g g', scores."""
        p1, F1 = self.d1(t1, x)
        p0, F0 = self.d0(t0, x)
        U, V = np.meshgrid(F1, F0, indexing="ij")
        S1, S0 = np.meshgrid(t1, t0, indexing="ij")
        e = gaussian_copula(self.rho, U, V) * np.outer(p1, p0)
        g = self.basis(wm, S1, S0)
        we = wm.weight(S1, S0) * e
        mu = self.mu(z, S1 if z == 1 else S0, x)
        su, sv = gaussian_copula_scores(self.rho, U, V) if self.rho else (0 * U, 0 * U)
        return {
            "G": we[..., None] * g,
            "Gmu": (we * mu)[..., None] * g,
            "Ggg": we[..., None, None] * g[..., :, None] * g[..., None, :],
            "su": su, "sv": sv, "F1": U, "F0": V,
        }

    @staticmethod
    def _int2(vals, w1, w0, factor=None):
        if factor is not None:
            vals = vals * factor.reshape(factor.shape + (1,) * (vals.ndim - 2))
        return np.tensordot(np.outer(w1, w0), vals, axes=([0, 1], [0, 1]))

    def observation(self, z, i):
        """``{estimator: (A_vec, A_mat)}`` for observation ``i`` and arm ``z``."""
        data = self.inp.data
        wm = self.inp.wm(z)
        x, S, Y, Z = data.x[i], data.s[i], data.y[i], data.z[i]
        pi = self.pi(x)
        t1, w1 = tanh_sinh(*self.sup1, self.level)
        t0, w0 = tanh_sinh(*self.sup0, self.level)
        full = self.block(z, wm, x, t1, t0)
        l1 = {k: self._int2(full[k], w1, w0) for k in ("Gmu", "Ggg")}

        def slice_at(arm):
            # one-dimensional integral of G(S, s0) / p1(S) or G(s1, S) / p0(S)
            if arm == 1:
                blk = self.block(z, wm, x, np.array([S]), t0)
                dens = self.d1(S, x)[0]
                return {k: np.tensordot(w0, blk[k][0], axes=(0, 0)) / dens for k in ("G", "Gmu", "Ggg")}
            blk = self.block(z, wm, x, t1, np.array([S]))
            dens = self.d0(S, x)[0]
            return {k: np.tensordot(w1, blk[k][:, 0], axes=(0, 0)) / dens for k in ("G", "Gmu", "Ggg")}

        def r_integral(arm, key):
            # iint h r_u = iint h - iint h su (1(S <= s1) - F1), and the v analogue
            base = l1[key]
            if self.rho == 0.0:
                return base
            lo, hi = self.sup1 if arm == 1 else self.sup0
            cut = min(max(S, lo), hi)
            corr = 0.0
            for a, b, ind in ((lo, cut, 0.0), (cut, hi, 1.0)):
                if b <= a:
                    continue
                tp, wp = tanh_sinh(a, b, self.level)
                if arm == 1:
                    blk = self.block(z, wm, x, tp, t0)
                    corr = corr + self._int2(blk[key], wp, w0, blk["su"] * (ind - blk["F1"]))
                else:
                    blk = self.block(z, wm, x, t1, tp)
                    corr = corr + self._int2(blk[key], w1, wp, blk["sv"] * (ind - blk["F0"]))
            return base - corr

        own = Z == z
        arm = int(Z)
        sl = slice_at(arm)
        ipw_own = (1.0 / pi if z == 1 else 1.0 / (1.0 - pi)) if own else 0.0
        tp_vec = ipw_own * sl["G"] * Y if own else np.zeros(wm.q)
        tp_mat = ipw_own * sl["Ggg"] if own else np.zeros((wm.q, wm.q))

        w_arm = 1.0 / pi if arm == 1 else 1.0 / (1.0 - pi)
        eif_vec = w_arm * (sl["Gmu"] - r_integral(arm, "Gmu")) + l1["Gmu"]
        eif_mat = w_arm * (sl["Ggg"] - r_integral(arm, "Ggg")) + l1["Ggg"]
        if own:
            eif_vec = eif_vec + ipw_own * sl["G"] * (Y - self.mu(z, S, x))
        return {
            "pd_om": (l1["Gmu"], l1["Ggg"]),
            "tp_pd": (tp_vec, tp_mat),
            "eif": (eif_vec, eif_mat),
        }

    def solve(self, z):
        acc = {}
        for i in range(self.inp.data.n):
            for k, (v, m) in self.observation(z, i).items():
                a = acc.setdefault(k, [0.0, 0.0])
                a[0] = a[0] + v
                a[1] = a[1] + m
        return {k: np.linalg.solve(m, v) for k, (v, m) in acc.items()}


def truncated_mean(fit, support, x):
    """Mean of the truncated kernel conditional density, from Gaussian moment formulas."""
    ref = RefKernelDensity(fit, support)
    w = ref.weights(x)
    lo, hi = support
    a = (lo - fit.s) / fit.h_s
    b = (hi - fit.s) / fit.h_s
    mass = stats.norm.cdf(b) - stats.norm.cdf(a)
    first = fit.s * mass - fit.h_s * (stats.norm.pdf(b) - stats.norm.pdf(a))
    return float(w @ first / (w @ mass))


def aipw(inputs, z):
    """Textbook augmented IPW estimate of E(Y_z) and its influence-curve variance."""
    data, nf = inputs.data, inputs.nuisance
    pdm = inputs.pd_model
    fit, support = (nf.density1, pdm.support1) if z == 1 else (nf.density0, pdm.support0)
    c = nf.outcome(z).coefficients
    m = np.array([c[0] + c[1] * truncated_mean(fit, support, xi) + xi @ c[2:] for xi in data.x])
    pi = nf.propensity(data.x)
    if z == 1:
        phi = m + data.z / pi * (data.y - m)
    else:
        phi = m + (1 - data.z) / (1 - pi) * (data.y - m)
    est = phi.mean()
    var = np.sum((phi - est) ** 2) / data.n ** 2
    return est, var
