"""Weierstrass functions on C/(Z + tau Z) at arbitrary precision.

Everything is evaluated through Jacobi theta_1(pi z, q) with nome
q = exp(i pi tau), which converges geometrically once tau is anywhere near
the fundamental domain.  A LatticeContext pins tau and a working precision
and caches the lattice constants; evaluation reduces z into the fundamental
cell and applies the exact quasi-periodicity corrections.

Conventions: periods 1 and tau, eta1 = 2 zeta(1/2), eta2 = 2 zeta(tau/2),
Legendre relation eta1 tau - eta2 = 2 pi i.
"""

from __future__ import annotations

from math import comb

from mpmath import mp, mpc, mpf, jtheta, exp, floor, pi as mp_pi

from .errors import NotInUpperHalfPlane, PoleAtLatticePoint

GUARD_BITS = 32


class LatticeContext:
    """Fixed (tau, precision) with cached eta1, eta2, q, g2, g3."""

    __slots__ = ("tau", "precision_bits", "q", "eta1", "eta2", "g2", "g3")

    def __init__(self, tau, precision_bits: int):
        self.precision_bits = int(precision_bits)
        with mp.workprec(self.precision_bits + GUARD_BITS):
            tau = mpc(tau)
            if not tau.imag > 0:
                raise NotInUpperHalfPlane(f"Im tau = {tau.imag}")
            self.tau = tau
            self.q = exp(1j * mp.pi * tau)
            th1 = jtheta(1, 0, self.q, 1)
            th3 = jtheta(1, 0, self.q, 3)
            self.eta1 = -mp.pi**2 * th3 / (3 * th1)
            self.eta2 = self.eta1 * tau - 2j * mp.pi
            e1 = self._wp_raw(mpf(1) / 2)
            e2 = self._wp_raw(tau / 2)
            e3 = self._wp_raw((1 + tau) / 2)
            self.g2 = 2 * (e1**2 + e2**2 + e3**2)
            self.g3 = 4 * e1 * e2 * e3

    def reduce_point(self, z):
        """Split z = z0 + m + n*tau with z0 in the centered fundamental cell."""
        z = mpc(z)
        b = z.imag / self.tau.imag
        a = z.real - b * self.tau.real
        m = int(floor(a + mpf(1) / 2))
        n = int(floor(b + mpf(1) / 2))
        return z - m - n * self.tau, m, n

    def _theta_ratios(self, z0, order: int):
        """theta_1 and its first `order` z-derivatives at pi*z0."""
        v = mp.pi * z0
        return [jtheta(1, v, self.q, k) for k in range(order + 1)]

    def _wp_raw(self, z0):
        t0, t1, t2 = self._theta_ratios(z0, 2)
        return -self.eta1 - mp.pi**2 * (t2 * t0 - t1 * t1) / (t0 * t0)

    def _wp_prime_raw(self, z0):
        t0, t1, t2, t3 = self._theta_ratios(z0, 3)
        return -mp.pi**3 * (t3 * t0 * t0 - 3 * t2 * t1 * t0 + 2 * t1**3) / t0**3


def zeta(ctx: LatticeContext, z):
    """Weierstrass zeta; quasi-periodic with increments eta1, eta2."""
    with mp.workprec(ctx.precision_bits + GUARD_BITS):
        z0, m, n = ctx.reduce_point(z)
        if z0 == 0:
            raise PoleAtLatticePoint("zeta has a pole on the lattice")
        t0, t1 = ctx._theta_ratios(z0, 1)
        return ctx.eta1 * z0 + mp.pi * t1 / t0 + m * ctx.eta1 + n * ctx.eta2


def p_and_derivatives(ctx: LatticeContext, z, order: int):
    """[wp(z), wp'(z), ..., wp^(order)(z)] via the differentiated ODE.

    wp'' = 6 wp^2 - g2/2 seeds a recurrence that needs no theta derivatives
    beyond the third.
    """
    with mp.workprec(ctx.precision_bits + GUARD_BITS):
        z0, _, _ = ctx.reduce_point(z)
        if z0 == 0:
            raise PoleAtLatticePoint("wp has a pole on the lattice")
        out = [ctx._wp_raw(z0)]
        if order >= 1:
            out.append(ctx._wp_prime_raw(z0))
        if order >= 2:
            out.append(6 * out[0] ** 2 - ctx.g2 / 2)
        for k in range(1, order - 1):
            nxt = 6 * sum(comb(k, j) * out[j] * out[k - j] for j in range(k + 1))
            out.append(nxt)
        return out[: order + 1]


def zeta_derivatives(ctx: LatticeContext, z, order: int):
    """[zeta(z), zeta'(z), ...]; zeta' = -wp and onward."""
    out = [zeta(ctx, z)]
    if order >= 1:
        out.extend(-w for w in p_and_derivatives(ctx, z, order - 1))
    return out


def sigma(ctx: LatticeContext, z):
    """Weierstrass sigma: entire, sigma(z) ~ z at 0, zeros on the lattice.

    sigma(z + m + n tau) picks up (-1)^(m+n+mn) exp((m eta1 + n eta2)(z + (m
    + n tau)/2)), which is what makes balanced sigma-quotients doubly
    periodic.
    """
    with mp.workprec(ctx.precision_bits + GUARD_BITS):
        z0, m, n = ctx.reduce_point(z)
        if z0 == 0:
            return mpc(0)
        t0 = jtheta(1, mp.pi * z0, ctx.q)
        th10 = jtheta(1, 0, ctx.q, 1)
        base = exp(ctx.eta1 * z0 * z0 / 2) * t0 / (mp.pi * th10)
        if m == 0 and n == 0:
            return base
        w = m + n * ctx.tau
        eta = m * ctx.eta1 + n * ctx.eta2
        sign = -1 if (m + n + m * n) % 2 else 1
        return sign * base * exp(eta * (z0 + w / 2))


def j_invariant(tau, precision_bits: int):
    """Klein j (normalized so j(i) = 1728), computed on the reduced modulus."""
    with mp.workprec(precision_bits + GUARD_BITS):
        tau_red, _ = reduce_modulus(tau)
        ctx = LatticeContext(tau_red, precision_bits)
        c = ctx.g2**3
        return 1728 * c / (c - 27 * ctx.g3**2)


def reduce_modulus(tau):
    """Move tau into the SL2(Z) fundamental domain.

    Returns (tau', (a, b, c, d)) with tau' = (a tau + b)/(c tau + d),
    |Re tau'| <= 1/2 and |tau'| >= 1 up to working-precision slack.
    """
    tau = mpc(tau)
    if not tau.imag > 0:
        raise NotInUpperHalfPlane(f"Im tau = {tau.imag}")
    a, b, c, d = 1, 0, 0, 1
    eps = mpf(2) ** (-mp.prec + 8)
    for _ in range(10000):
        n = int(floor(tau.real + mpf(1) / 2))
        if n:
            tau -= n
            a, b = a - n * c, b - n * d
        if abs(tau) < 1 - eps:
            tau = -1 / tau
            a, b, c, d = -c, -d, a, b
        else:
            break
    # boundary representatives: Re >= 0 on the unit arc, +1/2 over -1/2
    if abs(abs(tau) - 1) <= eps and tau.real < -eps:
        tau = -1 / tau
        a, b, c, d = -c, -d, a, b
    if abs(tau.real + mpf(1) / 2) <= eps:
        tau += 1
        a, b = a + c, b + d
    return tau, (a, b, c, d)
