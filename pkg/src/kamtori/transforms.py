"""Canonical coordinate changes and the Lie-series transformation engine.

Covers exact point transforms (polar recombination, translations, rescaling,
rotation), Lie-series application of generating functions to Hamiltonians and
to phase-space points, transformation-chain recording with forward/inverse
point mapping, and the orbital-element to secular-variable conversion.

Sign conventions: ``exp(L_chi) f = sum_j (1/j!) {chi, .}^j f`` and a
transformed Hamiltonian ``H' = exp(L_chi) H`` satisfies ``H'(z) = H(Phi(z))``
with ``Phi`` the associated change of variables, so applying ``exp(L_chi)`` to
the coordinate functions and evaluating at a new-variable point returns the
old-variable point.
"""

from __future__ import annotations

import hashlib
import json
import math
import os

from . import series as ps
from .series import PoissonSeries, SeriesError

TWO_PI = 2.0 * math.pi


class NotElliptic(SeriesError):
    pass


class NonTerminatingExpansion(SeriesError):
    pass


# -- Lie series ---------------------------------------------------------------


def affine_lie_derivative(chi, f, xi=None, pairs=None, trunc=None):
    """L f = {chi, f} + sum_i xi_i df/dp_i  (generator chi + xi . q)."""
    if trunc is None:
        trunc = (f.max_action_degree, f.max_trig_degree)
    if chi is not None and not chi.is_empty():
        out = ps.poisson_bracket(chi, f, pairs=pairs, trunc=trunc)
    else:
        out = PoissonSeries(f.n_dof, trunc[0], trunc[1], kinds=f.kinds,
                            hmeasure=f.hmeasure, mode=f.mode)
    if xi is not None:
        for i, x in enumerate(xi):
            if x != 0.0:
                out = ps.add(out, ps.derivative(f, "mom", i).scaled(float(x)))
    out.max_action_degree, out.max_trig_degree = trunc
    return out


def lie_series_apply(chi, H, trunc=None, xi=None, tol=0.0, j_max=None):
    """Apply ``exp(L_chi)`` (optionally with an extra ``xi . q`` part) to H.

    The expansion must terminate under the working truncation; if the running
    term fails to vanish within ``j_max`` applications the generator is
    rejected as non-terminating.
    """
    if trunc is None:
        trunc = (H.max_action_degree, H.max_trig_degree)
    if j_max is None:
        j_max = trunc[0] + trunc[1] + 8
    total = PoissonSeries(H.n_dof, trunc[0], trunc[1], kinds=H.kinds,
                          hmeasure=H.hmeasure, mode=H.mode)
    for (exps, cexps, trig), c in H.terms.items():
        total.accumulate(exps, cexps, trig, c)
    term = total.copy()
    scale = ps.l1_norm(H)
    for j in range(1, j_max + 1):
        term = affine_lie_derivative(chi, term, xi=xi, trunc=trunc).scaled(1.0 / j)
        if term.is_empty():
            return total
        total = ps.add(total, term)
        if tol > 0.0 and ps.l1_norm(term) < tol * max(scale, 1.0):
            return total
    raise NonTerminatingExpansion(
        f"Lie series did not terminate within {j_max} applications "
        f"(generator norm {ps.l1_norm(chi) if chi is not None else 0.0:.3e})")


# -- exact polynomial substitutions --------------------------------------------


def translate_actions(H, c):
    """Exact Taylor shift H(p + c, q) on the action-angle pairs."""
    if len(c) != H.n_dof:
        raise ps.DimensionMismatch("translation vector length != n_dof")
    out = H.zero_like()
    for (exps, cexps, trig), coeff in H.terms.items():
        # expand prod (p_i + c_i)^{j_i} over pairs with c_i != 0
        stack = [(exps, coeff)]
        for i in range(H.n_dof):
            if c[i] == 0.0 or H.kinds[i] != "aa":
                continue
            nxt = []
            for e, cf in stack:
                j = e[i]
                for t in range(j + 1):
                    nxt.append((e[:i] + (t,) + e[i + 1:],
                                cf * (math.comb(j, t) * (c[i] ** (j - t)))))
            stack = nxt
        for e, cf in stack:
            out.accumulate(e, cexps, trig, cf)
    return out


def translate_cartesian(H, pair, dx=0.0, dy=0.0):
    """Exact shift x -> x + dx, y -> y + dy on a Cartesian pair."""
    if H.kinds[pair] != "xy":
        raise SeriesError("translate_cartesian on a non-Cartesian pair")
    out = H.zero_like()
    for (exps, cexps, trig), coeff in H.terms.items():
        m, n = exps[pair], cexps[pair]
        for a in range(m + 1):
            ca = math.comb(m, a) * (dx ** (m - a))
            for b in range(n + 1):
                cb = math.comb(n, b) * (dy ** (n - b))
                out.accumulate(exps[:pair] + (a,) + exps[pair + 1:],
                               cexps[:pair] + (b,) + cexps[pair + 1:],
                               trig, coeff * (ca * cb))
    return out


def rescale_pair(H, pair, lam):
    """Substitution x -> x / lam, y -> lam * y on a Cartesian pair."""
    if H.kinds[pair] != "xy":
        raise SeriesError("rescale on a non-Cartesian pair")
    out = H.zero_like()
    for (exps, cexps, trig), coeff in H.terms.items():
        m, n = exps[pair], cexps[pair]
        out.accumulate(exps, cexps, trig, coeff * lam ** (n - m))
    return out


def rotate_pair(H, pair, theta):
    """Substitution by a rotation of a Cartesian pair by angle theta."""
    if H.kinds[pair] != "xy":
        raise SeriesError("rotation on a non-Cartesian pair")
    c, s = math.cos(theta), math.sin(theta)
    out = H.zero_like()
    for (exps, cexps, trig), coeff in H.terms.items():
        m, n = exps[pair], cexps[pair]
        # old_x = c x - s y ; old_y = s x + c y
        for a in range(m + 1):
            f1 = math.comb(m, a) * (c ** a) * ((-s) ** (m - a))
            for b in range(n + 1):
                f2 = math.comb(n, b) * (s ** b) * (c ** (n - b))
                out.accumulate(exps[:pair] + (a + b,) + exps[pair + 1:],
                               cexps[:pair] + ((m - a) + (n - b),) + cexps[pair + 1:],
                               trig, coeff * (f1 * f2))
    return out


def rescale_transverse(H, pair, a, b):
    """Bring a transverse quadratic part a*x^2 + b*y^2 to (Omega/2)(x^2+y^2).

    Returns ``(H', lam, Omega)`` with ``x_old = x/lam``, ``y_old = lam*y`` and
    ``Omega = sign(a) * 2 sqrt(a b)``.  Requires ``a*b > 0`` (elliptic case).
    """
    if a * b <= 0.0:
        raise NotElliptic(f"transverse quadratic not elliptic: a={a!r}, b={b!r}")
    lam = (a / b) ** 0.25
    Omega = 2.0 * math.copysign(math.sqrt(a * b), a)
    return rescale_pair(H, pair, lam), lam, Omega


# -- complex-harmonic helpers ---------------------------------------------------


def _xy_monomial_harmonics(m, n):
    """Decompose x^m y^n = (2 I)^((m+n)/2) * sum_k amp_k e^(i k phi).

    Returns ``{k: complex amplitude}`` using ``x + i y = sqrt(2 I) e^(i phi)``.
    """
    amps = {}
    base = (0.5 ** m) * ((0.5 / 1j) ** n)
    for al in range(m + 1):
        ca = math.comb(m, al)
        for be in range(n + 1):
            cb = math.comb(n, be) * ((-1) ** (n - be))
            zp = al + be
            k = zp - (m + n - zp)
            amp = base * ca * cb
            amps[k] = amps.get(k, 0.0) + amp
    return amps


def _harmonic_to_xy(A, B):
    """Expand w^A wbar^B (w = x + i y) into {(m, n): complex amplitude}."""
    out = {}
    for al in range(A + 1):
        ca = math.comb(A, al) * (1j ** (A - al))
        for be in range(B + 1):
            cb = math.comb(B, be) * ((-1j) ** (B - be))
            key = (al + be, (A - al) + (B - be))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def _gbinom(nu, m):
    """Generalized binomial coefficient C(nu, m) for real nu."""
    out = 1.0
    for i in range(m):
        out *= (nu - i) / (i + 1)
    return out


class _ComplexAccum:
    """Accumulator over complex-exponential harmonics, folded to cos/sin."""

    def __init__(self, template: PoissonSeries):
        self.template = template
        self.data = {}

    def add(self, exps, cexps_xy, harm, amp):
        if amp == 0.0:
            return
        key = (tuple(exps), tuple(cexps_xy), tuple(harm))
        self.data[key] = self.data.get(key, 0.0) + amp

    def to_series(self) -> PoissonSeries:
        out = self.template.zero_like()
        aa_idx = [i for i, k in enumerate(out.kinds) if k == "aa"]
        done = set()
        for (exps, cexps_xy, harm), amp in self.data.items():
            lead = next((harm[j] for j in range(len(harm)) if harm[j] != 0), 0)
            canon = harm if lead >= 0 else tuple(-h for h in harm)
            mkey = (exps, cexps_xy, canon)
            if mkey in done:
                continue
            done.add(mkey)
            neg = tuple(-h for h in canon)
            a_pos = self.data.get((exps, cexps_xy, canon), 0.0)
            a_neg = self.data.get((exps, cexps_xy, neg), 0.0)
            cexps = list(cexps_xy)
            for j, i in enumerate(aa_idx):
                cexps[i] = canon[j]
            cexps = tuple(cexps)
            if all(h == 0 for h in canon):
                out.accumulate(exps, cexps, ps.COS, a_pos.real)
            else:
                c = (a_pos + a_neg).real
                d = (1j * (a_pos - a_neg)).real
                if c != 0.0:
                    out.accumulate(exps, cexps, ps.COS, c)
                if d != 0.0:
                    out.accumulate(exps, cexps, ps.SIN, d)
        return out


# -- librational recombination ---------------------------------------------------


def librational_point(state):
    """Point map (xi, eta) -> (x, y) through the pericenter-difference recombination.

    ``state`` and the result use the phase-point layout (momentum-like values,
    then coordinate-like values): ``(xi1, xi2, eta1, eta2) -> (x1, x2, y1, y2)``.
    """
    xi1, xi2, eta1, eta2 = state
    J1 = 0.5 * (xi1 * xi1 + eta1 * eta1)
    J2 = 0.5 * (xi2 * xi2 + eta2 * eta2)
    psi1 = math.atan2(eta1, xi1) if J1 > 0.0 else 0.0
    psi2 = math.atan2(eta2, xi2) if J2 > 0.0 else 0.0
    I1, I2 = J1, J1 + J2
    phi1, phi2 = psi1 - psi2, psi2
    r1, r2 = math.sqrt(2.0 * I1), math.sqrt(2.0 * I2)
    return (r1 * math.cos(phi1), r2 * math.cos(phi2),
            r1 * math.sin(phi1), r2 * math.sin(phi2))


def librational_point_inverse(state):
    """Inverse of :func:`librational_point`; requires I2 - I1 >= 0."""
    x1, x2, y1, y2 = state
    I1 = 0.5 * (x1 * x1 + y1 * y1)
    I2 = 0.5 * (x2 * x2 + y2 * y2)
    J2 = I2 - I1
    if J2 < -1e-15 * max(I1, I2, 1.0):
        raise SeriesError(f"negative action J2 = {J2!r} in librational inverse")
    J2 = max(J2, 0.0)
    phi1 = math.atan2(y1, x1) if I1 > 0.0 else 0.0
    phi2 = math.atan2(y2, x2) if I2 > 0.0 else 0.0
    psi1, psi2 = phi1 + phi2, phi2
    r1, r2 = math.sqrt(2.0 * I1), math.sqrt(2.0 * J2)
    return (r1 * math.cos(psi1), r2 * math.cos(psi2),
            r1 * math.sin(psi1), r2 * math.sin(psi2))


def secular_to_mixed(H, I_center, adeg, tdeg, x_center=0.0):
    """Series-level librational change to the mixed representation.

    Input: secular series on two Cartesian pairs (xi_j, eta_j).  Output: series
    on ``kinds=('xy', 'aa')`` in variables ``(x, y, p, q)`` where ``(x, y)`` is
    the transverse pair centered on ``(x_center, 0)``, ``q`` the rotational
    angle and ``p = I2 - I_center`` the translated rotational action (requires
    ``I_center > 0``).  ``adeg`` bounds the square-root-of-action degree of
    the centered variables (p counts twice).

    The rotational radial factors ``(2 J2)^(d/2)`` are expanded around the
    value ``2 (I_center - x_center^2 / 2)`` taken on the target orbit, in the
    increment ``p - x_center x - (x^2 + y^2)/2`` whose centered degree is at
    least one; the expansion at any fixed polynomial degree is therefore a
    finite, exact reorganization, and every dropped term vanishes at the
    expansion center together with its gradient.
    """
    if H.kinds != ("xy", "xy"):
        raise SeriesError("secular series must live on two Cartesian pairs")
    I1c = 0.5 * x_center * x_center
    base = 2.0 * (I_center - I1c)
    if I_center <= 0.0 or base <= 0.0:
        raise SeriesError("librational Taylor center must be positive")
    out_template = PoissonSeries(2, adeg, tdeg, kinds=("xy", "aa"),
                                 hmeasure=H.hmeasure, mode=H.mode)
    acc = _ComplexAccum(out_template)
    fact = math.factorial
    for (exps, cexps, trig), coeff in H.terms.items():
        if trig != ps.COS or any(cexps[i] != 0 for i in H._aa_idx):
            raise SeriesError("secular input must be purely polynomial")
        a1, a2 = exps
        b1, b2 = cexps
        h1 = _xy_monomial_harmonics(a1, b1)
        h2 = _xy_monomial_harmonics(a2, b2)
        d1 = a1 + b1
        d2 = a2 + b2
        nu = 0.5 * d2
        pref2 = base ** nu
        for k1, amp1 in h1.items():
            # (2 I1)^(d1/2) e^(i k1 phi1) -> polynomial in (x, y), recentered
            A = (d1 + k1) // 2
            B = (d1 - k1) // 2
            xy_amp = {}
            for (mx, my), axy in _harmonic_to_xy(A, B).items():
                for i in range(mx + 1):
                    c = axy * math.comb(mx, i) * (x_center ** (mx - i))
                    key = (i, my)
                    xy_amp[key] = xy_amp.get(key, 0.0) + c
            for k2, amp2 in h2.items():
                kq = k1 + k2
                if abs(kq) > tdeg:
                    continue
                base_amp = coeff * amp1 * amp2 * pref2
                # (1 + u)^nu with u = (2/base)(p - x_center x - (x^2+y^2)/2)
                for m in range(adeg + 1):
                    gb = _gbinom(nu, m)
                    if gb == 0.0:
                        break
                    fac = gb * (2.0 / base) ** m
                    for t in range(m + 1):
                        for al in range(m - t + 1):
                            be = m - t - al
                            c_tri = fact(m) // (fact(t) * fact(al) * fact(be))
                            c_ta = (fac * c_tri * ((-x_center) ** al)
                                    * ((-0.5) ** be))
                            if c_ta == 0.0:
                                continue
                            for j in range(be + 1):
                                c_i1 = math.comb(be, j)
                                for (mx, my), axy in xy_amp.items():
                                    xe = mx + al + 2 * j
                                    ye = my + 2 * (be - j)
                                    if xe + ye + 2 * t > adeg:
                                        continue
                                    acc.add((xe, t), (ye, 0), (kq,),
                                            base_amp * c_ta * c_i1 * axy)
    return acc.to_series()


def mixed_to_actionangle(H, I_center, adeg, tdeg, hmeasure="l1"):
    """Convert the transverse Cartesian pair to action-angle variables.

    Input kinds ``('xy', 'aa')`` in ``(x, y, p, q)``; output kinds
    ``('aa', 'aa')`` in ``(p1, q1, p2, q2)`` where ``(p1, q1)`` is the former
    rotational pair and ``(p2, q2)`` the former transverse pair expanded
    around the action value ``I_center`` (``p2 = (x^2+y^2)/2 - I_center``).
    ``adeg`` bounds the plain action degree of the output.
    """
    if H.kinds != ("xy", "aa"):
        raise SeriesError("expected mixed representation ('xy', 'aa')")
    if I_center <= 0.0:
        raise SeriesError("transverse action center must be positive")
    out_template = PoissonSeries(2, adeg, tdeg, kinds=("aa", "aa"),
                                 hmeasure=hmeasure, mode=H.mode)
    acc = _ComplexAccum(out_template)
    for (exps, cexps, trig), coeff in H.terms.items():
        m, jrot = exps
        n, krot = cexps
        # cos/sin(krot q1) as complex exponentials
        if krot == 0:
            qparts = [(0, 1.0 + 0.0j)] if trig == ps.COS else []
        elif trig == ps.COS:
            qparts = [(krot, 0.5 + 0.0j), (-krot, 0.5 + 0.0j)]
        else:
            qparts = [(krot, -0.5j), (-krot, 0.5j)]
        harm = _xy_monomial_harmonics(m, n)
        nu = 0.5 * (m + n)
        pref = (2.0 * I_center) ** nu
        for k2, amp2 in harm.items():
            for t in range(0, adeg - jrot + 1):
                gb = _gbinom(nu, t)
                if gb == 0.0:
                    break
                c_t = pref * gb / (I_center ** t)
                if jrot + t > adeg:
                    break
                for k1, ampq in qparts:
                    acc.add((jrot, t), (0, 0), (k1, k2),
                            coeff * amp2 * ampq * c_t)
                if nu == t and nu == int(nu):
                    break
    return acc.to_series()


def transverse_point_to_actionangle(point, I_center):
    """(x, y, p, q) -> (p1, q1, p2, q2) matching :func:`mixed_to_actionangle`."""
    x, y, p, q = point
    I = 0.5 * (x * x + y * y)
    phi = math.atan2(y, x) if I > 0.0 else 0.0
    return (p, q, I - I_center, phi)


def transverse_point_from_actionangle(point, I_center):
    p1, q1, p2, q2 = point
    I = I_center + p2
    if I < 0.0:
        raise SeriesError(f"negative transverse action {I!r}")
    r = math.sqrt(2.0 * I)
    return (r * math.cos(q2), r * math.sin(q2), p1, q1)


# -- generators and chains -------------------------------------------------------


class Generator:
    """One recorded canonical transformation.

    Kinds: ``series`` (Lie-series generator, optionally with an affine
    ``xi . q`` part), ``action_translation``, ``cartesian_translation``,
    ``rescale``, ``rotation``, ``librational`` and ``transverse_aa`` (the two
    structural changes of representation).
    """

    def __init__(self, kind, step_label="", chi=None, xi=None, pair=0,
                 dx=0.0, dy=0.0, lam=1.0, theta=0.0, center=0.0, check_solvable=False):
        self.kind = kind
        self.step_label = step_label
        self.chi = chi
        self.xi = tuple(xi) if xi is not None else None
        self.pair = pair
        self.dx = dx
        self.dy = dy
        self.lam = lam
        self.theta = theta
        self.center = center
        self._maps_old = None
        self._maps_new = None
        if kind == "series" and chi is not None and check_solvable:
            # a homological solve never produces kernel terms (zero harmonic,
            # no transverse dependence): such a generator cannot terminate
            for exps, cexps, _ in chi.terms:
                zero_harm = all(cexps[i] == 0 for i in chi._aa_idx)
                no_xy = all(exps[i] == 0 and cexps[i] == 0
                            for i, k in enumerate(chi.kinds) if k == "xy")
                if zero_harm and no_xy:
                    raise SeriesError(
                        f"generator {step_label!r} contains a kernel term "
                        f"(pure-action, zero harmonic): {exps}")

    # -- Hamiltonian action ---------------------------------------------------

    def apply(self, H, trunc=None):
        if self.kind == "series":
            return lie_series_apply(self.chi, H, trunc=trunc, xi=self.xi)
        if self.kind == "action_translation":
            return translate_actions(H, self.xi)
        if self.kind == "cartesian_translation":
            return translate_cartesian(H, self.pair, self.dx, self.dy)
        if self.kind == "rescale":
            return rescale_pair(H, self.pair, self.lam)
        if self.kind == "rotation":
            return rotate_pair(H, self.pair, self.theta)
        raise SeriesError(f"generator kind {self.kind!r} cannot act on series directly")

    # -- point action ----------------------------------------------------------

    def _coordinate_maps(self, template, sign):
        maps = []
        n = template.n_dof
        for i in range(n):
            z = template.zero_like()
            z.set_term(tuple(1 if j == i else 0 for j in range(n)),
                       (0,) * n, ps.COS, 1.0)
            maps.append(("direct", self._exp_on(z, sign)))
        for i in range(n):
            if template.kinds[i] == "aa":
                # angle: q_i + increment, increment = exp-sum of L^j q_i, j>=1
                inc = self._angle_increment(template, i, sign)
                maps.append(("angle", inc))
            else:
                z = template.zero_like()
                z.set_term((0,) * n, tuple(1 if j == i else 0 for j in range(n)),
                           ps.COS, 1.0)
                maps.append(("direct", self._exp_on(z, sign)))
        return maps

    POINT_MAP_TOL = 1e-15

    def _exp_on(self, f, sign):
        chi = self.chi if sign > 0 else (self.chi.scaled(-1.0) if self.chi is not None else None)
        xi = self.xi if sign > 0 else (tuple(-x for x in self.xi) if self.xi else None)
        return lie_series_apply(chi, f, xi=xi, tol=self.POINT_MAP_TOL)

    def _angle_increment(self, template, i, sign):
        chi = self.chi if sign > 0 else (self.chi.scaled(-1.0) if self.chi is not None else None)
        xi = self.xi if sign > 0 else (tuple(-x for x in self.xi) if self.xi else None)
        # L q_i = -d chi/d p_i  (xi . q part commutes with q_i)
        first = ps.derivative(chi, "mom", i).scaled(-1.0) if chi is not None else template.zero_like()
        total = first.copy()
        term = first
        j = 2
        while not term.is_empty():
            term = affine_lie_derivative(chi, term, xi=xi).scaled(1.0 / j)
            total = ps.add(total, term)
            if ps.l1_norm(term) < self.POINT_MAP_TOL:
                break
            j += 1
            if j > 4 * (template.max_action_degree + template.max_trig_degree) + 16:
                raise NonTerminatingExpansion("angle increment series did not terminate")
        return total

    def point_to_old(self, point, template=None):
        """Map a point in post-transform variables to pre-transform variables."""
        n = len(point) // 2
        if self.kind == "series":
            if self._maps_old is None:
                self._maps_old = self._coordinate_maps(template or self.chi, +1)
            return _eval_maps(self._maps_old, point, n)
        if self.kind == "action_translation":
            return tuple(point[i] + self.xi[i] for i in range(n)) + tuple(point[n:])
        if self.kind == "cartesian_translation":
            out = list(point)
            out[self.pair] += self.dx
            out[n + self.pair] += self.dy
            return tuple(out)
        if self.kind == "rescale":
            out = list(point)
            out[self.pair] = point[self.pair] / self.lam
            out[n + self.pair] = point[n + self.pair] * self.lam
            return tuple(out)
        if self.kind == "rotation":
            out = list(point)
            c, s = math.cos(self.theta), math.sin(self.theta)
            x, y = point[self.pair], point[n + self.pair]
            out[self.pair] = c * x - s * y
            out[n + self.pair] = s * x + c * y
            return tuple(out)
        if self.kind == "librational":
            # new (x, y, p, q) -> old (xi1, eta1, xi2, eta2); point layout
            # (mom-like..., coord-like...) = (x, p, y, q) -> (xi1, xi2, eta1, eta2)
            x, p, y, q = point
            I1 = 0.5 * (x * x + y * y)
            I2 = self.center + p
            J2 = I2 - I1
            if J2 < 0.0 or I1 < 0.0:
                raise SeriesError("librational inverse outside domain")
            phi1 = math.atan2(y, x) if I1 > 0.0 else 0.0
            psi1, psi2 = phi1 + q, q
            r1, r2 = math.sqrt(2.0 * I1), math.sqrt(2.0 * J2)
            return (r1 * math.cos(psi1), r2 * math.cos(psi2),
                    r1 * math.sin(psi1), r2 * math.sin(psi2))
        if self.kind == "transverse_aa":
            # new (p1, q1, p2, q2) layout (p1, p2, q1, q2) -> old (x, p, y, q)
            p1, p2, q1, q2 = point[0], point[1], point[2], point[3]
            I = self.center + p2
            if I < 0.0:
                raise SeriesError("negative transverse action in inverse map")
            r = math.sqrt(2.0 * I)
            return (r * math.cos(q2), p1, r * math.sin(q2), q1)
        raise SeriesError(f"unknown generator kind {self.kind!r}")

    def point_to_new(self, point, template=None):
        """Map a point in pre-transform variables to post-transform variables."""
        n = len(point) // 2
        if self.kind == "series":
            if self._maps_new is None:
                self._maps_new = self._coordinate_maps(template or self.chi, -1)
            return _eval_maps(self._maps_new, point, n)
        if self.kind == "action_translation":
            return tuple(point[i] - self.xi[i] for i in range(n)) + tuple(point[n:])
        if self.kind == "cartesian_translation":
            out = list(point)
            out[self.pair] -= self.dx
            out[n + self.pair] -= self.dy
            return tuple(out)
        if self.kind == "rescale":
            out = list(point)
            out[self.pair] = point[self.pair] * self.lam
            out[n + self.pair] = point[n + self.pair] / self.lam
            return tuple(out)
        if self.kind == "rotation":
            out = list(point)
            c, s = math.cos(self.theta), math.sin(self.theta)
            x, y = point[self.pair], point[n + self.pair]
            out[self.pair] = c * x + s * y
            out[n + self.pair] = -s * x + c * y
            return tuple(out)
        if self.kind == "librational":
            xi1, xi2, eta1, eta2 = point
            J1 = 0.5 * (xi1 * xi1 + eta1 * eta1)
            J2 = 0.5 * (xi2 * xi2 + eta2 * eta2)
            psi1 = math.atan2(eta1, xi1) if J1 > 0.0 else 0.0
            psi2 = math.atan2(eta2, xi2) if J2 > 0.0 else 0.0
            I1, I2 = J1, J1 + J2
            phi1 = psi1 - psi2
            r1 = math.sqrt(2.0 * I1)
            return (r1 * math.cos(phi1), I2 - self.center, r1 * math.sin(phi1), psi2)
        if self.kind == "transverse_aa":
            x, p, y, q = point
            I = 0.5 * (x * x + y * y)
            phi = math.atan2(y, x) if I > 0.0 else 0.0
            return (p, I - self.center, q, phi)
        raise SeriesError(f"unknown generator kind {self.kind!r}")


def _eval_maps(maps, point, n):
    pv, qv = point[:n], point[n:]
    out = []
    for i, (tag, f) in enumerate(maps):
        v = ps.evaluate(f, pv, qv)
        if tag == "angle":
            v += qv[i - n] if i >= n else 0.0
        out.append(v)
    return tuple(out)


class TransformChain:
    """Ordered record of canonical transformations (first applied first)."""

    def __init__(self, generators=None):
        self.generators = list(generators) if generators else []

    def append(self, gen: Generator):
        self.generators.append(gen)

    def extend(self, gens):
        self.generators.extend(gens)

    def __len__(self):
        return len(self.generators)

    def point_to_original(self, point):
        """Map a point from the final (normalized) variables to the input variables."""
        for gen in reversed(self.generators):
            point = gen.point_to_old(point)
        return point

    def point_to_normalized(self, point):
        for gen in self.generators:
            point = gen.point_to_new(point)
        return point

    # -- serialization --------------------------------------------------------

    def save(self, path, series_dir=None):
        series_dir = series_dir or os.path.dirname(os.path.abspath(path))
        os.makedirs(series_dir, exist_ok=True)
        records = []
        for idx, g in enumerate(self.generators):
            rec = {"kind": g.kind, "step_label": g.step_label, "pair": g.pair,
                   "dx": g.dx, "dy": g.dy, "lam": g.lam, "theta": g.theta,
                   "center": g.center, "xi": list(g.xi) if g.xi else None}
            if g.chi is not None:
                text = ps.dumps(g.chi)
                digest = hashlib.sha256(text.encode()).hexdigest()
                fname = f"generator_{idx:04d}.series"
                with open(os.path.join(series_dir, fname), "w") as fh:
                    fh.write(text)
                rec["series_path"] = fname
                rec["series_sha256"] = digest
            records.append(rec)
        with open(path, "w") as fh:
            json.dump({"generators": records}, fh, indent=1)

    @staticmethod
    def load(path):
        base = os.path.dirname(os.path.abspath(path))
        with open(path) as fh:
            data = json.load(fh)
        chain = TransformChain()
        for rec in data["generators"]:
            chi = None
            if "series_path" in rec:
                fpath = os.path.join(base, rec["series_path"])
                with open(fpath) as fh:
                    text = fh.read()
                digest = hashlib.sha256(text.encode()).hexdigest()
                if digest != rec["series_sha256"]:
                    raise SeriesError(f"series file hash mismatch for {fpath}")
                chi = ps.loads(text)
            chain.append(Generator(rec["kind"], rec.get("step_label", ""),
                                   chi=chi, xi=rec.get("xi"), pair=rec.get("pair", 0),
                                   dx=rec.get("dx", 0.0), dy=rec.get("dy", 0.0),
                                   lam=rec.get("lam", 1.0), theta=rec.get("theta", 0.0),
                                   center=rec.get("center", 0.0)))
        return chain


# -- orbital elements -------------------------------------------------------------


MJUP_IN_MSUN = 9.5458e-4
DEG = math.pi / 180.0


def elements_to_secular(planets, m0, G=1.0):
    """Poincare-variable and angular-momentum quantities from orbital elements.

    ``planets`` is a sequence of dicts with keys ``m`` (solar masses), ``a``
    (AU), ``e``, ``i``, ``M``, ``omega``, ``Omega`` (angles in radians).  Time
    unit is yr/(2 pi) so that ``G = 1``.  Returns a dict with ``Lambda``,
    ``xi``, ``eta`` per planet plus the angular momentum ``C`` and the
    circular-coplanar defect ``D2``.
    """
    Lam, xi, eta = [], [], []
    for p in planets:
        if not 0.0 <= p["e"] < 1.0:
            raise ValueError(f"hyperbolic or invalid eccentricity {p['e']!r}")
        if p["m"] <= 0.0 or m0 <= 0.0:
            raise ValueError("masses must be positive")
        L = (m0 * p["m"] / (m0 + p["m"])) * math.sqrt(G * (m0 + p["m"]) * p["a"])
        fac = math.sqrt(2.0 * L) * math.sqrt(1.0 - math.sqrt(1.0 - p["e"] ** 2))
        Lam.append(L)
        xi.append(fac * math.cos(p["omega"]))
        eta.append(-fac * math.sin(p["omega"]))
    C = sum(L * math.sqrt(1.0 - p["e"] ** 2) * math.cos(p["i"])
            for L, p in zip(Lam, planets))
    D2 = ((sum(Lam)) ** 2 - C * C) / (Lam[0] * Lam[1])
    return {"Lambda": Lam, "xi": xi, "eta": eta, "C": C, "D2": D2,
            "units": "AU, Msun, time yr/(2 pi), G = 1"}


def load_elements_file(path):
    """Key-value element file -> (planets list, m0).

    Masses may be given in Jupiter masses with keys ``m_jup``; angles are in
    degrees with keys ``i_deg``, ``M_deg``, ``omega_deg``, ``Omega_deg``.
    """
    raw = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, val = (t.strip() for t in line.split("=", 1))
            raw[key] = float(val)
    m0 = raw["m0_sun"]
    planets = []
    idx = 1
    while f"a_{idx}" in raw:
        m = raw.get(f"m_sun_{idx}", raw.get(f"m_jup_{idx}", 0.0) * MJUP_IN_MSUN)
        planets.append({
            "m": m, "a": raw[f"a_{idx}"], "e": raw[f"e_{idx}"],
            "i": raw.get(f"i_deg_{idx}", 0.0) * DEG,
            "M": raw.get(f"M_deg_{idx}", 0.0) * DEG,
            "omega": raw.get(f"omega_deg_{idx}", 0.0) * DEG,
            "Omega": raw.get(f"Omega_deg_{idx}", 0.0) * DEG,
        })
        idx += 1
    return planets, m0


class SmallDivisorError(SeriesError):
    """Non-resonance condition violated; carries the offending harmonic."""

    def __init__(self, message, k=None, l=None, value=None):
        super().__init__(message)
        self.k = k
        self.l = l
        self.value = value


def redistribute_lie(chi, delta_l, r, cells, band_max, trunc, xi=None):
    """Apply ``exp(L_chi)`` cell-wise with formal-order band bookkeeping.

    ``cells`` maps ``(l, s)`` to a series; the contribution
    ``(1/j!) L_chi^j`` of cell ``(l, s)`` is booked into cell
    ``(l + j*delta_l, s + j*r)`` (each bracket with the generator shifts the
    homogeneous degree by exactly ``delta_l``).  Contributions whose booked
    band exceeds ``band_max`` are dropped: they are beyond the working formal
    order, mirroring the truncation discipline of the normalization scheme.
    Returns the new cell map.
    """
    out = {key: cell.copy() for key, cell in cells.items()}
    template = next(iter(cells.values()))
    for (l, s), f in cells.items():
        if f.is_empty():
            continue
        term = f
        j = 0
        while True:
            j += 1
            band = s + j * r
            if band > band_max:
                break
            term = affine_lie_derivative(chi, term, xi=xi, trunc=trunc).scaled(1.0 / j)
            if term.is_empty():
                break
            lt = l + j * delta_l
            if lt < 0:
                raise SeriesError(f"redistribution produced negative degree from cell {(l, s)}")
            tgt = out.get((lt, band))
            if tgt is None:
                tgt = template.zero_like()
                out[(lt, band)] = tgt
            for key, c in term.terms.items():
                cur = tgt.terms.get(key)
                new = c if cur is None else cur + c
                if tgt._zero_coeff(new):
                    tgt.terms.pop(key, None)
                else:
                    tgt.terms[key] = new
    return {key: cell for key, cell in out.items() if not cell.is_empty()}
