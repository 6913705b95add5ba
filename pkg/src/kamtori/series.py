"""Sparse truncated Taylor-Fourier series over real or interval coefficients.

A series lives on ``n_dof`` conjugate pairs.  Each pair is either

* ``'aa'`` (action-angle): monomials ``p_i^j`` times ``cos/sin(k . q)`` with an
  integer harmonic component ``k_i``, or
* ``'xy'`` (Cartesian): plain monomials ``x_i^m y_i^n``.

Term keys are ``(exps, cexps, trig)`` where ``exps[i]`` is the exponent of the
momentum-like variable (``p_i`` or ``x_i``), ``cexps[i]`` is the harmonic
``k_i`` for an ``'aa'`` pair or the ``y_i`` exponent for an ``'xy'`` pair, and
``trig`` is 0 for cosine, 1 for sine of the joint harmonic ``k . q``.

Harmonics are stored in canonical sign (first nonzero component positive; a
sine term with flipped harmonic stores the negated coefficient) and ``sin(0)``
terms are dropped.  Poisson brackets follow the convention
``{f, g} = sum_i  df/dq_i dg/dp_i - df/dp_i dg/dq_i`` so that
``{e^(i k.q), w.p} = i (k.w) e^(i k.q)``; for a Cartesian pair the momentum
role is played by ``x`` and the coordinate role by ``y``.

The action-degree measure used by the truncation bounds counts ``p`` exponents
twice and ``x``/``y`` exponents once whenever the series carries a Cartesian
pair (square-root-of-action bookkeeping); for a pure action-angle series it is
the plain total degree in ``p``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .intervals import Interval, _up

COS = 0
SIN = 1

_KINDS_OK = ("aa", "xy")


class SeriesError(ValueError):
    pass


class DimensionMismatch(SeriesError):
    pass


def _check_kinds(n_dof, kinds):
    if kinds is None:
        return ("aa",) * n_dof
    kinds = tuple(kinds)
    if len(kinds) != n_dof or any(k not in _KINDS_OK for k in kinds):
        raise SeriesError(f"bad pair kinds {kinds!r} for n_dof={n_dof}")
    return kinds


class PoissonSeries:
    """Sparse Taylor-Fourier expansion with enforced truncation bounds.

    Parameters
    ----------
    n_dof : int
        Number of conjugate pairs.
    max_action_degree, max_trig_degree : int
        Truncation bounds; every stored key satisfies them.
    kinds : sequence of {'aa', 'xy'}, optional
        Pair kinds, all ``'aa'`` by default.
    hmeasure : {'l1', 'linf'}
        Harmonic degree measure used for the trigonometric bound and for
        classification banding.
    mode : {'real', 'interval'}
        Coefficient domain.
    """

    __slots__ = ("n_dof", "kinds", "terms", "max_action_degree",
                 "max_trig_degree", "hmeasure", "mode", "_aa_idx", "_w")

    def __init__(self, n_dof, max_action_degree, max_trig_degree, kinds=None,
                 hmeasure="l1", mode="real"):
        if n_dof < 1:
            raise SeriesError("n_dof must be positive")
        if hmeasure not in ("l1", "linf"):
            raise SeriesError(f"unknown harmonic measure {hmeasure!r}")
        if mode not in ("real", "interval"):
            raise SeriesError(f"unknown coefficient mode {mode!r}")
        self.n_dof = n_dof
        self.kinds = _check_kinds(n_dof, kinds)
        self.max_action_degree = int(max_action_degree)
        self.max_trig_degree = int(max_trig_degree)
        self.hmeasure = hmeasure
        self.mode = mode
        self.terms = {}
        self._aa_idx = tuple(i for i, k in enumerate(self.kinds) if k == "aa")
        self._w = 2 if "xy" in self.kinds else 1

    # -- basic structure -------------------------------------------------

    def zero_like(self, max_action_degree=None, max_trig_degree=None):
        return PoissonSeries(
            self.n_dof,
            self.max_action_degree if max_action_degree is None else max_action_degree,
            self.max_trig_degree if max_trig_degree is None else max_trig_degree,
            kinds=self.kinds, hmeasure=self.hmeasure, mode=self.mode)

    def copy(self):
        out = self.zero_like()
        out.terms = dict(self.terms)
        return out

    def is_empty(self):
        return not self.terms

    def __len__(self):
        return len(self.terms)

    def _zero_coeff(self, c):
        if self.mode == "interval":
            return c.is_zero()
        return c == 0.0

    def action_degree(self, key):
        exps, cexps, _ = key
        if self._w == 1:
            return sum(exps)
        d = 0
        for i, k in enumerate(self.kinds):
            if k == "aa":
                d += 2 * exps[i]
            else:
                d += exps[i] + cexps[i]
        return d

    def trig_degree(self, key):
        cexps = key[1]
        if not self._aa_idx:
            return 0
        if self.hmeasure == "l1":
            return sum(abs(cexps[i]) for i in self._aa_idx)
        return max(abs(cexps[i]) for i in self._aa_idx)

    def _fits(self, key):
        return (self.action_degree(key) <= self.max_action_degree
                and self.trig_degree(key) <= self.max_trig_degree)

    def canonical_key(self, exps, cexps, trig):
        """Canonicalize harmonic sign; returns (key, sign) or None for sin(0)."""
        exps = tuple(exps)
        cexps = tuple(cexps)
        lead = 0
        for i in self._aa_idx:
            if cexps[i] != 0:
                lead = cexps[i]
                break
        if lead == 0:
            if trig == SIN:
                return None
            return (exps, cexps, COS), 1
        if lead < 0:
            flipped = list(cexps)
            for i in self._aa_idx:
                flipped[i] = -flipped[i]
            return (exps, tuple(flipped), trig), (-1 if trig == SIN else 1)
        return (exps, cexps, trig), 1

    def accumulate(self, exps, cexps, trig, coeff):
        """Add ``coeff`` times the (non-canonical) monomial, honoring bounds."""
        ck = self.canonical_key(exps, cexps, trig)
        if ck is None:
            return
        key, sgn = ck
        if not self._fits(key):
            return
        if sgn < 0:
            coeff = -coeff
        cur = self.terms.get(key)
        new = coeff if cur is None else cur + coeff
        if self._zero_coeff(new):
            self.terms.pop(key, None)
        else:
            self.terms[key] = new

    def set_term(self, exps, cexps, trig, coeff):
        ck = self.canonical_key(exps, cexps, trig)
        if ck is None:
            raise SeriesError("cannot store a sin term with zero harmonic")
        key, sgn = ck
        if not self._fits(key):
            raise SeriesError(f"term {key} exceeds truncation bounds")
        coeff = -coeff if sgn < 0 else coeff
        if self._zero_coeff(coeff):
            self.terms.pop(key, None)
        else:
            self.terms[key] = coeff

    def coefficient(self, exps, cexps, trig=COS):
        ck = self.canonical_key(exps, cexps, trig)
        if ck is None:
            return self._zero()
        key, sgn = ck
        c = self.terms.get(key)
        if c is None:
            return self._zero()
        return -c if sgn < 0 else c

    def _zero(self):
        return Interval.zero() if self.mode == "interval" else 0.0

    def sorted_keys(self):
        return sorted(self.terms)

    def terms_list(self):
        """Export as a list of (exps, cexps, trig, coefficient)."""
        return [(k[0], k[1], k[2], self.terms[k]) for k in self.sorted_keys()]

    def __repr__(self):
        return (f"PoissonSeries(n_dof={self.n_dof}, kinds={self.kinds}, "
                f"terms={len(self.terms)}, adeg<={self.max_action_degree}, "
                f"tdeg<={self.max_trig_degree}, {self.mode})")

    # -- conversions -------------------------------------------------------

    def to_interval(self, widen_ulps=0):
        if self.mode == "interval":
            return self.copy()
        out = PoissonSeries(self.n_dof, self.max_action_degree, self.max_trig_degree,
                            kinds=self.kinds, hmeasure=self.hmeasure, mode="interval")
        for key, c in self.terms.items():
            iv = Interval.point(c)
            if widen_ulps:
                iv = iv.widened(widen_ulps)
            out.terms[key] = iv
        return out

    def midpoint(self):
        if self.mode == "real":
            return self.copy()
        out = PoissonSeries(self.n_dof, self.max_action_degree, self.max_trig_degree,
                            kinds=self.kinds, hmeasure=self.hmeasure, mode="real")
        for key, c in self.terms.items():
            if c.mid != 0.0:
                out.terms[key] = c.mid
        return out

    def scaled(self, factor):
        out = self.zero_like()
        for key, c in self.terms.items():
            new = c * factor
            if not self._zero_coeff(new):
                out.terms[key] = new
        return out

    def __neg__(self):
        return self.scaled(-1.0)

    def prune(self, threshold):
        """Drop terms with coefficient magnitude below ``threshold``.

        Disabled by default throughout the pipeline; exposed for the CLI
        pruning flag.  Returns (pruned series, number of dropped terms).
        """
        out = self.zero_like()
        dropped = 0
        for key, c in self.terms.items():
            m = c.mag() if self.mode == "interval" else abs(c)
            if m < threshold:
                dropped += 1
            else:
                out.terms[key] = c
        return out, dropped


# -- algebra -----------------------------------------------------------------


def _require_compatible(a: PoissonSeries, b: PoissonSeries):
    if a.n_dof != b.n_dof or a.kinds != b.kinds:
        raise DimensionMismatch(
            f"incompatible series: n_dof {a.n_dof}/{b.n_dof}, kinds {a.kinds}/{b.kinds}")
    if a.mode != b.mode:
        raise SeriesError(f"mixed coefficient modes {a.mode}/{b.mode}")


def add(a: PoissonSeries, b: PoissonSeries) -> PoissonSeries:
    """Coefficient-wise sum; truncation bounds are the max of the inputs."""
    _require_compatible(a, b)
    out = PoissonSeries(a.n_dof, max(a.max_action_degree, b.max_action_degree),
                        max(a.max_trig_degree, b.max_trig_degree),
                        kinds=a.kinds, hmeasure=a.hmeasure, mode=a.mode)
    out.terms = dict(a.terms)
    for key, c in b.terms.items():
        cur = out.terms.get(key)
        new = c if cur is None else cur + c
        if out._zero_coeff(new):
            out.terms.pop(key, None)
        else:
            out.terms[key] = new
    return out


def sub(a: PoissonSeries, b: PoissonSeries) -> PoissonSeries:
    return add(a, b.scaled(-1.0))


_PROD_RULES = {
    (COS, COS): ((+1, COS, 0.5), (-1, COS, 0.5)),
    (COS, SIN): ((+1, SIN, 0.5), (-1, SIN, -0.5)),
    (SIN, COS): ((+1, SIN, 0.5), (-1, SIN, 0.5)),
    (SIN, SIN): ((-1, COS, 0.5), (+1, COS, -0.5)),
}


def mul(a: PoissonSeries, b: PoissonSeries, trunc=None) -> PoissonSeries:
    """Product with trigonometric products expanded via product-to-sum.

    ``trunc`` is an optional ``(action_degree, trig_degree)`` override; the
    default is the stricter of the input bounds (with a warning when they
    differ).
    """
    _require_compatible(a, b)
    if trunc is None:
        if (a.max_action_degree != b.max_action_degree
                or a.max_trig_degree != b.max_trig_degree):
            warnings.warn("mul with mixed truncation bounds; using the stricter",
                          stacklevel=2)
        trunc = (min(a.max_action_degree, b.max_action_degree),
                 min(a.max_trig_degree, b.max_trig_degree))
    out = PoissonSeries(a.n_dof, trunc[0], trunc[1],
                        kinds=a.kinds, hmeasure=a.hmeasure, mode=a.mode)
    is_aa = tuple(k == "aa" for k in a.kinds)
    any_aa = any(is_aa)
    n = a.n_dof
    rng = range(n)
    acc = out.accumulate
    for (e1, c1, t1), coef1 in a.terms.items():
        for (e2, c2, t2), coef2 in b.terms.items():
            exps = tuple(e1[i] + e2[i] for i in rng)
            coef = coef1 * coef2
            if not any_aa:
                acc(exps, tuple(c1[i] + c2[i] for i in rng), COS, coef)
                continue
            for sign, trig, half in _PROD_RULES[(t1, t2)]:
                cex = tuple(
                    (c1[i] + sign * c2[i]) if is_aa[i] else (c1[i] + c2[i])
                    for i in rng)
                acc(exps, cex, trig, coef * half)
    return out


def derivative(f: PoissonSeries, slot: str, i: int) -> PoissonSeries:
    """Partial derivative; ``slot`` is 'mom' (p_i or x_i) or 'coord' (q_i or y_i)."""
    out = f.zero_like()
    kind = f.kinds[i]
    for (exps, cexps, trig), c in f.terms.items():
        if slot == "mom":
            e = exps[i]
            if e == 0:
                continue
            new_exps = exps[:i] + (e - 1,) + exps[i + 1:]
            out.accumulate(new_exps, cexps, trig, c * float(e))
        elif slot == "coord":
            if kind == "xy":
                e = cexps[i]
                if e == 0:
                    continue
                new_cex = cexps[:i] + (e - 1,) + cexps[i + 1:]
                out.accumulate(exps, new_cex, trig, c * float(e))
            else:
                k = cexps[i]
                if k == 0:
                    continue
                if trig == COS:
                    out.accumulate(exps, cexps, SIN, c * float(-k))
                else:
                    out.accumulate(exps, cexps, COS, c * float(k))
        else:
            raise SeriesError(f"unknown derivative slot {slot!r}")
    return out


def poisson_bracket(f: PoissonSeries, g: PoissonSeries, pairs=None, trunc=None) -> PoissonSeries:
    """Poisson bracket restricted to the listed conjugate pairs.

    Convention: ``{f, g} = sum_i df/dq_i dg/dp_i - df/dp_i dg/dq_i`` for
    action-angle pairs; for Cartesian pairs ``y`` takes the coordinate role
    and ``x`` the momentum role.
    """
    _require_compatible(f, g)
    if pairs is None:
        pairs = range(f.n_dof)
    if trunc is None:
        trunc = (min(f.max_action_degree, g.max_action_degree),
                 min(f.max_trig_degree, g.max_trig_degree))
    out = PoissonSeries(f.n_dof, trunc[0], trunc[1],
                        kinds=f.kinds, hmeasure=f.hmeasure, mode=f.mode)
    for i in pairs:
        fc = derivative(f, "coord", i)
        gm = derivative(g, "mom", i)
        if not (fc.is_empty() or gm.is_empty()):
            out = add(out, mul(fc, gm, trunc))
        fm = derivative(f, "mom", i)
        gc = derivative(g, "coord", i)
        if not (fm.is_empty() or gc.is_empty()):
            out = sub(out, mul(fm, gc, trunc))
    out.max_action_degree, out.max_trig_degree = trunc
    return out


def l1_norm(f: PoissonSeries) -> float:
    """Sum of absolute values of all coefficients (upper end in interval mode)."""
    if f.mode == "interval":
        tot = 0.0
        for c in f.terms.values():
            tot = _up(tot + c.mag())
        return tot
    return math.fsum(abs(c) for c in f.terms.values())


def angle_average(f: PoissonSeries) -> PoissonSeries:
    """Retain only the zero-harmonic part."""
    out = f.zero_like()
    aa = f._aa_idx
    for key, c in f.terms.items():
        cexps = key[1]
        if all(cexps[i] == 0 for i in aa):
            out.terms[key] = c
    return out


def oscillating_part(f: PoissonSeries) -> PoissonSeries:
    out = f.zero_like()
    aa = f._aa_idx
    for key, c in f.terms.items():
        cexps = key[1]
        if any(cexps[i] != 0 for i in aa):
            out.terms[key] = c
    return out


def evaluate(f: PoissonSeries, pvals, qvals):
    """Numeric value at a phase-space point.

    ``pvals[i]``/``qvals[i]`` hold the momentum-like/coordinate-like values of
    pair ``i`` (``p_i, q_i`` for an action-angle pair, ``x_i, y_i`` for a
    Cartesian pair).
    """
    if len(pvals) != f.n_dof or len(qvals) != f.n_dof:
        raise DimensionMismatch("point dimension does not match n_dof")
    total = 0.0
    aa = set(f._aa_idx)
    for (exps, cexps, trig), c in f.terms.items():
        v = 1.0
        phase = 0.0
        for i in range(f.n_dof):
            if exps[i]:
                v *= pvals[i] ** exps[i]
            if i in aa:
                if cexps[i]:
                    phase += cexps[i] * qvals[i]
            else:
                if cexps[i]:
                    v *= qvals[i] ** cexps[i]
        tr = math.cos(phase) if trig == COS else math.sin(phase)
        total += (c * v) * tr if isinstance(c, Interval) else c * v * tr
    return total


# -- classification -----------------------------------------------------------


@dataclass
class ClassifiedExpansion:
    """Grid of homogeneous components indexed by (action degree, trig band).

    Cell ``(l, s)`` holds terms of exact action degree ``l`` (square-root
    weighting in the elliptic context) and trig degree at most ``2 s``.
    """

    context: str
    n_dof: int
    kinds: tuple
    hmeasure: str
    mode: str
    max_action_degree: int
    max_trig_degree: int
    grid: dict = field(default_factory=dict)

    def cell(self, l, s) -> PoissonSeries:
        got = self.grid.get((l, s))
        if got is not None:
            return got
        return PoissonSeries(self.n_dof, self.max_action_degree, self.max_trig_degree,
                             kinds=self.kinds, hmeasure=self.hmeasure, mode=self.mode)

    def reassemble(self) -> PoissonSeries:
        out = PoissonSeries(self.n_dof, self.max_action_degree, self.max_trig_degree,
                            kinds=self.kinds, hmeasure=self.hmeasure, mode=self.mode)
        for cell in self.grid.values():
            for key, c in cell.terms.items():
                cur = out.terms.get(key)
                new = c if cur is None else cur + c
                if out._zero_coeff(new):
                    out.terms.pop(key, None)
                else:
                    out.terms[key] = new
        return out

    def cells(self):
        return sorted(self.grid)


def classify(f: PoissonSeries, context: str) -> ClassifiedExpansion:
    """Split a series into (action degree, trig band) cells.

    ``context='kolmogorov'`` uses the plain action degree; ``'elliptic'`` uses
    the square-root-of-actions weighting (p counts twice, x/y once).  Each term
    lands in the single band ``s = ceil(trig_degree / 2)``.
    """
    if context not in ("elliptic", "kolmogorov"):
        raise SeriesError(f"unknown classification context {context!r}")
    out = ClassifiedExpansion(context, f.n_dof, f.kinds, f.hmeasure, f.mode,
                              f.max_action_degree, f.max_trig_degree)
    for key, c in f.terms.items():
        l = f.action_degree(key)
        td = f.trig_degree(key)
        s = (td + 1) // 2
        cell = out.grid.get((l, s))
        if cell is None:
            cell = PoissonSeries(f.n_dof, f.max_action_degree, f.max_trig_degree,
                                 kinds=f.kinds, hmeasure=f.hmeasure, mode=f.mode)
            out.grid[(l, s)] = cell
        cell.terms[key] = c
    return out


# -- serialization -------------------------------------------------------------


def dumps(f: PoissonSeries) -> str:
    """Textual form, one term per line with hex-float coefficients."""
    head = (f"NDOF {f.n_dof} ADEG {f.max_action_degree} TDEG {f.max_trig_degree} "
            f"HMEASURE {f.hmeasure}")
    if "xy" in f.kinds:
        head += " KINDS " + ",".join(f.kinds)
    if f.mode == "interval":
        head += " MODE interval"
    lines = [head]
    for key in f.sorted_keys():
        exps, cexps, trig = key
        c = f.terms[key]
        cols = [str(e) for e in exps] + [str(k) for k in cexps]
        cols.append("c" if trig == COS else "s")
        if f.mode == "interval":
            cols.append(c.lo.hex())
            cols.append(c.hi.hex())
        else:
            cols.append(float(c).hex())
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def loads(text: str) -> PoissonSeries:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SeriesError("empty series text")
    head = lines[0].split()
    opts = {head[i]: head[i + 1] for i in range(0, len(head) - 1, 2)}
    n = int(opts["NDOF"])
    kinds = tuple(opts["KINDS"].split(",")) if "KINDS" in opts else None
    mode = opts.get("MODE", "real")
    f = PoissonSeries(n, int(opts["ADEG"]), int(opts["TDEG"]), kinds=kinds,
                      hmeasure=opts.get("HMEASURE", "l1"), mode=mode)
    for ln in lines[1:]:
        cols = ln.split()
        exps = tuple(int(x) for x in cols[:n])
        cexps = tuple(int(x) for x in cols[n:2 * n])
        trig = COS if cols[2 * n] == "c" else SIN
        if mode == "interval":
            coeff = Interval(float.fromhex(cols[2 * n + 1]), float.fromhex(cols[2 * n + 2]))
        else:
            coeff = float.fromhex(cols[2 * n + 1])
        f.set_term(exps, cexps, trig, coeff)
    return f


def save(f: PoissonSeries, path):
    with open(path, "w") as fh:
        fh.write(dumps(f))


def load(path) -> PoissonSeries:
    with open(path) as fh:
        return loads(fh.read())
