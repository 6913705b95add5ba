"""Normal form for the one-dimensional elliptic torus.

State variables are ``(x, y, p, q)`` (Cartesian transverse pair, action-angle
rotational pair).  The normalized part ``E + omega p + Omega (x^2+y^2)/2`` is
kept out of the grid; each step removes the angle-dependent grid content of
square-root-of-action degree at most 2 through trigonometric degree ``2 r``
with four generating functions (pure-angle, transverse-linear, action-linear,
transverse-quadratic), folds the unremovable averages into ``E``, ``omega``
and ``Omega``, and restores the diagonal transverse form with one exact
symplectic rotation plus rescale.

Each homological system is solved against the live normal-form part (the
block operator is built by bracketing basis monomials), so the removed-class
projection after a step vanishes to machine roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import series as ps
from . import transforms as tr
from .series import PoissonSeries
from .transforms import Generator, SmallDivisorError, TransformChain

NF_KINDS = ("xy", "aa")


@dataclass
class EllipticState:
    """Classified expansion around the approximate periodic orbit."""

    E: float
    omega: float
    Omega: float
    grid: dict
    r: int
    adeg: int
    tdeg: int
    chain: TransformChain = field(default_factory=TransformChain)
    norm_log: list = field(default_factory=list)
    residual_log: list = field(default_factory=list)
    gamma: float = 1e-8
    tau: float = 1.0

    def template(self) -> PoissonSeries:
        return PoissonSeries(2, self.adeg, self.tdeg, kinds=NF_KINDS)

    def assemble(self) -> PoissonSeries:
        """Full Hamiltonian series including the normalized part."""
        H = self.template()
        if self.E:
            H.accumulate((0, 0), (0, 0), ps.COS, self.E)
        H.accumulate((0, 1), (0, 0), ps.COS, self.omega)
        H.accumulate((2, 0), (0, 0), ps.COS, 0.5 * self.Omega)
        H.accumulate((0, 0), (2, 0), ps.COS, 0.5 * self.Omega)
        for cell in self.grid.values():
            for key, c in cell.terms.items():
                H.accumulate(key[0], key[1], key[2], c)
        return H

    def cell(self, l, s) -> PoissonSeries:
        got = self.grid.get((l, s))
        return got if got is not None else self.template()

    def removed_class_norm(self, r=None) -> float:
        """l1 norm of the low-order angle-dependent content through band r."""
        r = self.r if r is None else r
        tot = 0.0
        for (l, s), cell in self.grid.items():
            if l <= 2 and 1 <= s <= r:
                tot += ps.l1_norm(cell)
        return tot

    def center_residual(self) -> float:
        """d<H>_q/dx at the origin: the x coefficient of the (1, 0) cell."""
        return self.cell(1, 0).coefficient((1, 0), (0, 0))

    def frequencies(self):
        return self.omega, self.Omega


def _split_off_normal_form(H: PoissonSeries):
    """(E, omega, quad dict, grid) from a full series; quad has x2/xy/y2 keys."""
    cls = ps.classify(H, "elliptic")
    E = 0.0
    omega = 0.0
    quad = {"x2": 0.0, "xy": 0.0, "y2": 0.0}
    grid = {}
    for (l, s), cell in cls.grid.items():
        if (l, s) == (0, 0):
            E = cell.coefficient((0, 0), (0, 0))
            continue
        if (l, s) == (2, 0):
            omega = cell.coefficient((0, 1), (0, 0))
            quad["x2"] = cell.coefficient((2, 0), (0, 0))
            quad["xy"] = cell.coefficient((1, 0), (1, 0))
            quad["y2"] = cell.coefficient((0, 0), (2, 0))
            rest = cell.zero_like()
            for key, c in cell.terms.items():
                if key not in (((0, 1), (0, 0), ps.COS), ((2, 0), (0, 0), ps.COS),
                               ((1, 0), (1, 0), ps.COS), ((0, 0), (2, 0), ps.COS)):
                    rest.terms[key] = c
            if not rest.is_empty():
                grid[(2, 0)] = rest
            continue
        grid[(l, s)] = cell
    return E, omega, quad, grid


def prepare(H_sec: PoissonSeries, I_star: float, x1_star: float, adeg: int,
            tdeg: int, gamma: float = 1e-8, tau: float = 1.0) -> EllipticState:
    """Preliminary translations and rescaling; state in normal-form shape.

    ``H_sec`` is the secular polynomial series in the Cartesian pairs
    ``(xi, eta)``; ``I_star`` the rotational-action translation and
    ``x1_star`` the transverse center.  Raises :class:`tr.NotElliptic` when
    the transverse quadratic part has mixed signs, ``SeriesError`` for a
    non-positive ``I_star``.
    """
    chain = TransformChain()
    M = tr.secular_to_mixed(H_sec, I_star, adeg, tdeg, x_center=x1_star)
    chain.append(Generator("librational", "librational recombination", center=I_star))
    if x1_star != 0.0:
        chain.append(Generator("cartesian_translation", "transverse centering", pair=0, dx=x1_star))
    E, omega, quad, grid = _split_off_normal_form(M)
    # diagonalize the transverse quadratic part exactly
    a, b, c = quad["x2"], quad["xy"], quad["y2"]
    theta = 0.0
    if b != 0.0:
        theta = 0.5 * math.atan2(b, a - c)
        M2 = tr.rotate_pair(M, 0, theta)
        chain.append(Generator("rotation", "transverse diagonalization", pair=0, theta=theta))
        E, omega, quad, grid = _split_off_normal_form(M2)
        a, b, c = quad["x2"], quad["xy"], quad["y2"]
        M = M2
    if a * c <= 0.0:
        raise tr.NotElliptic(f"transverse quadratic part not elliptic: {a!r} x^2 + {c!r} y^2")
    lam = (a / c) ** 0.25
    Omega = 2.0 * math.copysign(math.sqrt(a * c), a)
    M = tr.rescale_pair(M, 0, lam)
    chain.append(Generator("rescale", "transverse isotropic rescale", pair=0, lam=lam))
    E, omega, quad, grid = _split_off_normal_form(M)
    state = EllipticState(E, omega, Omega, grid, 0, adeg, tdeg, chain,
                          gamma=gamma, tau=tau)
    return state


def check_nonresonance(omega, Omega, r, gamma, tau):
    """Smallest |k omega + l Omega| over the step-r index set, with its (k, l)."""
    worst = (math.inf, None, None)
    for k in range(0, 2 * r + 1):
        for l in (-2, -1, 0, 1, 2):
            if k == 0 and l <= 0:
                continue
            val = abs(k * omega + l * Omega)
            if val < worst[0]:
                worst = (val, k, l)
            thresh = gamma / (k ** tau + 1.0)
            if val < thresh:
                raise SmallDivisorError(
                    f"non-resonance violated at step {r}: |{k} omega + {l} Omega| = "
                    f"{val:.3e} < {thresh:.3e}", k=k, l=l, value=val)
    return worst


# -- homological solves ----------------------------------------------------------


def _solve_pure_angle(target: PoissonSeries, omega: float):
    """chi with {chi, omega p} = -target for a pure trig target (k != 0)."""
    chi = target.zero_like()
    for (exps, cexps, trig), coeff in target.terms.items():
        k = cexps[1]
        if k == 0:
            raise ps.SeriesError("pure-angle solve received a zero harmonic")
        if trig == ps.COS:
            chi.accumulate(exps, cexps, ps.SIN, -coeff / (k * omega))
        else:
            chi.accumulate(exps, cexps, ps.COS, coeff / (k * omega))
    return chi


def _solve_block(target: PoissonSeries, nf: PoissonSeries, basis_keys):
    """Solve {chi, nf} = -target on the span of ``basis_keys`` (numpy solve)."""
    if target.is_empty():
        return target.zero_like()
    tpl = target.zero_like()
    idx = {key: i for i, key in enumerate(basis_keys)}
    m = len(basis_keys)
    M = np.zeros((m, m))
    for j, key in enumerate(basis_keys):
        e = tpl.zero_like()
        e.terms[key] = 1.0
        Le = ps.poisson_bracket(e, nf)
        for kk, c in Le.terms.items():
            i = idx.get(kk)
            if i is None:
                raise ps.SeriesError(f"homological block not closed: {kk} from {key}")
            M[i, j] = c
    rhs = np.zeros(m)
    for kk, c in target.terms.items():
        i = idx.get(kk)
        if i is None:
            raise ps.SeriesError(f"target term {kk} outside homological block")
        rhs[i] = c
    sol = np.linalg.solve(M, -rhs)
    chi = target.zero_like()
    for key, a in zip(basis_keys, sol):
        if a != 0.0:
            chi.terms[key] = float(a)
    return chi


def _linear_block_keys(k):
    keys = []
    for exps, cexps in (((1, 0), (0, k)), ((0, 0), (1, k))):
        for trig in ((ps.COS,) if k == 0 else (ps.COS, ps.SIN)):
            keys.append((exps, cexps, trig))
    return keys


def _quadratic_block_keys(k):
    keys = []
    for exps, cexps in (((2, 0), (0, k)), ((1, 0), (1, k)), ((0, 0), (2, k))):
        for trig in ((ps.COS,) if k == 0 else (ps.COS, ps.SIN)):
            keys.append((exps, cexps, trig))
    return keys


def _collect(grid, pred):
    out = None
    for (l, s), cell in grid.items():
        for key, c in cell.terms.items():
            if pred(l, s, key):
                if out is None:
                    out = cell.zero_like()
                out.terms[key] = out.terms.get(key, 0.0) + c
    return out


def _nf_series(template, omega, Omega):
    nf = template.zero_like()
    nf.accumulate((0, 1), (0, 0), ps.COS, omega)
    nf.accumulate((2, 0), (0, 0), ps.COS, 0.5 * Omega)
    nf.accumulate((0, 0), (2, 0), ps.COS, 0.5 * Omega)
    return nf


def _fold_averages(cells, r, tpl):
    """Move zero-harmonic band content of rows 0 and 2 into the (l, 0) cells.

    Row 1 is left alone: its zero-harmonic part is removable (the transverse
    rotation block of the homological operator is invertible) and belongs to
    the transverse-linear generator's target.
    """
    for s in range(1, r + 1):
        for l in (0, 2):
            cell = cells.get((l, s))
            if cell is None or cell.is_empty():
                continue
            avg = ps.angle_average(cell)
            if avg.is_empty():
                continue
            osc = ps.oscillating_part(cell)
            if osc.is_empty():
                cells.pop((l, s))
            else:
                cells[(l, s)] = osc
            dst = cells.get((l, 0))
            cells[(l, 0)] = avg if dst is None else ps.add(dst, avg)


def _consolidate_low_bands(cells, r):
    """Merge stale removed-class content of bands below r into band r.

    A band index is an upper bound on the trigonometric degree, so moving
    content upward is always legal; it puts leftover dust where the current
    step's homological cancellation is booked.
    """
    for l in (0, 1, 2):
        start = 0 if l == 1 else 1
        for s in range(start, r):
            cell = cells.pop((l, s), None)
            if cell is None or cell.is_empty():
                continue
            dst = cells.get((l, r))
            cells[(l, r)] = cell if dst is None else ps.add(dst, cell)


def _nf_from_cells(cells, tpl):
    cell20 = cells.get((2, 0))
    if cell20 is None:
        raise ps.SeriesError("normal-form cell is empty")
    omega = cell20.coefficient((0, 1), (0, 0))
    quad = {"x2": cell20.coefficient((2, 0), (0, 0)),
            "xy": cell20.coefficient((1, 0), (1, 0)),
            "y2": cell20.coefficient((0, 0), (2, 0))}
    return omega, quad


def step(state: EllipticState) -> EllipticState:
    """One normalization step; returns the updated state with r incremented.

    Grid content is booked by formal order: the ``(1/j!) L^j`` image of cell
    ``(l, s)`` lands in band ``j r + s`` whatever its literal harmonics, so
    the removed bands stay clean to roundoff within the step.
    """
    r = state.r + 1
    check_nonresonance(state.omega, state.Omega, r, state.gamma, state.tau)
    tpl = state.template()
    band_max = state.tdeg // 2
    trunc = (state.adeg, state.tdeg)

    cells = {key: cell.copy() for key, cell in state.grid.items()}
    nf = tpl.zero_like()
    nf.accumulate((0, 1), (0, 0), ps.COS, state.omega)
    nf.accumulate((2, 0), (0, 0), ps.COS, 0.5 * state.Omega)
    nf.accumulate((0, 0), (2, 0), ps.COS, 0.5 * state.Omega)
    dst = cells.get((2, 0))
    cells[(2, 0)] = nf if dst is None else ps.add(dst, nf)
    if state.E != 0.0:
        e_cell = tpl.zero_like()
        e_cell.accumulate((0, 0), (0, 0), ps.COS, state.E)
        dst = cells.get((0, 0))
        cells[(0, 0)] = e_cell if dst is None else ps.add(dst, e_cell)

    norms = {}
    _consolidate_low_bands(cells, r)

    def collect_row(l_row, pred=None):
        cell = cells.get((l_row, r))
        if cell is None or cell.is_empty():
            return None
        if pred is None:
            return cell.copy()
        out = None
        for key, c in cell.terms.items():
            if pred(key):
                if out is None:
                    out = tpl.zero_like()
                out.terms[key] = c
        return out

    def apply_gen(chi, delta_l, label):
        nonlocal cells
        cells = tr.redistribute_lie(chi, delta_l, r, cells, band_max, trunc)
        state.chain.append(Generator("series", label, chi=chi))

    # substep 1: pure-angle band content
    _fold_averages(cells, r, tpl)
    omega, quad = _nf_from_cells(cells, tpl)
    f0 = collect_row(0)
    if f0 is not None and not f0.is_empty():
        chi0 = _solve_pure_angle(f0, omega)
        norms["chi0"] = ps.l1_norm(chi0)
        apply_gen(chi0, -2, f"chi0 step {r}")
    else:
        norms["chi0"] = 0.0

    # substep 2: transverse-linear band content
    _fold_averages(cells, r, tpl)
    omega, quad = _nf_from_cells(cells, tpl)
    f1 = collect_row(1)
    if f1 is not None and not f1.is_empty():
        nfs = _nf_series_from(tpl, omega, quad)
        chi1 = tpl.zero_like()
        by_k = {}
        for key, c in f1.terms.items():
            by_k.setdefault(abs(key[1][1]), f1.zero_like()).terms[key] = c
        for k, blk in sorted(by_k.items()):
            chi1 = ps.add(chi1, _solve_block(blk, nfs, _linear_block_keys(k)))
        norms["chi1"] = ps.l1_norm(chi1)
        apply_gen(chi1, -1, f"chi1 step {r}")
    else:
        norms["chi1"] = 0.0

    # substep 3a: action-linear oscillating content
    _fold_averages(cells, r, tpl)
    omega, quad = _nf_from_cells(cells, tpl)
    f2p = collect_row(2, lambda key: key[0][1] == 1)
    if f2p is not None and not f2p.is_empty():
        X2 = _solve_pure_angle(f2p, omega)
        norms["X2"] = ps.l1_norm(X2)
        apply_gen(X2, 0, f"X2 step {r}")
    else:
        norms["X2"] = 0.0

    # substep 3b: transverse-quadratic oscillating content
    _fold_averages(cells, r, tpl)
    omega, quad = _nf_from_cells(cells, tpl)
    f2q = collect_row(2, lambda key: key[0][1] == 0)
    if f2q is not None and not f2q.is_empty():
        nfs = _nf_series_from(tpl, omega, quad)
        Y2 = tpl.zero_like()
        by_k = {}
        for key, c in f2q.terms.items():
            by_k.setdefault(abs(key[1][1]), f2q.zero_like()).terms[key] = c
        for k, blk in sorted(by_k.items()):
            Y2 = ps.add(Y2, _solve_block(blk, nfs, _quadratic_block_keys(k)))
        norms["Y2"] = ps.l1_norm(Y2)
        apply_gen(Y2, 0, f"Y2 step {r}")
    else:
        norms["Y2"] = 0.0

    # final folds, then measure what is left in the removed class
    _fold_averages(cells, r, tpl)
    removed_residual = 0.0
    H_norm = 0.0
    for (l, s), cell in cells.items():
        n = ps.l1_norm(cell)
        H_norm += n
        if l <= 2 and 1 <= s <= r:
            removed_residual += n

    # exact diagonalization of the averaged transverse quadratic part
    omega, quad = _nf_from_cells(cells, tpl)
    a, b, c = quad["x2"], quad["xy"], quad["y2"]
    if b != 0.0:
        theta = 0.5 * math.atan2(b, a - c)
        cells = {key: tr.rotate_pair(cell, 0, theta) for key, cell in cells.items()}
        state.chain.append(Generator("rotation", f"diagonalization step {r}", pair=0, theta=theta))
        omega, quad = _nf_from_cells(cells, tpl)
        a, b, c = quad["x2"], quad["xy"], quad["y2"]
    if a * c <= 0.0:
        raise tr.NotElliptic(f"transverse part lost ellipticity at step {r}")
    lam = (a / c) ** 0.25
    Omega_new = 2.0 * math.copysign(math.sqrt(a * c), a)
    if abs(lam - 1.0) > 1e-16:
        cells = {key: tr.rescale_pair(cell, 0, lam) for key, cell in cells.items()}
        state.chain.append(Generator("rescale", f"isotropic rescale step {r}", pair=0, lam=lam))

    # re-extract the normalized part; removed-class leftovers (roundoff and
    # centering-residual leakage) stay in the grid and are picked up again by
    # the next step
    cell00 = cells.pop((0, 0), None)
    E_new = cell00.coefficient((0, 0), (0, 0)) if cell00 is not None else 0.0
    cells.pop((2, 0), None)
    new_grid = {key: cell for key, cell in cells.items() if not cell.is_empty()}

    out = EllipticState(E_new, omega, Omega_new, new_grid, r, state.adeg, state.tdeg,
                        state.chain, state.norm_log, state.residual_log,
                        state.gamma, state.tau)
    out.norm_log.append({"r": r, **norms})
    out.residual_log.append({"r": r, "removed_residual": removed_residual,
                             "H_norm": H_norm})
    return out


def _nf_series_from(tpl, omega, quad):
    nfs = tpl.zero_like()
    nfs.accumulate((0, 1), (0, 0), ps.COS, omega)
    nfs.accumulate((2, 0), (0, 0), ps.COS, quad["x2"])
    nfs.accumulate((1, 0), (1, 0), ps.COS, quad["xy"])
    nfs.accumulate((0, 0), (2, 0), ps.COS, quad["y2"])
    return nfs


def run(state: EllipticState, R: int) -> EllipticState:
    for _ in range(R):
        state = step(state)
    return state


def write_norm_log(state: EllipticState, path):
    with open(path, "w", newline="") as fh:
        fh.write("r,chi0,chi1,X2,Y2\n")
        for row in state.norm_log:
            fh.write(f"{row['r']},{row['chi0']!r},{row['chi1']!r},"
                     f"{row['X2']!r},{row['Y2']!r}\n")


# -- Newton refinements ------------------------------------------------------------


class NewtonError(RuntimeError):
    pass


def _state_for(H_sec, I_star, x1_star, adeg, tdeg, R_inner, gamma, tau):
    return run(prepare(H_sec, I_star, x1_star, adeg, tdeg, gamma, tau), R_inner)


def newton_energy(H_sec, I_guess, E_target, x1_star, adeg, tdeg, R_inner=4,
                  gamma=1e-8, tau=1.0, tol_rel=1e-11, max_iter=30):
    """Newton solve of E(I) = E_target for the rotational-action translation.

    The energy map evaluates the full inner pipeline (prepare + R_inner
    normalization steps); its derivative is a central finite difference,
    recomputed only when an iteration fails to contract the residual.
    Returns ``(I_star, iterations)``.
    """
    I = float(I_guess)
    tol = tol_rel * max(abs(E_target), 1e-300)
    slope = None
    prev = math.inf
    for it in range(max_iter):
        E = _state_for(H_sec, I, x1_star, adeg, tdeg, R_inner, gamma, tau).E
        res = E - E_target
        if abs(res) < tol:
            return I, it
        if slope is None or abs(res) > 0.5 * prev:
            h = max(1e-6 * abs(I), 1e-9)
            Ep = _state_for(H_sec, I + h, x1_star, adeg, tdeg, R_inner, gamma, tau).E
            Em = _state_for(H_sec, I - h, x1_star, adeg, tdeg, R_inner, gamma, tau).E
            slope = (Ep - Em) / (2.0 * h)
            if slope == 0.0 or not math.isfinite(slope):
                raise NewtonError(f"zero or invalid energy slope at I = {I!r}")
        prev = abs(res)
        I -= res / slope
        if I <= 0.0:
            raise NewtonError(f"energy Newton left the domain: I = {I!r}")
    raise NewtonError(f"energy Newton did not converge in {max_iter} iterations")


def newton_center(H_sec, I_star, x1_guess, adeg, tdeg, gamma=1e-8, tau=1.0,
                  tol=1e-12, max_iter=30):
    """Newton solve of the transverse centering residual d<H>_q/dx(0) = 0.

    The residual is the averaged transverse-linear coefficient of the
    prepared Hamiltonian; driving it to zero centers the preliminary
    expansions on the elliptic equilibrium.
    """
    x1 = float(x1_guess)
    slope = None
    prev = math.inf

    def residual(xv):
        return prepare(H_sec, I_star, xv, adeg, tdeg, gamma, tau).center_residual()

    for it in range(max_iter):
        res = residual(x1)
        if abs(res) < tol:
            return x1, it
        if slope is None or abs(res) > 0.5 * prev:
            h = max(1e-6 * abs(x1), 1e-9)
            slope = (residual(x1 + h) - residual(x1 - h)) / (2.0 * h)
            if slope == 0.0 or not math.isfinite(slope):
                raise NewtonError(f"zero or invalid centering slope at x1 = {x1!r}")
        prev = abs(res)
        x1 -= res / slope
    raise NewtonError(f"centering Newton did not converge in {max_iter} iterations")


def newton_refine(H_sec, I_guess, x1_guess, E_target, adeg, tdeg, R_inner=4,
                  gamma=1e-8, tau=1.0, tol_rel=1e-11, center_tol=1e-12,
                  max_iter=20):
    """Joint Newton solve of (E(I, x1) - E_target, centering residual) = 0.

    The 2x2 Jacobian comes from central finite differences of the inner
    pipeline and is then kept frozen with Broyden secant updates while the
    residual keeps contracting.  Returns ``(I, x1)``.
    """
    import numpy as np

    v = np.array([float(I_guess), float(x1_guess)])
    tolE = tol_rel * max(abs(E_target), 1e-300)

    def F(vec):
        st0 = prepare(H_sec, vec[0], vec[1], adeg, tdeg, gamma, tau)
        delta = st0.center_residual()
        st = run(st0, R_inner)
        return np.array([st.E - E_target, delta])

    def jacobian(vec):
        J = np.empty((2, 2))
        for j in range(2):
            h = max(1e-6 * abs(vec[j]), 1e-9)
            vp, vm = vec.copy(), vec.copy()
            vp[j] += h
            vm[j] -= h
            J[:, j] = (F(vp) - F(vm)) / (2.0 * h)
        return J

    f = F(v)
    J = None
    prev = math.inf
    for it in range(max_iter):
        if abs(f[0]) < tolE and abs(f[1]) < center_tol:
            return float(v[0]), float(v[1])
        scale = max(abs(f[0]) / tolE, abs(f[1]) / center_tol)
        if J is None or scale > 0.5 * prev:
            J = jacobian(v)
        prev = scale
        try:
            dv = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular Jacobian in joint Newton: {exc}") from exc
        v = v + dv
        f_new = F(v)
        # Broyden rank-one update keeps the frozen Jacobian honest
        denom = float(dv @ dv)
        if denom > 0.0:
            J = J + np.outer(f_new - f - J @ dv, dv) / denom
        f = f_new
    raise NewtonError(f"joint Newton refinement did not converge in {max_iter} iterations")
