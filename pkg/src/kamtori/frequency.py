"""Frequency analysis: quasi-periodic decomposition and periodic-orbit location.

Implements the iterative windowed-projection scheme: seed each frequency from
the peak of a Hanning-windowed periodogram, refine it by derivative-free
maximization of the windowed inner-product modulus, extract all located
amplitudes jointly through the Gram system of the (non-orthogonal) windowed
exponentials, subtract, and repeat.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .integrate import HamiltonianFlow, rk4_integrate
from .transforms import librational_point, librational_point_inverse


@dataclass
class FrequencyComponent:
    amplitude: float
    frequency: float
    phase: float


@dataclass
class FrequencyDecomposition:
    """Components in strictly descending amplitude order."""

    components: list
    dt: float
    n_samples: int

    def __post_init__(self):
        self.components.sort(key=lambda c: -c.amplitude)

    def __len__(self):
        return len(self.components)

    def resynthesize(self, times):
        out = np.zeros(len(times), dtype=complex)
        for c in self.components:
            out += c.amplitude * np.exp(1j * (c.frequency * np.asarray(times) + c.phase))
        return out

    def value_at_zero(self):
        return sum(c.amplitude * cmath.exp(1j * c.phase) for c in self.components)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("A,nu,phi\n")
            for c in self.components:
                fh.write(f"{c.amplitude!r},{c.frequency!r},{c.phase!r}\n")


def _window(n, order=1):
    # order-1 Hanning weight, unit mean on the sample range
    tau = 2.0 * np.arange(n) / max(n - 1, 1) - 1.0
    if order == 0:
        return np.ones(n)
    w = (1.0 + np.cos(math.pi * tau)) ** order
    return w * (n / w.sum())


def _projection(signal, w, dt, nu):
    n = len(signal)
    t = dt * np.arange(n)
    return np.dot(w * signal, np.exp(-1j * nu * t)) / n


def _refine_peak(signal, w, dt, nu0, half_width):
    # maximize in the scaled variable u = (nu - nu0) * T so the bounded
    # golden-section/parabolic search works at absolute tolerance (the raw
    # variable would hit the optimizer's sqrt(eps)*|nu| relative floor)
    T = dt * len(signal)
    uw = half_width * T
    f = lambda u: -abs(_projection(signal, w, dt, nu0 + u / T))
    res = minimize_scalar(f, bounds=(-uw, uw), method="bounded",
                          options={"xatol": 1e-10 * uw, "maxiter": 200})
    u = res.x
    # parabolic polish through three samples above the roundoff scale
    h = 1e-4 * uw
    fm, f0, fp = f(u - h), f(u), f(u + h)
    denom = fm - 2.0 * f0 + fp
    if denom > 0.0:
        shift = 0.5 * h * (fm - fp) / denom
        if abs(shift) < h:
            u += shift
    return nu0 + u / T


def decompose(signal, dt, n_components=16, window_order=1, residual_tol=0.0):
    """Iterative quasi-periodic decomposition of a complex signal.

    Returns a :class:`FrequencyDecomposition` with at most ``n_components``
    components in descending amplitude order.  Requires at least 64 samples;
    an identically-zero signal yields an empty decomposition.
    """
    signal = np.asarray(signal, dtype=complex)
    n = len(signal)
    if n < 64:
        raise ValueError("signal too short for frequency analysis (need >= 64 samples)")
    if n_components < 1:
        raise ValueError("n_components must be positive")
    if not np.any(signal):
        return FrequencyDecomposition([], dt, n)
    w = _window(n, window_order)
    t = dt * np.arange(n)
    fft_freqs = 2.0 * math.pi * np.fft.fftfreq(n, d=dt)
    bin_hw = math.pi / (n * dt) * 2.0
    scale = float(np.max(np.abs(signal)))
    freqs = []
    resid = signal.copy()
    for _ in range(n_components):
        spec = np.fft.fft(w * resid)
        k = int(np.argmax(np.abs(spec)))
        nu = _refine_peak(resid, w, dt, fft_freqs[k], bin_hw)
        if any(abs(nu - f) < 1e-9 * max(abs(nu), 1.0) for f in freqs):
            break
        freqs.append(nu)
        # joint amplitudes through the Gram system of windowed exponentials
        basis = [np.exp(1j * f * t) for f in freqs]
        m = len(basis)
        G = np.empty((m, m), dtype=complex)
        b = np.empty(m, dtype=complex)
        for i in range(m):
            b[i] = np.dot(w * signal, np.conj(basis[i])) / n
            for j in range(m):
                G[i, j] = np.dot(w * basis[j], np.conj(basis[i])) / n
        amps = np.linalg.solve(G, b)
        resid = signal - sum(a * e for a, e in zip(amps, basis))
        if residual_tol > 0.0 and float(np.max(np.abs(resid))) < residual_tol * scale:
            break
    comps = [FrequencyComponent(abs(a), f, math.atan2(a.imag, a.real) % (2.0 * math.pi))
             for a, f in zip(amps, freqs) if abs(a) > 0.0]
    return FrequencyDecomposition(comps, dt, n)


def is_multiple(nu, base, tol=1e-4):
    """Whether nu is an integer multiple of base within tolerance (in units of base)."""
    r = nu / base
    return abs(r - round(r)) < tol


# -- signals from secular trajectories ------------------------------------------


def librational_signals(traj):
    """Complex signals (x1 + i y1, x2 + i y2) from a secular (xi, eta) trajectory."""
    pts = np.array([librational_point(z) for z in traj.states])
    return pts[:, 0] + 1j * pts[:, 2], pts[:, 1] + 1j * pts[:, 3]


@dataclass
class FundamentalFrequencies:
    omega: tuple
    window_drift: tuple
    stable: bool
    decompositions: tuple = field(repr=False, default=())


def fundamental_frequencies(H, state0, dt, T, n_components=16, mult_tol=1e-4,
                            stability_tol=1e-6):
    """Frequency vector (rotation of phi2, libration of phi1) of an orbit.

    The rotational frequency is the leading component of the ``x2 + i y2``
    signal; the librational one is the leading component of ``x1 + i y1``
    that is not an integer multiple of the rotational frequency.  Stability is
    diagnosed by repeating the analysis on the first half of the samples; a
    drift beyond ``stability_tol`` flags the orbit as chaotic/undetermined.
    """
    flow = H if isinstance(H, HamiltonianFlow) else HamiltonianFlow(H)
    traj = rk4_integrate(flow, state0, dt, T)
    sig_lib, sig_rot = librational_signals(traj)

    def extract(n_use):
        d_rot = decompose(sig_rot[:n_use], dt, n_components)
        d_lib = decompose(sig_lib[:n_use], dt, n_components)
        w1 = d_rot.components[0].frequency
        w2 = None
        for c in d_lib.components:
            if not is_multiple(c.frequency, w1, mult_tol):
                w2 = c.frequency
                break
        return w1, w2, d_rot, d_lib

    n = len(sig_rot)
    w1_full, w2_full, d_rot, d_lib = extract(n)
    w1_half, w2_half, _, _ = extract(n // 2)
    drift1 = abs(w1_full - w1_half)
    drift2 = abs(w2_full - w2_half) if (w2_full is not None and w2_half is not None) else math.inf
    stable = drift1 < stability_tol and drift2 < stability_tol
    return FundamentalFrequencies((w1_full, w2_full), (drift1, drift2), stable,
                                  (d_rot, d_lib))


def locate_periodic_orbit(H, state0, dt, T, tol=1e-7, max_iter=25,
                          n_components=16, mult_tol=1e-4):
    """Iterative refinement of an initial condition toward the periodic orbit.

    At each pass both librational-coordinate signals are decomposed, every
    component whose frequency is not an integer multiple of the rotational
    fundamental is zeroed, and the filtered signals resummed at t = 0 define
    the new initial condition.  Stops when the residual non-multiple amplitude
    falls below ``tol``.

    Returns ``(state, info)`` with the refined (xi, eta) initial state and a
    dict holding the residual history, the final ``(x, y)`` coordinates and
    the rotational frequency.
    """
    flow = H if isinstance(H, HamiltonianFlow) else HamiltonianFlow(H)
    state = tuple(state0)
    history = []
    nu_rot = None
    for _ in range(max_iter):
        traj = rk4_integrate(flow, state, dt, T)
        sig_lib, sig_rot = librational_signals(traj)
        d_rot = decompose(sig_rot, dt, n_components)
        nu_rot = d_rot.components[0].frequency
        d_lib = decompose(sig_lib, dt, n_components)
        residual = 0.0
        new_vals = []
        for dec in (d_lib, d_rot):
            v = 0.0 + 0.0j
            for c in dec.components:
                if is_multiple(c.frequency, nu_rot, mult_tol):
                    v += c.amplitude * cmath.exp(1j * c.phase)
                else:
                    residual += c.amplitude
            new_vals.append(v)
        history.append(residual)
        if residual < tol:
            info = {"residual_history": history, "nu_rot": nu_rot,
                    "xy": (new_vals[0].real, new_vals[1].real,
                           new_vals[0].imag, new_vals[1].imag)}
            return state, info
        xy_state = (new_vals[0].real, new_vals[1].real,
                    new_vals[0].imag, new_vals[1].imag)
        state = librational_point_inverse(xy_state)
    raise RuntimeError(
        f"periodic-orbit location did not converge below {tol:g}; residual history: "
        + ", ".join(f"{r:.3e}" for r in history))
