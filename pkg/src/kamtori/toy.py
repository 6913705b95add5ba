"""Bundled desk-scale secular system used by tests and the demo pipeline.

A two-degree-of-freedom polynomial Hamiltonian in Poincare-like Cartesian
variables (xi, eta), even in total degree and obeying the per-pair parity
rules of secular expansions (harmonic ``k_j`` congruent to the radial degree
``d_j`` mod 2 with ``|k_j| <= d_j``, cosines only).  The leading coupling
locks the pericenter difference into libration around zero, so the phase
portrait mimics the structure targeted by the torus constructions: a
linearly stable periodic orbit off the origin of the (x1, y1) section,
surrounded by librational invariant curves.
"""

from __future__ import annotations

import math

from .series import PoissonSeries, COS
from .transforms import _harmonic_to_xy

# (coefficient, d1, k1, d2, k2): coefficient of (2 J1)^(d1/2) (2 J2)^(d2/2)
# cos(k1 psi1 + k2 psi2).  All entries satisfy the secular parity rules.
# The negative difference-harmonic coupling stabilizes psi1 - psi2 = 0 and,
# against the positive-definite twist block, places the periodic orbit near
# J1 = 0.012 for rotational actions J2 around 0.048.
TOY_TABLE = (
    (-4.2e-3, 2, 0, 0, 0),     # n1 J1  (linear part, n1 = -8.4e-3)
    (-7.5e-3, 0, 0, 2, 0),     # n2 J2  (n2 = -1.5e-2)
    (6.0e-3, 4, 0, 0, 0),      # J1^2 twist
    (-2.75e-3, 2, 0, 2, 0),    # J1 J2 twist
    (4.5e-3, 0, 0, 4, 0),      # J2^2 twist
    (1.5e-4, 0, 0, 6, 0),      # J2^3
    (-1.7e-3, 1, 1, 1, -1),    # sqrt(J1 J2) cos(psi1 - psi2): libration lock
    (-3.0e-4, 1, 1, 3, -1),    # higher-order difference coupling
    (2.0e-4, 2, 2, 2, -2),     # second difference harmonic
    (2.5e-4, 0, 0, 4, 2),      # J2^2 cos(2 psi2): genuine angle dependence
    (-1.5e-4, 2, 0, 2, 2),     # J1 J2 cos(2 psi2)
    (1.26e-4, 1, 1, 3, 1),     # sqrt(J1) J2^(3/2) cos(psi1 + psi2)
)

# initial condition of the bundled "observed" orbit: librating around the
# anti-aligned periodic solution, J2 close to the torus action
TRUE_ORBIT_JPSI = (0.0135, 0.30, 0.0485, 0.0)  # (J1, psi1 - psi2, J2, psi2)


def aa_term_to_secular(target: PoissonSeries, coeff, d1, k1, d2, k2):
    """Accumulate ``coeff (2J1)^(d1/2) (2J2)^(d2/2) cos(k1 psi1 + k2 psi2)``.

    Requires the per-pair parity conditions ``d_j >= |k_j|``,
    ``d_j = k_j mod 2`` so the term is a polynomial in (xi, eta).
    """
    for d, k in ((d1, k1), (d2, k2)):
        if d < abs(k) or (d - k) % 2:
            raise ValueError(f"non-polynomial action-angle term d={d}, k={k}")
    amps1 = _harmonic_to_xy((d1 + k1) // 2, (d1 - k1) // 2)
    amps2 = _harmonic_to_xy((d2 + k2) // 2, (d2 - k2) // 2)
    half = 0.5 * coeff
    acc = {}
    for (m1, n1), a1 in amps1.items():
        for (m2, n2), a2 in amps2.items():
            key = (m1, m2, n1, n2)
            acc[key] = acc.get(key, 0.0) + half * a1 * a2
    for (m1, m2, n1, n2), amp in acc.items():
        # add the conjugate term: real part doubles, imaginary part cancels
        val = 2.0 * amp.real
        if val != 0.0:
            target.accumulate((m1, m2), (n1, n2), COS, val)


def build_secular_hamiltonian(adeg=8, tdeg=8, table=TOY_TABLE) -> PoissonSeries:
    """The bundled secular Hamiltonian as a polynomial series in (xi, eta)."""
    H = PoissonSeries(2, adeg, tdeg, kinds=("xy", "xy"))
    for coeff, d1, k1, d2, k2 in table:
        aa_term_to_secular(H, coeff, d1, k1, d2, k2)
    return H


def true_orbit_initial_state(jpsi=TRUE_ORBIT_JPSI):
    """Initial (xi1, xi2, eta1, eta2) of the bundled librating orbit."""
    J1, dpsi, J2, psi2 = jpsi
    psi1 = dpsi + psi2
    r1, r2 = math.sqrt(2.0 * J1), math.sqrt(2.0 * J2)
    return (r1 * math.cos(psi1), r2 * math.cos(psi2),
            r1 * math.sin(psi1), r2 * math.sin(psi2))
