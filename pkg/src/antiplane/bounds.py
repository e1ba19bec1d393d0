"""A priori estimates evaluated as diagnostics.

The universal constants in these bounds are unknown, so every quantity is
reported as a ratio against a computable right-hand side (with the trace
constant replaced by its discrete estimate and the generic constant set to
one).  Only stability of those ratios is ever asserted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fem

BOX_TOL = 1e-12
EXP_LIMIT = 700.0


def compute_K(mu_star, consts, f0_sup, fN_sup, beta_sup, xi_sup, c0_hat):
    """L-infinity bound constant K (the bound itself is c0 * K)."""
    if not mu_star > 0:
        raise ValueError("mu_star must be positive")
    k = consts
    total = (k.c0_vphi + f0_sup + fN_sup + k.c1_vphi * beta_sup + k.c2_vphi * c0_hat * xi_sup
             + k.c1_phi * c0_hat * beta_sup ** 2 * xi_sup)
    return total / mu_star


def apriori_H1_rhs(mu_star, consts, f0_sup, fN_sup, beta_sup, xi_h1, c0_hat):
    """Right-hand side of the H1 estimate with the generic constant set to 1."""
    if not mu_star > 0:
        raise ValueError("mu_star must be positive")
    k = consts
    return (k.c1_vphi * c0_hat / mu_star * beta_sup
            + k.c2_vphi * c0_hat / mu_star * xi_h1
            + k.c1_phi * c0_hat / mu_star * beta_sup ** 2 * xi_h1
            + 1.0 + f0_sup + fN_sup)


@dataclass
class GronwallBound:
    value: float | None
    overflow: bool = False


def gronwall_beta_rhs(beta0_norm, c0beta, c, u_inf_norm, T):
    """||beta0||(1 + cT|u|^2 e^{cT|u|^2}) + c0beta T (1 + cT|u|^2 e^{cT|u|^2}).

    ``c`` is the growth constant (c3_beta times the trace constant).
    On overflow the value is None and ``overflow`` is set.
    """
    for name, v in (("beta0_norm", beta0_norm), ("c0beta", c0beta), ("c", c), ("u_inf_norm", u_inf_norm), ("T", T)):
        if v < 0:
            raise ValueError(f"{name} must be nonnegative")
    a = c * T * u_inf_norm ** 2
    if a > EXP_LIMIT:
        return GronwallBound(None, True)
    factor = 1.0 + a * math.exp(a)
    value = beta0_norm * factor + c0beta * T * factor
    if not math.isfinite(value):
        return GronwallBound(None, True)
    return GronwallBound(value)


def verify_beta_box(traj, law=None, tol=BOX_TOL):
    """(box_ok, monotone_ok, worst_violation) for a bonding trajectory.

    ``worst_violation`` is the largest excursion outside the box.
    For E1 with a nonzero restoration rate only beta >= 0 is checked and
    monotonicity is not claimed (``monotone_ok`` is None).
    """
    b = np.asarray(getattr(traj, "values", traj), dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    growth_allowed = law == "E1"
    upper = math.inf if growth_allowed else 1.0
    below = np.maximum(0.0 - b, 0.0)
    above = np.maximum(b - upper, 0.0) if math.isfinite(upper) else np.zeros_like(b)
    worst = float(max(below.max(initial=0.0), above.max(initial=0.0)))
    box_ok = worst <= tol
    monotone_ok = None
    if not growth_allowed:
        monotone_ok = float(np.diff(b, axis=0).max(initial=0.0)) <= tol
    return box_ok, monotone_ok, worst


@dataclass
class BoundsReport:
    apriori_H1_rhs: float
    h1_ratio: float
    K_value: float
    linf_ratio: float
    gronwall_rhs: float | None
    gronwall_overflow: bool
    beta_sup: float
    beta_box_ok: bool
    beta_monotone_ok: bool | None
    beta_worst_violation: float

    def rows(self):
        return list(self.__dict__.items())


def evaluate(solution, disc, consts, c0_hat):
    """Bounds of a converged run (xi is the limit displacement itself)."""
    space = disc.space
    dofs = disc.dofs
    f0_sup = float(np.max(np.abs(disc.f0))) if disc.f0.size else 0.0
    neu = np.unique(dofs.neumann_edges)
    fN_sup = float(np.max(np.abs(disc.fN[:, neu]))) if neu.size else 0.0
    u_sup = float(np.max(np.abs(solution.u)))
    beta_sup = float(np.max(np.abs(solution.beta))) if solution.beta.size else 0.0
    u_h1 = float(max(fem.norm(row, "H1_Omega", space) for row in solution.u))
    K = compute_K(disc.mu_star, consts, f0_sup, fN_sup, beta_sup, u_sup, c0_hat)
    rhs = apriori_H1_rhs(disc.mu_star, consts, f0_sup, fN_sup, beta_sup, u_h1, c0_hat)
    b0 = float(np.max(np.abs(disc.beta0))) if disc.beta0.size else 0.0
    gb = gronwall_beta_rhs(b0, consts.c0_beta, consts.c3_beta * c0_hat, u_sup, disc.grid.T)
    box_ok, mono_ok, worst = verify_beta_box(solution.beta, disc.adh.law)
    return BoundsReport(
        apriori_H1_rhs=rhs,
        h1_ratio=u_h1 / rhs,
        K_value=K,
        linf_ratio=u_sup / K if K > 0 else (0.0 if u_sup == 0 else math.inf),
        gronwall_rhs=gb.value,
        gronwall_overflow=gb.overflow,
        beta_sup=beta_sup,
        beta_box_ok=box_ok,
        beta_monotone_ok=mono_ok,
        beta_worst_violation=worst,
    )
