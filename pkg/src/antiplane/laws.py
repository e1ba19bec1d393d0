"""Friction bound g, adhesion evolution laws H and their structural constants."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

LAWS = ("E1", "E1_ED0", "E2", "E3")


class LawError(ValueError):
    pass


@dataclass(frozen=True)
class FrictionSpec:
    """Affine-clamped friction bound g(r, y) = max(0, c0g + c1g*y + c2g*r).

    ``r`` is the slip magnitude |u| and ``y`` the bonding field.
    """

    c0g: float = 0.0
    c1g: float = 0.0
    c2g: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v >= 0):
                raise LawError(f"friction constant {f.name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True, eq=False)
class AdhesionSpec:
    law: str = "E1"
    lam: np.ndarray | float = 0.0
    E_D: np.ndarray | float = 0.0

    def __post_init__(self):
        if self.law not in LAWS:
            raise LawError(f"unknown law {self.law!r} (expected one of {', '.join(LAWS)})")
        lam = np.asarray(self.lam, dtype=float)
        ed = np.asarray(self.E_D, dtype=float)
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise LawError("stiffness lambda must be finite and >= 0")
        if not np.all(np.isfinite(ed)):
            raise LawError("bond restoration rate E_D must be finite")
        if self.law == "E1_ED0" and np.any(ed != 0):
            raise LawError("law E1_ED0 requires E_D = 0")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "E_D", ed)

    @property
    def lam_sup(self):
        return float(np.max(np.abs(self.lam))) if self.lam.size else 0.0

    @property
    def E_D_sup(self):
        if self.law in ("E1_ED0", "E3") or self.E_D.size == 0:
            return 0.0
        return float(np.max(np.abs(self.E_D)))


@dataclass(frozen=True)
class HypothesisConstants:
    c0_vphi: float = 0.0  # friction functional
    c1_vphi: float = 0.0
    c2_vphi: float = 0.0
    c1_phi: float = 0.0  # adhesion functional
    c2_phi: float = 0.0
    c3_phi: float = 0.0
    c0_beta: float = 0.0  # bonding rate
    c1_beta: float = 0.0
    c2_beta: float = 0.0
    c3_beta: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise LawError(f"{f.name} must be nonnegative")


def eval_g(spec, r, y):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise LawError("friction bound needs r = |u| >= 0")
    out = np.maximum(0.0, spec.c0g + spec.c1g * np.asarray(y, dtype=float) + spec.c2g * r)
    return float(out) if out.ndim == 0 else out


def eval_H(spec, beta, u):
    """Right-hand side of the bonding evolution law, pointwise."""
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    lam, ed = spec.lam, spec.E_D
    if spec.law == "E1":
        out = ed - lam * u * u * beta
    elif spec.law == "E1_ED0":
        out = -lam * u * u * beta
    elif spec.law == "E2":
        out = -np.maximum(lam * u * u * beta - ed, 0.0)
    else:
        if np.any(beta <= -1.0):
            raise LawError("law E3 is undefined for beta <= -1")
        out = -lam * beta / (1.0 + beta) * u * u
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def dH_dbeta(spec, beta, u):
    """Partial derivative of H in beta (one-sided at the E2 kink)."""
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    lam = spec.lam
    if spec.law in ("E1", "E1_ED0"):
        return -lam * u * u + 0 * beta
    if spec.law == "E2":
        active = lam * u * u * beta - spec.E_D > 0
        return np.where(active, -lam * u * u, 0.0)
    return -lam * u * u / (1.0 + beta) ** 2


def derive_constants(fric, adh, published_e3=False):
    """Structural constants of the shipped friction and adhesion laws.

    For E3 the default ``c3_beta`` equals ||lambda||: the bound
    beta/(1+beta) <= beta/2 behind the value ||lambda||/2 only holds for
    beta >= 1, so the halved constant fails the difference inequality near
    beta = 0.  ``published_e3=True`` returns the halved value anyway, for
    comparison with the checker.
    """
    lam = adh.lam_sup
    c = dict(
        c0_vphi=fric.c0g,
        c1_vphi=fric.c1g,
        c2_vphi=fric.c2g,
        c1_phi=lam,
        c2_phi=lam,
        c3_phi=lam,
        c1_beta=lam,
        c2_beta=lam,
        c3_beta=lam,
    )
    if adh.law in ("E1", "E2"):
        c["c0_beta"] = adh.E_D_sup
    else:
        c["c0_beta"] = 0.0
    if adh.law == "E3" and published_e3:
        c["c3_beta"] = 0.5 * lam
    return HypothesisConstants(**c)


# ---------------------------------------------------------------- checker


def friction_functional(fric, y, r, v):
    """vphi(y, r, v) = g(|r|, y) |v|."""
    return eval_g(fric, np.abs(r), y) * np.abs(v)


def adhesion_functional(lam, y, r, v):
    """phi(y, r, v) = -lam y^2 r v."""
    return -lam * y * y * r * v


@dataclass
class InequalityCheck:
    name: str
    worst_slack: float
    violations: int
    samples: int
    worst_point: tuple = ()

    @property
    def ok(self):
        return self.violations == 0


@dataclass
class HypothesisReport:
    checks: list = field(default_factory=list)
    tolerance: float = 1e-12

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    @property
    def worst_slack(self):
        return min(c.worst_slack for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _record(name, slack, points, tol):
    k = int(np.argmin(slack))
    return InequalityCheck(
        name=name,
        worst_slack=float(slack[k]),
        violations=int(np.sum(slack < -tol)),
        samples=len(slack),
        worst_point=tuple(float(p[k]) for p in points),
    )


def check_hypotheses(fric, adh, consts, n_samples=10_000, ranges=(-2.0, 2.0), beta_range=(0.0, 1.0),
                     seed=0, tol=1e-12):
    """Sample every structural inequality and report the worst slack.

    Slack is right-hand side minus left-hand side, so negative values are
    violations.  Bonding arguments of H are drawn from ``beta_range``;
    everything else from ``ranges``.  When lambda or E_D vary along the
    contact boundary each sample also draws a vertex.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = ranges
    n = n_samples

    def U(a=lo, b=hi):
        return rng.uniform(a, b, n)

    lam_all = np.atleast_1d(adh.lam)
    ed_all = np.atleast_1d(adh.E_D)
    m = max(lam_all.size, ed_all.size)
    idx = rng.integers(0, m, n)
    lam = np.broadcast_to(lam_all, (m,))[idx]
    ed = np.broadcast_to(ed_all, (m,))[idx]
    local = AdhesionSpec(law=adh.law, lam=lam, E_D=ed if adh.law != "E1_ED0" else 0.0)
    k = consts
    checks = []

    # friction functional: difference inequality and anchor Lipschitz bound
    y1, y2, r1, r2, v1, v2 = U(), U(), U(), U(), U(), U()
    F = lambda y, r, v: friction_functional(fric, y, r, v)  # noqa: E731
    lhs = F(y1, r1, v2) - F(y1, r1, v1) + F(y2, r2, v1) - F(y2, r2, v2)
    rhs = (k.c1_vphi * np.abs(y1 - y2) + k.c2_vphi * np.abs(r1 - r2)) * np.abs(v1 - v2)
    checks.append(_record("vphi_difference", rhs - lhs, (y1, y2, r1, r2, v1, v2), tol))
    lhs = np.abs(F(0.0, 0.0, v1) - F(0.0, 0.0, v2))
    checks.append(_record("vphi_anchor", k.c0_vphi * np.abs(v1 - v2) - lhs, (v1, v2), tol))

    # adhesion functional
    P = lambda y, r, v: adhesion_functional(lam, y, r, v)  # noqa: E731
    lhs = P(y1, r1, v2) - P(y1, r1, v1) + P(y2, r2, v1) - P(y2, r2, v2)
    dv = np.abs(v1 - v2)
    rhs = (k.c1_phi * y1 ** 2 * np.abs(r1 - r2)
           + k.c2_phi * np.abs(y2) * np.abs(r2) * np.abs(y1 - y2)
           + k.c3_phi * np.abs(y1) * np.abs(r2) * np.abs(y1 - y2)) * dv
    checks.append(_record("phi_difference", rhs - lhs, (y1, y2, r1, r2, v1, v2), tol))
    checks.append(_record("phi_anchor", -np.abs(P(0.0, 0.0, v1)), (v1,), tol))

    # bonding rate on the physical box
    b1, b2 = U(*beta_range), U(*beta_range)
    lhs = np.abs(eval_H(local, b1, r1) - eval_H(local, b2, r2))
    rhs = ((k.c1_beta * np.abs(b1) * np.abs(r1) + k.c2_beta * np.abs(b1) * np.abs(r2)) * np.abs(r1 - r2)
           + k.c3_beta * r2 ** 2 * np.abs(b1 - b2))
    checks.append(_record("H_difference", rhs - lhs, (b1, b2, r1, r2), tol))
    # anchor used as |H(0, 0)| <= c0_beta: E2 gives H(0, 0) = 0 < ||E_D||
    h00 = np.abs(eval_H(local, np.zeros(n), np.zeros(n)))
    checks.append(_record("H_anchor", k.c0_beta - h00, (idx.astype(float),), tol))

    # consequences of the anchors: one-sided growth bounds
    lhs = F(y1, r1, v2) - F(y1, r1, v1)
    rhs = (k.c0_vphi + k.c1_vphi * np.abs(y1) + k.c2_vphi * np.abs(r1)) * dv
    checks.append(_record("vphi_growth", rhs - lhs, (y1, r1, v1, v2), tol))
    lhs = P(y1, r1, v2) - P(y1, r1, v1)
    rhs = k.c1_phi * y1 ** 2 * np.abs(r1) * dv
    checks.append(_record("phi_growth", rhs - lhs, (y1, r1, v1, v2), tol))
    lhs = np.abs(eval_H(local, b1, r1))
    rhs = k.c0_beta + k.c3_beta * np.abs(b1) * r1 ** 2
    checks.append(_record("H_growth", rhs - lhs, (b1, r1), tol))
    return HypothesisReport(checks=checks, tolerance=tol)
