"""Scenario files: flat ``section.key = value`` text.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Every key is listed in :data:`KEYS` together with its type and default; the
README documents the same table.  Relative file paths are resolved against
the directory of the scenario file.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mesh as meshmod
from .bonding import TimeGrid
from .export import read_table
from .expr import Expression, ExpressionError
from .laws import AdhesionSpec, FrictionSpec, LawError
from .scheme import CoupledProblem, SchemeConfig
from .vi_solver import METHODS

OUTPUT_ROOT_ENV = "ANTIPLANE_OUTPUT_ROOT"

# key -> (kind, default); default None means "required" only where noted below
KEYS = {
    "mesh.file": ("path", None),
    "mesh.unit_square": ("int", None),
    "mesh.bottom": ("tag", "C"),
    "mesh.right": ("tag", "N"),
    "mesh.top": ("tag", "D"),
    "mesh.left": ("tag", "N"),
    "mesh.refine": ("int", 0),
    "mesh.gmsh_tags": ("str", "1:D,2:N,3:C"),
    "material.mu": ("expr", "1"),
    "material.mu_star": ("float", None),
    "friction.c0g": ("float", 0.0),
    "friction.c1g": ("float", 0.0),
    "friction.c2g": ("float", 0.0),
    "adhesion.law": ("str", "E1_ED0"),
    "adhesion.lambda": ("field", "0"),
    "adhesion.E_D": ("field", "0"),
    "adhesion.beta0": ("field", "1"),
    "loads.f0": ("expr", "0"),
    "loads.fN": ("expr", "0"),
    "grid.T": ("float", 1.0),
    "grid.n_steps": ("int", 10),
    "solver.tol_outer": ("float", 1e-8),
    "solver.max_outer": ("int", 100),
    "solver.tol_inner": ("float", 1e-11),
    "solver.max_inner": ("int", 200_000),
    "solver.method": ("str", "shrinkage_cd"),
    "solver.tol_picard": ("float", None),
    "solver.max_picard": ("int", 1000),
    "solver.divergence_window": ("int", 3),
    "init.u0": ("str", "zero"),
    "flags.verification": ("bool", False),
    "flags.clip_beta_box": ("bool", False),
    "flags.box_claims": ("bool", True),
    "flags.waive_assumptions": ("bool", False),
    "verify.exact_u": ("expr", None),
    "verify.levels": ("int", 4),
    "output.dir": ("path", "out"),
    "output.figures": ("bool", True),
    "output.vtk": ("bool", True),
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ScenarioError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where = f"{key}" + (f" (line {line})" if line is not None else "") + ": "
        super().__init__(where + message)
        self.key = key
        self.line = line


@dataclass
class Scenario:
    """A validated scenario with its mesh loaded and all data on the mesh."""

    path: Path | None
    raw: dict  # key -> (text, line)
    mesh: object
    mu: np.ndarray  # per triangle
    mu_star: float
    fric: FrictionSpec
    adh: AdhesionSpec
    beta0: np.ndarray  # per contact vertex
    f0: Expression
    fN: Expression
    grid: TimeGrid
    solver: dict
    flags: dict
    u0: np.ndarray | None
    exact_u: Expression | None
    levels: int
    output_dir: Path
    figures: bool = True
    vtk: bool = True
    mu_scale: float = 1.0  # sweep rescaling applied on top of material.mu
    notes: list = field(default_factory=list)

    def problem(self, mesh=None):
        """CoupledProblem on the scenario mesh (or on a refinement of it)."""
        m = self.mesh if mesh is None else mesh
        mu = self.mu if mesh is None else self.mu_scale * _eval_mu(self._mu_expr, m)
        beta0 = self.beta0 if mesh is None else _refined_contact(self, m, self.beta0)
        adh = self.adh
        if mesh is not None and np.ndim(adh.lam):
            adh = AdhesionSpec(adh.law, _refined_contact(self, m, adh.lam),
                               _refined_contact(self, m, adh.E_D) if np.ndim(adh.E_D) else adh.E_D)
        dirichlet = None
        if self.exact_u is not None:
            dirichlet = np.array(self.exact_u(m.vertices[:, 0], m.vertices[:, 1]), dtype=float)
        return CoupledProblem(mesh=m, mu=mu, fric=self.fric, adh=adh, beta0=beta0,
                              f0=self.f0, fN=self.fN, mu_star=self.mu_star if mesh is None else None,
                              dirichlet=dirichlet)

    def config(self, u0=None):
        s = self.solver
        return SchemeConfig(grid=self.grid, tol_outer=s["tol_outer"], max_outer=s["max_outer"],
                            tol_inner=s["tol_inner"], max_inner=s["max_inner"], inner_method=s["method"],
                            tol_picard=s["tol_picard"], max_picard=s["max_picard"],
                            u0=self.u0 if u0 is None else u0, clip_beta_box=self.flags["clip_beta_box"],
                            verification=self.flags["verification"],
                            divergence_window=s["divergence_window"])

    @property
    def partition_mode(self):
        return "verification" if self.flags["verification"] else "strict"

    @property
    def _mu_expr(self):
        return Expression(self.raw.get("material.mu", (KEYS["material.mu"][1], None))[0])


# ---------------------------------------------------------------- parsing


def read_assignments(text):
    """Split scenario text into {key: (value_text, line_number)}."""
    out = {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ScenarioError(f"expected 'section.key = value', got {body!r}", line=no)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ScenarioError("unknown key", key=key, line=no)
        if key in out:
            raise ScenarioError(f"duplicate key (first set on line {out[key][1]})", key=key, line=no)
        if value == "":
            raise ScenarioError("empty value", key=key, line=no)
        out[key] = (value, no)
    return out


def _convert(kind, key, text, line):
    try:
        if kind == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            return int(text)
        if kind == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if kind == "tag":
            if text not in meshmod.TAGS:
                raise ScenarioError(f"boundary tag must be one of {', '.join(meshmod.TAGS)}", key, line)
            return text
        if kind == "expr":
            return Expression(text)
    except ScenarioError:
        raise
    except ExpressionError as exc:
        raise ScenarioError(str(exc), key, line) from None
    except ValueError:
        raise ScenarioError(f"invalid {kind} value {text!r}", key, line) from None
    return text


def _eval_mu(expr, mesh):
    c = mesh.vertices[mesh.triangles].mean(axis=1)
    return np.array(expr(c[:, 0], c[:, 1]), dtype=float)


def _refined_contact(scn, mesh, values):
    """Carry per-contact-vertex data to a refined mesh by linear interpolation along Γ_C."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return values
    old = scn.mesh.vertices[scn.mesh.vertices_on("C")]
    new = mesh.vertices[mesh.vertices_on("C")]
    # nearest old vertices are exact on the coarse nodes; midpoints average the edge ends
    out = np.empty(len(new))
    for k, p in enumerate(new):
        d = np.linalg.norm(old - p, axis=1)
        i = np.argsort(d)[:2]
        if d[i[0]] < 1e-12:
            out[k] = values[i[0]]
        else:
            w = d[i[::-1]] / d[i].sum()
            out[k] = w @ values[i]
    return out


def _read_vertex_values(path, key, line, mesh):
    contact = mesh.vertices_on("C")
    try:
        header, rows = read_table(path)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}", key, line) from None
    if header == ["vertex_id", "value"]:
        col = 1
    elif header == ["vertex_id", "x", "y", "value"]:
        col = 3
    else:
        raise ScenarioError(f"{path}: expected header vertex_id,value or vertex_id,x,y,value", key, line)
    data = {}
    for r in rows:
        try:
            data[int(r[0])] = float(r[col])
        except (ValueError, IndexError):
            raise ScenarioError(f"{path}: malformed row {r!r}", key, line) from None
    missing = [int(v) for v in contact if int(v) not in data]
    if missing:
        raise ScenarioError(f"{path}: no value for contact vertices {missing[:5]}", key, line)
    return np.array([data[int(v)] for v in contact])


def _field(text, key, line, base, mesh):
    try:
        return np.full(len(mesh.vertices_on("C")), float(text))
    except ValueError:
        pass
    path = (base / text).resolve()
    if not path.exists():
        raise ScenarioError(f"file {text!r} does not exist", key, line)
    return _read_vertex_values(path, key, line, mesh)


def _parse_gmsh_tags(text, key, line):
    out = {}
    try:
        for item in text.split(","):
            num, tag = item.split(":")
            out[int(num)] = tag.strip()
    except ValueError:
        raise ScenarioError(f"expected 'number:tag,...', got {text!r}", key, line) from None
    for tag in out.values():
        if tag not in meshmod.TAGS:
            raise ScenarioError(f"unknown boundary tag {tag!r}", key, line)
    return out


def _output_dir(text, base):
    p = Path(text)
    if p.is_absolute():
        return p
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return (Path(root) if root else base) / p


def check_beta0(beta0, law, box_claims, waive, key="adhesion.beta0", line=None):
    """Data assumptions on the initial bonding field; returns warnings when waived."""
    beta0 = np.asarray(beta0, dtype=float)
    lo, hi = float(beta0.min()), float(beta0.max())
    problems = []
    if box_claims and not (lo > 0.0 and hi <= 1.0):
        problems.append(f"beta0 range [{lo:g}, {hi:g}] violates the bonding-box assumption "
                        "0 < c <= beta0 <= 1 required for box claims")
    if law == "E3" and not (lo > 0.0 and hi < 1.0):
        problems.append(f"beta0 range [{lo:g}, {hi:g}] violates the E3 data assumption 0 < beta0 < 1")
    if problems and not waive:
        raise ScenarioError("; ".join(problems) + " (set flags.waive_assumptions = true to override)", key, line)
    return problems


def build_scenario(raw, base=Path("."), path=None):
    """Validate a {key: (text, line)} mapping into a Scenario."""
    vals = {}
    for key, (kind, default) in KEYS.items():
        if key in raw:
            text, line = raw[key]
            vals[key] = _convert(kind, key, text, line)
        else:
            vals[key] = _convert(kind, key, str(default), None) if default is not None else None

    def where(key):
        return raw.get(key, (None, None))[1]

    flags = {k.split(".", 1)[1]: vals[k] for k in KEYS if k.startswith("flags.")}
    mode = "verification" if flags["verification"] else "strict"

    # mesh
    if (vals["mesh.file"] is None) == (vals["mesh.unit_square"] is None):
        raise ScenarioError("exactly one of mesh.file and mesh.unit_square must be set", "mesh.file")
    try:
        if vals["mesh.file"] is not None:
            mpath = (base / vals["mesh.file"]).resolve()
            if not mpath.exists():
                raise ScenarioError(f"file {vals['mesh.file']!r} does not exist", "mesh.file", where("mesh.file"))
            tags = _parse_gmsh_tags(vals["mesh.gmsh_tags"], "mesh.gmsh_tags", where("mesh.gmsh_tags"))
            mesh = meshmod.read_mesh(mpath, tags, partition=None)
        else:
            n = vals["mesh.unit_square"]
            if n < 1:
                raise ScenarioError("must be >= 1", "mesh.unit_square", where("mesh.unit_square"))
            mesh = meshmod.unit_square(n, bottom=vals["mesh.bottom"], right=vals["mesh.right"],
                                       top=vals["mesh.top"], left=vals["mesh.left"])
        if vals["mesh.refine"] < 0:
            raise ScenarioError("must be >= 0", "mesh.refine", where("mesh.refine"))
        for _ in range(vals["mesh.refine"]):
            mesh = meshmod.refine_uniform(mesh)
        meshmod.validate_partition(mesh, mode)
    except meshmod.MeshError as exc:
        raise ScenarioError(str(exc), "mesh.file" if vals["mesh.file"] else "mesh.unit_square") from exc

    # material
    mu_expr = vals["material.mu"]
    if "t" in mu_expr.variables:
        raise ScenarioError("the material coefficient cannot depend on t", "material.mu", where("material.mu"))
    try:
        mu = _eval_mu(mu_expr, mesh)
    except ExpressionError as exc:
        raise ScenarioError(str(exc), "material.mu", where("material.mu")) from None
    if not np.all(mu > 0):
        raise ScenarioError(f"mu must be positive (min {mu.min():g})", "material.mu", where("material.mu"))
    mu_star = vals["material.mu_star"]
    if mu_star is None:
        mu_star = float(mu.min())
    elif not (0 < mu_star <= mu.min() * (1 + 1e-12)):
        raise ScenarioError(f"mu_star must lie in (0, min mu = {mu.min():g}]", "material.mu_star",
                            where("material.mu_star"))

    # laws
    try:
        fric = FrictionSpec(vals["friction.c0g"], vals["friction.c1g"], vals["friction.c2g"])
    except LawError as exc:
        raise ScenarioError(str(exc), "friction") from None
    fields = {}
    for key in ("adhesion.lambda", "adhesion.E_D", "adhesion.beta0"):
        text = raw.get(key, (KEYS[key][1], None))[0]
        fields[key] = _field(text, key, where(key), base, mesh)
    law = vals["adhesion.law"]
    lam = fields["adhesion.lambda"]
    ed = fields["adhesion.E_D"]
    try:
        adh = AdhesionSpec(law, lam, ed)
    except LawError as exc:
        bad = "adhesion.law" if "unknown law" in str(exc) else (
            "adhesion.lambda" if "lambda" in str(exc) else "adhesion.E_D")
        raise ScenarioError(str(exc), bad, where(bad)) from None
    beta0 = fields["adhesion.beta0"]
    notes = check_beta0(beta0, law, flags["box_claims"], flags["waive_assumptions"], line=where("adhesion.beta0"))

    # grid and solver
    try:
        grid = TimeGrid(vals["grid.T"], vals["grid.n_steps"])
    except ValueError as exc:
        raise ScenarioError(str(exc), "grid") from None
    solver = {k.split(".", 1)[1]: vals[k] for k in KEYS if k.startswith("solver.")}
    if solver["method"] not in METHODS:
        raise ScenarioError(f"unknown method (expected one of {', '.join(METHODS)})", "solver.method",
                            where("solver.method"))
    for k in ("tol_outer", "tol_inner"):
        if not solver[k] > 0:
            raise ScenarioError("must be positive", f"solver.{k}", where(f"solver.{k}"))
    for k in ("max_outer", "max_inner", "max_picard", "divergence_window"):
        if solver[k] < 1:
            raise ScenarioError("must be >= 1", f"solver.{k}", where(f"solver.{k}"))

    # initial guess
    u0 = None
    u0_text = vals["init.u0"]
    if u0_text != "zero":
        from .export import read_field_csv

        upath = (base / u0_text).resolve()
        if not upath.exists():
            raise ScenarioError(f"file {u0_text!r} does not exist", "init.u0", where("init.u0"))
        try:
            u0 = read_field_csv(upath, mesh.n_vertices)
        except ValueError as exc:
            raise ScenarioError(str(exc), "init.u0", where("init.u0")) from None

    exact = vals["verify.exact_u"]
    if exact is not None:
        if not flags["verification"]:
            raise ScenarioError("requires flags.verification = true", "verify.exact_u", where("verify.exact_u"))
        if "t" in exact.variables:
            raise ScenarioError("the exact solution must not depend on t", "verify.exact_u", where("verify.exact_u"))
    if vals["verify.levels"] < 2:
        raise ScenarioError("must be >= 2", "verify.levels", where("verify.levels"))

    return Scenario(path=path, raw=dict(raw), mesh=mesh, mu=mu, mu_star=float(mu_star), fric=fric, adh=adh,
                    beta0=beta0, f0=vals["loads.f0"], fN=vals["loads.fN"], grid=grid, solver=solver, flags=flags,
                    u0=u0, exact_u=exact, levels=vals["verify.levels"],
                    output_dir=_output_dir(vals["output.dir"], base), figures=vals["output.figures"],
                    vtk=vals["output.vtk"], notes=notes)


def parse_scenario(path, overrides=None):
    """Read and validate a scenario file.

    ``overrides`` maps keys to replacement value strings (used by sweeps).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    raw = read_assignments(text)
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ScenarioError("unknown key", key=key)
        raw[key] = (str(value), None)
    return build_scenario(raw, path.parent.resolve(), path)


def parse_scenario_text(text, base=".", overrides=None):
    raw = read_assignments(text)
    for key, value in (overrides or {}).items():
        raw[key] = (str(value), None)
    return build_scenario(raw, Path(base).resolve())


def with_axis_value(scn, name, value):
    """Copy of ``scn`` with one sweep parameter set to ``value``.

    mu_star rescales mu so that its minimum equals value; lambda and beta0
    rescale their field to the given sup norm (a zero field becomes constant).
    """
    value = float(value)
    if name == "mu_star":
        if not value > 0:
            raise ScenarioError("mu_star must be positive", "material.mu_star")
        scale = value / float(scn.mu.min())
        return dataclasses.replace(scn, mu=scn.mu * scale, mu_star=scn.mu_star * scale,
                                   mu_scale=scn.mu_scale * scale)
    if name == "c2g":
        fric = FrictionSpec(scn.fric.c0g, scn.fric.c1g, value)
        return dataclasses.replace(scn, fric=fric)
    if name == "T":
        return dataclasses.replace(scn, grid=TimeGrid(value, scn.grid.n_steps))
    if name in ("lambda", "beta0"):
        cur = scn.adh.lam if name == "lambda" else scn.beta0
        cur = np.broadcast_to(np.asarray(cur, dtype=float), scn.beta0.shape)
        top = float(np.max(np.abs(cur))) if cur.size else 0.0
        new = cur * (value / top) if top > 0 else np.full(cur.shape, value)
        if name == "lambda":
            try:
                adh = AdhesionSpec(scn.adh.law, new, scn.adh.E_D)
            except LawError as exc:
                raise ScenarioError(str(exc), "adhesion.lambda") from None
            return dataclasses.replace(scn, adh=adh)
        notes = check_beta0(new, scn.adh.law, scn.flags["box_claims"], scn.flags["waive_assumptions"])
        return dataclasses.replace(scn, beta0=new, notes=notes)
    raise ScenarioError(f"unknown sweep axis {name!r} (expected one of {', '.join(AXES)})")


AXES = ("mu_star", "c2g", "lambda", "beta0", "T")
