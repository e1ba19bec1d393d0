"""Report figures written straight to files (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def convergence_history(report, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = np.arange(1, report.iterations + 1)
        ax.semilogy(n, np.maximum(report.e_u, 1e-300), "o-", label=r"$e_u$ (H1)")
        if any(report.e_beta):
            ax.semilogy(n, np.maximum(report.e_beta, 1e-300), "s--", label=r"$e_\beta$ (L2 on $\Gamma_C$)")
        ax.axhline(report.tol_outer, color="k", lw=0.8, ls=":", label="tolerance")
        r = [(i + 1, x) for i, x in enumerate(report.ratios) if x is not None]
        if r:
            ax2 = ax.twinx()
            ax2.plot(*zip(*r), "^", color="tab:red", ms=4, label=r"$B_n$")
            ax2.set_ylabel(r"ratio $B_n$", color="tab:red")
            ax2.set_ylim(0, max(1.1, max(x for _, x in r) * 1.1))
            ax2.grid(False)
        ax.set_xlabel("outer iteration n")
        ax.set_ylabel("increment")
        ax.legend(loc="upper right", frameon=False)
        ax.set_title(f"outer iteration ({report.termination})")
        return _save(fig, path)


def beta_trajectories(grid, mesh, contact_vertices, beta, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        beta = np.asarray(beta)
        if beta.size:
            xs = mesh.vertices[contact_vertices, 0]
            cmap = plt.get_cmap("viridis")
            span = max(xs.max() - xs.min(), 1e-12)
            for j in range(beta.shape[1]):
                ax.plot(grid.nodes, beta[:, j], color=cmap((xs[j] - xs.min()) / span), lw=1)
            sm = plt.cm.ScalarMappable(cmap=cmap, norm=plt.Normalize(xs.min(), xs.min() + span))
            fig.colorbar(sm, ax=ax, label="x of contact vertex")
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\beta$")
        ax.set_title("bonding field on the contact boundary")
        return _save(fig, path)


def displacement(mesh, values, path, title="displacement"):
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(5.0, 4.2))
        tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        pc = ax.tripcolor(tri, values, shading="gouraud", cmap="coolwarm")
        ax.triplot(tri, color="k", lw=0.2, alpha=0.3)
        fig.colorbar(pc, ax=ax, label="u")
        ax.set_aspect("equal")
        ax.set_title(title)
        return _save(fig, path)


def convergence_rates(h, e_l2, e_h1, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        h = np.asarray(h)
        ax.loglog(h, e_l2, "o-", label="L2 error")
        ax.loglog(h, e_h1, "s-", label="H1 seminorm error")
        for p, e, ls in ((2, e_l2, ":"), (1, e_h1, "--")):
            ax.loglog(h, e[0] * (h / h[0]) ** p, "k", ls=ls, lw=0.8, label=f"slope {p}")
        ax.set_xlabel("h")
        ax.set_ylabel("error")
        ax.legend(frameon=False)
        ax.set_title("manufactured solution")
        return _save(fig, path)


def sweep_map(rows, path):
    """delta_hat against the fitted rate; failed runs plotted at B = 1."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for ok, marker, label in ((True, "o", "converged"), (False, "x", "not converged")):
            pts = [(r["delta_hat"], r["B_fit"] if np.isfinite(r["B_fit"]) else 1.0)
                   for r in rows if r["converged"] == ok and np.isfinite(r["delta_hat"])]
            if pts:
                ax.plot(*zip(*pts), marker, ls="none", label=label)
        ax.axvline(1.0, color="k", lw=0.8, ls=":")
        ax.axhline(1.0, color="k", lw=0.8, ls=":")
        ax.set_xlabel(r"$\hat\delta$")
        ax.set_ylabel(r"$B_{fit}$")
        ax.legend(frameon=False)
        return _save(fig, path)
