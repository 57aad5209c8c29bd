"""Figure rendering for scenario reports.

Every scenario writes its figures next to the delimited output.  The
Agg backend keeps rendering headless and output bytes reproducible for
a fixed matplotlib version.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import RESIDUAL_NAMES

_SAVEKW = dict(dpi=110, bbox_inches="tight", metadata={"Software": "collardyn"})


def evolution_figure(times, hamiltonians, residual_series, path):
    """Hamiltonian trace and residual norms over an evolution run."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ax1.plot(times, hamiltonians, lw=1.2, color="tab:blue")
    ax1.set_xlabel("t")
    ax1.set_ylabel("boundary Hamiltonian")
    ax1.set_title("energy trace")
    for name in RESIDUAL_NAMES:
        series = np.asarray(residual_series[name])
        ax2.semilogy(times, np.maximum(series, 1e-18), lw=1.0, label=name)
    ax2.set_xlabel("t")
    ax2.set_ylabel("residual norm")
    ax2.set_title("constraint residuals")
    ax2.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, **_SAVEKW)
    plt.close(fig)


def sweep_figure(lambdas, curvature_norms, gauss_norms, slopes, path):
    """Log-log residuals of the lambda sweep with fitted slopes."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(lambdas, curvature_norms, "o-", label=f"|F_A|  (slope {slopes[0]:.3f})")
    ax.loglog(lambdas, gauss_norms, "s-", label=f"|covariant div P|  (slope {slopes[1]:.3f})")
    ax.set_xlabel("lambda")
    ax.set_ylabel("residual norm")
    ax.set_title("topological limit diagnostics")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEKW)
    plt.close(fig)


def pca_figure(system_names, level_dims, path):
    """Dimension staircase per analyzed system."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    for name, dims in zip(system_names, level_dims):
        ax.step(range(len(dims)), dims, where="post", marker="o", label=name)
    ax.set_xlabel("constraint level")
    ax.set_ylabel("dimension estimate")
    ax.set_title("constraint algorithm levels")
    if system_names:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEKW)
    plt.close(fig)


def checks_figure(names, values, tolerances, path):
    """Bar chart of check magnitudes against their tolerances."""
    fig, ax = plt.subplots(figsize=(max(4.6, 0.5 * len(names) + 2.0), 3.6))
    x = np.arange(len(names))
    vals = np.maximum(np.abs(values), 1e-18)
    ax.bar(x, vals, color="tab:blue", width=0.55, label="measured")
    ax.plot(x, tolerances, "r_", markersize=16, label="tolerance")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("magnitude")
    ax.set_title("invariant checks")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEKW)
    plt.close(fig)
