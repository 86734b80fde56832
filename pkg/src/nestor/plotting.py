"""Static log-log charts of study rows."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("rmse_vs_eps", "cost_vs_eps")


def _guide(ax, eps, anchor, slope, label, style):
    ax.loglog(eps, anchor * (eps / eps[0]) ** slope, style, color="0.6", lw=0.8, label=label)


def emit_plot(rows, kind, path):
    """Write an SVG chart of ``rows`` with slope -1 and -2 guide lines.

    Args:
        rows: Study rows, ordered by decreasing ``eps``.
        kind: ``"rmse_vs_eps"`` or ``"cost_vs_eps"``.
        path: Output file.

    Raises:
        ValueError: ``rows`` is empty or ``kind`` unknown.
    """
    if not rows:
        raise ValueError("no rows to plot")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    plt.rcParams["svg.hashsalt"] = "nestor"
    eps = np.array([r.eps for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    series = []
    if kind == "rmse_vs_eps":
        series.append(("empirical RMSE", np.array([r.empirical_rmse for r in rows])))
        ax.loglog(eps, eps, ":", color="0.3", lw=0.8, label="rmse = eps")
        ax.set_ylabel("RMSE")
    else:
        series.append(("classical steps", np.array([r.classical_steps_mean for r in rows])))
        charged = np.array([r.quantum_charged for r in rows])
        if charged.any():
            series.append(("quantum charged", charged))
        ax.set_ylabel("cost per estimate")
    for (label, y), marker in zip(series, "os"):
        ok = y > 0
        ax.loglog(eps[ok], y[ok], marker, ms=5, label=label)
        if ok.sum() >= 2:
            k, c = np.polyfit(np.log(eps[ok]), np.log(y[ok]), 1)
            ax.loglog(eps[ok], np.exp(c) * eps[ok] ** k, "-", lw=1.0,
                      label=f"fit slope {k:.2f}")
    anchor = max((y[y > 0][0] for _, y in series if (y > 0).any()), default=1.0)
    if len(eps) > 1:
        _guide(ax, eps, anchor, -1.0, "slope -1", "--")
        _guide(ax, eps, anchor, -2.0, "slope -2", "-.")
    ax.set_xlabel("eps")
    ax.invert_xaxis()
    ax.set_title(f"{rows[0].estimator} on {rows[0].problem}", fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path
