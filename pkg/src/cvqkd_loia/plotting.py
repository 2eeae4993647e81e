"""PNG figures for sweep results. Needs the optional ``matplotlib`` dependency.

The import is deferred to call time so the numerical core never pulls in a
rendering stack.
"""

import math


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise ImportError("plotting needs matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _groups(result, keys):
    idx = [result.columns.index(k) for k in keys]
    groups = {}
    for row in result.rows:
        groups.setdefault(tuple(row[i] for i in idx), []).append(row)
    return groups


def plot_rate_sweep(result, path, title=None):
    """Estimated (solid) and practical (dashed) rate against distance, log scale.

    Non-positive rates are dropped from the log axis.
    """
    plt = _pyplot()
    col = result.columns.index
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for j, ((sid, vk), rows) in enumerate(sorted(_groups(result, ("scenario_id", "V_k")).items())):
        d = [r[col("d_km")] for r in rows]
        color = colors[j % len(colors)]
        for name, ls in (("estimated_rate", "-"), ("practical_rate", "--")):
            y = [r[col(name)] if r[col(name)] > 0 else math.nan for r in rows]
            label = f"{sid}, V_k={vk:g}" if ls == "-" else None
            ax.semilogy(d, y, ls, color=color, label=label)
    ax.set_xlabel("distance (km)")
    ax.set_ylabel("key rate (bits/symbol)")
    ax.plot([], [], "k-", label="estimated")
    ax.plot([], [], "k--", label="practical")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_min_vk(result, path, title=None):
    plt = _pyplot()
    col = result.columns.index
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for (sid, xi), rows in sorted(_groups(result, ("scenario_id", "xi_e")).items()):
        ok = [r for r in rows if r[col("status")] in ("ok", "dead")]
        ax.plot([r[col("d_km")] for r in ok], [r[col("min_vk")] for r in ok], "o-", ms=3,
                label=f"xi_e={xi:g}")
    ax.set_xlabel("distance (km)")
    ax.set_ylabel("minimal V_k")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_result(result, path):
    if result.kind == "sweep":
        return plot_rate_sweep(result, path, title=result.scenario.name)
    return plot_min_vk(result, path, title=result.scenario.name)
