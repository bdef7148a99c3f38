"""
line plots of grid functions, written as SVG.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

import cslab.log  # noqa: E402

_logger = cslab.log.internal_logger()


def write_line_plot(
    path: str,
    x: np.ndarray,
    series: dict[str, np.ndarray],
    title: str = "",
    size: tuple[float, float] = (8.0, 4.0),
) -> None:
    """
    plots one line per series over a shared x axis and saves it as SVG.

    Args:
        path (str): destination file.
        x (np.ndarray): abscissae.
        series (dict[str, np.ndarray]): name -> ordinates, same length as x.
        title (str, optional): the title. Defaults to "".
        size (tuple[float, float], optional): figure size in inches. Defaults to (8, 4).
    """
    fig, ax = plt.subplots(figsize=size)
    try:
        for name, v in series.items():
            ax.plot(x, np.asarray(v, dtype=np.float64), linewidth=1.0, label=name)
        ax.axhline(0.0, color="#999999", linewidth=0.5)
        ax.set_xlim(float(np.min(x)), float(np.max(x)))
        ax.set_title(title, fontsize=10)
        ax.legend(fontsize=8, loc="upper right")
        fig.savefig(path, format="svg", bbox_inches="tight")
    finally:
        plt.close(fig)
    _logger.debug("written %s" % (path))
