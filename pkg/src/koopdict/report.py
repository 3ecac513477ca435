"""Run artifacts: delimited tables for every figure family, plus rendered
figures saved next to them.

Every writer returns the paths it created so the pipeline can hash them
into the manifest.  CSV numbers are full-precision scientific notation;
these files are the determinism surface of a run.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .koopman import ModeDecomposition  # noqa: E402

__all__ = [
    "write_mode_tables",
    "write_ae_loss_csv",
    "write_surface_csv",
    "write_series_csv",
    "plot_error_curves",
    "plot_h_modes",
    "plot_min_error",
    "plot_phase_portrait",
    "plot_grid_3d",
    "plot_ae_loss",
    "plot_surfaces",
    "plot_mid_series",
]


def _fmt(value: float) -> str:
    return f"{value:.17e}"


def _write_lines(path: Path, header: str, lines: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")
    return path


def write_mode_tables(out_dir: Path, decomp: ModeDecomposition) -> list[Path]:
    """One error-vs-lambda table and one h table per mode, plus the
    residual ladder.  Mode numbering is 1-based to match the figures."""
    out_dir = Path(out_dir)
    paths: list[Path] = []
    for k, (pair, curve) in enumerate(zip(decomp.modes, decomp.curves), start=1):
        lines = [
            f"{_fmt(lam.real)},{_fmt(lam.imag)},{_fmt(err)}"
            for lam, err in zip(curve.lambdas, curve.fit_errors)
        ]
        paths.append(
            _write_lines(
                out_dir / f"error_vs_lambda_mode{k}.csv", "lambda_re,lambda_im,fit_error", lines
            )
        )
        lines = [
            f"{_fmt(s)},{_fmt(hv.real)},{_fmt(hv.imag)}"
            for s, hv in zip(decomp.s_params, pair.h)
        ]
        paths.append(_write_lines(out_dir / f"h_mode{k}.csv", "s,h_re,h_im", lines))
    ladder = [f"{k},{_fmt(norm)}" for k, norm in enumerate(decomp.residual_norms)]
    paths.append(_write_lines(out_dir / "min_error_vs_mode.csv", "mode,residual_norm", ladder))
    return paths


def write_ae_loss_csv(path: Path, losses: np.ndarray) -> Path:
    lines = [f"{epoch},{_fmt(loss)}" for epoch, loss in enumerate(losses, start=1)]
    return _write_lines(Path(path), "epoch,loss", lines)


def write_surface_csv(path: Path, x: np.ndarray, times: np.ndarray, field: np.ndarray) -> Path:
    """A space-time field sampled as rows (x outer loop, t inner), one
    row per grid node."""
    if field.shape != (x.shape[0], times.shape[0]):
        raise ValueError(f"field shape {field.shape} does not match (n_x, n_t)")
    lines = [
        f"{_fmt(x[i])},{_fmt(times[j])},{_fmt(field[i, j])}"
        for i in range(x.shape[0])
        for j in range(times.shape[0])
    ]
    return _write_lines(Path(path), "x,t,u", lines)


def write_series_csv(path: Path, times: np.ndarray, values: np.ndarray) -> Path:
    lines = [f"{_fmt(t)},{_fmt(v)}" for t, v in zip(times, values)]
    return _write_lines(Path(path), "t,u", lines)


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_error_curves(path: Path, decomp: ModeDecomposition) -> Path:
    n = decomp.n_modes
    cols = min(n, 5)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(
        rows, cols, figsize=(3.0 * cols, 2.4 * rows), sharex=True, squeeze=False
    )
    for k, curve in enumerate(decomp.curves):
        ax = axes[k // cols][k % cols]
        finite = np.isfinite(curve.fit_errors)
        ax.semilogy(curve.lambdas[finite].real, curve.fit_errors[finite], lw=1.0)
        lam = decomp.modes[k].eigenvalue
        ax.axvline(lam.real, color="tab:red", lw=0.8, ls="--")
        ax.set_title(f"mode {k + 1}", fontsize=9)
    for idx in range(n, rows * cols):
        axes[idx // cols][idx % cols].axis("off")
    for ax in axes[-1]:
        ax.set_xlabel(r"$\mathrm{Re}\,\lambda$")
    for row_axes in axes:
        row_axes[0].set_ylabel("fit error")
    fig.suptitle("Least-squares error vs candidate eigenvalue")
    fig.tight_layout()
    return _save(fig, path)


def plot_h_modes(path: Path, decomp: ModeDecomposition) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    has_imag = any(np.abs(m.h.imag).max() > 0 for m in decomp.modes)
    for k, mode in enumerate(decomp.modes, start=1):
        (line,) = ax.plot(decomp.s_params, mode.h.real, lw=1.2, label=f"mode {k}")
        if has_imag:
            ax.plot(decomp.s_params, mode.h.imag, lw=1.0, ls="--", color=line.get_color())
    ax.set_xlabel("segment parameter s")
    ax.set_ylabel("h(s)")
    title = "Initial data per mode"
    if has_imag:
        title += " (dashed: imaginary part)"
    ax.set_title(title)
    ax.legend(fontsize=8, ncol=2)
    return _save(fig, path)


def plot_min_error(path: Path, decomp: ModeDecomposition) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    modes = np.arange(decomp.residual_norms.shape[0])
    positive = decomp.residual_norms > 0
    if positive.all():
        ax.semilogy(modes, decomp.residual_norms, "o-", ms=4)
    else:
        ax.plot(modes, decomp.residual_norms, "o-", ms=4)
    ax.set_xlabel("modes used")
    ax.set_ylabel("residual 2-norm")
    ax.set_title("Minimum error vs mode count")
    return _save(fig, path)


def plot_phase_portrait(path: Path, points: np.ndarray, labels: tuple[str, str]) -> Path:
    """All ensemble rows of a planar grid as curves, starts marked."""
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    for row in points:
        ax.plot(row[:, 0], row[:, 1], lw=0.7, color="tab:blue", alpha=0.6)
    ax.plot(points[:, 0, 0], points[:, 0, 1], "k.", ms=3)
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    ax.set_title("Trajectory ensemble")
    return _save(fig, path)


def plot_grid_3d(path: Path, points: np.ndarray) -> Path:
    fig = plt.figure(figsize=(5.6, 4.8))
    ax = fig.add_subplot(projection="3d")
    for row in points:
        ax.plot(row[:, 0], row[:, 1], row[:, 2], lw=0.7, color="tab:blue", alpha=0.6)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_zlabel("x3")
    ax.set_title("Lifted trajectory ensemble")
    return _save(fig, path)


def plot_ae_loss(path: Path, losses: np.ndarray) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    epochs = np.arange(1, losses.shape[0] + 1)
    if losses.size and (losses > 0).all():
        ax.semilogy(epochs, losses, lw=1.0)
    else:
        ax.plot(epochs, losses, lw=1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training MSE")
    ax.set_title("Autoencoder training loss")
    return _save(fig, path)


def plot_surfaces(
    path: Path, x: np.ndarray, times: np.ndarray, u1: np.ndarray, u2: np.ndarray
) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 3.8), sharey=True)
    for ax, field, name in ((axes[0], u1, "u1"), (axes[1], u2, "u2")):
        mesh = ax.pcolormesh(times, x, field, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax)
        ax.set_xlabel("t")
        ax.set_title(name)
    axes[0].set_ylabel("x")
    fig.suptitle("Reaction-diffusion fields")
    fig.tight_layout()
    return _save(fig, path)


def plot_mid_series(path: Path, times: np.ndarray, u1_mid: np.ndarray, u2_mid: np.ndarray) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(times, u1_mid, lw=1.0, label="u1")
    ax.plot(times, u2_mid, lw=1.0, label="u2")
    ax.set_xlabel("t")
    ax.set_ylabel("field value at x = 1/2")
    ax.set_title("Mid-domain time series")
    ax.legend()
    return _save(fig, path)
