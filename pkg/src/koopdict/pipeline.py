"""Experiment orchestration: config in, CSV tables + figures + manifest out.

A run executes stages in a fixed order (simulate, featurize, train,
encode, observable, decompose, report), each timed.  Any stage failure
aborts the run with the stage named and removes whatever partial outputs
this run had already written.  The manifest is written last and records
the fully defaulted config echo, library versions, stage timings,
warnings, and a sha256 per emitted file, so a finished directory is
self-describing and checkable.
"""
from __future__ import annotations

import hashlib
import json
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import matplotlib
import numpy as np

from . import report
from .autoencoder import MlpAutoencoder, TrainReport, save_model, train
from .config import ExperimentConfig
from .delay import delay_embed, stack_channels
from .dynsys import (
    Trajectory,
    TrajectoryGrid,
    lift_vdp_3d,
    min_return_distances,
    minmax_scale,
    simulate_rd,
    simulate_vdp_ensemble,
    write_trajectory_csv,
)
from .koopman import (
    ModeDecomposition,
    ObservableGrid,
    evaluate_observable,
    greedy_decompose,
)

__all__ = [
    "StageError",
    "RunManifest",
    "PipelineResult",
    "execute",
    "run_vdp_pipeline",
    "run_rd_pipeline",
    "run_synthetic",
    "STAGE_STOPS",
]

# stop_after targets accepted by execute(); CLI subcommands map onto these
STAGE_STOPS = ("simulate", "train", "encode", "full")

_PKG_VERSION = "0.1.0"
_LATENT_PROXIMITY_TOL = 1e-3


class StageError(RuntimeError):
    """A pipeline stage failed; the stage name travels with the error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass
class RunManifest:
    """Everything needed to audit a finished run directory."""

    config: dict
    versions: dict
    timings_s: dict
    warnings: list[str]
    files: list[dict]
    train: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "config": self.config,
            "versions": self.versions,
            "timings_s": self.timings_s,
            "warnings": self.warnings,
            "files": self.files,
        }
        if self.train is not None:
            out["train"] = self.train
        return out

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


@dataclass
class PipelineResult:
    """Manifest plus the in-memory stage products, for callers that want
    to keep computing instead of re-reading CSV."""

    out_dir: Path
    manifest: RunManifest
    grid: TrajectoryGrid | None = None
    latent_grid: TrajectoryGrid | None = None
    observable_grid: ObservableGrid | None = None
    decomposition: ModeDecomposition | None = None
    model: MlpAutoencoder | None = None
    train_report: TrainReport | None = None
    paths: list[Path] = field(default_factory=list)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _versions() -> dict:
    return {
        "koopdict": _PKG_VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "matplotlib": matplotlib.__version__,
    }


class _Run:
    """Bookkeeping shared by all systems: output tracking, stage timing,
    cleanup on failure, manifest assembly."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out_dir = Path(cfg.output_dir)
        self.fig_dir = self.out_dir / "figures"
        self.timings: dict[str, float] = {}
        self.warnings: list[str] = []
        self.train_info: dict | None = None
        self.paths: list[Path] = []
        self._made_dirs: list[Path] = []
        for d in (self.out_dir, self.fig_dir):
            if not d.exists():
                self._made_dirs.append(d)
        self.fig_dir.mkdir(parents=True, exist_ok=True)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        except Exception as exc:
            self._cleanup()
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - start

    def emit(self, path: Path | None) -> None:
        if path is not None:
            self.paths.append(Path(path))

    def _cleanup(self) -> None:
        for path in self.paths:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass
        for d in reversed(self._made_dirs):
            try:
                d.rmdir()
            except OSError:
                pass  # not empty: leave the user's directory alone

    def finish(self, result: PipelineResult) -> PipelineResult:
        manifest = RunManifest(
            config=self.cfg.to_dict(),
            versions=_versions(),
            timings_s={k: round(v, 6) for k, v in self.timings.items()},
            warnings=list(self.warnings),
            files=[
                {"path": str(p.relative_to(self.out_dir)), "sha256": _sha256(p)}
                for p in sorted(self.paths)
            ],
            train=self.train_info,
        )
        manifest.write(self.out_dir / "manifest.json")
        result.manifest = manifest
        result.out_dir = self.out_dir
        result.paths = list(self.paths)
        return result


def _train_stage(
    run: _Run, features: np.ndarray
) -> tuple[MlpAutoencoder, TrainReport]:
    cfg = run.cfg
    assert cfg.ae_spec is not None and cfg.train is not None
    spec = cfg.scaled_ae_spec()
    train_cfg = replace(cfg.train, seed=cfg.seed)
    model, train_report = train(spec, features, train_cfg)
    run.train_info = {
        "epochs": train_cfg.epochs,
        "final_loss": float(train_report.losses[-1]) if train_cfg.epochs else None,
        "final_accuracy": train_report.final_accuracy,
        "wall_time_s": round(train_report.wall_time_s, 3),
    }
    save_model(run.out_dir / "model.kdae", model)
    run.emit(run.out_dir / "model.kdae")
    run.emit(report.write_ae_loss_csv(run.out_dir / "ae_loss.csv", train_report.losses))
    run.emit(report.plot_ae_loss(run.fig_dir / "ae_loss.png", train_report.losses))
    return model, train_report


def _encode_grid(
    run: _Run,
    model: MlpAutoencoder,
    features: np.ndarray,
    n_rows: int,
    times: np.ndarray,
) -> TrajectoryGrid:
    latent_flat = model.encode(features)
    latent_pts = latent_flat.reshape(n_rows, times.shape[0], latent_flat.shape[1])
    closest = float(min_return_distances(latent_pts).min())
    if closest <= _LATENT_PROXIMITY_TOL:
        run.warnings.append(
            f"latent grid: a trajectory returns within {closest:.3e} of its start; "
            "treating the epoch as non-recurrent anyway"
        )
    latent_grid = TrajectoryGrid(latent_pts, times, recurrence_tol=None)
    write_trajectory_csv(run.out_dir / "latent.csv", latent_grid)
    run.emit(run.out_dir / "latent.csv")
    if latent_grid.dim == 2:
        run.emit(
            report.plot_phase_portrait(
                run.fig_dir / "latent_trajectories.png", latent_grid.points, ("z1", "z2")
            )
        )
    return latent_grid


def _decompose_and_report(run: _Run, obs_grid: ObservableGrid) -> ModeDecomposition:
    cfg = run.cfg
    assert cfg.observable is not None
    with run.stage("decompose"):
        decomp = greedy_decompose(
            obs_grid,
            cfg.lambda_grid,
            cfg.n_modes,
            refine=cfg.refine_lambda,
            observable_name=cfg.observable.name,
        )
    with run.stage("report"):
        for path in report.write_mode_tables(run.out_dir, decomp):
            run.emit(path)
        run.emit(report.plot_error_curves(run.fig_dir / "error_vs_lambda.png", decomp))
        run.emit(report.plot_h_modes(run.fig_dir / "h_modes.png", decomp))
        run.emit(report.plot_min_error(run.fig_dir / "min_error_vs_mode.png", decomp))
    return decomp


def _execute_vdp(cfg: ExperimentConfig, stop_after: str) -> PipelineResult:
    run = _Run(cfg)
    result = PipelineResult(run.out_dir, None)  # type: ignore[arg-type]
    assert cfg.vdp is not None and cfg.segment is not None

    with run.stage("simulate"):
        grid = simulate_vdp_ensemble(cfg.vdp, cfg.segment)
        write_trajectory_csv(run.out_dir / "trajectories.csv", grid)
        run.emit(run.out_dir / "trajectories.csv")
        run.emit(
            report.plot_phase_portrait(
                run.fig_dir / "trajectories.png", grid.points, ("x1", "x2")
            )
        )
    result.grid = grid
    if stop_after == "simulate":
        return run.finish(result)

    feature_grid = grid
    if cfg.ae_spec is not None:
        with run.stage("featurize"):
            lifted = TrajectoryGrid.from_trajectories(
                [lift_vdp_3d(Trajectory(row, grid.dt)) for row in grid.points],
                recurrence_tol=None,
            )
            run.emit(report.plot_grid_3d(run.fig_dir / "lifted_3d.png", lifted.points))
            flat = lifted.points.reshape(-1, lifted.dim)
            scaled_flat, _ = minmax_scale(flat)
        with run.stage("train"):
            model, train_report = _train_stage(run, scaled_flat)
        result.model = model
        result.train_report = train_report
        if stop_after == "train":
            return run.finish(result)
        with run.stage("encode"):
            feature_grid = _encode_grid(run, model, scaled_flat, grid.n_rows, grid.times)
        result.latent_grid = feature_grid
    if stop_after in ("train", "encode"):
        return run.finish(result)

    assert cfg.observable is not None
    with run.stage("observable"):
        obs_grid = evaluate_observable(feature_grid, cfg.observable, cfg.segment.s_values)
    result.observable_grid = obs_grid
    result.decomposition = _decompose_and_report(run, obs_grid)
    return run.finish(result)


def _execute_rd(cfg: ExperimentConfig, stop_after: str) -> PipelineResult:
    run = _Run(cfg)
    result = PipelineResult(run.out_dir, None)  # type: ignore[arg-type]
    assert cfg.rd is not None and cfg.delay is not None

    with run.stage("simulate"):
        u1_traj, u2_traj = simulate_rd(cfg.rd)
        x = cfg.rd.x
        times_saved = u1_traj.times
        u1 = u1_traj.states.T  # (n_x, n_t)
        u2 = u2_traj.states.T
        mid = int(np.argmin(np.abs(x - 0.5)))
        run.emit(report.write_surface_csv(run.out_dir / "u1_surface.csv", x, times_saved, u1))
        run.emit(report.write_surface_csv(run.out_dir / "u2_surface.csv", x, times_saved, u2))
        run.emit(report.write_series_csv(run.out_dir / "u1_mid.csv", times_saved, u1[mid]))
        run.emit(report.write_series_csv(run.out_dir / "u2_mid.csv", times_saved, u2[mid]))
        run.emit(report.plot_surfaces(run.fig_dir / "fields.png", x, times_saved, u1, u2))
        run.emit(
            report.plot_mid_series(run.fig_dir / "mid_series.png", times_saved, u1[mid], u2[mid])
        )
    if stop_after == "simulate":
        return run.finish(result)

    with run.stage("featurize"):
        embedded = [
            stack_channels(
                [delay_embed(u1[i], cfg.delay), delay_embed(u2[i], cfg.delay)]
            )
            for i in range(cfg.rd.n_x)
        ]
        rows_per_x = embedded[0].n_rows
        features = np.concatenate([e.vectors for e in embedded], axis=0)
        scaled_flat, _ = minmax_scale(features)
        # anchors all share one grid; times restart at the first anchor
        embed_times = u1_traj.dt * np.arange(rows_per_x)

    if cfg.ae_spec is not None:
        with run.stage("train"):
            model, train_report = _train_stage(run, scaled_flat)
        result.model = model
        result.train_report = train_report
        if stop_after == "train":
            return run.finish(result)
        with run.stage("encode"):
            feature_grid = _encode_grid(run, model, scaled_flat, cfg.rd.n_x, embed_times)
        result.latent_grid = feature_grid
    else:
        feature_grid = TrajectoryGrid(
            scaled_flat.reshape(cfg.rd.n_x, rows_per_x, -1), embed_times, recurrence_tol=None
        )
    if stop_after in ("train", "encode"):
        return run.finish(result)

    assert cfg.observable is not None
    with run.stage("observable"):
        obs_grid = evaluate_observable(feature_grid, cfg.observable, x)
    result.observable_grid = obs_grid
    result.decomposition = _decompose_and_report(run, obs_grid)
    return run.finish(result)


def _execute_synthetic(cfg: ExperimentConfig, stop_after: str) -> PipelineResult:
    run = _Run(cfg)
    result = PipelineResult(run.out_dir, None)  # type: ignore[arg-type]
    spec = cfg.synthetic
    assert spec is not None

    with run.stage("simulate"):
        values = spec.build_values()
        obs_grid = ObservableGrid(
            values, spec.times.copy(), np.linspace(0.0, 1.0, spec.n_rows)
        )
    result.observable_grid = obs_grid
    if stop_after != "full":
        return run.finish(result)

    with run.stage("decompose"):
        decomp = greedy_decompose(
            obs_grid, cfg.lambda_grid, cfg.n_modes, refine=cfg.refine_lambda,
            observable_name="synthetic",
        )
    result.decomposition = decomp

    with run.stage("report"):
        for path in report.write_mode_tables(run.out_dir, decomp):
            run.emit(path)
        run.emit(_write_recovery_csv(run.out_dir / "recovery.csv", spec, decomp))
        run.emit(report.plot_error_curves(run.fig_dir / "error_vs_lambda.png", decomp))
        run.emit(report.plot_h_modes(run.fig_dir / "h_modes.png", decomp))
        run.emit(report.plot_min_error(run.fig_dir / "min_error_vs_mode.png", decomp))
    return run.finish(result)


def _write_recovery_csv(path: Path, spec, decomp: ModeDecomposition) -> Path:
    """Recovered modes against the planted ground truth, matched by
    eigenvalue proximity; unmatched recovered modes report nan."""
    remaining = list(range(len(spec.eigenvalues)))
    lines = []
    for k, mode in enumerate(decomp.modes, start=1):
        drop = decomp.residual_norms[k - 1] - decomp.residual_norms[k]
        if remaining:
            nearest = min(remaining, key=lambda p: abs(spec.eigenvalues[p] - mode.eigenvalue))
            remaining.remove(nearest)
            planted_lam = spec.eigenvalues[nearest]
            planted_h = spec.h_vectors[nearest]
            h_err = float(
                np.linalg.norm(mode.h - planted_h) / max(np.linalg.norm(planted_h), 1e-300)
            )
            planted_re, planted_im = planted_lam.real, planted_lam.imag
        else:
            planted_re = planted_im = h_err = float("nan")
        lines.append(
            f"{k},{planted_re:.17e},{planted_im:.17e},"
            f"{mode.eigenvalue.real:.17e},{mode.eigenvalue.imag:.17e},"
            f"{h_err:.17e},{drop:.17e}"
        )
    header = (
        "mode,planted_lambda_re,planted_lambda_im,"
        "recovered_lambda_re,recovered_lambda_im,h_rel_error,residual_drop"
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")
    return path


def execute(cfg: ExperimentConfig, stop_after: str = "full") -> PipelineResult:
    """Run the configured experiment up to and including ``stop_after``."""
    if stop_after not in STAGE_STOPS:
        raise ValueError(f"stop_after must be one of {STAGE_STOPS}, got {stop_after!r}")
    if cfg.system == "vdp":
        return _execute_vdp(cfg, stop_after)
    if cfg.system == "reaction_diffusion":
        return _execute_rd(cfg, stop_after)
    return _execute_synthetic(cfg, stop_after)


def _require_system(cfg: ExperimentConfig, system: str) -> None:
    if cfg.system != system:
        raise ValueError(f"config describes system {cfg.system!r}, expected {system!r}")


def run_vdp_pipeline(cfg: ExperimentConfig) -> RunManifest:
    _require_system(cfg, "vdp")
    return execute(cfg).manifest


def run_rd_pipeline(cfg: ExperimentConfig) -> RunManifest:
    _require_system(cfg, "reaction_diffusion")
    return execute(cfg).manifest


def run_synthetic(cfg: ExperimentConfig) -> RunManifest:
    _require_system(cfg, "synthetic")
    return execute(cfg).manifest
