"""Experiment configuration: one JSON document per run.

Parsing is strict.  Unknown keys are errors, every omitted field is
filled from documented defaults, and the filled config round-trips
through :meth:`ExperimentConfig.to_dict` so a manifest echo re-parses to
an equal config.  Validation walks the dimension chain (system state ->
lift or delay width -> autoencoder input -> latent width -> observable
arity) before any computation happens.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .autoencoder import LayerSpec, TrainConfig
from .delay import DelayConfig
from .dynsys import LambdaSegment, RdParams, VdpParams
from .koopman import LambdaGrid
from .observables import ExpressionError, Observable, builtin_observables, get_observable

__all__ = [
    "ConfigError",
    "SyntheticSpec",
    "ExperimentConfig",
    "load_raw_config",
    "parse_config",
    "parse_config_dict",
]

_SYSTEMS = ("vdp", "reaction_diffusion", "synthetic")

_DEFAULT_VDP_SEGMENT = {"a": [0.5, 0.0], "b": [2.5, 0.0], "n": 50}
_DEFAULT_VDP_AE = {
    "sizes": [3, 100, 100, 2, 100, 100, 3],
    "latent_index": 3,
}
_DEFAULT_RD_AE = {
    "sizes": [10, 3200, 100, 6, 100, 3200, 10],
    "latent_index": 3,
}
_DEFAULT_RD_DELAY = {"window": 5, "lag": 1, "centering": "centered"}


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent configurations."""


def _require_mapping(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(value).__name__}")
    return dict(value)


def _reject_extras(data: dict, where: str) -> None:
    if data:
        names = ", ".join(repr(k) for k in sorted(data))
        raise ConfigError(f"unknown key(s) {names} in {where}")


def _as_number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _as_str(value: Any, where: str, choices: tuple[str, ...] | None = None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{where} must be a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{where} must be one of {choices}, got {value!r}")
    return value


def _as_complex(value: Any, where: str) -> complex:
    """A JSON number, or a [re, im] pair."""
    if isinstance(value, list):
        if len(value) != 2:
            raise ConfigError(f"{where} must be a number or a [re, im] pair")
        return complex(_as_number(value[0], where), _as_number(value[1], where))
    return complex(_as_number(value, where))


def _point(value: Any, where: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a non-empty list of numbers")
    return tuple(_as_number(v, where) for v in value)


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted ground truth: q is the exact sum of the listed modes."""

    times: np.ndarray
    eigenvalues: tuple[complex, ...]
    h_vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.eigenvalues:
            raise ConfigError("synthetic spec needs at least one mode")
        if len(self.eigenvalues) != len(self.h_vectors):
            raise ConfigError("one h vector per eigenvalue required")
        n = self.h_vectors[0].shape[0]
        for h in self.h_vectors:
            if h.shape != (n,):
                raise ConfigError("all synthetic h vectors must share one length")
        self.times.setflags(write=False)
        for h in self.h_vectors:
            h.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return self.h_vectors[0].shape[0]

    def build_values(self) -> np.ndarray:
        total = np.zeros((self.n_rows, self.times.shape[0]), dtype=complex)
        for lam, h in zip(self.eigenvalues, self.h_vectors):
            total += np.outer(h, np.exp(lam * self.times))
        if np.abs(total.imag).max() == 0.0:
            return total.real.copy()
        return total


def _parse_synthetic(raw: dict) -> SyntheticSpec:
    where = "system_params"
    times_raw = _require_mapping(raw.pop("times", {"dt": 0.02, "count": 101}), f"{where}.times")
    dt = _as_number(times_raw.pop("dt", 0.02), f"{where}.times.dt")
    count = _as_int(times_raw.pop("count", 101), f"{where}.times.count")
    _reject_extras(times_raw, f"{where}.times")
    if dt <= 0 or count < 2:
        raise ConfigError(f"{where}.times needs dt > 0 and count >= 2")

    modes_raw = raw.pop("modes", None)
    _reject_extras(raw, where)
    if not isinstance(modes_raw, list) or not modes_raw:
        raise ConfigError(f"{where}.modes must be a non-empty list")
    eigenvalues: list[complex] = []
    h_vectors: list[np.ndarray] = []
    for p, mode_raw in enumerate(modes_raw):
        mode = _require_mapping(mode_raw, f"{where}.modes[{p}]")
        eigenvalues.append(_as_complex(mode.pop("eigenvalue"), f"{where}.modes[{p}].eigenvalue"))
        h_raw = mode.pop("h", None)
        _reject_extras(mode, f"{where}.modes[{p}]")
        if not isinstance(h_raw, list) or not h_raw:
            raise ConfigError(f"{where}.modes[{p}].h must be a non-empty list")
        h_vectors.append(
            np.array([_as_complex(v, f"{where}.modes[{p}].h") for v in h_raw], dtype=complex)
        )
    return SyntheticSpec(dt * np.arange(count), tuple(eigenvalues), tuple(h_vectors))


def _parse_vdp_params(raw: dict) -> VdpParams:
    where = "system_params"
    params = VdpParams(
        mu=_as_number(raw.pop("mu", 1.0), f"{where}.mu"),
        dt=_as_number(raw.pop("dt", 0.02), f"{where}.dt"),
        n_steps=_as_int(raw.pop("n_steps", 100), f"{where}.n_steps"),
    )
    _reject_extras(raw, where)
    return params


def _parse_rd_params(raw: dict) -> RdParams:
    where = "system_params"
    defaults = RdParams()
    params = RdParams(
        D=_as_number(raw.pop("D", defaults.D), f"{where}.D"),
        epsilon=_as_number(raw.pop("epsilon", defaults.epsilon), f"{where}.epsilon"),
        alpha=_as_number(raw.pop("alpha", defaults.alpha), f"{where}.alpha"),
        n_x=_as_int(raw.pop("n_x", defaults.n_x), f"{where}.n_x"),
        dt=_as_number(raw.pop("dt", defaults.dt), f"{where}.dt"),
        t_end=_as_number(raw.pop("t_end", defaults.t_end), f"{where}.t_end"),
        save_every=_as_int(raw.pop("save_every", defaults.save_every), f"{where}.save_every"),
        nonlinearity=_as_str(
            raw.pop("nonlinearity", defaults.nonlinearity),
            f"{where}.nonlinearity",
            ("cubic", "identity"),
        ),
    )
    _reject_extras(raw, where)
    return params


def _parse_segment(raw: dict) -> LambdaSegment:
    where = "lambda_segment"
    a = _point(raw.pop("a"), f"{where}.a") if "a" in raw else None
    b = _point(raw.pop("b"), f"{where}.b") if "b" in raw else None
    n = _as_int(raw.pop("n", 50), f"{where}.n")
    _reject_extras(raw, where)
    if a is None or b is None:
        raise ConfigError(f"{where} needs both endpoints 'a' and 'b'")
    try:
        return LambdaSegment(a, b, n)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_delay(raw: dict) -> DelayConfig:
    where = "delay"
    window = _as_int(raw.pop("window", 5), f"{where}.window")
    lag = _as_int(raw.pop("lag", 1), f"{where}.lag")
    centering = _as_str(
        raw.pop("centering", "centered"), f"{where}.centering", ("causal", "centered")
    )
    _reject_extras(raw, where)
    try:
        return DelayConfig(window=window, lag=lag, centering=centering)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_autoencoder(raw: dict, default_sizes: dict) -> tuple[LayerSpec, TrainConfig]:
    where = "autoencoder"
    sizes_raw = raw.pop("sizes", default_sizes["sizes"])
    if not isinstance(sizes_raw, list) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in sizes_raw
    ):
        raise ConfigError(f"{where}.sizes must be a list of integers")
    latent_index = _as_int(
        raw.pop("latent_index", default_sizes["latent_index"]), f"{where}.latent_index"
    )
    activation = _as_str(
        raw.pop("activation", "sigmoid"), f"{where}.activation", ("sigmoid", "relu")
    )
    output_activation = _as_str(
        raw.pop("output_activation", "same"),
        f"{where}.output_activation",
        ("same", "linear", "sigmoid"),
    )
    train_raw = _require_mapping(raw.pop("train", {}), f"{where}.train")
    _reject_extras(raw, where)

    epochs = _as_int(train_raw.pop("epochs", 2000), f"{where}.train.epochs")
    learning_rate = _as_number(
        train_raw.pop("learning_rate", 0.05), f"{where}.train.learning_rate"
    )
    batch_size = _as_int(train_raw.pop("batch_size", 32), f"{where}.train.batch_size")
    optimizer = _as_str(
        train_raw.pop("optimizer", "sgd"), f"{where}.train.optimizer", ("sgd", "adam")
    )
    _reject_extras(train_raw, f"{where}.train")

    try:
        spec = LayerSpec(
            sizes=tuple(sizes_raw),
            latent_index=latent_index,
            activation=activation,
            output_activation=output_activation,
        )
        train = TrainConfig(
            epochs=epochs,
            learning_rate=learning_rate,
            batch_size=batch_size,
            optimizer=optimizer,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return spec, train


def _parse_lambda_grid(raw: dict) -> tuple[LambdaGrid, dict]:
    where = "lambda_grid"
    start = _as_number(raw.pop("start", -5.0), f"{where}.start")
    stop = _as_number(raw.pop("stop", 5.0), f"{where}.stop")
    count = _as_int(raw.pop("count", 401), f"{where}.count")
    echo: dict[str, Any] = {"start": start, "stop": stop, "count": count}
    imag = None
    if "im_start" in raw or "im_stop" in raw or "im_count" in raw:
        imag = {
            "im_start": _as_number(raw.pop("im_start", 0.0), f"{where}.im_start"),
            "im_stop": _as_number(raw.pop("im_stop", 0.0), f"{where}.im_stop"),
            "im_count": _as_int(raw.pop("im_count", 1), f"{where}.im_count"),
        }
        echo.update(imag)
    _reject_extras(raw, where)
    if count < 1:
        raise ConfigError(f"{where}.count must be >= 1")
    if stop < start:
        raise ConfigError(f"{where}: stop {stop} is below start {start}")
    try:
        if imag is None:
            grid = LambdaGrid.real_line(start, stop, count)
        else:
            grid = LambdaGrid.complex_rectangle(
                start, stop, count, imag["im_start"], imag["im_stop"], imag["im_count"]
            )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return grid, echo


def _parse_observable(raw: Any) -> tuple[Observable, Any]:
    if isinstance(raw, str):
        if raw not in builtin_observables():
            known = ", ".join(sorted(builtin_observables()))
            raise ConfigError(
                f"unknown observable id {raw!r}; use one of {known} or an expression object"
            )
        return get_observable(raw), raw
    data = _require_mapping(raw, "observable")
    expression = _as_str(data.pop("expression", ""), "observable.expression")
    arity = data.pop("arity", None)
    if arity is not None:
        arity = _as_int(arity, "observable.arity")
    _reject_extras(data, "observable")
    if not expression:
        raise ConfigError("observable object needs an 'expression' key")
    try:
        obs = get_observable(expression, arity)
    except ExpressionError as exc:
        raise ConfigError(f"observable expression: {exc}") from None
    echo = {"expression": expression}
    if arity is not None:
        echo["arity"] = arity
    return obs, echo


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A fully validated run description with every default filled in."""

    system: str
    vdp: VdpParams | None
    rd: RdParams | None
    synthetic: SyntheticSpec | None
    segment: LambdaSegment | None
    delay: DelayConfig | None
    ae_spec: LayerSpec | None
    train: TrainConfig | None
    width_scale: float
    observable: Observable | None
    observable_echo: Any
    lambda_grid: LambdaGrid
    lambda_grid_echo: dict
    n_modes: int
    refine_lambda: bool
    output_dir: str
    seed: int

    def scaled_ae_spec(self) -> LayerSpec | None:
        if self.ae_spec is None:
            return None
        if self.width_scale == 1.0:
            return self.ae_spec
        return self.ae_spec.with_width_scale(self.width_scale)

    def to_dict(self) -> dict:
        """JSON-able echo; parsing it back yields an equal config."""
        out: dict[str, Any] = {"system": self.system}
        if self.system == "vdp":
            assert self.vdp is not None and self.segment is not None
            out["system_params"] = {
                "mu": self.vdp.mu,
                "dt": self.vdp.dt,
                "n_steps": self.vdp.n_steps,
            }
            out["lambda_segment"] = {
                "a": list(self.segment.a),
                "b": list(self.segment.b),
                "n": self.segment.n,
            }
        elif self.system == "reaction_diffusion":
            assert self.rd is not None
            out["system_params"] = {
                "D": self.rd.D,
                "epsilon": self.rd.epsilon,
                "alpha": self.rd.alpha,
                "n_x": self.rd.n_x,
                "dt": self.rd.dt,
                "t_end": self.rd.t_end,
                "save_every": self.rd.save_every,
                "nonlinearity": self.rd.nonlinearity,
            }
        else:
            assert self.synthetic is not None
            step = float(self.synthetic.times[1] - self.synthetic.times[0])
            out["system_params"] = {
                "times": {"dt": step, "count": int(self.synthetic.times.shape[0])},
                "modes": [
                    {
                        "eigenvalue": [lam.real, lam.imag],
                        "h": [[v.real, v.imag] for v in h],
                    }
                    for lam, h in zip(self.synthetic.eigenvalues, self.synthetic.h_vectors)
                ],
            }
        if self.delay is not None:
            out["delay"] = {
                "window": self.delay.window,
                "lag": self.delay.lag,
                "centering": self.delay.centering,
            }
        if self.ae_spec is None:
            if self.system != "synthetic":
                out["autoencoder"] = None  # explicit: absent would mean "use defaults"
        else:
            assert self.train is not None
            out["autoencoder"] = {
                "sizes": list(self.ae_spec.sizes),
                "latent_index": self.ae_spec.latent_index,
                "activation": self.ae_spec.activation,
                "output_activation": self.ae_spec.output_activation,
                "train": {
                    "epochs": self.train.epochs,
                    "learning_rate": self.train.learning_rate,
                    "batch_size": self.train.batch_size,
                    "optimizer": self.train.optimizer,
                },
            }
            out["width_scale"] = self.width_scale
        if self.observable is not None:
            out["observable"] = self.observable_echo
        out["lambda_grid"] = dict(self.lambda_grid_echo)
        out["n_modes"] = self.n_modes
        out["refine_lambda"] = self.refine_lambda
        out["output_dir"] = self.output_dir
        out["seed"] = self.seed
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


def _latent_width(spec: LayerSpec) -> int:
    return spec.sizes[spec.latent_index]


def parse_config_dict(data: dict) -> ExperimentConfig:
    data = _require_mapping(data, "config")
    system = _as_str(data.pop("system", None) or "", "system", _SYSTEMS)

    vdp = rd = synthetic = None
    segment = delay = ae_spec = train = observable = None
    observable_echo: Any = None

    params_raw = _require_mapping(data.pop("system_params", {}), "system_params")
    try:
        if system == "vdp":
            vdp = _parse_vdp_params(params_raw)
        elif system == "reaction_diffusion":
            rd = _parse_rd_params(params_raw)
        else:
            synthetic = _parse_synthetic(params_raw)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"system_params: {exc}") from None

    if system == "synthetic":
        for forbidden in ("lambda_segment", "delay", "autoencoder", "observable", "width_scale"):
            if data.pop(forbidden, None) is not None:
                raise ConfigError(f"'{forbidden}' does not apply to the synthetic system")
    else:
        if system == "vdp":
            segment_raw = data.pop("lambda_segment", None)
            segment = _parse_segment(
                _require_mapping(segment_raw, "lambda_segment")
                if segment_raw is not None
                else dict(_DEFAULT_VDP_SEGMENT)
            )
            if len(segment.a) != 2:
                raise ConfigError(
                    f"lambda_segment endpoints must be 2-D for the vdp system, got {len(segment.a)}-D"
                )
            if data.pop("delay", None) is not None:
                raise ConfigError("delay embedding applies to the reaction_diffusion system only")
        else:
            if data.pop("lambda_segment", None) is not None:
                raise ConfigError(
                    "lambda_segment does not apply to reaction_diffusion; "
                    "rows are the spatial sample points"
                )
            delay_raw = data.pop("delay", dict(_DEFAULT_RD_DELAY))
            if delay_raw is None:
                raise ConfigError("the reaction_diffusion system requires a delay section")
            delay = _parse_delay(_require_mapping(delay_raw, "delay"))

        ae_default = _DEFAULT_VDP_AE if system == "vdp" else _DEFAULT_RD_AE
        ae_raw = data.pop("autoencoder", dict(ae_default))
        if ae_raw is not None:
            ae_spec, train = _parse_autoencoder(_require_mapping(ae_raw, "autoencoder"), ae_default)

        obs_raw = data.pop("observable", "gauss3" if system == "vdp" else "gauss6")
        observable, observable_echo = _parse_observable(obs_raw)

    width_scale = _as_number(data.pop("width_scale", 1.0), "width_scale")
    if width_scale <= 0:
        raise ConfigError(f"width_scale must be positive, got {width_scale}")

    grid_raw = _require_mapping(data.pop("lambda_grid", {}), "lambda_grid")
    lambda_grid, grid_echo = _parse_lambda_grid(grid_raw)

    default_modes = len(synthetic.eigenvalues) if synthetic is not None else 10
    n_modes = _as_int(data.pop("n_modes", default_modes), "n_modes")
    if n_modes < 1:
        raise ConfigError(f"n_modes must be >= 1, got {n_modes}")

    refine_lambda = data.pop("refine_lambda", False)
    if not isinstance(refine_lambda, bool):
        raise ConfigError(f"refine_lambda must be true or false, got {refine_lambda!r}")

    output_dir = _as_str(data.pop("output_dir", f"runs/{system}"), "output_dir")
    seed = _as_int(data.pop("seed", 42), "seed")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")

    _reject_extras(data, "config")

    cfg = ExperimentConfig(
        system=system,
        vdp=vdp,
        rd=rd,
        synthetic=synthetic,
        segment=segment,
        delay=delay,
        ae_spec=ae_spec,
        train=train,
        width_scale=width_scale if ae_spec is not None else 1.0,
        observable=observable,
        observable_echo=observable_echo,
        lambda_grid=lambda_grid,
        lambda_grid_echo=grid_echo,
        n_modes=n_modes,
        refine_lambda=refine_lambda,
        output_dir=output_dir,
        seed=seed,
    )
    _validate_dimension_chain(cfg)
    return cfg


def _validate_dimension_chain(cfg: ExperimentConfig) -> None:
    """Every arrow in system -> lift/delay -> autoencoder -> observable
    must connect; the first broken link is named in the error."""
    if cfg.system == "synthetic":
        return
    if cfg.system == "vdp":
        feature_width = 3  # (x1, x2) lifted by the radius-squared coordinate
        source = "the 3-D lifted vdp state"
        raw_width = 2
        raw_source = "the 2-D vdp state"
    else:
        assert cfg.delay is not None
        feature_width = 2 * cfg.delay.window
        source = f"two delay-embedded channels of window {cfg.delay.window}"
        raw_width = feature_width
        raw_source = source

    assert cfg.observable is not None
    if cfg.ae_spec is None:
        if cfg.observable.arity != raw_width:
            raise ConfigError(
                f"observable '{cfg.observable.name}' takes {cfg.observable.arity} variables "
                f"but without an autoencoder it is applied to {raw_source} "
                f"of width {raw_width}"
            )
        return
    if cfg.ae_spec.sizes[0] != feature_width:
        raise ConfigError(
            f"autoencoder input width {cfg.ae_spec.sizes[0]} does not match {source} "
            f"(width {feature_width})"
        )
    latent = _latent_width(cfg.ae_spec)
    if cfg.observable.arity != latent:
        raise ConfigError(
            f"observable '{cfg.observable.name}' takes {cfg.observable.arity} variables "
            f"but the autoencoder latent width is {latent}"
        )


def load_raw_config(path: str | Path) -> dict:
    """Read and JSON-decode a config file without validating it, so
    callers can overlay command-line overrides first."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return _require_mapping(data, "config")


def parse_config(path: str | Path) -> ExperimentConfig:
    return parse_config_dict(load_raw_config(path))
