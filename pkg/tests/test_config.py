"""Config parsing: defaults, strictness, dimension-chain validation, and
the manifest echo round-trip."""
from __future__ import annotations

import json

import numpy as np
import pytest

from koopdict.config import (
    ConfigError,
    parse_config,
    parse_config_dict,
)


class TestDefaults:
    def test_minimal_vdp_fills_documented_defaults(self):
        cfg = parse_config_dict({"system": "vdp"})
        assert cfg.vdp.mu == 1.0
        assert cfg.vdp.dt == 0.02
        assert cfg.vdp.n_steps == 100
        assert cfg.segment.n == 50
        assert cfg.lambda_grid.candidates[0] == -5.0
        assert cfg.lambda_grid.candidates[-1] == 5.0
        assert len(cfg.lambda_grid) == 401
        assert cfg.n_modes == 10
        assert cfg.seed == 42
        assert cfg.observable.name == "gauss3"
        assert cfg.ae_spec.sizes == (3, 100, 100, 2, 100, 100, 3)
        assert cfg.ae_spec.latent_index == 3

    def test_minimal_rd_defaults(self):
        cfg = parse_config_dict({"system": "reaction_diffusion"})
        assert cfg.rd.D == pytest.approx(0.0322)
        assert cfg.delay.window == 5
        assert cfg.delay.centering == "centered"
        assert cfg.observable.name == "gauss6"
        assert cfg.ae_spec.sizes == (10, 3200, 100, 6, 100, 3200, 10)

    def test_system_required(self):
        with pytest.raises(ConfigError, match="system"):
            parse_config_dict({})


class TestStrictness:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="'modes'"):
            parse_config_dict({"system": "vdp", "modes": 5})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="system_params"):
            parse_config_dict({"system": "vdp", "system_params": {"mu": 1.0, "Mu": 2.0}})
        with pytest.raises(ConfigError, match="autoencoder.train"):
            parse_config_dict(
                {"system": "vdp", "autoencoder": {"train": {"momentum": 0.9}}}
            )

    def test_type_errors_name_the_key(self):
        with pytest.raises(ConfigError, match="n_modes"):
            parse_config_dict({"system": "vdp", "n_modes": "ten"})
        with pytest.raises(ConfigError, match="seed"):
            parse_config_dict({"system": "vdp", "seed": -1})
        with pytest.raises(ConfigError, match="n_modes"):
            parse_config_dict({"system": "vdp", "n_modes": True})

    def test_delay_only_for_reaction_diffusion(self):
        with pytest.raises(ConfigError, match="delay"):
            parse_config_dict({"system": "vdp", "delay": {"window": 5}})

    def test_segment_only_for_vdp(self):
        with pytest.raises(ConfigError, match="lambda_segment"):
            parse_config_dict(
                {"system": "reaction_diffusion", "lambda_segment": {"a": [0], "b": [1]}}
            )

    def test_synthetic_forbids_model_sections(self):
        base = {
            "system": "synthetic",
            "system_params": {"modes": [{"eigenvalue": -1.0, "h": [1.0, 2.0]}]},
        }
        for key, value in [
            ("autoencoder", {}),
            ("observable", "gauss3"),
            ("delay", {"window": 5}),
        ]:
            with pytest.raises(ConfigError, match=key):
                parse_config_dict({**base, key: value})


class TestDimensionChain:
    def test_observable_arity_vs_latent(self):
        with pytest.raises(ConfigError, match="gauss6.*latent|latent.*gauss6"):
            parse_config_dict({"system": "vdp", "observable": "gauss6"})

    def test_ae_input_vs_lift(self):
        with pytest.raises(ConfigError, match="input width 5"):
            parse_config_dict(
                {"system": "vdp", "autoencoder": {"sizes": [5, 10, 2, 10, 5], "latent_index": 2}}
            )

    def test_ae_input_vs_delay_width(self):
        with pytest.raises(ConfigError, match="window 7"):
            parse_config_dict(
                {
                    "system": "reaction_diffusion",
                    "delay": {"window": 7},
                    "autoencoder": {"sizes": [10, 3200, 100, 6, 100, 3200, 10]},
                }
            )

    def test_bypass_checks_raw_width(self):
        with pytest.raises(ConfigError, match="without an autoencoder"):
            parse_config_dict({"system": "vdp", "autoencoder": None, "observable": "gauss6"})
        cfg = parse_config_dict({"system": "vdp", "autoencoder": None, "observable": "sumsq"})
        assert cfg.ae_spec is None

    def test_rd_bypass_takes_width_ten_expression(self):
        cfg = parse_config_dict(
            {
                "system": "reaction_diffusion",
                "autoencoder": None,
                "observable": {"expression": "z1 + z10"},
            }
        )
        assert cfg.observable.arity == 10

    def test_custom_expression_observable(self):
        cfg = parse_config_dict(
            {"system": "vdp", "observable": {"expression": "z1^2 + z2^2"}}
        )
        assert cfg.observable.arity == 2
        with pytest.raises(ConfigError, match="expression"):
            parse_config_dict({"system": "vdp", "observable": {"expression": "z1 +"}})


class TestWidthScale:
    def test_scaled_spec(self):
        cfg = parse_config_dict({"system": "reaction_diffusion", "width_scale": 0.25})
        assert cfg.scaled_ae_spec().sizes == (10, 800, 100, 6, 100, 800, 10)
        assert cfg.ae_spec.sizes == (10, 3200, 100, 6, 100, 3200, 10)

    def test_validation(self):
        with pytest.raises(ConfigError, match="width_scale"):
            parse_config_dict({"system": "vdp", "width_scale": -1.0})


class TestSynthetic:
    def test_parse_and_build(self):
        cfg = parse_config_dict(
            {
                "system": "synthetic",
                "system_params": {
                    "times": {"dt": 0.5, "count": 3},
                    "modes": [
                        {"eigenvalue": [0.0, 1.0], "h": [[1.0, 0.0], [0.0, 1.0]]},
                        {"eigenvalue": -1.0, "h": [2.0, 3.0]},
                    ],
                },
            }
        )
        spec = cfg.synthetic
        assert spec.eigenvalues == (1j, -1.0 + 0j)
        assert cfg.n_modes == 2  # defaults to the planted count
        values = spec.build_values()
        expected = np.outer([1.0, 1j], np.exp(1j * spec.times)) + np.outer(
            [2.0, 3.0], np.exp(-spec.times)
        )
        assert np.allclose(values, expected, rtol=1e-14)

    def test_real_modes_build_real_values(self):
        cfg = parse_config_dict(
            {
                "system": "synthetic",
                "system_params": {"modes": [{"eigenvalue": -2.0, "h": [1.0, 2.0, 3.0]}]},
            }
        )
        values = cfg.synthetic.build_values()
        assert values.dtype == np.float64

    def test_mismatched_h_lengths(self):
        with pytest.raises(ConfigError, match="length"):
            parse_config_dict(
                {
                    "system": "synthetic",
                    "system_params": {
                        "modes": [
                            {"eigenvalue": 1.0, "h": [1.0, 2.0]},
                            {"eigenvalue": 2.0, "h": [1.0]},
                        ]
                    },
                }
            )


class TestRoundTrip:
    @pytest.mark.parametrize(
        "raw",
        [
            {"system": "vdp"},
            {"system": "vdp", "autoencoder": None, "observable": "sumsq", "n_modes": 3},
            {"system": "reaction_diffusion", "width_scale": 0.5, "refine_lambda": True},
            {
                "system": "synthetic",
                "system_params": {
                    "modes": [{"eigenvalue": [1.0, -0.5], "h": [1.0, [2.0, 1.0]]}]
                },
            },
            {
                "system": "vdp",
                "observable": {"expression": "z1 + z2", "arity": 2},
                "lambda_grid": {"start": -1.0, "stop": 1.0, "count": 11, "im_start": -1.0, "im_stop": 1.0, "im_count": 3},
            },
        ],
    )
    def test_echo_reparses_equal(self, raw):
        cfg = parse_config_dict(raw)
        echo = cfg.to_dict()
        json.dumps(echo)  # must be serializable as-is
        again = parse_config_dict(echo)
        assert again == cfg
        assert again.to_dict() == echo

    def test_file_parse_and_line_numbers(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{\n  "system": "vdp",\n  bad\n}\n')
        with pytest.raises(ConfigError, match="line 3"):
            parse_config(path)
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "missing.json")

    def test_shipped_configs_parse(self):
        from conftest import CONFIG_DIR

        for name in ("default_vdp.json", "default_rd.json", "synthetic_two_modes.json"):
            cfg = parse_config(CONFIG_DIR / name)
            assert cfg.to_dict() == parse_config_dict(cfg.to_dict()).to_dict()
