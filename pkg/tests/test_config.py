import dataclasses

import numpy as np
import pytest
import yaml

from accelflow.clf import DEFAULT_CLF
from accelflow.config import (
    ConfigError,
    DiscreteMethodConfig,
    FlowMethodConfig,
    RunConfig,
    flow_integrator,
    flow_mode,
    load_config,
    parse_config,
)
from accelflow.control import ControllerFamily
from accelflow.flow import FlowMode, Integrator


def flow_config(**method_overrides):
    method = {"kind": "flow", "controller": "polyak", "gamma_a": 2.0,
              "gamma_b": 2.0, "h": 0.01, "t_max": 5.0}
    method.update(method_overrides)
    return {"problem": {"name": "quadratic", "dim": 4, "seed": 7},
            "method": method}


def discrete_config(**method_overrides):
    method = {"kind": "discrete", "name": "heavy_ball", "alpha": 0.01,
              "beta": 0.9, "max_iters": 100}
    method.update(method_overrides)
    return {"problem": {"name": "quadratic", "dim": 4, "seed": 7},
            "method": method}


class TestProblemBlock:
    def test_defaults_fill_in(self):
        cfg = parse_config(flow_config())
        assert cfg.problem.kappa == 10.0
        assert cfg.problem.scale == 1.0
        assert cfg.problem.x0 is None

    def test_build_quadratic_honors_fields(self):
        data = flow_config()
        data["problem"].update({"dim": 6, "kappa": 50.0, "scale": 0.5})
        problem = parse_config(data).problem.build()
        assert problem.oracle.dim == 6
        eigs = np.linalg.eigvalsh(problem.oracle.hessian(problem.x0))
        assert eigs.max() / eigs.min() == pytest.approx(50.0)
        assert eigs.min() == pytest.approx(0.5)

    def test_build_rosenbrock_ignores_dim(self):
        data = flow_config()
        data["problem"] = {"name": "rosenbrock", "x0": [-1.2, 1.0]}
        problem = parse_config(data).problem.build()
        assert problem.oracle.dim == 2
        np.testing.assert_allclose(problem.x0, [-1.2, 1.0])

    def test_rosenbrock_rejects_wrong_x0_length(self):
        data = flow_config()
        data["problem"] = {"name": "rosenbrock", "x0": [1.0, 2.0, 3.0]}
        with pytest.raises(ConfigError, match="problem.x0"):
            parse_config(data)

    def test_unknown_problem_name(self):
        data = flow_config()
        data["problem"]["name"] = "himmelblau"
        with pytest.raises(ConfigError, match="problem.name"):
            parse_config(data)

    def test_negative_kappa_names_field(self):
        data = flow_config()
        data["problem"]["kappa"] = -2.0
        with pytest.raises(ConfigError, match="problem.kappa"):
            parse_config(data)

    def test_unknown_key_rejected(self):
        data = flow_config()
        data["problem"]["kapa"] = 10.0
        with pytest.raises(ConfigError, match="unknown field.*kapa"):
            parse_config(data)


class TestFlowMethodBlock:
    def test_minimal_parse(self):
        cfg = parse_config(flow_config())
        method = cfg.method
        assert isinstance(method, FlowMethodConfig)
        assert method.kind == "flow"
        assert method.metric == "euclidean"
        assert method.integrator == "rk4"
        assert method.mode == "reduced"

    def test_missing_required_field(self):
        data = flow_config()
        del data["method"]["h"]
        with pytest.raises(ConfigError, match="method.h"):
            parse_config(data)

    def test_unknown_controller(self):
        with pytest.raises(ConfigError, match="method.controller"):
            parse_config(flow_config(controller="warp_drive"))

    def test_controller_requirements_named(self):
        data = flow_config(controller="min_p_star")
        del data["method"]["gamma_a"], data["method"]["gamma_b"]
        with pytest.raises(ConfigError,
                           match="method.eta: required by controller"):
            parse_config(data)

    def test_fixed_sigma_needs_sigma_q(self):
        data = flow_config(controller="min_p", delta_mode="fixed_sigma")
        del data["method"]["gamma_a"], data["method"]["gamma_b"]
        with pytest.raises(ConfigError, match="method.sigma_q"):
            parse_config(data)

    def test_invalid_clf_rejected_at_parse(self):
        data = flow_config(clf={"a": 1.0, "b": 1.0, "c": 2.0})
        with pytest.raises(ConfigError, match="method.clf"):
            parse_config(data)

    def test_invalid_direct_gains_rejected_at_parse(self):
        data = flow_config(controller="direct", gamma_c=2.0)
        data["method"]["gamma_a"] = 1.0
        data["method"]["gamma_b"] = -1.0
        with pytest.raises(ConfigError, match="method:"):
            parse_config(data)

    def test_default_clf_used_when_absent(self):
        cfg = parse_config(flow_config())
        assert cfg.method.clf_params() == DEFAULT_CLF

    def test_build_controller_dispatch(self):
        spec = parse_config(
            flow_config(controller="min_p_star", eta=2.0)).method \
            .build_controller()
        assert spec.family is ControllerFamily.MIN_P_STAR
        assert spec.rate_eta == 2.0

    def test_enum_converters(self):
        cfg = parse_config(flow_config(integrator="semi_implicit_euler",
                                       mode="full_primal_dual"))
        assert flow_integrator(cfg.method) is Integrator.SEMI_IMPLICIT_EULER
        assert flow_mode(cfg.method) is FlowMode.FULL_PRIMAL_DUAL

    def test_nonpositive_h_rejected(self):
        with pytest.raises(ConfigError, match="method.h"):
            parse_config(flow_config(h=0.0))


class TestDiscreteMethodBlock:
    def test_minimal_parse(self):
        method = parse_config(discrete_config()).method
        assert isinstance(method, DiscreteMethodConfig)
        assert method.kind == "discrete"
        assert method.alpha == 0.01

    @pytest.mark.parametrize("name,missing", [
        ("heavy_ball", "beta"),
        ("nesterov1", "alpha"),
        ("cg", "beta_cg"),
        ("accel_newton", "gamma_a"),
        ("accel_qn", "h"),
    ])
    def test_per_method_requirements(self, name, missing):
        data = discrete_config(name=name)
        for key in ("alpha", "beta"):
            data["method"].pop(key, None)
        fields = {"heavy_ball": {"alpha": 0.01, "beta": 0.9},
                  "nesterov1": {"alpha": 0.01, "beta": 0.9},
                  "cg": {"alpha": 0.01, "beta_cg": 0.2},
                  "accel_newton": {"gamma_a": 1.0, "gamma_b": 1.0, "h": 0.5},
                  "accel_qn": {"gamma_a": 1.0, "gamma_b": 1.0, "h": 0.5}}
        complete = fields[name]
        data["method"].update(
            {k: v for k, v in complete.items() if k != missing})
        with pytest.raises(ConfigError, match=f"method.{missing}"):
            parse_config(data)

    def test_rule_names_accepted(self):
        data = discrete_config(name="cg", alpha="exact_line_search",
                               beta_cg="fletcher_reeves")
        del data["method"]["beta"]
        method = parse_config(data).method
        assert method.alpha == "exact_line_search"
        assert method.beta_cg == "fletcher_reeves"

    def test_unknown_rule_name_rejected(self):
        data = discrete_config(name="cg", alpha="newton_raphson",
                               beta_cg=0.2)
        del data["method"]["beta"]
        with pytest.raises(ConfigError, match="method.alpha"):
            parse_config(data)

    def test_momentum_methods_need_numeric_alpha(self):
        data = discrete_config(alpha="exact_line_search")
        with pytest.raises(ConfigError, match="numeric step"):
            parse_config(data)


class TestOtherBlocks:
    def test_output_defaults(self):
        cfg = parse_config(flow_config())
        assert cfg.output.out_dir == "runs"
        assert cfg.output.stride == 1

    def test_stride_minimum(self):
        data = flow_config()
        data["output"] = {"stride": 0}
        with pytest.raises(ConfigError, match="output.stride"):
            parse_config(data)

    def test_verify_checks_validated(self):
        data = flow_config()
        data["verify"] = {"checks": ["dissipation", "vibes"]}
        with pytest.raises(ConfigError, match=r"verify.checks\[1\]"):
            parse_config(data)

    def test_verify_effective_tol_tracks_mode(self):
        data = flow_config()
        data["verify"] = {"checks": ["dissipation"],
                          "dissipation_mode": "rate"}
        cfg = parse_config(data)
        assert cfg.verify.effective_tol() == 1e-6
        data["verify"]["dissipation_mode"] = "strict"
        assert parse_config(data).verify.effective_tol() == 1e-12
        data["verify"]["tol"] = 1e-9
        assert parse_config(data).verify.effective_tol() == 1e-9

    def test_empty_label_rejected(self):
        data = flow_config()
        data["label"] = ""
        with pytest.raises(ConfigError, match="label"):
            parse_config(data)

    def test_run_label_falls_back_to_method(self):
        assert parse_config(flow_config()).run_label() == "polyak"
        assert parse_config(discrete_config()).run_label() == "heavy_ball"
        data = flow_config()
        data["label"] = "baseline"
        assert parse_config(data).run_label() == "baseline"


class TestRoundTripAndOverrides:
    @pytest.mark.parametrize("data", [
        flow_config(),
        flow_config(controller="min_p", delta=1.0, delta_mode="taper",
                    metric="hessian", eig_floor=0.5,
                    clf={"a": 2.0, "b": 1.0, "c": -1.0,
                         "pd_hessian_mode": True},
                    mode="full_primal_dual", v0=[0.1, 0.0, 0.0, 0.0]),
        discrete_config(),
        discrete_config(name="accel_qn", gamma_a=1.0, gamma_b=2.0, h=0.5,
                        alpha=None, beta=None),
    ])
    def test_yaml_round_trip_is_lossless(self, data):
        data = {k: v for k, v in data.items()}
        if data["method"].get("alpha") is None:
            data["method"].pop("alpha", None)
            data["method"].pop("beta", None)
        cfg = parse_config(data)
        again = parse_config(yaml.safe_load(cfg.to_yaml()))
        assert again == cfg

    def test_with_seed_replaces_only_seed(self):
        cfg = parse_config(flow_config())
        reseeded = cfg.with_seed(99)
        assert reseeded.problem.seed == 99
        assert dataclasses.replace(reseeded.problem, seed=7) == cfg.problem
        assert reseeded.method == cfg.method

    def test_with_stride_and_out_dir(self):
        cfg = parse_config(flow_config())
        assert cfg.with_stride(5).output.stride == 5
        assert cfg.with_out_dir("elsewhere").output.out_dir == "elsewhere"
        assert cfg.with_out_dir("elsewhere").problem == cfg.problem


class TestLoadConfig:
    def test_loads_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(flow_config()))
        cfg = load_config(str(path))
        assert cfg.method.controller == "polyak"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="No such file"):
            load_config(str(tmp_path / "absent.yaml"))

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("problem:\n  name: quadratic\n   bad_indent: 1\n")
        with pytest.raises(ConfigError, match="broken.yaml:"):
            load_config(str(path))

    def test_non_mapping_top_level(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- just\n- a\n- list\n")
        with pytest.raises(ConfigError, match="config"):
            load_config(str(path))
