"""Run configuration: parsing, validation, and runtime object assembly.

Configs are YAML with four blocks (problem, method, output, verify).
Parsing is strict: unknown keys are rejected and every diagnostic names
the offending field by its dotted path, so a typo in a config fails loud
rather than silently falling back to a default. All randomness in a run
flows from the single problem.seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np
import yaml

from .clf import DEFAULT_CLF, ClfParams
from .control import (
    ControllerSpec,
    DeltaMode,
    accelerated_newton_controller,
    direct_controller,
    min_p_controller,
    min_p_star_controller,
    momentum_flow_controller,
    nesterov_flow_controller,
    polyak_controller,
    quasi_newton_flow_controller,
)
from .flow import FlowMode, Integrator, StoppingRule
from .metric import MetricKind, MetricSpec
from .objective import (
    ProblemInstance,
    random_log_sum_exp,
    random_quadratic,
    rosenbrock_problem,
)
from .verify import CHECK_NAMES, DissipationMode

FLOW_CONTROLLERS = ("min_p", "min_p_star", "direct", "momentum_flow",
                    "polyak", "accel_newton", "quasi_newton", "nesterov")
DISCRETE_METHODS = ("heavy_ball", "nesterov1", "nesterov2", "cg",
                    "accel_newton", "accel_qn")
PROBLEM_NAMES = ("quadratic", "rosenbrock", "log_sum_exp")


class ConfigError(ValueError):
    """Invalid configuration; the message names the field by dotted path."""


class _Block:
    """One mapping block; tracks consumed keys and reports leftovers."""

    def __init__(self, data: Any, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping, got "
                              f"{type(data).__name__}")
        self.data = dict(data)
        self.path = path

    def take(self, key: str, default: Any = None, required: bool = False):
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.path}.{key}: required field is "
                                  f"missing")
            return default
        return self.data.pop(key)

    def finish(self) -> None:
        if self.data:
            stray = ", ".join(sorted(self.data))
            raise ConfigError(f"{self.path}: unknown field(s): {stray}")


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_positive(value: Any, path: str) -> float:
    out = _as_float(value, path)
    if not (out > 0.0):
        raise ConfigError(f"{path}: must be positive, got {out}")
    return out


def _as_int(value: Any, path: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value

def _as_str(value: Any, path: str, choices: tuple[str, ...]) -> str:
    if not isinstance(value, str) or value not in choices:
        raise ConfigError(f"{path}: expected one of {list(choices)}, "
                          f"got {value!r}")
    return value


def _as_vector(value: Any, path: str) -> Optional[tuple[float, ...]]:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{path}: expected a non-empty list of numbers")
    return tuple(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value))


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemConfig:
    name: str
    dim: int = 2
    kappa: float = 10.0
    scale: float = 1.0
    terms: int = 8
    seed: int = 0
    x0: Optional[tuple[float, ...]] = None

    def build(self) -> ProblemInstance:
        x0 = None if self.x0 is None else np.array(self.x0, dtype=float)
        if self.name == "quadratic":
            return random_quadratic(self.dim, self.kappa, seed=self.seed,
                                    x0=x0, scale=self.scale)
        if self.name == "rosenbrock":
            return rosenbrock_problem(x0=x0)
        return random_log_sum_exp(self.dim, self.terms, seed=self.seed, x0=x0)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "dim": self.dim,
                               "kappa": self.kappa, "scale": self.scale,
                               "terms": self.terms, "seed": self.seed}
        if self.x0 is not None:
            out["x0"] = list(self.x0)
        return out


def _parse_problem(data: Any) -> ProblemConfig:
    b = _Block(data, "problem")
    name = _as_str(b.take("name", required=True), "problem.name",
                   PROBLEM_NAMES)
    cfg = ProblemConfig(
        name=name,
        dim=_as_int(b.take("dim", 2), "problem.dim", minimum=1),
        kappa=_as_positive(b.take("kappa", 10.0), "problem.kappa"),
        scale=_as_positive(b.take("scale", 1.0), "problem.scale"),
        terms=_as_int(b.take("terms", 8), "problem.terms", minimum=2),
        seed=_as_int(b.take("seed", 0), "problem.seed"),
        x0=_as_vector(b.take("x0"), "problem.x0"),
    )
    b.finish()
    if cfg.name == "rosenbrock" and cfg.x0 is not None and len(cfg.x0) != 2:
        raise ConfigError(f"problem.x0: rosenbrock needs 2 entries, "
                          f"got {len(cfg.x0)}")
    return cfg


@dataclass(frozen=True)
class ClfConfig:
    a: float
    b: float
    c: float
    pd_hessian_mode: bool = False

    def build(self) -> ClfParams:
        try:
            return ClfParams(a=self.a, b=self.b, c=self.c,
                             pd_hessian_mode=self.pd_hessian_mode)
        except ValueError as e:
            raise ConfigError(f"method.clf: {e}") from e

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c,
                "pd_hessian_mode": self.pd_hessian_mode}


def _parse_clf(data: Any) -> Optional[ClfConfig]:
    if data is None:
        return None
    b = _Block(data, "method.clf")
    pd = b.take("pd_hessian_mode", False)
    if not isinstance(pd, bool):
        raise ConfigError(f"method.clf.pd_hessian_mode: expected a boolean, "
                          f"got {pd!r}")
    cfg = ClfConfig(a=_as_float(b.take("a", required=True), "method.clf.a"),
                    b=_as_float(b.take("b", required=True), "method.clf.b"),
                    c=_as_float(b.take("c", required=True), "method.clf.c"),
                    pd_hessian_mode=pd)
    b.finish()
    cfg.build()
    return cfg


@dataclass(frozen=True)
class FlowMethodConfig:
    controller: str
    h: float
    t_max: float
    metric: str = "euclidean"
    eig_floor: float = 1e-6
    clf: Optional[ClfConfig] = None
    gamma_a: Optional[float] = None
    gamma_b: Optional[float] = None
    gamma_c: Optional[float] = None
    delta: Optional[float] = None
    delta_mode: str = "constant"
    sigma_q: Optional[float] = None
    eta: Optional[float] = None
    integrator: str = "rk4"
    mode: str = "reduced"
    tol_g: float = 1e-6
    tol_v: float = 1e-6
    v0: Optional[tuple[float, ...]] = None

    @property
    def kind(self) -> str:
        return "flow"

    def clf_params(self) -> ClfParams:
        return DEFAULT_CLF if self.clf is None else self.clf.build()

    def _need(self, **fields: Optional[float]) -> list[float]:
        out = []
        for key, value in fields.items():
            if value is None:
                raise ConfigError(f"method.{key}: required by controller "
                                  f"{self.controller!r}")
            out.append(value)
        return out

    def build_controller(self) -> ControllerSpec:
        clf = self.clf_params()
        metric = MetricSpec(MetricKind(self.metric), eig_floor=self.eig_floor)
        try:
            if self.controller == "min_p":
                mode = DeltaMode(self.delta_mode)
                if mode is DeltaMode.FIXED_SIGMA:
                    (sq,) = self._need(sigma_q=self.sigma_q)
                    return min_p_controller(clf, metric, delta_mode=mode,
                                            sigma_q=sq)
                (delta,) = self._need(delta=self.delta)
                return min_p_controller(clf, metric, delta=delta,
                                        delta_mode=mode)
            if self.controller == "min_p_star":
                (eta,) = self._need(eta=self.eta)
                return min_p_star_controller(clf, metric, rate_eta=eta)
            if self.controller == "direct":
                ga, gb, gc = self._need(gamma_a=self.gamma_a,
                                        gamma_b=self.gamma_b,
                                        gamma_c=self.gamma_c)
                return direct_controller(ga, gb, gc, clf=clf, metric=metric)
            if self.controller == "momentum_flow":
                ga, gb = self._need(gamma_a=self.gamma_a,
                                    gamma_b=self.gamma_b)
                return momentum_flow_controller(ga, gb, metric)
            if self.controller == "polyak":
                ga, gb = self._need(gamma_a=self.gamma_a,
                                    gamma_b=self.gamma_b)
                return polyak_controller(ga, gb)
            if self.controller == "accel_newton":
                ga, gb = self._need(gamma_a=self.gamma_a,
                                    gamma_b=self.gamma_b)
                return accelerated_newton_controller(ga, gb,
                                                     eig_floor=self.eig_floor)
            if self.controller == "quasi_newton":
                ga, gb = self._need(gamma_a=self.gamma_a,
                                    gamma_b=self.gamma_b)
                return quasi_newton_flow_controller(ga, gb,
                                                    eig_floor=self.eig_floor)
            ga, = self._need(gamma_a=self.gamma_a)
            return nesterov_flow_controller(ga, clf=clf)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"method: {e}") from e

    def stopping_rule(self) -> StoppingRule:
        return StoppingRule(tol_g=self.tol_g, tol_v=self.tol_v)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "kind": "flow", "controller": self.controller, "h": self.h,
            "t_max": self.t_max, "metric": self.metric,
            "eig_floor": self.eig_floor, "delta_mode": self.delta_mode,
            "integrator": self.integrator, "mode": self.mode,
            "tol_g": self.tol_g, "tol_v": self.tol_v,
        }
        if self.clf is not None:
            out["clf"] = self.clf.to_dict()
        for key in ("gamma_a", "gamma_b", "gamma_c", "delta", "sigma_q",
                    "eta"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.v0 is not None:
            out["v0"] = list(self.v0)
        return out


def _parse_flow_method(b: _Block) -> FlowMethodConfig:
    controller = _as_str(b.take("controller", required=True),
                         "method.controller", FLOW_CONTROLLERS)

    def opt_float(key: str) -> Optional[float]:
        value = b.take(key)
        return None if value is None else _as_float(value, f"method.{key}")

    cfg = FlowMethodConfig(
        controller=controller,
        h=_as_positive(b.take("h", required=True), "method.h"),
        t_max=_as_positive(b.take("t_max", required=True), "method.t_max"),
        metric=_as_str(b.take("metric", "euclidean"), "method.metric",
                       ("euclidean", "hessian", "quasi_newton")),
        eig_floor=_as_positive(b.take("eig_floor", 1e-6), "method.eig_floor"),
        clf=_parse_clf(b.take("clf")),
        gamma_a=opt_float("gamma_a"),
        gamma_b=opt_float("gamma_b"),
        gamma_c=opt_float("gamma_c"),
        delta=opt_float("delta"),
        delta_mode=_as_str(b.take("delta_mode", "constant"),
                           "method.delta_mode",
                           ("constant", "taper", "fixed_sigma")),
        sigma_q=opt_float("sigma_q"),
        eta=opt_float("eta"),
        integrator=_as_str(b.take("integrator", "rk4"), "method.integrator",
                           ("rk4", "semi_implicit_euler")),
        mode=_as_str(b.take("mode", "reduced"), "method.mode",
                     ("reduced", "full_primal_dual")),
        tol_g=_as_positive(b.take("tol_g", 1e-6), "method.tol_g"),
        tol_v=_as_positive(b.take("tol_v", 1e-6), "method.tol_v"),
        v0=_as_vector(b.take("v0"), "method.v0"),
    )
    b.finish()
    cfg.build_controller()
    return cfg


@dataclass(frozen=True)
class DiscreteMethodConfig:
    name: str
    max_iters: int
    alpha: Union[float, str, None] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    beta_cg: Union[float, str, None] = None
    gamma_a: Optional[float] = None
    gamma_b: Optional[float] = None
    h: Optional[float] = None
    eig_floor: float = 1e-6
    tol_g: float = 1e-6

    @property
    def kind(self) -> str:
        return "discrete"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": "discrete", "name": self.name,
                               "max_iters": self.max_iters,
                               "eig_floor": self.eig_floor,
                               "tol_g": self.tol_g}
        for key in ("alpha", "beta", "gamma", "beta_cg", "gamma_a",
                    "gamma_b", "h"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def _parse_discrete_method(b: _Block) -> DiscreteMethodConfig:
    name = _as_str(b.take("name", required=True), "method.name",
                   DISCRETE_METHODS)

    def opt_float(key: str) -> Optional[float]:
        value = b.take(key)
        return None if value is None else _as_float(value, f"method.{key}")

    alpha = b.take("alpha")
    if alpha is not None and not isinstance(alpha, str):
        alpha = _as_positive(alpha, "method.alpha")
    elif isinstance(alpha, str) and alpha != "exact_line_search":
        raise ConfigError(f"method.alpha: expected a number or "
                          f"'exact_line_search', got {alpha!r}")
    beta_cg = b.take("beta_cg")
    if beta_cg is not None and not isinstance(beta_cg, str):
        beta_cg = _as_float(beta_cg, "method.beta_cg")
    elif isinstance(beta_cg, str) and beta_cg != "fletcher_reeves":
        raise ConfigError(f"method.beta_cg: expected a number or "
                          f"'fletcher_reeves', got {beta_cg!r}")

    cfg = DiscreteMethodConfig(
        name=name,
        max_iters=_as_int(b.take("max_iters", required=True),
                          "method.max_iters", minimum=1),
        alpha=alpha,
        beta=opt_float("beta"),
        gamma=opt_float("gamma"),
        beta_cg=beta_cg,
        gamma_a=opt_float("gamma_a"),
        gamma_b=opt_float("gamma_b"),
        h=opt_float("h"),
        eig_floor=_as_positive(b.take("eig_floor", 1e-6), "method.eig_floor"),
        tol_g=_as_positive(b.take("tol_g", 1e-6), "method.tol_g"),
    )
    b.finish()

    def need(*keys: str) -> None:
        for key in keys:
            if getattr(cfg, key) is None:
                raise ConfigError(f"method.{key}: required by method "
                                  f"{name!r}")

    if name in ("heavy_ball", "nesterov1", "nesterov2"):
        need("alpha", "beta")
        if isinstance(cfg.alpha, str):
            raise ConfigError(f"method.alpha: {name!r} needs a numeric step")
    elif name == "cg":
        need("alpha", "beta_cg")
    else:
        need("gamma_a", "gamma_b", "h")
    return cfg


MethodConfig = Union[FlowMethodConfig, DiscreteMethodConfig]


def _parse_method(data: Any) -> MethodConfig:
    b = _Block(data, "method")
    kind = _as_str(b.take("kind", required=True), "method.kind",
                   ("flow", "discrete"))
    if kind == "flow":
        return _parse_flow_method(b)
    return _parse_discrete_method(b)


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "runs"
    stride: int = 1

    def to_dict(self) -> dict:
        return {"out_dir": self.out_dir, "stride": self.stride}


def _parse_output(data: Any) -> OutputConfig:
    b = _Block(data, "output")
    out_dir = b.take("out_dir", "runs")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError(f"output.out_dir: expected a non-empty string, "
                          f"got {out_dir!r}")
    cfg = OutputConfig(out_dir=out_dir,
                       stride=_as_int(b.take("stride", 1), "output.stride",
                                      minimum=1))
    b.finish()
    return cfg


@dataclass(frozen=True)
class VerifyConfig:
    checks: tuple[str, ...] = ()
    dissipation_mode: str = "strict"
    eta: float = 1.0
    tol: Optional[float] = None
    adjoint_coeff: float = 1e3
    singular_tol: float = 1e-8

    def mode(self) -> DissipationMode:
        return DissipationMode(self.dissipation_mode)

    def effective_tol(self) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-12 if self.dissipation_mode == "strict" else 1e-6

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"checks": list(self.checks),
                               "dissipation_mode": self.dissipation_mode,
                               "eta": self.eta,
                               "adjoint_coeff": self.adjoint_coeff,
                               "singular_tol": self.singular_tol}
        if self.tol is not None:
            out["tol"] = self.tol
        return out


def _parse_verify(data: Any) -> VerifyConfig:
    b = _Block(data, "verify")
    raw = b.take("checks", [])
    if not isinstance(raw, list):
        raise ConfigError(f"verify.checks: expected a list, got {raw!r}")
    checks = tuple(_as_str(c, f"verify.checks[{i}]", CHECK_NAMES)
                   for i, c in enumerate(raw))
    tol = b.take("tol")
    cfg = VerifyConfig(
        checks=checks,
        dissipation_mode=_as_str(b.take("dissipation_mode", "strict"),
                                 "verify.dissipation_mode",
                                 ("strict", "rate")),
        eta=_as_positive(b.take("eta", 1.0), "verify.eta"),
        tol=None if tol is None else _as_positive(tol, "verify.tol"),
        adjoint_coeff=_as_positive(b.take("adjoint_coeff", 1e3),
                                   "verify.adjoint_coeff"),
        singular_tol=_as_positive(b.take("singular_tol", 1e-8),
                                  "verify.singular_tol"),
    )
    b.finish()
    return cfg


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    method: MethodConfig
    output: OutputConfig = OutputConfig()
    verify: VerifyConfig = VerifyConfig()
    label: Optional[str] = None

    def run_label(self) -> str:
        if self.label:
            return self.label
        if isinstance(self.method, FlowMethodConfig):
            return self.method.controller
        return self.method.name

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(
            self, problem=dataclasses.replace(self.problem, seed=seed))

    def with_stride(self, stride: int) -> "RunConfig":
        return dataclasses.replace(
            self, output=dataclasses.replace(self.output, stride=stride))

    def with_out_dir(self, out_dir: str) -> "RunConfig":
        return dataclasses.replace(
            self, output=dataclasses.replace(self.output, out_dir=out_dir))

    def to_dict(self) -> dict:
        out = {"problem": self.problem.to_dict(),
               "method": self.method.to_dict(),
               "output": self.output.to_dict(),
               "verify": self.verify.to_dict()}
        if self.label is not None:
            out["label"] = self.label
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True,
                              default_flow_style=False)


def parse_config(data: Any, source: str = "<config>") -> RunConfig:
    b = _Block(data, "config")
    problem = _parse_problem(b.take("problem", required=True))
    method = _parse_method(b.take("method", required=True))
    output = _parse_output(b.take("output"))
    verify = _parse_verify(b.take("verify"))
    label = b.take("label")
    if label is not None and (not isinstance(label, str) or not label):
        raise ConfigError(f"label: expected a non-empty string, got "
                          f"{label!r}")
    b.finish()
    return RunConfig(problem=problem, method=method, output=output,
                     verify=verify, label=label)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else path
        raise ConfigError(f"{where}: YAML parse error: {e}") from e
    return parse_config(data, source=path)


def flow_mode(cfg: FlowMethodConfig) -> FlowMode:
    return FlowMode(cfg.mode)


def flow_integrator(cfg: FlowMethodConfig) -> Integrator:
    return Integrator(cfg.integrator)
