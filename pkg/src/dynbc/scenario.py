"""Scenario files: parsing, initial data, and the action pipeline.

A scenario is a YAML mapping.  Unknown keys are rejected and every error
names the offending key path, e.g. ``flow.dt0``.  Defaults::

    name: <file stem>
    mesh:    {dim: 1, n: <required> | nx, ny: <required>, lengths: [1.0, ...]}
    model:   {mu: 0, f_coeffs: <required>}
    flow:    FlowConfig defaults
    init:    {kind: fourier_random, seed: 0, amplitude: 1.0, value: 0.0, path: null}
    outputs: out/<name>
    actions: [run]
"""

import json
import logging
import math
import os
import re
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .discretization import assemble_operators, build_mesh
from .equilibrium import SolverError, minimize_energy
from .exceptions import ConfigurationError, NumericalError
from .flow import (
    FlowConfig,
    dissipation_check,
    load_snapshot,
    lp_bound_monitor,
    run_trajectory,
    save_snapshot,
    write_trajectory_csv,
)
from .lojasiewicz import convergence_certificate, estimate_theta, finite_length_check
from .model import ModelSpec, check_F2, check_F3, compute_lambda
from .validation import check_int, check_mu, check_positive

logger = logging.getLogger(__name__)

ACTIONS = ("run", "equilibria", "lojasiewicz", "lambda", "check-model", "dissipation")
INIT_KINDS = ("constant", "fourier_random", "file")
N_MODES = 5

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DECLINED = 4

OUTPUT_FILES = (
    "trajectory.csv",
    "equilibrium.json",
    "equilibrium.snap",
    "ls_fit.json",
    "lambda.json",
    "model_check.json",
    "summary.json",
)


@dataclass(frozen=True)
class MeshSpec:
    dim: int = 1
    shape: tuple = ()
    lengths: tuple = ()


@dataclass(frozen=True)
class InitSpec:
    kind: str = "fourier_random"
    value: float = 0.0
    seed: int = 0
    amplitude: float = 1.0
    path: str = None


@dataclass(frozen=True)
class Scenario:
    name: str
    mesh: MeshSpec
    mu: int
    f_coeffs: tuple
    flow: FlowConfig
    init: InitSpec
    outputs: str
    actions: tuple = ("run",)
    source: str = None

    def model(self):
        return ModelSpec(self.mu, list(self.f_coeffs), mesh_dim=self.mesh.dim)

    def build(self):
        mesh = build_mesh(self.mesh.dim, self.mesh.shape, self.mesh.lengths)
        return mesh, assemble_operators(mesh)

    def with_overrides(self, seed=None, outputs=None):
        init = self.init if seed is None else InitSpec(**{**asdict(self.init), "seed": seed})
        return Scenario(
            **{
                **{f.name: getattr(self, f.name) for f in fields(self)},
                "init": init,
                "outputs": self.outputs if outputs is None else str(outputs),
            }
        )


def _mapping(obj, path):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigurationError(f"expected a mapping, got {type(obj).__name__}", key=path)
    return obj


def _reject_unknown(d, allowed, path):
    for k in d:
        if k not in allowed:
            key = f"{path}.{k}" if path else str(k)
            raise ConfigurationError(f"unknown key (allowed: {', '.join(allowed)})", key=key)


def _real(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a real number, got {value!r}", key=key)
    return float(value)


def _keyed(fn, value, key, **kw):
    # re-raise helper errors under the full key path
    try:
        return fn(value, key, **kw)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc).split(": ", 1)[-1], key=key) from None


def _parse_mesh(d):
    d = _mapping(d, "mesh")
    _reject_unknown(d, ("dim", "n", "nx", "ny", "lengths"), "mesh")
    dim = _keyed(check_int, d.get("dim", 1), "mesh.dim", minimum=1)
    if dim == 1:
        if "nx" in d or "ny" in d:
            raise ConfigurationError("use n for a 1-D mesh", key="mesh.nx" if "nx" in d else "mesh.ny")
        if "n" not in d:
            raise ConfigurationError("required", key="mesh.n")
        shape = (_keyed(check_int, d["n"], "mesh.n", minimum=3),)
    elif dim == 2:
        if "n" in d:
            raise ConfigurationError("use nx and ny for a 2-D mesh", key="mesh.n")
        for k in ("nx", "ny"):
            if k not in d:
                raise ConfigurationError("required", key=f"mesh.{k}")
        shape = tuple(_keyed(check_int, d[k], f"mesh.{k}", minimum=3) for k in ("nx", "ny"))
    else:
        raise ConfigurationError(f"must be 1 or 2, got {dim}", key="mesh.dim")
    lengths = d.get("lengths", [1.0] * dim)
    if isinstance(lengths, (int, float)) and not isinstance(lengths, bool):
        lengths = [lengths] * dim
    if not isinstance(lengths, list) or len(lengths) != dim:
        raise ConfigurationError(f"expected a list of {dim} lengths", key="mesh.lengths")
    lengths = tuple(_keyed(check_positive, x, f"mesh.lengths[{i}]") for i, x in enumerate(lengths))
    return MeshSpec(dim, shape, lengths)


def _parse_model(d):
    d = _mapping(d, "model")
    _reject_unknown(d, ("mu", "f_coeffs"), "model")
    mu = d.get("mu", 0)
    try:
        mu = check_mu(mu)
    except ConfigurationError:
        raise ConfigurationError(f"must be 0 or 1, got {mu!r}", key="model.mu") from None
    if "f_coeffs" not in d:
        raise ConfigurationError("required", key="model.f_coeffs")
    coeffs = d["f_coeffs"]
    if coeffs is None:
        coeffs = []
    if not isinstance(coeffs, list):
        raise ConfigurationError("expected a list of reals", key="model.f_coeffs")
    coeffs = tuple(_real(c, f"model.f_coeffs[{i}]") for i, c in enumerate(coeffs))
    if not all(math.isfinite(c) for c in coeffs):
        raise ConfigurationError("coefficients must be finite", key="model.f_coeffs")
    return mu, coeffs


def _parse_flow(d):
    d = _mapping(d, "flow")
    names = tuple(f.name for f in fields(FlowConfig))
    _reject_unknown(d, names, "flow")
    kw = {}
    for k, v in d.items():
        default = getattr(FlowConfig, k)
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigurationError(f"expected a boolean, got {v!r}", key=f"flow.{k}")
        elif isinstance(default, int):
            v = _keyed(check_int, v, f"flow.{k}")
        elif isinstance(default, float):
            v = _real(v, f"flow.{k}")
        elif not isinstance(v, str):
            raise ConfigurationError(f"expected a string, got {v!r}", key=f"flow.{k}")
        kw[k] = v
    try:
        return FlowConfig(**kw)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc).split(": ", 1)[-1], key=f"flow.{exc.key}") from None


def _parse_init(d, base_dir):
    d = _mapping(d, "init")
    _reject_unknown(d, ("kind", "value", "seed", "amplitude", "path"), "init")
    kind = d.get("kind", "fourier_random")
    if kind not in INIT_KINDS:
        raise ConfigurationError(f"must be one of {INIT_KINDS}, got {kind!r}", key="init.kind")
    value = _real(d.get("value", 0.0), "init.value")
    seed = _keyed(check_int, d.get("seed", 0), "init.seed", minimum=0)
    amplitude = _keyed(check_positive, d.get("amplitude", 1.0), "init.amplitude")
    path = d.get("path")
    if kind == "file":
        if not isinstance(path, str):
            raise ConfigurationError("a snapshot path is required for kind=file", key="init.path")
        p = Path(path)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        path = str(p)
    elif path is not None:
        raise ConfigurationError("only valid with kind=file", key="init.path")
    return InitSpec(kind, value, seed, amplitude, path)


def _parse_actions(v):
    if v is None:
        return ("run",)
    if isinstance(v, str):
        v = [v]
    if not isinstance(v, list):
        raise ConfigurationError("expected a list", key="actions")
    for i, a in enumerate(v):
        if a not in ACTIONS:
            raise ConfigurationError(f"unknown action {a!r} (allowed: {', '.join(ACTIONS)})", key=f"actions[{i}]")
    if len(set(v)) != len(v):
        raise ConfigurationError("duplicate action", key="actions")
    return tuple(v)


def scenario_from_dict(d, name=None, base_dir=None, source=None):
    d = _mapping(d, "<root>")
    _reject_unknown(d, ("name", "mesh", "model", "flow", "init", "outputs", "actions"), "")
    name = d.get("name", name or "scenario")
    if not isinstance(name, str) or not name:
        raise ConfigurationError("expected a non-empty string", key="name")
    mu, coeffs = _parse_model(d.get("model"))
    outputs = d.get("outputs", f"out/{name}")
    if not isinstance(outputs, str):
        raise ConfigurationError("expected a directory path", key="outputs")
    if base_dir is not None and not Path(outputs).is_absolute():
        outputs = str(base_dir / outputs)
    return Scenario(
        name=name,
        mesh=_parse_mesh(d.get("mesh")),
        mu=mu,
        f_coeffs=coeffs,
        flow=_parse_flow(d.get("flow")),
        init=_parse_init(d.get("init"), base_dir),
        outputs=outputs,
        actions=_parse_actions(d.get("actions")),
        source=source,
    )


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-3`` (no decimal point) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def parse_scenario(path):
    """Read and validate a scenario file; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"no such file: {path}", key="scenario")
    try:
        data = yaml.load(path.read_text(), Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}", key="scenario") from None
    return scenario_from_dict(data, name=path.stem, base_dir=path.parent, source=str(path))


def make_initial(init, mesh):
    """Initial field: a constant, seeded low cosine modes, or a snapshot file.

    ``fourier_random`` draws one coefficient per mode from ``U[-a, a]``
    with ``numpy.random.default_rng(seed)`` (PCG64) and sums the lowest
    ``N_MODES`` cosine modes (the constant included), ordered by
    eigenvalue of the Neumann Laplacian.
    """
    if init.kind == "constant":
        return np.full(mesh.node_count, float(init.value))
    if init.kind == "file":
        return load_snapshot(init.path, mesh=mesh)
    rng = np.random.default_rng(init.seed)
    coef = rng.uniform(-init.amplitude, init.amplitude, size=N_MODES)
    x = mesh.node_coords / np.asarray(mesh.lengths)
    if mesh.dim == 1:
        modes = [(k,) for k in range(N_MODES)]
    else:
        grid = [(i, j) for i in range(N_MODES) for j in range(N_MODES)]
        L = np.asarray(mesh.lengths)
        modes = sorted(grid, key=lambda m: (np.sum((np.array(m) / L) ** 2), m))[:N_MODES]
    u = np.zeros(mesh.node_count)
    for c, m in zip(coef, modes):
        u += c * np.prod(np.cos(np.pi * np.array(m) * x), axis=1)
    return u


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _model_check(model, ops):
    lam = compute_lambda(ops) if model.mu == 1 else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        f3 = check_F3(model.nonlinearity, model.mu, lam)
    for w in caught:
        logger.warning("%s", w.message)
    f2 = check_F2(model.nonlinearity, model.mesh_dim)
    return {"F2": f2.to_dict(), "F3": f3.to_dict()}


def prepare_output_dir(path, force=False):
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigurationError(f"{out} exists and is not empty; pass --force to overwrite", key="outputs")
        for name in OUTPUT_FILES:
            (out / name).unlink(missing_ok=True)
    out.mkdir(parents=True, exist_ok=True)
    return out


class _Run:
    """Mutable state shared by the actions of one scenario run."""

    def __init__(self, scenario, out):
        self.s = scenario
        self.out = out
        self.mesh, self.ops = scenario.build()
        self.model = scenario.model()
        self.u0 = make_initial(scenario.init, self.mesh)
        self.rec = None
        self.eq = None
        self.metrics = {}

    def run(self):
        rec = run_trajectory(self.u0, self.s.flow, self.ops, self.model)
        write_trajectory_csv(rec, self.out / "trajectory.csv")
        self.rec = rec
        self.metrics["trajectory"] = {
            "status": rec.status,
            "t_final": float(rec.times[-1]),
            "n_steps": rec.n_steps,
            "n_rejected": rec.n_rejected,
            "n_records": len(rec),
            "E_initial": float(rec.energies[0]),
            "E_final": float(rec.energies[-1]),
            "ut_final": float(rec.ut_dyn[-1]),
            "lp_bounded": lp_bound_monitor(rec).bounded,
        }
        if rec.status == "blow_up":
            return EXIT_DECLINED, "blow_up"
        if rec.status == "dt_underflow":
            return EXIT_NUMERICAL, "dt_underflow"
        return EXIT_OK, None

    def equilibria(self):
        if self.rec is not None:
            cert = convergence_certificate(self.rec, self.ops, self.model)
            self.metrics["convergence"] = cert.to_dict()
            if cert.declined:
                return EXIT_DECLINED, "certificate_declined"
            self.eq = cert.equilibrium
        else:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    self.eq = minimize_energy(self.u0, self.ops, self.model)
            except SolverError:
                return EXIT_NUMERICAL, "numerical_failure"
        save_snapshot(self.eq.psi, self.mesh, self.out / "equilibrium.snap")
        write_json(self.eq.to_dict("equilibrium.snap"), self.out / "equilibrium.json")
        return EXIT_OK, None

    def lojasiewicz(self):
        if self.rec is None:
            raise ConfigurationError("requires a preceding run action", key="actions")
        if self.eq is None:
            code, status = self.equilibria()
            if code:
                return code, status
        fit = estimate_theta(self.rec, self.eq, self.ops, self.model)
        write_json(fit.to_dict(), self.out / "ls_fit.json")
        fl = finite_length_check(self.rec, fit, self.eq)
        self.metrics["finite_length"] = fl.to_dict()
        if fit.unreliable or fit.violated:
            return EXIT_DECLINED, "certificate_declined"
        return EXIT_OK, None

    def lam(self):
        lam = compute_lambda(self.ops)
        write_json(
            {"lambda": lam, "dim": self.mesh.dim, "shape": list(self.mesh.shape), "lengths": list(self.mesh.lengths)},
            self.out / "lambda.json",
        )
        self.metrics["lambda"] = lam
        return EXIT_OK, None

    def check_model(self):
        write_json(_model_check(self.model, self.ops), self.out / "model_check.json")
        return EXIT_OK, None

    def dissipation(self):
        if self.rec is None:
            raise ConfigurationError("requires a preceding run action", key="actions")
        if len(self.rec) < 3:
            self.metrics["dissipation"] = None
            return EXIT_OK, None
        self.metrics["dissipation"] = dissipation_check(self.rec).to_dict()
        return EXIT_OK, None


_DISPATCH = {
    "run": _Run.run,
    "equilibria": _Run.equilibria,
    "lojasiewicz": _Run.lojasiewicz,
    "lambda": _Run.lam,
    "check-model": _Run.check_model,
    "dissipation": _Run.dissipation,
}


def run_scenario(scenario, force=False):
    """Execute the actions in order and write all artifacts; return the exit code.

    ``summary.json`` is always written once the output directory exists,
    also after a failure, with the status reached so far.
    """
    t0 = time.perf_counter()
    try:
        out = prepare_output_dir(scenario.outputs, force=force)
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG

    code, status, done, message = EXIT_OK, "ok", [], None
    try:
        state = _Run(scenario, out)
        for action in scenario.actions:
            logger.info("%s: %s", scenario.name, action)
            code, failed = _DISPATCH[action](state)
            done.append(action)
            if code:
                status = failed
                break
        metrics = state.metrics
    except ConfigurationError as exc:
        code, status, message, metrics = EXIT_CONFIG, "config_error", str(exc), {}
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        code, status, message = EXIT_NUMERICAL, "numerical_failure", str(exc)
        metrics = state.metrics if "state" in locals() else {}
    except (OSError, ValueError) as exc:
        code, status, message, metrics = EXIT_CONFIG, "config_error", str(exc), {}
    if message:
        logger.error("%s: %s", scenario.name, message)

    summary = {
        "name": scenario.name,
        "status": status,
        "exit_code": code,
        "message": message,
        "actions_completed": done,
        "seed": scenario.init.seed if scenario.init.kind == "fourier_random" else None,
        "metrics": metrics,
        "wall_time": time.perf_counter() - t0,
    }
    write_json(summary, out / "summary.json")
    return code


def run_scenario_file(path, out=None, seed=None, force=False):
    """Parse and run; configuration errors map to exit code 2."""
    try:
        s = parse_scenario(path)
        s = s.with_overrides(seed=seed, outputs=out)
    except ConfigurationError as exc:
        logger.error("%s: %s", path, exc)
        return EXIT_CONFIG
    return run_scenario(s, force=force)


def default_workers(jobs):
    return max(1, min(int(jobs), os.cpu_count() or 1))
