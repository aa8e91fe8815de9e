"""Time integration of the gradient flow ``M_dyn du/dt = -grad E(u)``.

Both schemes are backward-Euler type in the linear part.  The driver adapts
the step, backtracks on any energy increase, and records the quantities that
appear in the dissipation identity and the convergence analysis.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .energy import (
    dual_norm,
    energy,
    energy_gradient,
    h1_norm,
    l2_norms,
    lp_norms,
    monitor_exponent,
)
from .exceptions import ConfigurationError, StepFailure
from .validation import check_field, check_int, check_positive

logger = logging.getLogger(__name__)

BLOW_UP_THRESHOLD = 1e8
ENERGY_RTOL = 1e-12
GROWTH_FACTOR = 1.2
GROWTH_AFTER = 5

SCHEMES = ("semi_implicit", "implicit")
STATUSES = ("converged", "horizon_reached", "dt_underflow", "blow_up")
CSV_COLUMNS = ("t", "E", "ut_l2", "ut_bnd_l2", "grad_dual", "h1_dist_ref", "lp_int", "lp_bnd")


@dataclass(frozen=True)
class FlowConfig:
    dt0: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 1.0
    t_end: float = 100.0
    tol_stat: float = 1e-9
    scheme: str = "implicit"
    newton_tol: float = 1e-12
    newton_max_iter: int = 30
    record_every: int = 1
    energy_backtrack: bool = True

    def __post_init__(self):
        for name in ("dt0", "dt_min", "dt_max", "t_end", "tol_stat", "newton_tol"):
            check_positive(getattr(self, name), name)
        check_int(self.newton_max_iter, "newton_max_iter", minimum=1)
        check_int(self.record_every, "record_every", minimum=1)
        if not self.dt_min <= self.dt0 <= self.dt_max:
            raise ConfigurationError(
                f"need dt_min <= dt0 <= dt_max, got {self.dt_min}, {self.dt0}, {self.dt_max}",
                key="dt0",
            )
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"must be one of {SCHEMES}, got {self.scheme!r}", key="scheme")
        if not isinstance(self.energy_backtrack, bool):
            raise ConfigurationError("expected a boolean", key="energy_backtrack")


@dataclass
class TrajectoryRecord:
    """Recorded series of one trajectory.

    Row ``k`` describes the state after an accepted step; ``ut_*`` are norms
    of the difference quotient of that step.  Row 0 is the initial state,
    with the velocity ``-M_dyn^-1 grad E(u0)`` of the continuous flow.
    """

    times: np.ndarray
    energies: np.ndarray
    ut_l2: np.ndarray
    ut_bnd_l2: np.ndarray
    grad_dual: np.ndarray
    h1_dist_ref: np.ndarray
    lp_interior: np.ndarray
    lp_bnd: np.ndarray
    snapshots: np.ndarray
    status: str
    p_monitor: float
    dts: np.ndarray = field(default=None)
    n_steps: int = 0
    n_rejected: int = 0

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.snapshots[-1]

    @property
    def ut_dyn(self):
        """``|u_t|`` in the ``M_dyn`` norm: interior and boundary parts combined."""
        return np.hypot(self.ut_l2, self.ut_bnd_l2)

    def with_reference(self, ref, ops):
        """Copy of the record with ``h1_dist_ref`` measured against ``ref``."""
        ref = check_field(ref, ops.mesh.node_count, name="ref")
        dist = np.array([h1_norm(s - ref, ops) for s in self.snapshots])
        out = TrajectoryRecord(**{**self.__dict__, "h1_dist_ref": dist})
        return out

    def rows(self):
        cols = (
            self.times,
            self.energies,
            self.ut_l2,
            self.ut_bnd_l2,
            self.grad_dual,
            self.h1_dist_ref,
            self.lp_interior,
            self.lp_bnd,
        )
        return zip(*cols)


def _semi_implicit(u, dt, ops, model):
    rhs = ops.w_dyn * u - dt * ops.w_int * model.f(u)
    return ops.step_solver(model.mu, dt)(rhs)


def step_semi_implicit(u, dt, ops, model):
    """Linear part implicit, ``f`` explicit.

    Solves ``(M_dyn + dt (K + mu M_bnd)) u+ = M_dyn u - dt M_int f(u)``.
    """
    u = check_field(u, ops.mesh.node_count)
    dt = check_positive(dt, "dt")
    with np.errstate(over="ignore", invalid="ignore"):
        out = _semi_implicit(u, dt, ops, model)
    if not np.all(np.isfinite(out)):
        raise StepFailure("semi-implicit step produced non-finite values")
    return out


def _implicit(u, dt, ops, model, tol, max_iter):
    Mu = ops.w_dyn * u
    lin = ops.linear_part(model.mu)
    target = tol * (1.0 + np.linalg.norm(Mu))

    def resid(v):
        return ops.w_dyn * (v - u) + dt * energy_gradient(v, ops, model)

    v = u.copy()
    R = resid(v)
    rn = np.linalg.norm(R)
    for _ in range(max_iter):
        if rn <= target:
            return v
        J = sp.diags(ops.w_dyn + dt * ops.w_int * model.fprime(v)) + dt * lin
        try:
            delta = splu(J.tocsc()).solve(R)
        except RuntimeError as exc:  # singular Jacobian
            raise StepFailure(f"singular Newton matrix: {exc}", residual=rn) from exc
        # damped update: halve until the residual decreases
        step = 1.0
        for _ in range(30):
            trial = v - step * delta
            with np.errstate(over="ignore", invalid="ignore"):
                Rt = resid(trial)
            rt = np.linalg.norm(Rt)
            if np.isfinite(rt) and rt < rn:
                break
            step *= 0.5
        else:
            # no decrease possible: accept if we are already at round-off level
            if np.max(np.abs(delta)) <= 1e-14 * (1.0 + np.max(np.abs(v))):
                return v
            raise StepFailure("Newton line search failed", residual=rn, iterate=v)
        v, R, rn = trial, Rt, rt
    if rn <= target:
        return v
    raise StepFailure("Newton iteration did not converge", residual=rn, iterate=v)


def step_implicit(u, dt, ops, model, newton_tol=1e-12, newton_max_iter=30):
    """Backward Euler: ``M_dyn (u+ - u)/dt + grad E(u+) = 0`` by damped Newton.

    Raises :class:`StepFailure` if Newton does not converge; the driver
    responds by shrinking ``dt``.
    """
    u = check_field(u, ops.mesh.node_count)
    dt = check_positive(dt, "dt")
    return _implicit(u, dt, ops, model, newton_tol, newton_max_iter)


class _Recorder:
    def __init__(self, ops, model, reference):
        self.ops = ops
        self.model = model
        self.reference = reference
        self.p = monitor_exponent(ops.mesh.dim)
        self.rows = []
        self.states = []
        self.dts = []

    def add(self, t, u, E, ut, dt):
        ops = self.ops
        a, b = l2_norms(ut, ops)
        gdual = dual_norm(energy_gradient(u, ops, self.model), ops)
        dist = h1_norm(u - self.reference, ops) if self.reference is not None else np.nan
        with np.errstate(over="ignore"):
            lpi, lpb = lp_norms(u, ops, self.p)
        self.rows.append((t, E, a, b, gdual, dist, lpi, lpb))
        self.states.append(u.copy())
        self.dts.append(dt)

    def finish(self, status, n_steps, n_rejected):
        cols = np.array(self.rows, dtype=float).T
        return TrajectoryRecord(
            times=cols[0],
            energies=cols[1],
            ut_l2=cols[2],
            ut_bnd_l2=cols[3],
            grad_dual=cols[4],
            h1_dist_ref=cols[5],
            lp_interior=cols[6],
            lp_bnd=cols[7],
            snapshots=np.array(self.states),
            status=status,
            p_monitor=self.p,
            dts=np.array(self.dts, dtype=float),
            n_steps=n_steps,
            n_rejected=n_rejected,
        )


def run_trajectory(u0, cfg, ops, model, reference=None):
    """Integrate from ``u0`` until stationary, past ``t_end``, or failure.

    Failures are reported through ``status`` rather than raised:
    ``dt_underflow`` when ``dt`` must drop below ``dt_min``, ``blow_up`` once
    the max norm exceeds 1e8.
    """
    u = check_field(u0, ops.mesh.node_count, name="u0").copy()
    if reference is not None:
        reference = check_field(reference, ops.mesh.node_count, name="reference")
    rec = _Recorder(ops, model, reference)

    E = energy(u, ops, model)
    ut = -energy_gradient(u, ops, model) / ops.w_dyn
    rec.add(0.0, u, E, ut, np.nan)

    def stationary(v):
        return np.sqrt(ops.w_dyn @ v**2) < cfg.tol_stat

    t, dt = 0.0, cfg.dt0
    n_acc = n_rej = streak = 0
    status = None
    recorded_last = True
    if stationary(ut):
        status = "converged"

    while status is None:
        if t >= cfg.t_end * (1 - 1e-14):
            status = "horizon_reached"
            break
        h = min(dt, cfg.t_end - t)
        try:
            if cfg.scheme == "implicit":
                new = _implicit(u, h, ops, model, cfg.newton_tol, cfg.newton_max_iter)
            else:
                with np.errstate(over="ignore", invalid="ignore"):
                    new = _semi_implicit(u, h, ops, model)
            finite = bool(np.all(np.isfinite(new)))
        except StepFailure as exc:
            logger.debug("step failed at t=%g dt=%g: %s", t, h, exc)
            new, finite = None, False
            if np.max(np.abs(u)) > BLOW_UP_THRESHOLD:
                status = "blow_up"
                break

        if new is not None and not finite and cfg.scheme == "semi_implicit":
            # explicit nonlinearity overflowed: the solution has escaped
            status = "blow_up"
            break

        accepted = finite
        if accepted:
            with np.errstate(over="ignore", invalid="ignore"):
                E_new = energy(new, ops, model) if np.max(np.abs(new)) < 1e150 else -np.inf
            if cfg.energy_backtrack and not (E_new <= E + ENERGY_RTOL * (1 + abs(E))):
                accepted = bool(np.isneginf(E_new))
        if not accepted:
            n_rej += 1
            streak = 0
            dt *= 0.5
            if dt < cfg.dt_min:
                status = "dt_underflow"
            continue

        ut = (new - u) / h
        u, E, t = new, E_new, t + h
        n_acc += 1
        streak += 1
        if streak >= GROWTH_AFTER:
            dt = min(dt * GROWTH_FACTOR, cfg.dt_max)
            streak = 0

        if np.max(np.abs(u)) > BLOW_UP_THRESHOLD:
            status = "blow_up"
        elif stationary(ut):
            status = "converged"
        recorded_last = n_acc % cfg.record_every == 0
        if recorded_last or status is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                rec.add(t, u, E, ut, h)
            recorded_last = True

    if not recorded_last:
        rec.add(t, u, E, ut, h)
    logger.info("trajectory finished: %s at t=%g after %d steps (%d rejected)", status, t, n_acc, n_rej)
    return rec.finish(status, n_acc, n_rej)


@dataclass(frozen=True)
class DissipationReport:
    identity_residual: float
    max_energy_increase: float
    energy_monotone: bool
    n_intervals: int

    def to_dict(self):
        return dict(self.__dict__)


def dissipation_check(rec, window=None):
    """Compare ``dE/dt`` with ``-(|u_t|^2 + |u_t|^2_boundary)`` along the record.

    The residual is normalized by ``1 + |E_k|`` and is O(dt) for the
    difference quotients, not zero.  ``window=(t0, t1)`` restricts the check
    to intervals inside that time span, e.g. to leave out the initial layer
    when comparing runs with different steps.
    """
    if len(rec) < 3:
        raise ValueError(f"dissipation_check needs at least 3 records, got {len(rec)}")
    E = rec.energies
    t = rec.times
    dt = np.diff(t)
    dE = np.diff(E)
    diss = rec.ut_l2[1:] ** 2 + rec.ut_bnd_l2[1:] ** 2
    resid = np.abs(dE / dt + diss) / (1.0 + np.abs(E[:-1]))
    increase = dE / (1.0 + np.abs(E[:-1]))
    if window is not None:
        sel = (t[:-1] >= window[0]) & (t[1:] <= window[1])
        if not sel.any():
            raise ValueError(f"no recorded interval inside the window {window}")
        resid, increase, dt = resid[sel], increase[sel], dt[sel]
    return DissipationReport(
        identity_residual=float(np.max(resid)),
        max_energy_increase=float(np.max(increase)),
        energy_monotone=bool(np.all(increase <= ENERGY_RTOL)),
        n_intervals=len(dt),
    )


@dataclass(frozen=True)
class LpBoundReport:
    sup: float
    initial: float
    plateau: float
    bounded: bool
    sup_within_bound: bool

    def to_dict(self):
        return dict(self.__dict__)


def lp_bound_monitor(rec):
    """Check that ``|u|_p^p + |u|_{p,boundary}^p`` stays bounded along the run.

    The bound is ``max(initial, plateau) (1 + 1e-6)`` with the plateau taken
    as the final value; ``bounded`` tests the last quartile against it.
    """
    p = rec.p_monitor
    with np.errstate(over="ignore", invalid="ignore"):
        vals = rec.lp_interior**p + rec.lp_bnd**p
    finite = bool(np.all(np.isfinite(vals)))
    initial, plateau = float(vals[0]), float(vals[-1])
    bound = max(initial, plateau) * (1 + 1e-6)
    tail = vals[len(vals) - max(1, len(vals) // 4):]
    bounded = rec.status != "blow_up" and finite and bool(np.max(tail) <= bound)
    sup = float(np.max(vals)) if finite else np.inf
    return LpBoundReport(
        sup=sup,
        initial=initial,
        plateau=plateau,
        bounded=bounded,
        sup_within_bound=finite and sup <= bound,
    )


def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(rec, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rec.rows():
            writer.writerow([_fmt(x) for x in row])


def read_trajectory_csv(path):
    """Read a trajectory CSV back into a dict of float arrays keyed by column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    data = data.reshape(-1, len(CSV_COLUMNS))
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}


def save_snapshot(u, mesh, path):
    """Node values, one per line, after a header of dim, shape and spacing."""
    u = check_field(u, mesh.node_count)
    with open(path, "w") as fh:
        fh.write(f"dim {mesh.dim}\n")
        fh.write("shape " + " ".join(str(s) for s in mesh.shape) + "\n")
        fh.write("spacing " + " ".join(_fmt(h) for h in mesh.spacing) + "\n")
        for x in u:
            fh.write(_fmt(x) + "\n")


def load_snapshot(path, mesh=None):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise ValueError(f"{path}: truncated snapshot header")
    try:
        dim = int(lines[0].split()[1])
        shape = tuple(int(s) for s in lines[1].split()[1:])
        values = np.array([float(x) for x in lines[3:] if x.strip()])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed snapshot: {exc}") from exc
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: header shape {shape} does not match {values.size} values")
    if mesh is not None and (dim != mesh.dim or shape != tuple(mesh.shape)):
        raise ValueError(
            f"{path}: snapshot of shape {shape} (dim {dim}) does not match mesh {mesh.shape}"
        )
    return values


__all__ = [
    "FlowConfig",
    "TrajectoryRecord",
    "step_semi_implicit",
    "step_implicit",
    "run_trajectory",
    "dissipation_check",
    "lp_bound_monitor",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "save_snapshot",
    "load_snapshot",
]
