"""Empirical checks of the gradient inequality and finite trajectory length.

Near a critical point ``psi`` the inequality reads::

    |-Delta u + f(u)|_(H^1)' + |d_nu u + mu u|_L2(boundary) >= c |E(u) - E(psi)|^(1 - theta)

The left side is evaluated from the interior residual (the energy gradient
without its boundary rows) and, along trajectories, the boundary velocity,
since the dynamical boundary condition gives ``d_nu u + mu u = -u_t`` there.
"""

from dataclasses import dataclass, field

import numpy as np

from .discretization import trace
from .energy import dual_norm, energy_gradient, h1_norm
from .equilibrium import boundary_flux_defect, boundary_l2, solve_stationary
from .validation import check_field

DEFAULT_WINDOW = (1e-12, 1e-3)
MIN_POINTS = 8
MIN_R2 = 0.9
SCAN_RTOL = 1e-6


def interior_residual(u, ops, model):
    """Energy gradient with the boundary rows removed: the functional ``-Delta u + f(u)``."""
    r = energy_gradient(u, ops, model)
    r[ops.mesh.boundary_idx] = 0.0
    return r


def ls_lhs(u, ops, model, u_t=None):
    """Left side of the gradient inequality at ``u``.

    With ``u_t`` the boundary term is ``|trace(u_t)|``; without it, the weak
    flux defect of ``u`` is used.  The two agree up to O(dt) + O(h) along a
    trajectory.
    """
    u = check_field(u, ops.mesh.node_count)
    interior = dual_norm(interior_residual(u, ops, model), ops)
    if u_t is None:
        bnd = boundary_l2(boundary_flux_defect(u, ops, model), ops)
    else:
        bnd = boundary_l2(trace(u_t, ops.mesh), ops)
    return interior + bnd


def trajectory_ls_lhs(rec, ops, model):
    """``ls_lhs`` at every recorded point, using the recorded boundary velocity."""
    interior = np.array(
        [dual_norm(interior_residual(s, ops, model), ops) for s in rec.snapshots]
    )
    return interior + rec.ut_bnd_l2


def neighborhood_radius(psi, ops):
    """Heuristic stand-in for the (unknown) radius of validity around ``psi``."""
    return 0.1 * h1_norm(psi, ops) + 0.01


@dataclass
class LojasiewiczFit:
    theta: float
    one_minus_theta: float
    r_squared: float
    window: tuple
    n_points: int
    constant_c: float
    violated: bool
    unreliable: bool
    intercept_c: float = float("nan")
    n_scanned: int = 0
    diagnostics: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        def num(x):
            return None if x is None or not np.isfinite(x) else float(x)

        return {
            "theta": num(self.theta),
            "one_minus_theta": num(self.one_minus_theta),
            "r_squared": num(self.r_squared),
            "window": [float(self.window[0]), float(self.window[1])],
            "n_points": int(self.n_points),
            "constant_c": num(self.constant_c),
            "violated": bool(self.violated),
            "unreliable": bool(self.unreliable),
        }


def fit_exponent(gaps, lhs, window=DEFAULT_WINDOW):
    """Fit ``log lhs = (1 - theta) log gap + log c`` over gaps inside ``window``.

    The slope comes from least squares.  ``constant_c`` is the lower
    envelope ``min lhs / gap^(1-theta)`` over the fitted points, so the pair
    certifies the inequality on the window; the scan then only catches
    non-finite or round-off inconsistencies.
    """
    gaps = np.asarray(gaps, dtype=float)
    lhs = np.asarray(lhs, dtype=float)
    lo, hi = window
    sel = (gaps >= lo) & (gaps <= hi) & (lhs > 0) & np.isfinite(lhs)
    n = int(sel.sum())
    nan = float("nan")
    if n < 3:
        return LojasiewiczFit(nan, nan, nan, (lo, hi), n, nan, False, True)

    x, y = np.log(gaps[sel]), np.log(lhs[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    c = float(np.min(lhs[sel] / gaps[sel] ** slope))
    violated = bool(np.any(lhs[sel] < c * gaps[sel] ** slope * (1 - SCAN_RTOL)))

    unreliable = n < MIN_POINTS or r2 < MIN_R2
    return LojasiewiczFit(
        theta=nan if unreliable else 1.0 - slope,
        one_minus_theta=float(slope),
        r_squared=r2,
        window=(lo, hi),
        n_points=n,
        constant_c=c,
        violated=violated,
        unreliable=unreliable,
        intercept_c=float(np.exp(intercept)),
        n_scanned=n,
    )


def estimate_theta(rec, eq, ops, model, window=DEFAULT_WINDOW, radius=None):
    """Fit the exponent along a trajectory converging to ``eq.psi``.

    Only records within ``radius`` of ``psi`` in H^1 take part (default
    ``0.1 |psi|_H1 + 0.01``); the fit further restricts to energy gaps in
    ``window``.  Too few points gives an unreliable fit, not an exception.
    """
    psi = eq.psi
    if radius is None:
        radius = neighborhood_radius(psi, ops)
    dist = np.array([h1_norm(s - psi, ops) for s in rec.snapshots])
    gaps = rec.energies - eq.energy_value
    lhs = trajectory_ls_lhs(rec, ops, model)
    near = dist <= radius
    fit = fit_exponent(gaps[near], lhs[near], window=window)
    outside = near & (gaps > window[1])
    below = np.zeros_like(outside)
    if not fit.unreliable:
        below[outside] = lhs[outside] < fit.constant_c * gaps[outside] ** fit.one_minus_theta
    fit.diagnostics = {
        "gaps": gaps,
        "lhs": lhs,
        "dist": dist,
        "near": near,
        "radius": radius,
        # beyond the window the local inequality with this constant need not hold
        "violations_above_window": int(below.sum()),
    }
    return fit


@dataclass(frozen=True)
class FiniteLengthReport:
    total_length: float
    tail_length: float
    tail_ratio: float
    tail_start: float
    cauchy_passed: bool
    bound_t0: float = float("nan")
    bound_length: float = float("nan")
    bound_value: float = float("nan")
    slack: float = float("nan")
    bound_holds: bool = None

    def to_dict(self):
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in self.__dict__.items()}


def _trapezoid(y, t):
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def finite_length_check(rec, fit=None, eq=None, tail_fraction=0.1, tail_tol=0.01):
    """Trajectory length ``int |u_t| dt`` and its tail.

    (a) Cauchy test: the length accumulated over the final ``tail_fraction``
    of the recorded time span is at most ``tail_tol`` of the total.
    (b) With a fit and equilibrium: from the first time ``t0`` the record
    enters the fit window, compare the remaining length with
    ``(2/theta) (E(u(t0)) - E(psi))^theta``; ``slack = bound/length - 1``.
    """
    t, y = rec.times, rec.ut_l2
    total = _trapezoid(y, t)
    T0, T = t[0], t[-1]
    start = T - tail_fraction * (T - T0)
    k = int(np.searchsorted(t, start))
    tail_t = np.concatenate([[start], t[k:]])
    tail_y = np.concatenate([[np.interp(start, t, y)], y[k:]])
    tail = _trapezoid(tail_y, tail_t)
    ratio = tail / total if total > 0 else 0.0
    kw = {}
    if fit is not None and eq is not None and not fit.unreliable:
        theta = fit.theta
        gaps = rec.energies - eq.energy_value
        near = fit.diagnostics.get("near", np.ones(len(t), dtype=bool))
        cand = np.flatnonzero(near & (gaps <= fit.window[1]) & (gaps > 0))
        if cand.size:
            i0 = int(cand[0])
            length = _trapezoid(y[i0:], t[i0:])
            bound = (2.0 / theta) * gaps[i0] ** theta
            slack = bound / length - 1.0 if length > 0 else float("inf")
            kw = dict(
                bound_t0=float(t[i0]),
                bound_length=length,
                bound_value=float(bound),
                slack=float(slack),
                bound_holds=bool(slack >= 0),
            )
    return FiniteLengthReport(
        total_length=total,
        tail_length=tail,
        tail_ratio=ratio,
        tail_start=float(start),
        cauchy_passed=bool(ratio <= tail_tol),
        **kw,
    )


@dataclass
class ConvergenceCertificate:
    declined: bool
    reason: str = ""
    final_h1_dist: float = float("nan")
    final_ut_l2: float = float("nan")
    final_ut_dyn: float = float("nan")
    tail_monotone: bool = False
    equilibrium: object = field(default=None, repr=False)
    h1_dist: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        def num(x):
            return None if not np.isfinite(x) else float(x)

        return {
            "declined": self.declined,
            "reason": self.reason,
            "final_h1_dist": num(self.final_h1_dist),
            "final_ut_l2": num(self.final_ut_l2),
            "final_ut_dyn": num(self.final_ut_dyn),
            "tail_monotone": self.tail_monotone,
        }


def convergence_certificate(rec, ops, model, tol=1e-10, monotone_atol=1e-13):
    """Certify convergence of a finished trajectory to a single equilibrium.

    Polishes an equilibrium from the final snapshot by Newton and reports
    the final H^1 distance, the final velocity, and whether the H^1
    distance is non-increasing over the last quarter of the records.
    Non-converged runs are declined without raising.
    """
    if rec.status != "converged":
        return ConvergenceCertificate(declined=True, reason=f"trajectory status is {rec.status}")
    try:
        eq = solve_stationary(rec.final_state, ops, model, tol=tol)
    except Exception as exc:  # noqa: BLE001 - report, never raise
        return ConvergenceCertificate(declined=True, reason=f"polishing failed: {exc}")
    dist = np.array([h1_norm(s - eq.psi, ops) for s in rec.snapshots])
    q = dist[len(dist) - max(2, len(dist) // 4):]
    monotone = bool(np.all(np.diff(q) <= monotone_atol))
    return ConvergenceCertificate(
        declined=False,
        final_h1_dist=float(dist[-1]),
        final_ut_l2=float(rec.ut_l2[-1]),
        final_ut_dyn=float(rec.ut_dyn[-1]),
        tail_monotone=monotone,
        equilibrium=eq,
        h1_dist=dist,
    )
