"""Damped (Levenberg-Marquardt) least squares with named parameters.

Positive parameters are optimized in log space, so a step in those
coordinates is a relative change of the physical value. The Jacobian is a
forward difference with a fixed relative step.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, FitError, InitializationError, RankDeficiencyError

SCHEMA_VERSION = 1

#: Parameters fitted through their logarithm unless a config says otherwise.
POSITIVE_PARAMS = frozenset({"L", "C", "R_loss", "b", "scale"})

UNITS = {"L": "H", "C": "F", "R_loss": "Ohm", "b": "1", "phi": "rad", "scale": "1", "Z0": "Ohm"}


@dataclass
class FitConfig:
    """Fit set-up.

    ``free`` and ``fixed`` must partition the model parameters; the fitting
    procedures check that. ``initial`` may leave out free parameters, the
    procedures then fill them from data heuristics.

    ``weighting="relative"`` weights each point by the inverse square of its
    observed value (maximum likelihood for multiplicative noise);
    ``"unit"`` gives every point weight one.

    Damping follows Marquardt scaling: the step solves
    ``(J^T J + lam * diag(J^T J)) d = -J^T r``; ``lam`` is multiplied by
    ``damping_increase`` after a rejected step and by ``damping_decrease``
    after an accepted one.
    """

    free: tuple = ("L", "C", "b")
    fixed: dict = field(default_factory=lambda: {"R_loss": 0.0})
    initial: dict = field(default_factory=dict)
    log_params: frozenset = POSITIVE_PARAMS
    xtol: float = 1e-8
    ftol: float = 1e-10
    max_iter: int = 200
    damping_init: float = 1e-8
    damping_increase: float = 10.0
    damping_decrease: float = 0.1
    jacobian_step: float = 1e-6
    rank_rcond: float = 1e-8
    near_match_weight: float = 1.0
    weighting: str = "relative"
    allow_b_and_rloss: bool = False
    resonance_side: str = "above"

    def __post_init__(self):
        self.free = tuple(self.free)
        self.fixed = dict(self.fixed)
        self.initial = dict(self.initial)
        self.log_params = frozenset(self.log_params)
        overlap = set(self.free) & set(self.fixed)
        if overlap:
            raise ConfigError(f"parameters both free and fixed: {sorted(overlap)}")
        if len(set(self.free)) != len(self.free):
            raise ConfigError("duplicate free parameters")
        if not (self.xtol > 0 and self.ftol > 0):
            raise ConfigError("tolerances must be > 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not (self.damping_increase > 1 and 0 < self.damping_decrease < 1 and self.damping_init > 0):
            raise ConfigError("damping schedule needs increase > 1, 0 < decrease < 1, init > 0")
        if self.near_match_weight <= 0:
            raise ConfigError("near_match_weight must be > 0")
        if self.weighting not in ("unit", "relative"):
            raise ConfigError("weighting must be 'unit' or 'relative'")
        if self.resonance_side not in ("above", "below"):
            raise ConfigError("resonance_side must be 'above' or 'below'")

    @classmethod
    def scatter(cls, r_loss=0.0, **kw):
        """Default fixed-frequency scatter fit: free L, C, b; R_loss fixed."""
        return cls(free=("L", "C", "b"), fixed={"R_loss": r_loss}, **kw)

    @classmethod
    def hanger(cls, **kw):
        """Default hanger sweep fit: everything free, including amplitude scale."""
        return cls(free=("L", "C", "R_loss", "phi", "scale"), fixed={}, **kw)

    def to_dict(self):
        d = asdict(self)
        d["log_params"] = sorted(self.log_params)
        d["free"] = list(self.free)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schema_version", None)
        return cls(**d)


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``params`` holds every model parameter (free and fixed, SI units);
    ``stderr`` holds standard errors of the free ones, estimated from the
    Jacobian at the optimum and the residual variance.
    """

    params: dict
    stderr: dict
    free: tuple
    rss: float
    n_points: int
    iterations: int
    converged: bool
    message: str
    cost_history: list
    derived: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def dof(self):
        return self.n_points - len(self.free)

    @property
    def rms_residual(self):
        return math.sqrt(self.rss / self.n_points) if self.n_points else math.nan

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "parameters": {
                name: {
                    "value": value,
                    "unit": UNITS.get(name, ""),
                    "stderr": self.stderr.get(name),
                    "free": name in self.free,
                }
                for name, value in self.params.items()
            },
            "residuals": {
                "rss": self.rss,
                "rms": self.rms_residual,
                "n_points": self.n_points,
                "dof": self.dof,
            },
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "cost_history": self.cost_history,
            "derived": self.derived,
            "config": self.config,
        }

    def to_json(self, **kw):
        return json.dumps(_jsonable(self.to_dict()), **kw)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported FitResult schema_version {d.get('schema_version')!r}")
        params = {k: v["value"] for k, v in d["parameters"].items()}
        stderr = {k: v["stderr"] for k, v in d["parameters"].items() if v["free"]}
        free = tuple(k for k, v in d["parameters"].items() if v["free"])
        return cls(
            params=params,
            stderr=stderr,
            free=free,
            rss=d["residuals"]["rss"],
            n_points=d["residuals"]["n_points"],
            iterations=d["iterations"],
            converged=d["converged"],
            message=d["message"],
            cost_history=list(d["cost_history"]),
            derived=dict(d.get("derived", {})),
            config=dict(d.get("config", {})),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _combination_text(vector, labels):
    terms = [(c, lab) for c, lab in zip(vector, labels) if abs(c) >= 0.05]
    return " ".join(f"{'+' if c >= 0 else '-'} {abs(c):.3f}*{lab}" for c, lab in terms).lstrip("+ ")


def check_rank(jacobian, names, log_names, rcond):
    """Raise RankDeficiencyError if ``jacobian`` is numerically rank deficient."""
    labels = [f"log({n})" if n in log_names else n for n in names]
    n_rows, n_cols = jacobian.shape
    if n_rows < n_cols:
        raise RankDeficiencyError(
            f"{n_rows} data point(s) cannot determine {n_cols} free parameters {list(names)}"
        )
    _, s, vt = np.linalg.svd(jacobian, full_matrices=False)
    if s[0] == 0 or s[-1] <= rcond * s[0]:
        vec = vt[-1]
        vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
        text = _combination_text(vec, labels)
        raise RankDeficiencyError(
            f"Jacobian is rank deficient (singular value ratio {s[-1] / s[0] if s[0] else 0:.3g}); "
            f"unidentifiable combination: {text}",
            combination=dict(zip(labels, vec.tolist())),
        )


def least_squares_solve(
    model: Callable[[Mapping[str, float]], np.ndarray],
    data: Sequence[float],
    config: FitConfig,
    weights: Optional[Sequence[float]] = None,
) -> FitResult:
    """Minimize ``sum(w * (model(p) - data)**2)`` over the free parameters.

    Args:
        model: Maps a dict of all parameter values to predictions.
        data: Observed values.
        config: Free/fixed split, initial guesses and solver settings. Every
            free parameter needs an entry in ``config.initial``.
        weights: Optional non-negative weights (inverse variances).

    Returns:
        A FitResult. ``converged`` is False when ``max_iter`` was exhausted.

    Raises:
        RankDeficiencyError: fewer points than free parameters, or a singular
            Jacobian at the start or at the solution.
        InitializationError: missing or non-finite initial guesses.
    """
    y = np.asarray(data, dtype=float).ravel()
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != y.shape:
        raise ConfigError("weights must match data length")
    if np.any(w < 0):
        raise ConfigError("weights must be >= 0")
    sw = np.sqrt(w)
    names = config.free
    if not names:
        raise ConfigError("no free parameters")
    missing = [n for n in names if n not in config.initial]
    if missing:
        raise InitializationError(f"no initial guess for {missing}")
    log_names = frozenset(n for n in names if n in config.log_params)

    theta = np.empty(len(names))
    for j, n in enumerate(names):
        v = float(config.initial[n])
        if not math.isfinite(v):
            raise InitializationError(f"initial guess for {n} is not finite")
        if n in log_names:
            if v <= 0:
                raise InitializationError(f"initial guess for {n} must be > 0, got {v}")
            v = math.log(v)
        theta[j] = v
    is_log = np.array([n in log_names for n in names])

    def to_params(th):
        p = dict(config.fixed)
        for n, v, lg in zip(names, th, is_log):
            p[n] = math.exp(v) if lg else float(v)
        return p

    def residual(th):
        pred = np.asarray(model(to_params(th)), dtype=float).ravel()
        return sw * (pred - y)

    def jacobian(th, r0):
        jac = np.empty((y.size, th.size))
        for j in range(th.size):
            h = config.jacobian_step if is_log[j] else config.jacobian_step * max(abs(th[j]), 1.0)
            th_h = th.copy()
            th_h[j] += h
            jac[:, j] = (residual(th_h) - r0) / h
        return jac

    if y.size < len(names):
        raise RankDeficiencyError(
            f"{y.size} data point(s) cannot determine {len(names)} free parameters {list(names)}"
        )
    r = residual(theta)
    if not np.all(np.isfinite(r)):
        raise InitializationError("model is not finite at the initial guess")
    cost = float(r @ r)
    history = [cost]
    y_norm = float(np.linalg.norm(sw * y))
    lam = config.damping_init
    converged = False
    message = f"maximum iterations ({config.max_iter}) reached"
    iterations = 0

    for iterations in range(1, config.max_iter + 1):
        jac = jacobian(theta, r)
        if iterations == 1:
            check_rank(jac, names, log_names, config.rank_rcond)
        jtj_diag = np.einsum("ij,ij->j", jac, jac)
        scale = np.sqrt(np.maximum(jtj_diag, 1e-300))
        accepted = False
        while lam < 1e20:
            a = np.vstack([jac, np.diag(math.sqrt(lam) * scale)])
            rhs = np.concatenate([-r, np.zeros(theta.size)])
            step = np.linalg.lstsq(a, rhs, rcond=None)[0]
            trial = theta + step
            r_trial = residual(trial)
            c_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf
            if c_trial <= cost:
                accepted = True
                break
            lam *= config.damping_increase
        if not accepted:
            converged = True
            message = "cost cannot be decreased further"
            break
        rel_change = np.where(is_log, np.abs(step), np.abs(step) / np.maximum(np.abs(theta), 1.0))
        rel_cost = (cost - c_trial) / cost if cost > 0 else 0.0
        theta, r, cost = trial, r_trial, c_trial
        history.append(cost)
        lam = max(lam * config.damping_decrease, 1e-20)
        if np.max(rel_change) < config.xtol:
            converged, message = True, "relative parameter change below xtol"
            break
        if rel_cost < config.ftol:
            converged, message = True, "relative cost change below ftol"
            break
        if math.sqrt(cost) <= 1e-14 * y_norm:
            converged, message = True, "residual at machine precision"
            break

    jac = jacobian(theta, r)
    check_rank(jac, names, log_names, config.rank_rcond)
    dof = y.size - theta.size
    params = to_params(theta)
    stderr = {}
    if dof > 0:
        cov = (cost / dof) * np.linalg.pinv(jac.T @ jac)
        for j, n in enumerate(names):
            sd = math.sqrt(max(cov[j, j], 0.0))
            stderr[n] = params[n] * sd if is_log[j] else sd
    else:
        stderr = {n: math.nan for n in names}
    if not converged and not np.isfinite(cost):
        raise FitError("fit diverged")
    return FitResult(
        params=params,
        stderr=stderr,
        free=tuple(names),
        rss=cost,
        n_points=int(y.size),
        iterations=iterations,
        converged=converged,
        message=message,
        cost_history=history,
        config=config.to_dict(),
    )
