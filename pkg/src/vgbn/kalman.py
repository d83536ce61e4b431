"""Kalman filtering as a schedule over a two-slice dynamic network.

Each cycle predicts ``x(k+1)`` from the current estimate (the known input only
shifts the mean), rolls up by forgetting slice ``k``, and then folds in the
sensor readings of slice ``k+1``.  The decentralized update adds per-sensor
information contributions; the centralized one stacks all sensors and uses the
gain form.  Both produce the same posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimMismatch, SequenceMismatch, SingularInnovationCovariance, SingularPriorCovariance
from .gaussian import Gaussian, as_matrix, as_vector, block_diag, pd_factor, symmetrize


@dataclass(frozen=True)
class Sensor:
    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        h = as_matrix(self.H)
        r = as_matrix(self.R, (h.shape[0], h.shape[0]))
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "R", symmetrize(r))


@dataclass(frozen=True)
class SystemModel:
    """``x(k+1) = F x(k) + G u(k) + v``,  ``z_j(k) = H_j x(k) + w_j``."""

    F: np.ndarray
    Q: np.ndarray
    G: np.ndarray | None = None
    sensors: tuple[Sensor, ...] = ()

    def __post_init__(self):
        f = as_matrix(self.F)
        n = f.shape[0]
        if f.shape != (n, n):
            raise DimMismatch(f"F must be square, got {f.shape}")
        object.__setattr__(self, "F", f)
        object.__setattr__(self, "Q", symmetrize(as_matrix(self.Q, (n, n))))
        if self.G is not None:
            g = as_matrix(self.G)
            if g.shape[0] != n:
                raise DimMismatch(f"G must have {n} rows, got {g.shape}")
            object.__setattr__(self, "G", g)
        sensors = tuple(s if isinstance(s, Sensor) else Sensor(*s) for s in self.sensors)
        for j, s in enumerate(sensors):
            if s.H.shape[1] != n:
                raise DimMismatch(f"sensor {j}: H has {s.H.shape[1]} columns, state has {n}")
        object.__setattr__(self, "sensors", sensors)

    @property
    def n_x(self) -> int:
        return self.F.shape[0]

    @property
    def n_u(self) -> int:
        return 0 if self.G is None else self.G.shape[1]


@dataclass(frozen=True)
class FilterState:
    k: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", as_vector(self.mean))
        object.__setattr__(self, "cov", symmetrize(as_matrix(self.cov)))

    @property
    def gaussian(self) -> Gaussian:
        return Gaussian(self.mean, self.cov)


@dataclass(frozen=True)
class Reading:
    H: np.ndarray
    R: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", as_matrix(self.H))
        object.__setattr__(self, "R", symmetrize(as_matrix(self.R)))
        object.__setattr__(self, "z", as_vector(self.z))


def predict(state: FilterState, model: SystemModel, u=None) -> Gaussian:
    """``N(F P F^T + Q, F x + G u)``; the old slice is discarded (roll-up)."""
    f = model.F
    mean = f @ state.mean
    if u is not None and model.G is not None:
        mean = mean + model.G @ as_vector(u)
    return Gaussian(mean, symmetrize(f @ state.cov @ f.T + model.Q))


def _readings(readings) -> list[Reading]:
    return [r if isinstance(r, Reading) else Reading(*r) for r in readings]


def update_decentralized(predicted: Gaussian, readings: Sequence, k: int = 0) -> FilterState:
    """Information-form update: each sensor adds ``H^T R^-1 H`` and ``H^T R^-1 z``."""
    readings = _readings(readings)
    if not readings:
        return FilterState(k, predicted.mean, predicted.cov)
    prior = pd_factor(predicted.cov, SingularPriorCovariance, "predicted covariance")
    prec = prior.inverse()
    info = prior.solve(predicted.mean)
    for r in readings:
        fac = pd_factor(r.R, what="sensor noise R")
        w = fac.solve(r.H)
        prec = prec + r.H.T @ w
        info = info + w.T @ r.z
    post = pd_factor(symmetrize(prec), SingularPriorCovariance, "posterior precision")
    return FilterState(k, post.solve(info), post.inverse())


def update_centralized(predicted: Gaussian, H, R, z, k: int = 0) -> FilterState:
    """Gain-form update with the Joseph covariance expression."""
    h = as_matrix(H)
    r = symmetrize(as_matrix(R))
    z = as_vector(z)
    p = predicted.cov
    s = symmetrize(h @ p @ h.T + r)
    fac = pd_factor(s, SingularInnovationCovariance, "innovation covariance")
    gain = fac.solve(h @ p).T
    a = np.eye(p.shape[0]) - gain @ h
    cov = symmetrize(a @ p @ a.T + gain @ r @ gain.T)
    return FilterState(k, predicted.mean + gain @ (z - h @ predicted.mean), cov)


def stack_readings(readings: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    readings = _readings(readings)
    return (
        np.vstack([r.H for r in readings]),
        block_diag(*[r.R for r in readings]),
        np.concatenate([r.z for r in readings]),
    )


def _model_at(model, k: int) -> SystemModel:
    return model if isinstance(model, SystemModel) else model[k]


def run_filter(
    model: SystemModel | Sequence[SystemModel],
    inputs: Sequence | None,
    measurements: Sequence[Sequence[tuple[int, np.ndarray]]],
    init: FilterState,
    mode: str = "decentralized",
) -> list[FilterState]:
    """Run predict/roll-up/update for ``len(measurements)`` steps.

    ``measurements[k]`` lists ``(sensor_index, z)`` pairs observed at time
    ``k + 1``; an empty list means pure prediction.  ``inputs[k]`` is the known
    input applied between ``k`` and ``k + 1``.  ``model`` is either one model
    or one per step.  The returned trajectory starts with ``init``.
    """
    if mode not in ("centralized", "decentralized"):
        raise ValueError(f"unknown mode {mode!r}")
    n = len(measurements)
    if inputs is not None and len(inputs) != n:
        raise SequenceMismatch(f"{len(inputs)} inputs for {n} measurement steps")
    if not isinstance(model, SystemModel) and len(model) != n:
        raise SequenceMismatch(f"{len(model)} models for {n} measurement steps")
    traj = [init]
    state = init
    for k in range(n):
        m = _model_at(model, k)
        pred = predict(state, m, None if inputs is None else inputs[k])
        readings = []
        for j, z in measurements[k]:
            if not 0 <= j < len(m.sensors):
                raise SequenceMismatch(f"step {k}: unknown sensor index {j}")
            readings.append(Reading(m.sensors[j].H, m.sensors[j].R, z))
        if not readings:
            state = FilterState(state.k + 1, pred.mean, pred.cov)
        elif mode == "decentralized":
            state = update_decentralized(pred, readings, k=state.k + 1)
        else:
            state = update_centralized(pred, *stack_readings(readings), k=state.k + 1)
        traj.append(state)
    return traj


@dataclass
class Simulation:
    truth: list[np.ndarray]
    inputs: list[np.ndarray] | None
    measurements: list[list[tuple[int, np.ndarray]]] = field(default_factory=list)


def simulate(
    model: SystemModel | Sequence[SystemModel],
    init: FilterState,
    steps: int,
    rng: np.random.Generator,
    inputs: Sequence | None = None,
) -> Simulation:
    """Draw a ground-truth trajectory and readings from every sensor each step.

    ``truth[k]`` is ``x(k)`` for ``k = 0..steps``.
    """
    x = rng.multivariate_normal(init.mean, init.cov)
    truth = [x]
    meas = []
    for k in range(steps):
        m = _model_at(model, k)
        x = m.F @ x + rng.multivariate_normal(np.zeros(m.n_x), m.Q)
        if inputs is not None and m.G is not None:
            x = x + m.G @ as_vector(inputs[k])
        truth.append(x)
        meas.append(
            [
                (j, s.H @ x + rng.multivariate_normal(np.zeros(s.H.shape[0]), s.R))
                for j, s in enumerate(m.sensors)
            ]
        )
    return Simulation(truth, None if inputs is None else list(inputs), meas)


def nees(state: FilterState, truth) -> float:
    """Normalized estimation error squared ``e^T P^-1 e``."""
    e = as_vector(truth) - state.mean
    return float(e @ pd_factor(state.cov).solve(e))
