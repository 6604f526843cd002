"""Open-loop mean and covariance propagation for discrete-time LTI vehicles.

The vehicle model is ``x[k+1] = A x[k] + B u[k] + w[k]`` with zero-mean
Gaussian ``w[k]``.  There is no feedback term, so the covariance sequence does
not depend on the controls and grows along the horizon.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .scenario import VehicleModel

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9
CONTROL_TOL = 1e-9


@dataclass(eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray
    time: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[:2, :2]


def clean_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize ``cov`` and clamp slightly negative eigenvalues to zero."""
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w.min() < 0.0:
        if w.min() < -PSD_TOL:
            raise ValueError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
        cov = (v * np.clip(w, 0.0, None)) @ v.T
        cov = 0.5 * (cov + cov.T)
    return cov


def propagate_mean(model: VehicleModel, mean, u) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = model.B.shape
    if mean.shape != (n,) or u.shape != (m,):
        raise ValueError(
            f"dimension mismatch: mean {mean.shape}, u {u.shape}, expected ({n},), ({m},)"
        )
    if np.any(u < model.u_min - CONTROL_TOL) or np.any(u > model.u_max + CONTROL_TOL):
        logger.warning("control %s outside bounds for vehicle %d", u, model.id)
    return model.A @ mean + model.B @ u


def propagate_covariance(model: VehicleModel, cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    n = model.A.shape[0]
    if cov.shape != (n, n):
        raise ValueError(f"dimension mismatch: cov {cov.shape}, expected ({n}, {n})")
    return clean_covariance(model.A @ cov @ model.A.T + model.w_cov)


def covariance_sequence(model: VehicleModel, cov0, steps: int) -> list[np.ndarray]:
    """Covariances for ``steps`` steps after ``cov0`` (``steps + 1`` matrices)."""
    covs = [np.asarray(cov0, dtype=float)]
    for _ in range(steps):
        covs.append(propagate_covariance(model, covs[-1]))
    return covs


def rollout(
    model: VehicleModel,
    controls: Sequence,
    mean0=None,
    cov0=None,
    time0: int = 0,
) -> list[GaussianState]:
    """Propagate ``(x0_mean, x0_cov)`` through ``controls``.

    Returns ``len(controls) + 1`` states; the start defaults to the model's
    initial distribution.
    """
    mean = np.asarray(model.x0_mean if mean0 is None else mean0, dtype=float)
    cov = np.asarray(model.x0_cov if cov0 is None else cov0, dtype=float)
    states = [GaussianState(mean, cov, time0)]
    for k, u in enumerate(controls):
        mean = propagate_mean(model, mean, u)
        cov = propagate_covariance(model, cov)
        states.append(GaussianState(mean, cov, time0 + k + 1))
    return states


def in_goal(state: GaussianState, model: VehicleModel, tol: float = 1e-7) -> bool:
    """Nominal position inside the (closed) goal box, up to ``tol``."""
    return model.goal.contains(state.position, tol=tol)
