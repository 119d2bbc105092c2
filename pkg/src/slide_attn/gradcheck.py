"""Central-difference gradient oracle and an analytic-vs-numeric comparison harness."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import NumericError

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-4
ABS_FLOOR = 1e-8


@dataclass(frozen=True)
class GradReport:
    parameter_name: str
    max_rel_error: float
    max_abs_error: float
    num_elements_checked: int
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def numeric_gradient(f: Callable[[np.ndarray], float], at: np.ndarray, eps: float = DEFAULT_EPS, indices=None):
    """Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).

    ``indices`` restricts the probe to some flat positions; the rest of the
    returned gradient is NaN.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.array(at, dtype=np.float64 if at.dtype != np.float32 else at.dtype, copy=True)
    flat = x.reshape(-1)
    grad = np.full(flat.shape, np.nan if indices is not None else 0.0)
    for idx in range(flat.size) if indices is None else indices:
        orig = flat[idx]
        flat[idx] = orig + eps
        f_plus = float(f(x))
        flat[idx] = orig - eps
        f_minus = float(f(x))
        flat[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value while probing element {idx}")
        grad[idx] = (f_plus - f_minus) / (2 * eps)
    return grad.reshape(x.shape)


def compare_gradients(name: str, analytic, numeric, tol: float = DEFAULT_TOL, indices=None) -> GradReport:
    """Per-element relative error; elements where both sides are below 1e-8 pass outright."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if indices is not None:
        a, n = a[indices], n[indices]
    abs_err = np.abs(a - n)
    tiny = (np.abs(a) < ABS_FLOOR) & (np.abs(n) < ABS_FLOOR)
    denom = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(tiny, 0.0, abs_err / np.where(denom > 0, denom, 1.0))
    max_rel = float(rel.max()) if rel.size else 0.0
    max_abs = float(abs_err.max()) if abs_err.size else 0.0
    return GradReport(name, max_rel, max_abs, int(a.size), tol, bool(max_rel <= tol))


def check_gradients(
    forward: Callable[[Mapping[str, np.ndarray]], float],
    backward: Callable[[Mapping[str, np.ndarray]], Mapping[str, np.ndarray | None]],
    params: Mapping[str, np.ndarray],
    eps: float = DEFAULT_EPS,
    tol: float = DEFAULT_TOL,
    max_elements: int | None = None,
    seed: int = 0,
) -> list[GradReport]:
    """Compare ``backward(params)`` against central differences of ``forward``.

    ``forward`` maps a dict of named tensors to a scalar; ``backward`` maps
    the same dict to gradients keyed by name. One report per entry of
    ``params``. A name the backward leaves out (or maps to None) is treated
    as a zero gradient, which is what a constant should get. With
    ``max_elements`` set, larger tensors are checked on a seeded random
    subset of positions.
    """
    rng = np.random.default_rng(seed)
    analytic = backward(params)
    reports = []
    for name, value in params.items():
        value = np.asarray(value)
        indices = None
        if max_elements is not None and value.size > max_elements:
            indices = np.sort(rng.choice(value.size, size=max_elements, replace=False))

        def f(arr, name=name):
            return forward({**params, name: arr})

        num = numeric_gradient(f, value, eps, indices)
        ana = analytic.get(name)
        if ana is None:
            ana = np.zeros_like(value)
        reports.append(compare_gradients(name, ana, num, tol, indices))
    return reports
