"""Control-affine system descriptions, ``xdot = f(x) + g(x) u``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, ContractError, NumericalError

VectorFn = Callable[[np.ndarray], np.ndarray]

_INVERSE_TOL = 1e-10
_FD_STEP = 1e-6


@dataclass(frozen=True)
class SystemDynamics:
    """A control-affine system with ``state_dim`` states and ``input_dim`` inputs.

    ``drift`` maps a state to an n-vector, ``actuation`` to an (n, m) matrix.
    ``actuation_inverse`` is needed wherever inputs are recovered from states.
    The optional Jacobians speed up and sharpen the transcription gradients;
    without them central differences are used. ``actuation_jacobian(x)`` has
    shape (n, m, n) with entry ``[i, j, k] = d g_ij / d x_k``.
    """

    state_dim: int
    input_dim: int
    drift: VectorFn
    actuation: VectorFn
    actuation_inverse: Optional[VectorFn] = None
    drift_jacobian: Optional[VectorFn] = None
    actuation_jacobian: Optional[VectorFn] = None
    name: str = "custom"
    vectorized: bool = False

    def __post_init__(self):
        if self.state_dim < 1 or self.input_dim < 1:
            raise ContractError("state_dim and input_dim must be positive")

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.state_dim,):
            raise ContractError(
                f"expected state of shape ({self.state_dim},), got {x.shape}"
            )
        return x

    def f(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.asarray(self.drift(x), dtype=float).reshape(self.state_dim)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"non-finite drift at x={x}")
        return out

    def g(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.asarray(self.actuation(x), dtype=float)
        return out.reshape(self.state_dim, self.input_dim)

    def g_inv(self, x) -> np.ndarray:
        if self.actuation_inverse is None:
            raise CapabilityError(f"system {self.name!r} has no actuation inverse")
        x = self._check(x)
        ginv = np.asarray(self.actuation_inverse(x), dtype=float)
        ginv = ginv.reshape(self.input_dim, self.state_dim)
        resid = self.g(x) @ ginv - np.eye(self.state_dim)
        if not np.all(np.abs(resid) < _INVERSE_TOL):
            raise NumericalError(
                f"g(x) g^-1(x) deviates from identity by {np.abs(resid).max():.3e}"
            )
        return ginv

    def vector_field(self, x, u) -> np.ndarray:
        return self.f(x) + self.g(x) @ np.asarray(u, dtype=float)

    def df(self, x) -> np.ndarray:
        """Jacobian of the drift, shape (n, n)."""
        x = self._check(x)
        if self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(x), dtype=float)
        n = self.state_dim
        jac = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = _FD_STEP
            jac[:, k] = (self.f(x + e) - self.f(x - e)) / (2 * _FD_STEP)
        return jac

    def dg(self, x) -> np.ndarray:
        """Derivative of the actuation matrix, shape (n, m, n)."""
        x = self._check(x)
        if self.actuation_jacobian is not None:
            return np.asarray(self.actuation_jacobian(x), dtype=float)
        n = self.state_dim
        jac = np.empty((n, self.input_dim, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = _FD_STEP
            jac[:, :, k] = (self.g(x + e) - self.g(x - e)) / (2 * _FD_STEP)
        return jac

    def batch_f(self, X) -> np.ndarray:
        """Drift at every row of ``X``, shape (K, n)."""
        X = np.asarray(X, dtype=float)
        if self.vectorized:
            out = np.asarray(self.drift(X), dtype=float)
            if not np.all(np.isfinite(out)):
                raise NumericalError("non-finite drift")
            return out
        return np.array([self.f(x) for x in X])

    def batch_g(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.vectorized:
            return np.asarray(self.actuation(X), dtype=float)
        return np.array([self.g(x) for x in X])

    def batch_df(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.vectorized and self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(X), dtype=float)
        return np.array([self.df(x) for x in X])

    def batch_dg(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.vectorized and self.actuation_jacobian is not None:
            return np.asarray(self.actuation_jacobian(X), dtype=float)
        return np.array([self.dg(x) for x in X])

    def reversed(self) -> "SystemDynamics":
        """The time-reversed system ``zdot = -f(z) - g(z) v``.

        The inverse of ``-g`` is ``-g^-1``; callers that want ``g^-1`` of the
        forward system should keep a handle on the original.
        """
        fwd = self

        def _neg(fn):
            return None if fn is None else (lambda x: -np.asarray(fn(x), dtype=float))

        return SystemDynamics(
            state_dim=fwd.state_dim,
            input_dim=fwd.input_dim,
            drift=_neg(fwd.drift),
            actuation=_neg(fwd.actuation),
            actuation_inverse=_neg(fwd.actuation_inverse),
            drift_jacobian=_neg(fwd.drift_jacobian),
            actuation_jacobian=_neg(fwd.actuation_jacobian),
            name=f"{fwd.name}:reversed",
            vectorized=fwd.vectorized,
        )


def eval_drift(dyn: SystemDynamics, x) -> np.ndarray:
    return dyn.f(x)


def eval_actuation_inverse(dyn: SystemDynamics, x) -> np.ndarray:
    return dyn.g_inv(x)


def example_system() -> SystemDynamics:
    """Two-state nonlinear benchmark with ``f = (-x1^2, -2 x2)``, ``g = [[1, x1], [0, 1]]``."""

    # every function accepts a single state or a (K, 2) stack of states
    def drift(x):
        x = np.asarray(x, dtype=float)
        return np.stack([-x[..., 0] ** 2, -2.0 * x[..., 1]], axis=-1)

    def actuation(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 0, 1] = x[..., 0]
        out[..., 1, 1] = 1.0
        return out

    def actuation_inverse(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 0, 1] = -x[..., 0]
        out[..., 1, 1] = 1.0
        return out

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = -2.0 * x[..., 0]
        out[..., 1, 1] = -2.0
        return out

    def actuation_jacobian(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 0] = 1.0
        return out

    return SystemDynamics(
        state_dim=2,
        input_dim=2,
        drift=drift,
        actuation=actuation,
        actuation_inverse=actuation_inverse,
        drift_jacobian=drift_jacobian,
        actuation_jacobian=actuation_jacobian,
        name="example_sys1",
        vectorized=True,
    )


def single_integrator(dim: int = 1) -> SystemDynamics:
    """``xdot = u``; the linear-quadratic toy with a closed-form optimum."""
    eye = np.eye(dim)
    return SystemDynamics(
        state_dim=dim,
        input_dim=dim,
        drift=lambda x: np.zeros(dim),
        actuation=lambda x: eye,
        actuation_inverse=lambda x: eye,
        drift_jacobian=lambda x: np.zeros((dim, dim)),
        actuation_jacobian=lambda x: np.zeros((dim, dim, dim)),
        name="single_integrator",
    )


REGISTRY: dict[str, Callable[[], SystemDynamics]] = {
    "example_sys1": example_system,
    "single_integrator": single_integrator,
}


def get_system(name: str) -> SystemDynamics:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise ContractError(
            f"unknown system {name!r}; known: {', '.join(sorted(REGISTRY))}"
        ) from None
