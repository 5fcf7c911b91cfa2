"""Differential geometry on a single coordinate chart.

Geometric fields are plain callables mapping chart coordinates (a 1-D
float array of length ``n``) to numpy arrays: a metric field returns an
``(n, n)`` matrix, a one-form field a length-``n`` covector, a
connection field an ``(n, n, n)`` coefficient array.  Derivatives are
central finite differences by default; callers that know analytic
partials pass them in to bypass differencing.

Index conventions
-----------------
* Connection coefficients are stored as ``gamma[i, j, k]`` with ``j``
  the differentiation direction and ``k`` the argument slot.  The
  quadratic form ``gamma[i, j, k] v[j] v[k]`` entering the equations of
  motion is independent of the (j, k) ordering, which is why fixtures
  compare contracted forms rather than raw coefficient arrays.
* Curvature components ``r[l, i, j, k]`` satisfy
  ``R(e_i, e_j) e_k = r[l, i, j, k] e_l`` and are antisymmetric in
  ``(i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DifferentiationError, NonInvertibleMetricError

Array = np.ndarray
Field = Callable[[Array], Array]

#: Smallest admissible metric eigenvalue, checked lazily at evaluated points.
METRIC_EIGENVALUE_FLOOR = 1e-10


@dataclass(frozen=True)
class FdScheme:
    """Central-difference step and order used for numerical derivatives."""

    step: float = 1e-5
    order: int = 2

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError(f"finite-difference step must be positive, got {self.step}")
        if self.order not in (2, 4):
            raise ValueError(f"finite-difference order must be 2 or 4, got {self.order}")


DEFAULT_FD = FdScheme()


def central_difference(field: Field, q: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Differentiate an array-valued field at ``q`` along every coordinate.

    Returns an array with one extra leading axis ``j`` holding the
    partial derivative of ``field`` in the ``j``-th coordinate
    direction.  Raises :class:`DifferentiationError` if any stencil
    evaluation yields non-finite values.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    h = fd.step
    parts = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        if fd.order == 2:
            d = (np.asarray(field(q + e), dtype=float)
                 - np.asarray(field(q - e), dtype=float)) / (2.0 * h)
        else:
            d = (-np.asarray(field(q + 2 * e), dtype=float)
                 + 8.0 * np.asarray(field(q + e), dtype=float)
                 - 8.0 * np.asarray(field(q - e), dtype=float)
                 + np.asarray(field(q - 2 * e), dtype=float)) / (12.0 * h)
        parts.append(d)
    out = np.stack(parts, axis=0)
    if not np.all(np.isfinite(out)):
        raise DifferentiationError(f"non-finite finite-difference result at q={q}")
    return out


def scalar_derivative(f: Callable[[Array], float], q: Array, x: Array,
                      fd: FdScheme = DEFAULT_FD) -> float:
    """Directional derivative ``X(f)`` of a scalar field.

    This is the single code path for scalar derivatives: the constrained
    connection acts on functions exactly like the unconstrained one, so
    both are implemented by this routine.
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    grad = central_difference(lambda p: np.asarray(float(f(p))), q, fd)
    return float(grad.reshape(-1) @ x)


def metric_matrix(metric: Field, q: Array,
                  floor: float = METRIC_EIGENVALUE_FLOOR) -> Array:
    """Evaluate a metric field and validate symmetry and definiteness.

    Raises :class:`NonInvertibleMetricError` if the matrix is not
    symmetric or its smallest eigenvalue is below ``floor``.
    """
    g = np.asarray(metric(np.asarray(q, dtype=float)), dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise NonInvertibleMetricError(f"metric must be square, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise NonInvertibleMetricError(f"metric has non-finite entries at q={q}")
    if not np.allclose(g, g.T, rtol=0.0, atol=1e-10):
        raise NonInvertibleMetricError(f"metric is not symmetric at q={q}")
    if np.linalg.eigvalsh(g)[0] <= floor:
        raise NonInvertibleMetricError(
            f"metric eigenvalue below floor {floor:g} at q={q}")
    return g


def sharp(g: Array, cov: Array) -> Array:
    """Raise a covector's index: the vector ``v`` with ``g v = cov``."""
    try:
        return np.linalg.solve(np.asarray(g, dtype=float), np.asarray(cov, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NonInvertibleMetricError(f"singular metric matrix: {exc}") from exc


def flat(g: Array, vec: Array) -> Array:
    """Lower a vector's index: the covector ``g v``."""
    return np.asarray(g, dtype=float) @ np.asarray(vec, dtype=float)


def christoffel(metric: Field, q: Array, fd: FdScheme = DEFAULT_FD,
                partials: Callable[[Array], Array] | None = None) -> Array:
    """Coefficients of the torsion-free metric-compatible connection.

    ``partials``, when given, must return ``dg[j, a, b]`` = the
    ``j``-derivative of the metric component ``g[a, b]`` and bypasses
    finite differencing.  The result is symmetric in its last two
    indices.
    """
    g = metric_matrix(metric, q)
    if partials is not None:
        dg = np.asarray(partials(np.asarray(q, dtype=float)), dtype=float)
    else:
        dg = central_difference(metric, q, fd)
    # T[l, j, k] = d_j g_{lk} + d_k g_{lj} - d_l g_{jk}
    t = (np.einsum("jlk->ljk", dg) + np.einsum("klj->ljk", dg)
         - np.einsum("ljk->ljk", dg))
    try:
        gamma = 0.5 * np.einsum("il,ljk->ijk", np.linalg.inv(g), t)
    except np.linalg.LinAlgError as exc:
        raise NonInvertibleMetricError(f"singular metric at q={q}: {exc}") from exc
    if not np.all(np.isfinite(gamma)):
        raise DifferentiationError(f"non-finite connection coefficients at q={q}")
    return gamma


def covariant_acceleration(gamma: Array, v: Array, vdot: Array) -> Array:
    """Components ``vdot[i] + gamma[i, j, k] v[j] v[k]``."""
    gamma = np.asarray(gamma, dtype=float)
    v = np.asarray(v, dtype=float)
    vdot = np.asarray(vdot, dtype=float)
    n = v.size
    if gamma.shape != (n, n, n) or vdot.size != n:
        raise ValueError("dimension mismatch between coefficients and vectors")
    return vdot + np.einsum("ijk,j,k->i", gamma, v, v)


def quadratic_form(gamma: Array, v: Array) -> Array:
    """Contraction ``gamma[i, j, k] v[j] v[k]`` used by the motion equations."""
    return np.einsum("ijk,j,k->i", np.asarray(gamma, dtype=float),
                     np.asarray(v, dtype=float), np.asarray(v, dtype=float))


def curvature(gamma_field: Field, q: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Curvature tensor of a connection given by its coefficient field.

    Works for connections with torsion: the coordinate formula
    ``r[l, i, j, k] = d_i gamma[l, j, k] - d_j gamma[l, i, k]
    + gamma[l, i, m] gamma[m, j, k] - gamma[l, j, m] gamma[m, i, k]``
    is the curvature evaluated on coordinate fields, whose brackets
    vanish.
    """
    gamma = np.asarray(gamma_field(np.asarray(q, dtype=float)), dtype=float)
    dgamma = central_difference(gamma_field, q, fd)  # dgamma[a, l, j, k] = d_a gamma[l, j, k]
    r = (np.einsum("iljk->lijk", dgamma) - np.einsum("jlik->lijk", dgamma)
         + np.einsum("lim,mjk->lijk", gamma, gamma)
         - np.einsum("ljm,mik->lijk", gamma, gamma))
    if not np.all(np.isfinite(r)):
        raise DifferentiationError(f"non-finite curvature at q={q}")
    return r
