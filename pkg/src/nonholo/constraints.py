"""Constraint distributions, orthogonal projectors and the constrained connection.

A velocity constraint is a set of one-form fields whose kernel is the
admissible distribution ``D``.  This module builds, at a point:

* a basis of ``D`` together with a dual co-vector basis used to
  coordinatize Lagrange multipliers,
* the complementary metric-orthogonal projectors ``P`` (onto ``D``) and
  ``Q`` (onto the orthogonal complement) with their covariant
  derivatives,
* the constrained connection ``gamma_bar = gamma + (grad Q)`` whose
  geodesic-with-forcing equation keeps velocities inside ``D``, its
  action on one-forms, and its curvature.

Functions taking a ``system`` argument accept any object with the
evaluator attributes of :class:`nonholo.dynamics.MechanicalSystem`;
analytic overrides registered on the system bypass finite differencing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import geometry as geo
from .errors import (DegenerateConstraintError, DegenerateDistributionError)
from .geometry import DEFAULT_FD, Array, FdScheme

#: The constrained connection acts on scalars exactly like the
#: unconstrained one; both share this code path.
nonholonomic_scalar_derivative = geo.scalar_derivative


@dataclass(frozen=True)
class ConstraintSet:
    """A list of one-form fields whose common kernel is the distribution."""

    omegas: tuple[Callable[[Array], Array], ...] = ()

    @property
    def m(self) -> int:
        return len(self.omegas)

    def matrix(self, q: Array) -> Array:
        """Stack the constraint covectors at ``q`` into an (m, n) matrix."""
        q = np.asarray(q, dtype=float)
        if not self.omegas:
            return np.zeros((0, q.size))
        return np.stack([np.asarray(w(q), dtype=float) for w in self.omegas])


@dataclass
class DistributionBasis:
    """Pointwise basis data for the distribution and its dual.

    ``x`` holds the basis vectors of ``D`` as rows, ``dual`` the
    co-vector basis used for multiplier coefficients (``dual[a]``
    pairs to 1 with ``x[a]``), and ``complement`` co-vectors spanning
    the rest of the cotangent space.  ``dual_partials[j, a, k]`` is the
    ``j``-th coordinate derivative of ``dual[a, k]`` when known.
    """

    x: Array
    dual: Array
    complement: Array
    dual_partials: Array | None = None


@dataclass
class ProjectorPair:
    """Component matrices of the complementary projectors at a point.

    ``p[i, k]`` and ``q[i, k]`` act on vector components as ``p @ v``;
    ``nabla_p[j, i, k]`` is the covariant derivative of ``p`` in the
    ``j``-th coordinate direction (and ``nabla_q = -nabla_p``).
    """

    p: Array
    q: Array
    nabla_p: Array | None = None
    nabla_q: Array | None = None


def _null_space(a: Array, rtol: float = 1e-12) -> tuple[Array, int]:
    """Orthonormal basis (rows) of the null space of ``a`` plus its rank."""
    u, s, vh = np.linalg.svd(a)
    tol = max(a.shape) * (s[0] if s.size else 0.0) * np.finfo(float).eps
    rank = int(np.sum(s > max(tol, rtol * (s[0] if s.size else 1.0))))
    return vh[rank:], rank


def _procrustes_align(rows: Array, ref: Array) -> Array:
    """Mix ``rows`` by an orthogonal matrix to best match ``ref`` row-wise.

    Both arguments span the same subspace up to O(step) perturbations;
    the aligned representative varies smoothly with the subspace, which
    makes finite differences of basis-dependent quantities well defined.
    """
    if rows.shape[0] == 0:
        return rows
    a = ref @ rows.T
    u, _, vh = np.linalg.svd(a)
    return (u @ vh) @ rows


def distribution_basis(constraints: ConstraintSet, metric: Callable[[Array], Array],
                       q: Array, ref: DistributionBasis | None = None) -> DistributionBasis:
    """Construct a basis of the constraint distribution at ``q``.

    The dual co-vectors are the metric-lowered basis vectors rescaled to
    pair to one, so they annihilate the orthogonal complement of the
    distribution.  ``ref`` aligns the (otherwise arbitrary) null-space
    orientation with a previously computed basis for continuity along
    trajectories and difference stencils.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    omega = constraints.matrix(q)
    m = omega.shape[0]
    if m == 0:
        eye = np.eye(n)
        return DistributionBasis(x=eye, dual=eye.copy(), complement=np.zeros((0, n)),
                                 dual_partials=np.zeros((n, n, n)))
    x, rank = _null_space(omega)
    if rank < m:
        raise DegenerateConstraintError(
            f"constraint covectors have rank {rank} < {m} at q={q}")
    if ref is not None:
        x = _procrustes_align(x, ref.x)
    g = geo.metric_matrix(metric, q)
    dual = np.empty_like(x)
    for a in range(n - m):
        lowered = g @ x[a]
        dual[a] = lowered / float(lowered @ x[a])
    comp, _ = _null_space(dual)
    if ref is not None and ref.complement.shape[0] == comp.shape[0]:
        comp = _procrustes_align(comp, ref.complement)
    return DistributionBasis(x=x, dual=dual, complement=comp)


def basis_at(system, q: Array, ref: DistributionBasis | None = None) -> DistributionBasis:
    """Distribution basis at ``q``, honoring a model-supplied override."""
    if system.basis_override is not None:
        return system.basis_override(np.asarray(q, dtype=float))
    return distribution_basis(system.constraints, system.metric, q, ref=ref)


def basis_with_partials(system, q: Array, fd: FdScheme = DEFAULT_FD,
                        ref: DistributionBasis | None = None) -> DistributionBasis:
    """Basis at ``q`` with coordinate derivatives of the dual co-vectors.

    Model-supplied bases are expected to carry analytic partials; for
    generic models the dual field is differenced with every stencil
    basis aligned to the center one.
    """
    basis = basis_at(system, q, ref=ref)
    if basis.dual_partials is not None:
        return basis

    def dual_field(p: Array) -> Array:
        return basis_at(system, p, ref=basis).dual

    return replace(basis, dual_partials=geo.central_difference(dual_field, q, fd))


def projectors(basis: DistributionBasis, g: Array) -> ProjectorPair:
    """Complementary metric-orthogonal projectors from a distribution basis.

    ``P(Z) = sum_ij C^{ij} g(Z, X_i) X_j`` with ``C`` the Gram matrix of
    the basis; the result is basis independent.
    """
    x = np.asarray(basis.x, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    if x.shape[0] == 0:
        return ProjectorPair(p=np.zeros((n, n)), q=np.eye(n))
    gram = x @ g @ x.T
    try:
        coeff = np.linalg.solve(gram, x @ g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDistributionError(f"singular Gram matrix: {exc}") from exc
    p = x.T @ coeff
    return ProjectorPair(p=p, q=np.eye(n) - p)


def metric_at(system, q: Array) -> Array:
    """Validated metric matrix of a system at ``q``."""
    return geo.metric_matrix(system.metric, q)


def christoffel_at(system, q: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Unconstrained connection coefficients, honoring overrides."""
    if system.christoffel_override is not None:
        return np.asarray(system.christoffel_override(np.asarray(q, dtype=float)),
                          dtype=float)
    return geo.christoffel(system.metric, q, fd, partials=system.metric_partials)


def curvature_at(system, q: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Unconstrained curvature tensor, honoring overrides."""
    if system.curvature_override is not None:
        return np.asarray(system.curvature_override(np.asarray(q, dtype=float)),
                          dtype=float)
    return geo.curvature(lambda p: christoffel_at(system, p, fd), q, fd)


def projector_field(system, q: Array) -> Array:
    """Projector matrix ``P`` at ``q`` (override-aware, derivative-free)."""
    if system.projector_override is not None:
        return np.asarray(system.projector_override(np.asarray(q, dtype=float))[0],
                          dtype=float)
    return projectors(basis_at(system, q), metric_at(system, q)).p


def projector_derivatives(system, q: Array, fd: FdScheme = DEFAULT_FD) -> ProjectorPair:
    """Projectors at ``q`` together with their covariant derivatives.

    The covariant derivative of the (1,1) projector in direction ``j``
    is ``dP[j] + gamma[:, j, :] P - P gamma[:, j, :]`` contracted
    appropriately; since ``P + Q`` is the identity, ``nabla_q`` is the
    negative of ``nabla_p``.
    """
    q = np.asarray(q, dtype=float)
    gamma = christoffel_at(system, q, fd)
    if system.projector_override is not None:
        p, dp = system.projector_override(q)
        p = np.asarray(p, dtype=float)
        dp = np.asarray(dp, dtype=float)
    else:
        p = projector_field(system, q)
        dp = geo.central_difference(lambda s: projector_field(system, s), q, fd)
    nabla_p = (dp + np.einsum("ijm,mk->jik", gamma, p)
               - np.einsum("mjk,im->jik", gamma, p))
    n = p.shape[0]
    return ProjectorPair(p=p, q=np.eye(n) - p, nabla_p=nabla_p, nabla_q=-nabla_p)


def nonholonomic_christoffel(system, q: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Coefficients of the constrained connection.

    ``gamma_bar[i, j, k] = gamma[i, j, k] + (nabla_j Q)[i, k]``; the
    result has torsion, so only the contracted quadratic form is
    convention independent.
    """
    gamma = christoffel_at(system, q, fd)
    pair = projector_derivatives(system, q, fd)
    return gamma + pair.nabla_q.transpose(1, 0, 2)


def nonholonomic_oneform_derivative(system, q: Array, x: Array, lam: Array,
                                    dlam: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Constrained covariant derivative of a one-form along ``x``.

    ``dlam`` must hold the directional derivative of the covector
    components along ``x`` (``dlam[k] = x[j] d_j lam[k]``).  The result
    subtracts both the unconstrained transport term and the adjoint of
    the projector derivative:
    ``dlam[k] - x[j] gamma[m, j, k] lam[m] - x[j] (nabla_j Q)[m, k] lam[m]``.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    dlam = np.asarray(dlam, dtype=float)
    gamma = christoffel_at(system, q, fd)
    pair = projector_derivatives(system, q, fd)
    transport = np.einsum("mjk,j,m->k", gamma, x, lam)
    adjoint_term = np.einsum("jmk,j,m->k", pair.nabla_q, x, lam)
    return dlam - transport - adjoint_term


def nonholonomic_curvature(system, q: Array, fd: FdScheme = DEFAULT_FD) -> Array:
    """Curvature of the constrained connection, straight from its coefficients."""
    return geo.curvature(lambda p: nonholonomic_christoffel(system, p, fd), q, fd)


def nonholonomic_curvature_correction(system, q: Array,
                                      fd: FdScheme = DEFAULT_FD) -> Array:
    """Constrained curvature via the unconstrained one plus projector terms.

    Independent cross-check for :func:`nonholonomic_curvature`: the
    correction consists of the antisymmetrized second covariant
    derivative of ``Q`` and the commutator of first derivatives,
    ``R_bar = R + (nabla^2 Q)_[ij] + (nabla_i Q)(nabla_j Q) - (i <-> j)``.
    """
    q = np.asarray(q, dtype=float)
    r = curvature_at(system, q, fd)
    gamma = christoffel_at(system, q, fd)
    nabla_q_field = lambda p: projector_derivatives(system, p, fd).nabla_q
    nq = nabla_q_field(q)
    dnq = geo.central_difference(nabla_q_field, q, fd)  # dnq[i, j, l, k] = d_i (nabla_j Q)[l, k]
    # Second covariant derivative of the (1,2) tensor nabla Q.
    nq2 = (np.einsum("ijlk->lijk", dnq)
           + np.einsum("lim,jmk->lijk", gamma, nq)
           - np.einsum("mij,mlk->lijk", gamma, nq)
           - np.einsum("mik,jlm->lijk", gamma, nq))
    bracket = nq2 - nq2.transpose(0, 2, 1, 3)
    prod = np.einsum("ilm,jmk->lijk", nq, nq)
    return r + bracket + prod - prod.transpose(0, 2, 1, 3)
