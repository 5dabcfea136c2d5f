"""Assignment maps: linear right-inverses of ``Tr_E`` built from initial joint states.

Given a family of system-environment states, a linearly independent subset of
their marginals ``rho_S^(i)`` is selected together with one joint state
``rho_SE^(i)`` per marginal. The assignment map sends each ``rho_S^(i)`` to its
``rho_SE^(i)`` and is extended linearly to their span ``V_S`` through a dual
frame; an extension policy decides what happens on the orthogonal complement
of ``V_S`` in ``L_S``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import SuperOp, matrix_unit, vec
from .errors import DimensionError, InvalidStateError, NormalizationError, NotInSpanError
from .linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    check_density,
    dagger,
    matrix_from_json,
    matrix_to_json,
    partial_trace_env,
    pseudoinverse,
    tensor,
)


@dataclass(frozen=True, eq=False)
class InitialSet:
    """Ordered family of joint states on ``C^d_S (x) C^d_E``."""

    d_S: int
    d_E: int
    states: tuple

    def __post_init__(self):
        if self.d_S < 1 or self.d_E < 1:
            raise DimensionError("d_S and d_E must be >= 1")
        if len(self.states) == 0:
            raise InvalidStateError("initial set must be nonempty")
        checked = tuple(check_density(s, dims=(self.d_S, self.d_E)) for s in self.states)
        object.__setattr__(self, "states", checked)

    def __len__(self):
        return len(self.states)

    def marginals(self) -> list:
        return [partial_trace_env(s, self.d_S, self.d_E) for s in self.states]

    def subset(self, indices) -> "InitialSet":
        return InitialSet(self.d_S, self.d_E, tuple(self.states[i] for i in indices))

    def to_json(self) -> dict:
        return {
            "d_S": self.d_S,
            "d_E": self.d_E,
            "states": [matrix_to_json(s) for s in self.states],
        }

    @classmethod
    def from_json(cls, obj) -> "InitialSet":
        return cls(obj["d_S"], obj["d_E"], tuple(matrix_from_json(s) for s in obj["states"]))


@dataclass(frozen=True, eq=False)
class IndependentBasis:
    d_S: int
    d_E: int
    indices: tuple
    reduced_basis: tuple
    joint_basis: tuple

    @property
    def m(self) -> int:
        return len(self.indices)

    def gram(self) -> np.ndarray:
        r = self.reduced_matrix()
        return dagger(r) @ r

    def reduced_matrix(self) -> np.ndarray:
        """Columns are ``vec(rho_S^(i))``."""
        return np.array([vec(x) for x in self.reduced_basis]).T


@dataclass(frozen=True)
class RestrictedToVS:
    """Complement of ``V_S`` is mapped to zero."""

    def to_json(self):
        return {"kind": "restricted"}


@dataclass(frozen=True, eq=False)
class ProductComplement:
    """Complement of ``V_S`` is mapped to ``x_perp (x) omega_E``."""

    omega_E: np.ndarray

    def to_json(self):
        return {"kind": "product_complement", "omega_E": matrix_to_json(self.omega_E)}


def default_policy(d_E: int) -> ProductComplement:
    return ProductComplement(np.eye(d_E, dtype=complex) / d_E)


def policy_from_json(obj, d_E: int):
    kind = obj.get("kind", "product_complement")
    if kind == "restricted":
        return RestrictedToVS()
    if kind == "product_complement":
        if "omega_E" not in obj:
            return default_policy(d_E)
        return ProductComplement(check_density(matrix_from_json(obj["omega_E"])))
    raise ValueError(f"unknown extension policy kind {kind!r}")


@dataclass(frozen=True)
class YDecomposition:
    coeffs: np.ndarray
    Y: np.ndarray


@dataclass(frozen=True, eq=False)
class AssignmentMap:
    """The linear map ``x -> sum_i d_i(x) rho_SE^(i)`` plus its extension.

    ``dual_frame[i]`` satisfies ``Tr(D_i^dag rho_S^(j)) = delta_ij``; the
    coefficient of ``x`` along ``rho_S^(i)`` is ``Tr(D_i^dag x)``.
    """

    basis: IndependentBasis
    dual_frame: tuple
    policy: object

    @property
    def d_S(self):
        return self.basis.d_S

    @property
    def d_E(self):
        return self.basis.d_E

    def coefficients(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        return np.array([np.vdot(D, x) for D in self.dual_frame])

    def project(self, x) -> np.ndarray:
        """Hilbert-Schmidt orthogonal projection of ``x`` onto ``V_S``."""
        d = self.coefficients(x)
        return sum(di * r for di, r in zip(d, self.basis.reduced_basis))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.d_S, self.d_S):
            raise DimensionError(f"input of shape {x.shape}, expected ({self.d_S}, {self.d_S})")
        d = self.coefficients(x)
        out = sum(di * r for di, r in zip(d, self.basis.joint_basis))
        if isinstance(self.policy, ProductComplement):
            perp = x - sum(di * r for di, r in zip(d, self.basis.reduced_basis))
            out = out + tensor(perp, self.policy.omega_E)
        return out

    def to_json(self) -> dict:
        return {
            "d_S": self.d_S,
            "d_E": self.d_E,
            "indices": list(self.basis.indices),
            "dual_frame": [matrix_to_json(D) for D in self.dual_frame],
            "policy": self.policy.to_json(),
        }


def select_independent(s: InitialSet, tol: TolerancePolicy = DEFAULT_TOL) -> IndependentBasis:
    """Greedy scan in input order keeping states whose marginal raises the Gram rank."""
    indices, reduced, joint = [], [], []
    for idx, (state, marg) in enumerate(zip(s.states, s.marginals())):
        if len(indices) == s.d_S**2:
            break
        cols = np.array([vec(x) for x in reduced + [marg]]).T
        w = np.linalg.eigvalsh(dagger(cols) @ cols)
        if w[0] > tol.rank * w[-1]:
            indices.append(idx)
            reduced.append(marg)
            joint.append(state)
    return IndependentBasis(s.d_S, s.d_E, tuple(indices), tuple(reduced), tuple(joint))


def dual_frame(basis: IndependentBasis, tol: TolerancePolicy = DEFAULT_TOL) -> tuple:
    r = basis.reduced_matrix()
    frame = r @ pseudoinverse(basis.gram(), tol.rank)
    return tuple(frame[:, i].reshape(basis.d_S, basis.d_S, order="F") for i in range(basis.m))


def build_assignment(
    basis: IndependentBasis, policy=None, tol: TolerancePolicy = DEFAULT_TOL
) -> AssignmentMap:
    """Assignment map on ``V_S`` extended to ``L_S`` by ``policy``.

    The default policy is :class:`ProductComplement` with the maximally mixed
    environment state.
    """
    policy = default_policy(basis.d_E) if policy is None else policy
    if isinstance(policy, ProductComplement) and policy.omega_E.shape != (basis.d_E, basis.d_E):
        raise DimensionError("omega_E dimension does not match d_E")
    return AssignmentMap(basis, dual_frame(basis, tol), policy)


def assignment_from_set(s: InitialSet, policy=None, tol: TolerancePolicy = DEFAULT_TOL):
    return build_assignment(select_independent(s, tol), policy, tol)


def decompose_Y(rho_SE, a: AssignmentMap, tol: TolerancePolicy = DEFAULT_TOL) -> YDecomposition:
    """Split ``rho_SE = sum_i a_i rho_SE^(i) + Y`` with ``Tr_E Y = 0``.

    Raises:
        NotInSpanError: if ``Tr_E rho_SE`` is not in the span of the reduced basis.
    """
    rho_SE = np.asarray(rho_SE, dtype=complex)
    rho_S = partial_trace_env(rho_SE, a.d_S, a.d_E)
    d = a.coefficients(rho_S)
    residual = np.linalg.norm(rho_S - a.project(rho_S))
    if residual > tol.tol_equality(rho_S) + tol.rank * np.linalg.norm(rho_S):
        raise NotInSpanError(residual)
    coeffs = d.real
    Y = rho_SE - sum(c * r for c, r in zip(coeffs, a.basis.joint_basis))
    return YDecomposition(coeffs, Y)


def assignment_as_superop(a: AssignmentMap) -> SuperOp:
    d = a.d_S
    cols = [vec(a(matrix_unit(d, i, j))) for j in range(d) for i in range(d)]
    return SuperOp(d, d * a.d_E, np.array(cols).T)


def spanning_states(d: int) -> list:
    """``d^2`` linearly independent density matrices on ``C^d``.

    Diagonal projectors plus, for each ``i < j``, the projectors onto
    ``(|i> + |j>)/sqrt2`` and ``(|i> + i|j>)/sqrt2``.
    """
    eye = np.eye(d, dtype=complex)
    states = [np.outer(eye[i], eye[i]) for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            for phase in (1, 1j):
                v = (eye[i] + phase * eye[j]) / np.sqrt(2)
                states.append(np.outer(v, v.conj()))
    return states


def product_set(reduced_states, omega_E) -> InitialSet:
    omega_E = np.asarray(omega_E, dtype=complex)
    d_S = np.asarray(reduced_states[0]).shape[0]
    return InitialSet(d_S, omega_E.shape[0], tuple(tensor(r, omega_E) for r in reduced_states))


def pechukas(d_S: int, omega_E, tol: TolerancePolicy = DEFAULT_TOL) -> AssignmentMap:
    """The product assignment ``x -> x (x) omega_E``."""
    omega_E = check_density(omega_E, tol)
    s = product_set(spanning_states(d_S), omega_E)
    return build_assignment(select_independent(s, tol), ProductComplement(omega_E), tol)


# -- convex splitting -----------------------------------------------------------


@dataclass(frozen=True)
class ConvexSplit:
    """Positive and negative parts of a unit-sum coefficient vector.

    ``plus`` and ``minus`` have the length of the input with zeros in the
    slots of the other sign; ``b = sum(plus) = 1 + sum|minus|``.
    """

    plus: np.ndarray
    minus: np.ndarray
    b: float

    @property
    def weights(self) -> np.ndarray:
        """Convex weights ``plus / b`` of the mixed state ``omega_S``."""
        return self.plus / self.b


def convex_split(a, tol: TolerancePolicy = DEFAULT_TOL) -> ConvexSplit:
    a = np.asarray(a, dtype=float)
    total = a.sum()
    if abs(total - 1) > tol.tol_equality(a):
        raise NormalizationError(f"coefficients sum to {total:.12g}, expected 1")
    plus = np.where(a > 0, a, 0.0)
    minus = np.where(a < 0, a, 0.0)
    return ConvexSplit(plus, minus, float(plus.sum()))


def mixed_state(split: ConvexSplit, basis_states) -> np.ndarray:
    """``omega_S = (1/b) sum_i a_i^+ rho^(i)``."""
    return sum(w * r for w, r in zip(split.weights, basis_states))


def convex_route_value(psi, rho, basis_states, split: ConvexSplit) -> np.ndarray:
    """Recover ``psi(rho)`` from convex-linearity alone.

    ``omega_S`` is both ``(rho + sum|a^-| rho^(i)) / b`` and
    ``sum a^+ rho^(i) / b``; a convex-linear ``psi`` then satisfies
    ``psi(rho) = b psi(omega_S) - sum|a^-| psi(rho^(i))``. Only ``psi``
    evaluated on density matrices is used.

    Raises:
        InvalidStateError: if the two expressions for ``omega_S`` disagree or
            ``omega_S`` is not a density matrix.
    """
    omega = mixed_state(split, basis_states)
    from_rho = (
        np.asarray(rho, dtype=complex)
        + sum(abs(m) * r for m, r in zip(split.minus, basis_states))
    ) / split.b
    gap = np.max(np.abs(omega - from_rho))
    if gap > DEFAULT_TOL.tol_equality(omega):
        raise InvalidStateError(f"rho is not sum_i a_i rho^(i) (omega mismatch {gap:.3e})")
    check_density(omega)
    return split.b * psi(omega) - sum(
        abs(m) * psi(r) for m, r in zip(split.minus, basis_states) if m != 0
    )
