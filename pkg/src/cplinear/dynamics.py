"""Joint unitary evolution, reduced dynamics and the maps they induce on ``S``.

The induced map of an assignment ``Lambda`` and a joint unitary ``U`` is
``Phi = Tr_E o Ad_U o Lambda``. It reproduces the exact reduced dynamics of
every state in the span of the initial family exactly when that span is
``U``-consistent, i.e. ``Tr_E(U Y U^dag) = 0`` for every residual ``Y`` with
``Tr_E Y = 0``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assignment import (
    AssignmentMap,
    InitialSet,
    ProductComplement,
    RestrictedToVS,
    assignment_from_set,
    product_set,
)
from .channels import SuperOp, conjugation, matrix_unit, min_choi_eigenvalue, partial_trace_map, vec
from .errors import DimensionError, NotInSpanError
from .linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    as_matrix,
    check_density,
    check_unitary,
    dagger,
    matrix_from_json,
    matrix_to_json,
    partial_trace_env,
    random_density,
    random_pure_state,
    random_unitary,
    swap_unitary,
    tensor,
)

log = logging.getLogger(__name__)


def _check_dims(u, rho):
    if u.shape != rho.shape:
        raise DimensionError(f"unitary of shape {u.shape} cannot act on state of shape {rho.shape}")


def evolve_joint(u, rho_SE) -> np.ndarray:
    u = as_matrix(u)
    rho_SE = as_matrix(rho_SE)
    _check_dims(u, rho_SE)
    return u @ rho_SE @ dagger(u)


def reduced_dynamics(u, rho_SE, d_S: int, d_E: int) -> np.ndarray:
    """``Tr_E(U rho_SE U^dag)``."""
    return partial_trace_env(evolve_joint(u, rho_SE), d_S, d_E)


def induced_map(u, a: AssignmentMap) -> SuperOp:
    """``Tr_E o Ad_U o Lambda`` as a superoperator on ``S``."""
    u = as_matrix(u)
    d_S, d_E = a.d_S, a.d_E
    if u.shape[0] != d_S * d_E:
        raise DimensionError(f"unitary dim {u.shape[0]} != d_S*d_E = {d_S * d_E}")
    cols = [
        vec(reduced_dynamics(u, a(matrix_unit(d_S, i, j)), d_S, d_E))
        for j in range(d_S)
        for i in range(d_S)
    ]
    return SuperOp(d_S, d_S, np.array(cols).T)


def product_channel(u, omega_E, d_S: int) -> SuperOp:
    """``x -> Tr_E(U (x (x) omega_E) U^dag)``, always CP."""
    omega_E = as_matrix(omega_E)
    d_E = omega_E.shape[0]
    cols = [
        vec(reduced_dynamics(u, tensor(matrix_unit(d_S, i, j), omega_E), d_S, d_E))
        for j in range(d_S)
        for i in range(d_S)
    ]
    return SuperOp(d_S, d_S, np.array(cols).T)


# -- U-consistency ----------------------------------------------------------------


@dataclass(frozen=True)
class UConsistencyReport:
    max_violation: float
    consistent: bool
    witness_Y: np.ndarray | None = field(default=None, compare=False)
    residual_dim: int = 0

    def to_json(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "consistent": self.consistent,
            "residual_dim": self.residual_dim,
            "witness_Y": None if self.witness_Y is None else matrix_to_json(self.witness_Y),
        }


def residual_space(s: InitialSet, tol: TolerancePolicy = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (as columns of vec'd operators) of ``{X in span S : Tr_E X = 0}``."""
    a = np.array([vec(x) for x in s.states]).T
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    q = u[:, sv > tol.rank * sv[0]]
    m = partial_trace_map(s.d_S, s.d_E).transfer @ q
    _, sm, vh = np.linalg.svd(m)
    rank = int(np.sum(sm > tol.rank * max(sm[0], 1.0))) if sm.size else 0
    kernel = dagger(vh[rank:])
    return q @ kernel


def u_consistency(u, s: InitialSet, tol: TolerancePolicy = DEFAULT_TOL) -> UConsistencyReport:
    """Largest ``||Tr_E(U Y U^dag)||_F`` over unit-norm residuals ``Y`` of ``span(s)``.

    The maximum is the top singular value of ``Tr_E o Ad_U`` restricted to the
    residual space, so it does not depend on the basis chosen for that space;
    ``witness_Y`` is the maximizing residual.
    """
    u = check_unitary(u, tol, s.d_S * s.d_E)
    yb = residual_space(s, tol)
    if yb.shape[1] == 0:
        return UConsistencyReport(0.0, True, None, 0)
    pushed = partial_trace_map(s.d_S, s.d_E).transfer @ conjugation(u).transfer @ yb
    _, sv, vh = np.linalg.svd(pushed, full_matrices=False)
    d = s.d_S * s.d_E
    witness = (yb @ vh[0].conj()).reshape(d, d, order="F")
    violation = float(sv[0])
    return UConsistencyReport(violation, violation <= tol.tol_equality(), witness, yb.shape[1])


@dataclass(frozen=True)
class LinearityWitnessReport:
    max_deviation: float
    worst_state_index: int
    deviations: tuple = ()

    def to_json(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "worst_state_index": self.worst_state_index,
            "deviations": list(self.deviations),
        }


def linearity_witness(
    u, a: AssignmentMap, probes, tol: TolerancePolicy = DEFAULT_TOL
) -> LinearityWitnessReport:
    """Frobenius distance between exact reduced dynamics and ``Phi`` on each probe.

    Raises:
        NotInSpanError: for a probe whose marginal is outside ``V_S`` when the
            assignment uses :class:`RestrictedToVS` (elsewhere it is undefined).
    """
    phi = induced_map(u, a)
    devs = []
    for probe in probes:
        probe = as_matrix(probe)
        rho_S = partial_trace_env(probe, a.d_S, a.d_E)
        if isinstance(a.policy, RestrictedToVS):
            residual = np.linalg.norm(rho_S - a.project(rho_S))
            if residual > tol.tol_equality(rho_S):
                raise NotInSpanError(residual)
        exact = reduced_dynamics(u, probe, a.d_S, a.d_E)
        devs.append(float(np.linalg.norm(exact - phi(rho_S))))
    worst = int(np.argmax(devs)) if devs else -1
    return LinearityWitnessReport(max(devs, default=0.0), worst, tuple(devs))


# -- quasi-product families ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CPFamily:
    weights: np.ndarray
    maps: tuple
    fixed_env_states: tuple

    def min_choi_eigenvalues(self) -> list:
        return [min_choi_eigenvalue(m) for m in self.maps]

    def apply(self, q_list) -> np.ndarray:
        return sum(w * m(q) for w, m, q in zip(self.weights, self.maps, q_list))


def cp_family(u, sigma_list, w, q_list, tol: TolerancePolicy = DEFAULT_TOL):
    """Reduced dynamics of ``sum_a w_a Q_a (x) sigma_a`` as a weighted family of CP maps.

    Returns ``(family, rho_S_out)`` where ``family.maps[a]`` is
    ``x -> Tr_E(U (x (x) sigma_a) U^dag)`` and
    ``rho_S_out = sum_a w_a family.maps[a](Q_a)``.

    Raises:
        InvalidStateError: if the assembled joint operator is not a state.
    """
    sigma_list = [check_density(s, tol) for s in sigma_list]
    q_list = [as_matrix(q) for q in q_list]
    w = np.asarray(w, dtype=float)
    if not (len(sigma_list) == len(q_list) == len(w)):
        raise DimensionError("sigma_list, w and q_list must have equal length")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    d_S = q_list[0].shape[0]
    joint = sum(wa * tensor(q, s) for wa, q, s in zip(w, q_list, sigma_list))
    check_density(joint, tol)
    u = check_unitary(u, tol, joint.shape[0])
    maps = tuple(product_channel(u, s, d_S) for s in sigma_list)
    family = CPFamily(w, maps, tuple(sigma_list))
    return family, family.apply(q_list)


# -- unitaries -----------------------------------------------------------------


def controlled_shift(d_S: int, d_E: int) -> np.ndarray:
    """``|i, j> -> |i, (j + i) mod d_E>``; a CNOT for two qubits."""
    d = d_S * d_E
    u = np.zeros((d, d), dtype=complex)
    for i in range(d_S):
        for j in range(d_E):
            u[i * d_E + (j + i) % d_E, i * d_E + j] = 1
    return u


def partial_swap(d: int, theta: float) -> np.ndarray:
    """``exp(-i theta SWAP) = cos(theta) I - i sin(theta) SWAP``."""
    return np.cos(theta) * np.eye(d * d) - 1j * np.sin(theta) * swap_unitary(d)


def adversarial_unitaries(d_S: int, d_E: int) -> list:
    """Structured unitaries that Haar sampling hits with probability zero."""
    out = [("identity", np.eye(d_S * d_E, dtype=complex)), ("controlled_shift", controlled_shift(d_S, d_E))]
    if d_S == d_E:
        out.append(("swap", swap_unitary(d_S)))
        for k in (1, 2, 3):
            out.append((f"partial_swap:{k}/8", partial_swap(d_S, k * np.pi / 8)))
    return out


def unitaries_from_spec(specs, d_S: int, d_E: int) -> list:
    """Resolve ``"haar:<n>:<seed>"``, ``"swap"``, ``"identity"``, ``"controlled_shift"``
    or inline matrices into ``(label, U)`` pairs."""
    d = d_S * d_E
    out = []
    for spec in specs:
        if isinstance(spec, dict):
            out.append(("inline", check_unitary(matrix_from_json(spec), dim=d)))
        elif spec == "identity":
            out.append(("identity", np.eye(d, dtype=complex)))
        elif spec == "swap":
            if d_S != d_E:
                raise DimensionError("swap requires d_S == d_E")
            out.append(("swap", swap_unitary(d_S)))
        elif spec == "controlled_shift":
            out.append(("controlled_shift", controlled_shift(d_S, d_E)))
        elif isinstance(spec, str) and spec.startswith("haar:"):
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError(f"malformed unitary spec {spec!r}, expected haar:<n>:<seed>")
            n, seed = int(parts[1]), int(parts[2])
            for k, ss in enumerate(np.random.SeedSequence(seed).spawn(n)):
                out.append((f"haar:{seed}:{k}", random_unitary(d, np.random.default_rng(ss))))
        else:
            raise ValueError(f"unknown unitary spec {spec!r}")
    return out


# -- randomized check of the product-input CP theorem -----------------------------


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    label: str
    min_choi_eig: float
    max_deviation: float
    max_violation: float


@dataclass
class ProductInputReport:
    d_S: int
    d_E: int
    n_trials: int
    min_choi_eig: float
    max_deviation: float
    max_violation: float
    passed: bool
    trials: list
    counterexample: dict | None = None

    def to_json(self) -> dict:
        return {
            "d_S": self.d_S,
            "d_E": self.d_E,
            "n_trials": self.n_trials,
            "min_choi_eig": self.min_choi_eig,
            "max_deviation": self.max_deviation,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "counterexample": self.counterexample,
        }

    def csv_rows(self) -> list:
        return [(t.trial, t.min_choi_eig, t.max_deviation) for t in self.trials]


def _environment_state(omega, d_E, rng):
    if isinstance(omega, str):
        if omega == "pure":
            psi = random_pure_state(d_E, rng)
            return np.outer(psi, psi.conj())
        if omega == "mixed":
            return random_density(d_E, d_E, rng)
        raise ValueError(f"omega must be 'pure', 'mixed' or a matrix, got {omega!r}")
    return check_density(omega)


def verify_product_input_cp(
    d_S: int,
    d_E: int,
    n_unitaries: int,
    n_states: int,
    seed=0,
    omega="pure",
    unitaries=None,
    adversarial: bool = True,
    tol: TolerancePolicy = DEFAULT_TOL,
    cp_floor: float = 1e-9,
    match_tol: float = 1e-10,
    workers: int = 1,
) -> ProductInputReport:
    """Check, on sampled unitaries, that a spanning product family yields CP dynamics.

    The family is ``{rho^(k) (x) omega}`` with ``d_S^2`` random marginals. For
    every unitary the report records the ``U``-consistency violation, the
    smallest Choi eigenvalue of the induced map and its largest Frobenius
    deviation from the exact reduced dynamics on ``n_states`` fresh product
    probes. The first failing trial (in trial order) is returned as a
    replayable counterexample.
    """
    if min(d_S, d_E, n_unitaries, n_states) < 1:
        raise ValueError("all parameters must be >= 1")
    root = np.random.SeedSequence(seed)
    family_ss, env_ss, unitary_ss, probe_ss = root.spawn(4)
    omega_E = _environment_state(omega, d_E, np.random.default_rng(env_ss))

    rng = np.random.default_rng(family_ss)
    while True:
        s = product_set([random_density(d_S, d_S, rng) for _ in range(d_S**2)], omega_E)
        lam = assignment_from_set(s, ProductComplement(omega_E), tol)
        if lam.basis.m == d_S**2:
            break

    if unitaries is None:
        unitaries = [
            (f"haar:{k}", random_unitary(d_S * d_E, np.random.default_rng(ss)))
            for k, ss in enumerate(unitary_ss.spawn(n_unitaries))
        ]
        if adversarial:
            unitaries += adversarial_unitaries(d_S, d_E)
    probe_seeds = probe_ss.spawn(len(unitaries))

    def run(k):
        label, u = unitaries[k]
        prng = np.random.default_rng(probe_seeds[k])
        probes = [tensor(random_density(d_S, d_S, prng), omega_E) for _ in range(n_states)]
        cons = u_consistency(u, s, tol)
        phi = induced_map(u, lam)
        eig = min_choi_eigenvalue(phi)
        dev = linearity_witness(u, lam, probes, tol)
        return TrialRecord(k, label, eig, dev.max_deviation, cons.max_violation), probes, dev

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, range(len(unitaries))))
    else:
        results = [run(k) for k in range(len(unitaries))]

    trials = [r[0] for r in results]
    counterexample = None
    for (rec, probes, dev) in results:
        failed = []
        if rec.max_violation > tol.tol_equality():
            failed.append("u_consistency")
        if rec.min_choi_eig < -cp_floor:
            failed.append("cp")
        if rec.max_deviation > match_tol:
            failed.append("reduced_dynamics_mismatch")
        if failed:
            u = unitaries[rec.trial][1]
            counterexample = {
                "trial": rec.trial,
                "label": rec.label,
                "failed": failed,
                "U": matrix_to_json(u),
                "omega_E": matrix_to_json(omega_E),
                "state": matrix_to_json(probes[dev.worst_state_index]),
                "min_choi_eig": rec.min_choi_eig,
                "max_deviation": rec.max_deviation,
            }
            log.warning("product-input check failed on trial %d (%s): %s", rec.trial, rec.label, failed)
            break

    return ProductInputReport(
        d_S,
        d_E,
        len(trials),
        min(t.min_choi_eig for t in trials),
        max(t.max_deviation for t in trials),
        max(t.max_violation for t in trials),
        counterexample is None,
        trials,
        counterexample,
    )
