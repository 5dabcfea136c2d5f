"""Time-dependent GKSL generators, their propagators and CP-divisibility scans.

Generators are piecewise constant on a schedule of segments. Inside a segment
the propagator is an exact matrix exponential, taken on sub-steps so that each
exponential stays small. A segment may instead carry rates given as Python
callables ``gamma(t)``; those are integrated with the exponential midpoint
rule (second order), which is what the convergence tests exercise.

Choi spectra reported here are those of the *normalized* Choi matrix
``C / d`` (a unit-trace state for trace-preserving maps), so a dephasing map
with off-diagonal factor ``q`` has smallest value ``(1 - |q|) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .channels import SuperOp, choi, compose, identity, invert, min_choi_eigenvalue
from .errors import GeneratorFormError, SingularMapError, TimeRangeError
from .linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    as_matrix,
    dagger,
    hermiticity_error,
    matrix_from_json,
    matrix_to_json,
    max_abs,
)


@dataclass(frozen=True, eq=False)
class Segment:
    t_start: float
    t_end: float
    H: np.ndarray
    ops: tuple = ()
    rates: tuple = ()

    @property
    def time_dependent(self) -> bool:
        return any(callable(g) for g in self.rates)

    def rates_at(self, t: float) -> list:
        return [g(t) if callable(g) else g for g in self.rates]


@dataclass(frozen=True, eq=False)
class GKSLGenerator:
    d: int
    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("generator needs at least one segment")
        if segs[0].t_start != 0:
            raise ValueError("schedule must start at t = 0")
        for k, seg in enumerate(segs):
            H = as_matrix(seg.H)
            if H.shape != (self.d, self.d):
                raise ValueError(f"segment {k}: H has shape {H.shape}, expected ({self.d}, {self.d})")
            if hermiticity_error(H) > DEFAULT_TOL.tol_herm(H):
                raise ValueError(f"segment {k}: H is not Hermitian")
            if not seg.t_end > seg.t_start:
                raise ValueError(f"segment {k}: times must be strictly increasing")
            if k and seg.t_start != segs[k - 1].t_end:
                raise ValueError(f"segment {k} does not start where segment {k - 1} ends")
            if len(seg.ops) != len(seg.rates):
                raise ValueError(f"segment {k}: {len(seg.ops)} operators but {len(seg.rates)} rates")
        object.__setattr__(self, "segments", segs)

    @property
    def t_max(self) -> float:
        return self.segments[-1].t_end

    def segment_at(self, t: float) -> Segment:
        if t < 0 or t > self.t_max:
            raise TimeRangeError(f"t={t} outside schedule [0, {self.t_max}]")
        for seg in self.segments:
            if t < seg.t_end:
                return seg
        return self.segments[-1]

    @classmethod
    def constant(cls, H, ops=(), rates=(), t_max: float = 1.0) -> "GKSLGenerator":
        H = as_matrix(H)
        return cls(H.shape[0], (Segment(0.0, t_max, H, tuple(ops), tuple(rates)),))

    def to_json(self) -> dict:
        segments = []
        for seg in self.segments:
            if seg.time_dependent:
                raise ValueError("callable rates cannot be serialized")
            segments.append(
                {
                    "t_start": seg.t_start,
                    "t_end": seg.t_end,
                    "H": matrix_to_json(seg.H),
                    "lindblad": [
                        {"A": matrix_to_json(a), "gamma": float(g)} for a, g in zip(seg.ops, seg.rates)
                    ],
                }
            )
        return {"d": self.d, "segments": segments}

    @classmethod
    def from_json(cls, obj) -> "GKSLGenerator":
        segs = []
        for s in obj["segments"]:
            terms = s.get("lindblad", [])
            segs.append(
                Segment(
                    float(s["t_start"]),
                    float(s["t_end"]),
                    matrix_from_json(s["H"]),
                    tuple(matrix_from_json(term["A"]) for term in terms),
                    tuple(float(term["gamma"]) for term in terms),
                )
            )
        return cls(obj["d"], tuple(segs))


def gksl_superop(H, ops=(), rates=()) -> SuperOp:
    """Transfer matrix of ``-i[H, .] + sum_j g_j (A . A^dag - {A^dag A, .}/2)``."""
    H = as_matrix(H)
    d = H.shape[0]
    eye = np.eye(d)
    t = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for a, g in zip(ops, rates):
        a = np.asarray(a, dtype=complex)
        ada = dagger(a) @ a
        t = t + g * (np.kron(a.conj(), a) - 0.5 * np.kron(eye, ada) - 0.5 * np.kron(ada.T, eye))
    return SuperOp(d, d, t)


def generator_superop(g: GKSLGenerator, t: float) -> SuperOp:
    seg = g.segment_at(t)
    return gksl_superop(seg.H, seg.ops, seg.rates_at(t))


# -- canonical form -------------------------------------------------------------


def gell_mann(d: int) -> list:
    """Traceless Hermitian basis of ``L(C^d)`` with ``Tr(G_a G_b) = delta_ab``.

    Order: symmetric and antisymmetric off-diagonal pairs for ``j < k``, then
    the ``d - 1`` diagonal ones.
    """
    out = []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out += [s, a]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1
        diag[l] = -l
        out.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    return out


class CanonicalForm(NamedTuple):
    H: np.ndarray
    ops: list
    rates: np.ndarray


def _choi_vector(k):
    # Choi of X -> K X L^dag is v_K v_L^dag with v[(i, a)] = K[a, i]
    return np.asarray(k).T.reshape(-1)


def _fix_phase(k):
    flat = k.ravel()
    idx = int(np.argmax(np.abs(flat)))
    return k * (abs(flat[idx]) / flat[idx]) if flat[idx] != 0 else k


def canonical_form(k: SuperOp, d: int | None = None, tol: TolerancePolicy = DEFAULT_TOL) -> CanonicalForm:
    """Hamiltonian, orthonormal traceless jump operators and real rates of a generator.

    The Choi matrix is expanded in the basis ``{I/sqrt(d)} + gell_mann(d)``;
    the traceless block is the Kossakowski matrix, whose eigenvalues are the
    canonical rates (any sign, descending) and whose eigenvectors give the
    jump operators ``A_j`` with ``Tr(A_j^dag A_k) = delta_jk``.

    Raises:
        GeneratorFormError: if ``k`` is not Hermiticity-preserving and
            trace-annihilating.
    """
    d = k.d_in if d is None else d
    if (k.d_in, k.d_out) != (d, d):
        raise GeneratorFormError(f"generator must act on {d}x{d} operators")
    c = choi(k)
    if hermiticity_error(c) > tol.tol_herm(c):
        raise GeneratorFormError("generator is not Hermiticity-preserving")
    trace_row = np.eye(d).reshape(-1, order="F") @ k.transfer
    if max_abs(trace_row) > tol.tol_equality(k.transfer):
        raise GeneratorFormError(f"generator is not trace-annihilating (defect {max_abs(trace_row):.3e})")

    basis = [np.eye(d, dtype=complex) / np.sqrt(d)] + gell_mann(d)
    w = np.array([_choi_vector(f) for f in basis]).T
    chi = dagger(w) @ c @ w
    chi = 0.5 * (chi + dagger(chi))
    kossakowski = chi[1:, 1:]
    G = chi[0, 0] / (2 * d) * np.eye(d) + sum(chi[a, 0] * basis[a] for a in range(1, d * d)) / np.sqrt(d)
    H = 0.5j * (G - dagger(G))
    H = 0.5 * (H + dagger(H))
    H = H - np.trace(H).real / d * np.eye(d)

    rates, vecs = np.linalg.eigh(kossakowski)
    order = np.argsort(-rates, kind="stable")
    ops = []
    for j in order:
        a = sum(vecs[b, j] * basis[b + 1] for b in range(d * d - 1))
        ops.append(_fix_phase(a))
    return CanonicalForm(H, ops, rates[order])


def reassemble(form: CanonicalForm) -> SuperOp:
    return gksl_superop(form.H, form.ops, form.rates)


# -- propagation --------------------------------------------------------------


@dataclass(frozen=True)
class Propagator:
    t0: float
    t1: float
    map: SuperOp = field(compare=False)


def _n_steps(length, steps_per_unit):
    return max(1, math.ceil(length * steps_per_unit - 1e-9))


def propagate(g: GKSLGenerator, t0: float, t1: float, steps_per_unit: int = 100) -> Propagator:
    """Time-ordered propagator ``E(t1, t0)`` on a step grid aligned to segment edges.

    Raises:
        TimeRangeError: unless ``0 <= t0 <= t1 <= t_max``.
    """
    if steps_per_unit < 1:
        raise ValueError("steps_per_unit must be >= 1")
    if not (0 <= t0 <= t1 <= g.t_max):
        raise TimeRangeError(f"need 0 <= t0 <= t1 <= {g.t_max}, got t0={t0}, t1={t1}")
    total = np.eye(g.d * g.d, dtype=complex)
    for seg in g.segments:
        a, b = max(t0, seg.t_start), min(t1, seg.t_end)
        if b <= a:
            continue
        n = _n_steps(b - a, steps_per_unit)
        h = (b - a) / n
        if seg.time_dependent:
            for step in range(n):
                mid = a + (step + 0.5) * h
                kt = gksl_superop(seg.H, seg.ops, seg.rates_at(mid)).transfer
                total = expm(kt * h) @ total
        else:
            kt = gksl_superop(seg.H, seg.ops, seg.rates).transfer
            total = np.linalg.matrix_power(expm(kt * h), n) @ total
    return Propagator(t0, t1, SuperOp(g.d, g.d, total))


def normalized_min_choi_eig(s: SuperOp) -> float:
    return min_choi_eigenvalue(s) / s.d_in


@dataclass(frozen=True)
class IntermediateMap:
    direct: SuperOp = field(compare=False)
    inverted: SuperOp = field(compare=False)
    discrepancy: float = 0.0


def intermediate_routes(
    g: GKSLGenerator, t1: float, t2: float, steps_per_unit: int = 100, tol: TolerancePolicy = DEFAULT_TOL
) -> IntermediateMap:
    """``Phi(t2, t1)`` by direct integration and as ``E(t2, 0) o E(t1, 0)^-1``.

    Raises:
        SingularMapError: when ``E(t1, 0)`` is not invertible.
    """
    if not 0 <= t1 <= t2:
        raise TimeRangeError(f"need 0 <= t1 <= t2, got t1={t1}, t2={t2}")
    e1 = propagate(g, 0.0, t1, steps_per_unit).map
    e2 = propagate(g, 0.0, t2, steps_per_unit).map
    direct = propagate(g, t1, t2, steps_per_unit).map
    inverted = compose(e2, invert(e1, tol))
    return IntermediateMap(direct, inverted, max_abs(direct.transfer - inverted.transfer))


def intermediate_map(
    g: GKSLGenerator,
    t1: float,
    t2: float,
    steps_per_unit: int = 100,
    route: str = "direct",
    tol: TolerancePolicy = DEFAULT_TOL,
) -> SuperOp:
    routes = intermediate_routes(g, t1, t2, steps_per_unit, tol)
    if route == "direct":
        return routes.direct
    if route == "inversion":
        return routes.inverted
    raise ValueError(f"route must be 'direct' or 'inversion', got {route!r}")


@dataclass(frozen=True)
class DivisibilityScan:
    pairs: tuple
    min_choi_eig: tuple
    first_violation: tuple | None

    def csv_rows(self) -> list:
        return [(t1, t2, e) for (t1, t2), e in zip(self.pairs, self.min_choi_eig)]

    def to_json(self) -> dict:
        return {
            "n_pairs": len(self.pairs),
            "min_choi_eig": min(self.min_choi_eig, default=None),
            "first_violation": None if self.first_violation is None else list(self.first_violation),
        }


def divisibility_scan(
    g: GKSLGenerator, grid, steps_per_unit: int = 100, tol: TolerancePolicy = DEFAULT_TOL
) -> DivisibilityScan:
    """Normalized Choi minimum of ``Phi(t2, t1)`` for every grid pair ``t1 < t2``.

    Increments ``E(t_{k+1}, t_k)`` are integrated once; intermediate maps are
    their ordered products. A pair is a violation when its value is below
    ``-tol.tol_psd(d)``; the first in (t1, then t2) order is recorded.

    Raises:
        SingularMapError: if some ``E(t1, 0)`` is singular; the message names
            the offending pair.
    """
    grid = [float(t) for t in grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted")
    if grid and (grid[0] < 0 or grid[-1] > g.t_max):
        raise TimeRangeError(f"grid must lie within [0, {g.t_max}]")
    if len(grid) < 2:
        return DivisibilityScan((), (), None)

    steps = [propagate(g, a, b, steps_per_unit).map for a, b in zip(grid, grid[1:])]
    cumulative = propagate(g, 0.0, grid[0], steps_per_unit).map
    floor = -tol.tol_psd(g.d)
    pairs, eigs, first = [], [], None
    for i in range(len(grid) - 1):
        try:
            invert(cumulative, tol)
        except SingularMapError as exc:
            raise SingularMapError(
                exc.smallest_singular_value,
                f"E({grid[i]}, 0) is singular; cannot form intermediate maps from t1={grid[i]}",
            ) from exc
        phi = identity(g.d)
        for j in range(i + 1, len(grid)):
            phi = compose(steps[j - 1], phi)
            e = normalized_min_choi_eig(phi)
            pairs.append((grid[i], grid[j]))
            eigs.append(e)
            if first is None and e < floor:
                first = (grid[i], grid[j])
        cumulative = compose(steps[i], cumulative)
    return DivisibilityScan(tuple(pairs), tuple(eigs), first)


def dephasing_generator(schedule, d: int = 2) -> GKSLGenerator:
    """Pure dephasing with ``A = sigma_z / sqrt 2`` and piecewise rates.

    ``schedule`` is a list of ``(t_start, t_end, gamma)``; with this
    normalization the coherence decays as ``exp(-int gamma)``.
    """
    if d != 2:
        raise ValueError("dephasing_generator is defined for qubits")
    a = np.diag([1.0, -1.0]).astype(complex) / np.sqrt(2)
    H = np.zeros((2, 2), dtype=complex)
    return GKSLGenerator(2, tuple(Segment(t0, t1, H, (a,), (gamma,)) for t0, t1, gamma in schedule))
