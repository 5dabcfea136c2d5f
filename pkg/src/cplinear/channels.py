"""Superoperators: transfer matrices, Choi matrices, operator-sum forms.

Vectorization stacks columns, so ``X -> A X B`` has transfer matrix
``kron(B.T, A)`` and composition of maps is a matrix product. The Choi
matrix is ordered input-first::

    C = sum_ij |i><j| (x) Phi(|i><j|)

and is *not* normalized: the identity channel on a qubit has Choi
eigenvalues ``(2, 0, 0, 0)``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    NotCompletelyPositiveError,
    SingularMapError,
    SpanError,
)
from .linalg import (
    DEFAULT_TOL,
    TolerancePolicy,
    as_matrix,
    dagger,
    eig_hermitian,
    hermiticity_error,
    matrix_from_json,
    matrix_to_json,
    max_abs,
    partial_trace_env,
    random_pure_state,
)


def vec(x) -> np.ndarray:
    return np.asarray(x, dtype=complex).reshape(-1, order="F")


def unvec(v, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


def matrix_unit(d: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1
    return e


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Linear map ``L(C^d_in) -> L(C^d_out)`` stored as a transfer matrix."""

    d_in: int
    d_out: int
    transfer: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transfer, dtype=complex)
        if t.shape != (self.d_out**2, self.d_in**2):
            raise DimensionError(
                f"transfer shape {t.shape} does not match d_in={self.d_in}, d_out={self.d_out}"
            )
        if not np.all(np.isfinite(t)):
            raise ValueError("transfer matrix contains NaN or Inf entries")
        object.__setattr__(self, "transfer", t)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.d_in, self.d_in):
            raise DimensionError(f"input of shape {x.shape}, expected ({self.d_in}, {self.d_in})")
        return unvec(self.transfer @ vec(x), self.d_out)

    def __matmul__(self, other: "SuperOp") -> "SuperOp":
        return compose(self, other)

    def to_json(self) -> dict:
        return {"d_in": self.d_in, "d_out": self.d_out, "transfer": matrix_to_json_rect(self.transfer)}

    @classmethod
    def from_json(cls, obj) -> "SuperOp":
        d_in, d_out = obj["d_in"], obj["d_out"]
        t = obj["transfer"]
        if d_in == d_out:
            transfer = matrix_from_json(t)
        else:
            transfer = _rect_from_json(t, d_out**2, d_in**2)
        return cls(d_in, d_out, transfer)


def matrix_to_json_rect(m) -> dict:
    # square transfers use the shared exchange format; rectangular ones add shape
    m = np.asarray(m, dtype=complex)
    if m.shape[0] == m.shape[1]:
        return matrix_to_json(m)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": [float(x) for x in m.real.ravel()],
        "im": [float(x) for x in m.imag.ravel()],
    }


def _rect_from_json(obj, rows, cols):
    if "dim" in obj:
        raise DimensionError(f"non-square transfer must be {rows}x{cols}, got dim={obj['dim']}")
    if (obj["rows"], obj["cols"]) != (rows, cols):
        raise DimensionError(f"transfer must be {rows}x{cols}, got {obj['rows']}x{obj['cols']}")
    m = np.empty(rows * cols, dtype=complex)
    m.real = np.asarray(obj["re"], dtype=float)
    m.imag = np.asarray(obj["im"], dtype=float)
    return m.reshape(rows, cols)


# -- constructors ---------------------------------------------------------------


def identity(d: int) -> SuperOp:
    return SuperOp(d, d, np.eye(d * d, dtype=complex))


def sandwich(a, b) -> SuperOp:
    """The map ``X -> a X b``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return SuperOp(b.shape[0], a.shape[0], np.kron(b.T, a))


def conjugation(u) -> SuperOp:
    """``Ad_U: X -> U X U^dag``."""
    u = np.asarray(u, dtype=complex)
    return sandwich(u, dagger(u))


def from_kraus(ops) -> SuperOp:
    ops = [np.asarray(k, dtype=complex) for k in ops]
    d_out, d_in = ops[0].shape
    t = sum(np.kron(k.conj(), k) for k in ops)
    return SuperOp(d_in, d_out, t)


def from_signed_kraus(coeffs, ops) -> SuperOp:
    ops = [np.asarray(k, dtype=complex) for k in ops]
    d_out, d_in = ops[0].shape
    t = np.zeros((d_out**2, d_in**2), dtype=complex)
    for e, k in zip(coeffs, ops):
        t += e * np.kron(k.conj(), k)
    return SuperOp(d_in, d_out, t)


def transposition(d: int) -> SuperOp:
    t = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            # vec index of |i><j| is i + j*d; it maps to |j><i|
            t[j + i * d, i + j * d] = 1
    return SuperOp(d, d, t)


def dephasing(q: float, d: int = 2) -> SuperOp:
    """Multiply every off-diagonal entry by ``q``."""
    factors = np.full((d, d), q, dtype=complex)
    np.fill_diagonal(factors, 1)
    return SuperOp(d, d, np.diag(vec(factors)))


def depolarizing(p: float, d: int = 2) -> SuperOp:
    """``X -> (1 - p) X + p Tr(X) I/d``; ``p = 1`` is completely depolarizing."""
    full = np.outer(vec(np.eye(d) / d), vec(np.eye(d)))
    return SuperOp(d, d, (1 - p) * np.eye(d * d) + p * full)


def constant_channel(omega, d_in: int) -> SuperOp:
    """``X -> Tr(X) omega``."""
    omega = as_matrix(omega)
    return SuperOp(d_in, omega.shape[0], np.outer(vec(omega), vec(np.eye(d_in))))


def partial_trace_map(d_S: int, d_E: int) -> SuperOp:
    """``Tr_E`` as a superoperator ``L(S (x) E) -> L(S)``."""
    d = d_S * d_E
    cols = []
    for j in range(d):
        for i in range(d):
            cols.append(vec(partial_trace_env(matrix_unit(d, i, j), d_S, d_E)))
    return SuperOp(d, d_S, np.array(cols).T)


def superop_from_action(images, tol: TolerancePolicy = DEFAULT_TOL) -> SuperOp:
    """Fit the transfer matrix reproducing ``(basis operator, image)`` pairs.

    Raises:
        SpanError: if the basis operators do not span the input operator space.
    """
    images = list(images)
    if not images:
        raise SpanError(0, None)
    xs = [np.asarray(x, dtype=complex) for x, _ in images]
    ys = [np.asarray(y, dtype=complex) for _, y in images]
    d_in, d_out = xs[0].shape[0], ys[0].shape[0]
    a = np.array([vec(x) for x in xs]).T
    b = np.array([vec(y) for y in ys]).T
    s = np.linalg.svd(a, compute_uv=False)
    rank = int(np.sum(s > tol.rank * s[0])) if s[0] > 0 else 0
    if rank < d_in**2:
        raise SpanError(rank, d_in**2)
    return SuperOp(d_in, d_out, b @ np.linalg.pinv(a))


# -- Choi matrix ------------------------------------------------------------


def choi(s: SuperOp) -> np.ndarray:
    """Unnormalized, input-first Choi matrix of ``s``."""
    t4 = s.transfer.reshape(s.d_out, s.d_out, s.d_in, s.d_in)
    # t4[b, a, j, i] = Phi(|i><j|)[a, b]  ->  C[(i, a), (j, b)]
    return t4.transpose(3, 1, 2, 0).reshape(s.d_in * s.d_out, s.d_in * s.d_out)


def choi_to_superop(c, d_in: int, d_out: int) -> SuperOp:
    c = np.asarray(c, dtype=complex)
    if c.shape != (d_in * d_out, d_in * d_out):
        raise DimensionError(f"Choi shape {c.shape} does not match d_in={d_in}, d_out={d_out}")
    c4 = c.reshape(d_in, d_out, d_in, d_out)
    return SuperOp(d_in, d_out, c4.transpose(3, 1, 2, 0).reshape(d_out**2, d_in**2))


def min_choi_eigenvalue(s: SuperOp) -> float:
    """Smallest eigenvalue of the Hermitian part of the Choi matrix."""
    c = choi(s)
    return float(np.linalg.eigvalsh(0.5 * (c + dagger(c)))[0])


def is_hermiticity_preserving(s: SuperOp, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    c = choi(s)
    return hermiticity_error(c) <= tol.tol_herm(c)


def is_trace_preserving(s: SuperOp, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    reduced = partial_trace_env(choi(s), s.d_in, s.d_out)
    return max_abs(reduced - np.eye(s.d_in)) <= tol.tol_equality(reduced)


def is_cp(s: SuperOp, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    return is_hermiticity_preserving(s, tol) and min_choi_eigenvalue(s) >= -tol.tol_psd(
        s.d_in * s.d_out
    )


# -- operator-sum forms ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HermitianDecomposition:
    """Signed operator sum ``rho -> sum_i e_i E_i rho E_i^dag``.

    ``ops[i]`` has unit Frobenius norm; ``coeffs`` are in descending order.
    """

    coeffs: np.ndarray
    ops: list
    d_in: int
    d_out: int

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros((self.d_out, self.d_out), dtype=complex)
        for e, k in zip(self.coeffs, self.ops):
            out += e * (k @ rho @ dagger(k))
        return out

    def to_superop(self) -> SuperOp:
        if not self.ops:
            return SuperOp(self.d_in, self.d_out, np.zeros((self.d_out**2, self.d_in**2)))
        return from_signed_kraus(self.coeffs, self.ops)

    def normalization(self) -> np.ndarray:
        """``sum_i e_i E_i^dag E_i``; the identity for trace-preserving maps."""
        out = np.zeros((self.d_in, self.d_in), dtype=complex)
        for e, k in zip(self.coeffs, self.ops):
            out += e * (dagger(k) @ k)
        return out

    @property
    def is_cp(self) -> bool:
        return bool(np.all(self.coeffs >= 0))

    def kraus(self, tol: TolerancePolicy = DEFAULT_TOL) -> list:
        """Kraus operators ``sqrt(e_i) E_i``; refuses when some ``e_i`` is negative."""
        floor = -tol.tol_psd(self.d_in * self.d_out)
        if np.any(self.coeffs < floor):
            raise NotCompletelyPositiveError(
                f"map is not CP: smallest coefficient {self.coeffs.min():.3e}"
            )
        return [np.sqrt(max(e, 0.0)) * k for e, k in zip(self.coeffs, self.ops)]


def _fix_phase(k: np.ndarray) -> np.ndarray:
    flat = k.ravel()
    idx = int(np.argmax(np.abs(flat)))
    if abs(flat[idx]) == 0:
        return k
    return k * (abs(flat[idx]) / flat[idx])


def hermitian_decomposition(
    s: SuperOp, tol: TolerancePolicy = DEFAULT_TOL, cutoff: float = 1e-13
) -> HermitianDecomposition:
    """Signed operator-sum form from the Choi eigendecomposition.

    Eigenvalues with ``|e| <= cutoff * max|e|`` are dropped.

    Raises:
        HermiticityError: if the Choi matrix is not Hermitian, i.e. ``s`` does
            not preserve Hermiticity.
    """
    c = choi(s)
    w, v = eig_hermitian(c, tol)
    scale = np.max(np.abs(w)) if w.size else 0.0
    order = np.argsort(-w, kind="stable")
    coeffs, ops = [], []
    for idx in order:
        if abs(w[idx]) <= cutoff * scale or scale == 0:
            continue
        # C[(i, a), (j, b)] = sum_k K[a, i] conj(K[b, j])
        k = v[:, idx].reshape(s.d_in, s.d_out).T
        coeffs.append(float(w[idx]))
        ops.append(_fix_phase(k))
    return HermitianDecomposition(np.array(coeffs, dtype=float), ops, s.d_in, s.d_out)


def kraus(s: SuperOp, tol: TolerancePolicy = DEFAULT_TOL) -> list:
    return hermitian_decomposition(s, tol).kraus(tol)


# -- classification -----------------------------------------------------------


@dataclass(frozen=True)
class ClassificationReport:
    hermiticity_preserving: bool
    trace_preserving: bool
    cp: bool
    min_choi_eigenvalue: float
    positive_sampled: bool
    positivity_violator: np.ndarray | None = field(default=None, compare=False)
    n_samples: int = 0
    violator_index: int | None = None
    violator_min_eigenvalue: float | None = None

    def to_json(self) -> dict:
        v = self.positivity_violator
        return {
            "hermiticity_preserving": self.hermiticity_preserving,
            "trace_preserving": self.trace_preserving,
            "cp": self.cp,
            "min_choi_eigenvalue": self.min_choi_eigenvalue,
            "positive_sampled": self.positive_sampled,
            "positivity_violator": None
            if v is None
            else {"re": [float(x) for x in v.real], "im": [float(x) for x in v.imag]},
            "violator_index": self.violator_index,
            "violator_min_eigenvalue": self.violator_min_eigenvalue,
            "n_samples": self.n_samples,
        }


def _sample_min_eig(s, psi):
    out = s(np.outer(psi, psi.conj()))
    return float(np.linalg.eigvalsh(0.5 * (out + dagger(out)))[0])


def classify(
    s: SuperOp,
    n_samples: int = 200,
    seed=0,
    tol: TolerancePolicy = DEFAULT_TOL,
    workers: int = 1,
) -> ClassificationReport:
    """Classify ``s`` as Hermiticity-preserving / trace-preserving / positive / CP.

    CP is decided exactly from the Choi spectrum. Positivity is only sampled:
    ``n_samples`` Haar-random pure inputs are pushed through ``s`` and the
    first one (lowest index) whose image has an eigenvalue below
    ``-tol_psd`` is reported as the violator.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    hp = is_hermiticity_preserving(s, tol)
    tp = is_trace_preserving(s, tol)
    min_eig = min_choi_eigenvalue(s)
    cp = hp and min_eig >= -tol.tol_psd(s.d_in * s.d_out)

    seeds = np.random.SeedSequence(seed).spawn(n_samples)
    states = [random_pure_state(s.d_in, np.random.default_rng(ss)) for ss in seeds]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            eigs = list(pool.map(lambda psi: _sample_min_eig(s, psi), states))
    else:
        eigs = [_sample_min_eig(s, psi) for psi in states]
    floor = -tol.tol_psd(s.d_out)
    bad = [i for i, e in enumerate(eigs) if e < floor]
    if bad:
        i = bad[0]
        return ClassificationReport(hp, tp, cp, min_eig, False, states[i], n_samples, i, eigs[i])
    return ClassificationReport(hp, tp, cp, min_eig, True, None, n_samples)


# -- algebra ------------------------------------------------------------------


def compose(a: SuperOp, b: SuperOp) -> SuperOp:
    """``a o b`` (apply ``b`` first)."""
    if b.d_out != a.d_in:
        raise DimensionError(f"cannot compose: d_out(b)={b.d_out} != d_in(a)={a.d_in}")
    return SuperOp(b.d_in, a.d_out, a.transfer @ b.transfer)


def invert(s: SuperOp, tol: TolerancePolicy = DEFAULT_TOL) -> SuperOp:
    """Inverse map.

    Raises:
        SingularMapError: if the transfer matrix has condition number at or
            above ``1 / tol.rank`` (or is not square).
    """
    if s.d_in != s.d_out:
        raise SingularMapError(0.0, "only maps with d_in == d_out can be inverted")
    sv = np.linalg.svd(s.transfer, compute_uv=False)
    if sv[-1] <= tol.rank * sv[0]:
        raise SingularMapError(sv[-1])
    return SuperOp(s.d_in, s.d_out, np.linalg.inv(s.transfer))


def condition_number(s: SuperOp) -> float:
    return float(np.linalg.cond(s.transfer))
