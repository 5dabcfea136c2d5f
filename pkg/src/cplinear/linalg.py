"""Dense complex linear algebra shared by every other module.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)``. Tensor
products are ordered system-first: in ``tensor(a, b)`` the index of ``a``
varies slowest, and every partial trace, Choi matrix and reshuffle in the
package relies on that convention.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, HermiticityError, InvalidStateError

__all__ = [
    "TolerancePolicy",
    "DEFAULT_TOL",
    "as_matrix",
    "dagger",
    "max_abs",
    "hermiticity_error",
    "tensor",
    "partial_trace_env",
    "partial_trace_sys",
    "eig_hermitian",
    "pseudoinverse",
    "random_unitary",
    "random_density",
    "random_pure_state",
    "random_hermitian",
    "check_density",
    "check_unitary",
    "is_density",
    "swap_unitary",
    "matrix_to_json",
    "matrix_from_json",
]


@dataclass(frozen=True)
class TolerancePolicy:
    """Base tolerances; the accessor methods scale them to the input.

    ``herm``, ``trace``, ``unitary`` and ``equality`` are multiplied by
    ``max(1, max|entry|)`` of the matrix under test, ``psd`` by the matrix
    dimension. ``rank`` is a relative singular-value / eigenvalue cutoff.
    """

    herm: float = 1e-9
    psd: float = 1e-9
    trace: float = 1e-9
    unitary: float = 1e-9
    rank: float = 1e-9
    equality: float = 1e-9

    def __post_init__(self):
        for name in ("herm", "psd", "trace", "unitary", "rank", "equality"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"tolerance {name} must be >= 0, got {value}")

    def scaled(self, factor: float) -> "TolerancePolicy":
        return replace(
            self,
            herm=self.herm * factor,
            psd=self.psd * factor,
            trace=self.trace * factor,
            unitary=self.unitary * factor,
            rank=self.rank * factor,
            equality=self.equality * factor,
        )

    def tol_herm(self, m=None) -> float:
        return self.herm * _scale(m)

    def tol_trace(self, m=None) -> float:
        return self.trace * _scale(m)

    def tol_unitary(self, m=None) -> float:
        return self.unitary * _scale(m)

    def tol_equality(self, m=None) -> float:
        return self.equality * _scale(m)

    def tol_psd(self, dim: int) -> float:
        return self.psd * dim


DEFAULT_TOL = TolerancePolicy()


def _scale(m) -> float:
    if m is None:
        return 1.0
    return max(1.0, max_abs(m))


def max_abs(m) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite square complex matrix."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains NaN or Inf entries")
    return arr


def dagger(m) -> np.ndarray:
    return np.conj(np.asarray(m)).T


def hermiticity_error(m) -> float:
    m = np.asarray(m)
    return max_abs(m - dagger(m))


def tensor(a, b) -> np.ndarray:
    """Kronecker product with the index of ``a`` varying slowest."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _split(m, d_S, d_E):
    m = np.asarray(m)
    if m.shape != (d_S * d_E, d_S * d_E):
        raise DimensionError(
            f"matrix of shape {m.shape} does not factor as ({d_S}x{d_E})^2"
        )
    return m.reshape(d_S, d_E, d_S, d_E)


def partial_trace_env(m, d_S: int, d_E: int) -> np.ndarray:
    """Trace out the second (environment) factor."""
    return np.einsum("iaja->ij", _split(m, d_S, d_E))


def partial_trace_sys(m, d_S: int, d_E: int) -> np.ndarray:
    """Trace out the first (system) factor."""
    return np.einsum("aiaj->ij", _split(m, d_S, d_E))


def eig_hermitian(m, tol: TolerancePolicy = DEFAULT_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.

    Raises:
        HermiticityError: if ``m`` deviates from its adjoint by more than
            ``tol.tol_herm(m)``.
    """
    m = as_matrix(m)
    err = hermiticity_error(m)
    if err > tol.tol_herm(m):
        raise HermiticityError(f"matrix is not Hermitian (max |M - M^dag| = {err:.3e})")
    w, v = np.linalg.eigh(0.5 * (m + dagger(m)))
    return w, v


def pseudoinverse(m, cutoff: float = DEFAULT_TOL.rank) -> np.ndarray:
    """Moore-Penrose inverse discarding singular values below ``cutoff * sigma_max``."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    m = np.asarray(m, dtype=complex)
    u, s, vh = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0:
        return np.zeros(m.shape[::-1], dtype=complex)
    keep = s > cutoff * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (dagger(vh) * inv) @ dagger(u)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _ginibre(rng, rows, cols):
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-random ``d x d`` unitary (QR of a Ginibre matrix, R-diagonal phases removed)."""
    if d < 1:
        raise DimensionError("d must be >= 1")
    q, r = np.linalg.qr(_ginibre(_rng(seed), d, d))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_pure_state(d: int, seed=None) -> np.ndarray:
    """Haar-random unit vector in C^d."""
    v = _ginibre(_rng(seed), d, 1)[:, 0]
    return v / np.linalg.norm(v)


def random_density(d: int, rank: int | None = None, seed=None) -> np.ndarray:
    """Random density matrix of rank at most ``rank`` (induced Hilbert-Schmidt measure)."""
    rank = d if rank is None else rank
    if not 1 <= rank <= d:
        raise DimensionError(f"rank must satisfy 1 <= rank <= {d}, got {rank}")
    g = _ginibre(_rng(seed), d, rank)
    rho = g @ dagger(g)
    rho = 0.5 * (rho + dagger(rho))
    return rho / np.trace(rho).real


def random_hermitian(d: int, seed=None) -> np.ndarray:
    g = _ginibre(_rng(seed), d, d)
    return 0.5 * (g + dagger(g))


def check_density(m, tol: TolerancePolicy = DEFAULT_TOL, dims=None) -> np.ndarray:
    """Validate ``m`` as a density matrix and return it as an array.

    ``dims`` optionally asserts a ``(d_S, d_E)`` factorization.
    """
    try:
        m = as_matrix(m)
    except ValueError as exc:
        raise InvalidStateError(str(exc)) from exc
    if dims is not None and m.shape[0] != dims[0] * dims[1]:
        raise DimensionError(f"state of dim {m.shape[0]} does not match dims {tuple(dims)}")
    herm = hermiticity_error(m)
    if herm > tol.tol_herm(m):
        raise InvalidStateError(f"state is not Hermitian (error {herm:.3e})")
    tr = np.trace(m)
    if abs(tr - 1) > tol.tol_trace(m):
        raise InvalidStateError(f"state trace is {tr.real:.12g}, expected 1")
    w = np.linalg.eigvalsh(0.5 * (m + dagger(m)))
    if w[0] < -tol.tol_psd(m.shape[0]):
        raise InvalidStateError(f"state has negative eigenvalue {w[0]:.3e}")
    return m


def is_density(m, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    try:
        check_density(m, tol)
    except (InvalidStateError, DimensionError):
        return False
    return True


def check_unitary(u, tol: TolerancePolicy = DEFAULT_TOL, dim: int | None = None) -> np.ndarray:
    u = as_matrix(u)
    if dim is not None and u.shape[0] != dim:
        raise DimensionError(f"unitary has dim {u.shape[0]}, expected {dim}")
    err = max_abs(dagger(u) @ u - np.eye(u.shape[0]))
    if err > tol.tol_unitary(u):
        raise ValueError(f"matrix is not unitary (max |U^dag U - I| = {err:.3e})")
    return u


def swap_unitary(d: int) -> np.ndarray:
    """SWAP on C^d (x) C^d."""
    s = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            s[j * d + i, i * d + j] = 1
    return s


def matrix_to_json(m) -> dict:
    """Exchange format ``{"dim", "re", "im"}`` with row-major entries."""
    m = np.asarray(m, dtype=complex)
    return {
        "dim": int(m.shape[0]),
        "re": [float(x) for x in m.real.ravel()],
        "im": [float(x) for x in m.imag.ravel()],
    }


def matrix_from_json(obj) -> np.ndarray:
    dim = obj["dim"]
    re, im = obj["re"], obj.get("im", [0.0] * len(obj["re"]))
    if not isinstance(dim, int) or dim < 1:
        raise DimensionError(f"invalid matrix dim {dim!r}")
    if len(re) != dim * dim or len(im) != dim * dim:
        raise DimensionError(f"matrix of dim {dim} needs {dim * dim} entries, got {len(re)}/{len(im)}")
    m = np.empty(dim * dim, dtype=complex)
    m.real = np.asarray(re, dtype=float)
    m.imag = np.asarray(im, dtype=float)
    return as_matrix(m.reshape(dim, dim))
