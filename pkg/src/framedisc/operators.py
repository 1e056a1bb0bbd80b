"""Dense Hermitian operator arithmetic on the finite model space.

Operators are plain ``(n, n)`` complex numpy arrays wrapped in
:class:`HermitianOp`; subspaces carry an orthonormal column basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_RTOL = 1e-12
PSD_RTOL = 1e-9
SPAN_DROP_TOL = 1e-10


class NotPSDError(ValueError):
    """Raised when an operator that must be positive semi-definite is not."""


@dataclass(frozen=True)
class HermitianOp:
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"expected a square nonempty matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("operator has non-finite entries")
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.conj().T).max() > HERMITIAN_RTOL * scale * 10:
            raise ValueError("operator is not self-adjoint")
        # symmetrize away rounding so eigvalsh sees an exactly Hermitian array
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n: int) -> HermitianOp:
        return cls(np.eye(n, dtype=complex))

    @classmethod
    def zeros(cls, n: int) -> HermitianOp:
        return cls(np.zeros((n, n), dtype=complex))

    def __add__(self, other: HermitianOp) -> HermitianOp:
        return HermitianOp(self.entries + other.entries)

    def __sub__(self, other: HermitianOp) -> HermitianOp:
        return HermitianOp(self.entries - other.entries)

    def __neg__(self) -> HermitianOp:
        return HermitianOp(-self.entries)

    def __mul__(self, alpha: float) -> HermitianOp:
        return HermitianOp(float(alpha) * self.entries)

    __rmul__ = __mul__

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def norm(self) -> float:
        return op_norm(self.entries)

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def compress(self, M: Subspace) -> HermitianOp:
        """Return ``P_M T P_M``."""
        P = M.projector()
        return HermitianOp(P @ self.entries @ P)


@dataclass(frozen=True)
class SpectralSummary:
    min_eig: float
    max_eig: float
    trace: float
    op_norm: float


@dataclass(frozen=True)
class Subspace:
    dim_ambient: int
    basis: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.basis, dtype=complex).reshape(self.dim_ambient, -1)
        if Q.shape[1] > self.dim_ambient:
            raise ValueError("subspace rank exceeds ambient dimension")
        if Q.shape[1]:
            gram = Q.conj().T @ Q
            if np.abs(gram - np.eye(Q.shape[1])).max() > 1e-10:
                raise ValueError("basis columns are not orthonormal")
        Q.setflags(write=False)
        object.__setattr__(self, "basis", Q)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def zero(cls, n: int) -> Subspace:
        return cls(n, np.zeros((n, 0), dtype=complex))

    @classmethod
    def full(cls, n: int) -> Subspace:
        return cls(n, np.eye(n, dtype=complex))

    @classmethod
    def span(cls, vectors, n: int | None = None, tol: float = SPAN_DROP_TOL) -> Subspace:
        """Orthonormalize the columns of ``vectors``, dropping directions whose
        residual norm after Gram-Schmidt falls below ``tol``."""
        V = np.asarray(vectors, dtype=complex)
        if n is None:
            n = V.shape[0]
        V = V.reshape(n, -1)
        return cls(n, _orthonormal_columns(V, np.zeros((n, 0), dtype=complex), tol))

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def complement(self) -> Subspace:
        if self.rank == self.dim_ambient:
            return Subspace.zero(self.dim_ambient)
        # orthogonal complement from the full SVD of the basis
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(self.dim_ambient, u[:, self.rank:])

    def direct_sum(self, other: Subspace) -> Subspace:
        """Span of both subspaces (they need not be orthogonal)."""
        return Subspace(
            self.dim_ambient,
            _orthonormal_columns(other.basis, self.basis, SPAN_DROP_TOL),
        )

    def project_out(self, vectors) -> np.ndarray:
        """Apply ``P_{M^perp}`` to the columns of ``vectors``."""
        V = np.asarray(vectors, dtype=complex)
        return V - self.basis @ (self.basis.conj().T @ V)


def _orthonormal_columns(V, Q, tol):
    """Extend orthonormal ``Q`` by the new directions of ``V`` (twice-iterated
    Gram-Schmidt, relative drop tolerance)."""
    cols = [Q[:, j] for j in range(Q.shape[1])]
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        scale = np.linalg.norm(v)
        if scale == 0.0:
            continue
        for _ in range(2):
            for q in cols:
                v -= q * np.vdot(q, v)
        r = np.linalg.norm(v)
        if r < tol * max(scale, 1.0):
            continue
        cols.append(v / r)
    new = cols[Q.shape[1]:]
    if not new:
        return np.zeros((V.shape[0], 0), dtype=complex) if Q.shape[1] == 0 else Q
    return np.column_stack(cols)


def op_norm(A: np.ndarray) -> float:
    """Spectral norm of a Hermitian array (largest absolute eigenvalue)."""
    w = np.linalg.eigvalsh(A)
    return float(max(abs(w[0]), abs(w[-1])))


def batched_op_norm(stack: np.ndarray) -> np.ndarray:
    """Spectral norms of a ``(k, n, n)`` stack of Hermitian arrays."""
    w = np.linalg.eigvalsh(stack)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))


def rank_one(f, dim: int | None = None) -> HermitianOp:
    """The operator ``g -> <g, f> f``, i.e. the outer product ``f f^*``."""
    f = np.asarray(f, dtype=complex).ravel()
    if dim is not None and f.shape[0] != dim:
        raise ValueError(f"vector has dimension {f.shape[0]}, expected {dim}")
    if f.shape[0] == 0:
        raise ValueError("empty vector")
    return HermitianOp(np.outer(f, f.conj()))


def weighted_gram(vectors: np.ndarray, weights=None) -> np.ndarray:
    """``sum_i w_i f_i f_i^*`` for the rows ``f_i`` of ``vectors``."""
    V = np.asarray(vectors, dtype=complex)
    if V.ndim != 2:
        raise ValueError("vectors must be a 2-d array of rows")
    if weights is None:
        W = V
    else:
        w = np.asarray(weights, dtype=float)
        W = V * w[:, None]
    S = V.T @ W.conj()
    return 0.5 * (S + S.conj().T)


def spectral_summary(T: HermitianOp) -> SpectralSummary:
    try:
        w = T.eigvalsh()
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError("eigensolver did not converge") from exc
    lo, hi = float(w[0]), float(w[-1])
    return SpectralSummary(lo, hi, T.trace(), max(abs(lo), abs(hi)))


def frame_bounds(vectors, weights=None) -> tuple[float, float]:
    """Optimal frame bounds of ``{f_i}`` with weights ``w_i``: the extreme
    eigenvalues of ``sum_i w_i T_{f_i}``."""
    V = np.atleast_2d(np.asarray(vectors, dtype=complex))
    if V.shape[0] == 0 or V.size == 0:
        raise ValueError("no vectors given; an empty family is not a frame")
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (V.shape[0],):
            raise ValueError("weights and vectors differ in length")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
    ev = np.linalg.eigvalsh(weighted_gram(V, weights))
    return float(ev[0]), float(ev[-1])


def check_psd(T: HermitianOp, rtol: float = PSD_RTOL) -> None:
    w = T.eigvalsh()
    if w[0] < -rtol * max(abs(w[-1]), abs(w[0]), 1.0):
        raise NotPSDError(f"operator has eigenvalue {w[0]:.3e} < 0")


def compression_split_defect(T: HermitianOp, M: Subspace) -> tuple[float, float]:
    """Off-diagonal defect of a PSD operator with respect to ``M``.

    Returns ``(||T - P T P - Q T Q||, sqrt(||P T P|| ||Q T Q||))`` with
    ``P = P_M`` and ``Q = P_{M^perp}``; the first never exceeds the second.
    """
    if M.dim_ambient != T.dim:
        raise ValueError("subspace and operator dimensions differ")
    w = T.eigvalsh()
    if w[0] < -PSD_RTOL:
        raise NotPSDError(f"operator has eigenvalue {w[0]:.3e} < -1e-9")
    A = T.entries
    P = M.projector()
    Q = np.eye(T.dim) - P
    inner = P @ A @ P
    outer = Q @ A @ Q
    defect = op_norm(A - inner - outer)
    bound = float(np.sqrt(op_norm(inner) * op_norm(outer)))
    return defect, bound
