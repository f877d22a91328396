"""Single- and multiple-measurement sparse coding.

Two solvers for the joint (row-sparse) coding problem

    min_C  1/2 ||Y - D C||_F^2   subject to a row-sparsity budget    (SOMP)
    min_C  1/2 ||Y - D C||_F^2 + lam * sum_j ||C_j||_2              (M-FOCUSS)

where ``D`` is an ``M x N`` dictionary with one atom per column and ``Y`` an
``M x K`` group of signals sharing a support.  Both have batched variants that
operate on stacks of groups ``(B, M, K)`` against one shared dictionary; the
tracker relies on those to score hundreds of candidates per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

#: rows of the M-FOCUSS iterate with a smaller l2 norm are pinned to zero
ROW_FREEZE = 1e-12

#: batch rows processed at once by M-FOCUSS (bounds the (b, M, N) temporary)
_FOCUSS_CHUNK = 256


@dataclass
class SparseCode:
    """Coefficient matrix returned by the solvers.

    ``coefficients`` is ``N x K``; row ``j`` holds the weights of atom ``j``
    across the ``K`` signals of the group.
    """

    coefficients: np.ndarray
    converged: bool = True
    n_iter: int = 0
    objective: list[float] = field(default_factory=list)

    @property
    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(np.linalg.norm(self.coefficients, axis=1) > 0)

    def column(self, k: int = -1) -> np.ndarray:
        return self.coefficients[:, k]


def normalize_atoms(D: np.ndarray) -> np.ndarray:
    """Scale every column to unit l2 norm. Zero columns become 1/sqrt(M)."""
    D = np.asarray(D, dtype=float)
    norms = np.linalg.norm(D, axis=0)
    out = np.empty_like(D)
    ok = norms > 0
    out[:, ok] = D[:, ok] / norms[ok]
    out[:, ~ok] = 1.0 / np.sqrt(D.shape[0])
    return out


def joint_objective(D: np.ndarray, Y: np.ndarray, C: np.ndarray, lam: float) -> float:
    """1/2 ||Y - DC||_F^2 + lam * ||C||_{2,1}."""
    R = Y - D @ C
    return 0.5 * float(np.sum(R * R)) + lam * float(np.linalg.norm(C, axis=1).sum())


def _check_dictionary(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] < 1 or D.shape[1] < 1:
        raise InvalidInputError(f"dictionary must be a non-empty 2-D array, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise InvalidInputError("dictionary contains non-finite entries")
    return D


def _check_group(D: np.ndarray, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise InvalidInputError(f"signal group must be M x K with K >= 1, got shape {Y.shape}")
    if Y.shape[0] != D.shape[0]:
        raise InvalidInputError(
            f"dimension mismatch: dictionary has {D.shape[0]} rows, signals have {Y.shape[0]}"
        )
    if not np.all(np.isfinite(Y)):
        raise InvalidInputError("signal group contains non-finite entries")
    return Y


def _check_batch(D: np.ndarray, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 3 or Y.shape[1] != D.shape[0] or Y.shape[2] < 1:
        raise InvalidInputError(
            f"batched signals must be (B, {D.shape[0]}, K) with K >= 1, got {Y.shape}"
        )
    if not np.all(np.isfinite(Y)):
        raise InvalidInputError("signal group contains non-finite entries")
    return Y


# ---------------------------------------------------------------------------
# SOMP
# ---------------------------------------------------------------------------


def somp_batch(
    D: np.ndarray,
    Y: np.ndarray,
    sparsity: int,
    gram: np.ndarray | None = None,
    DtY: np.ndarray | None = None,
) -> np.ndarray:
    """Simultaneous OMP on a stack of signal groups.

    Parameters
    ----------
    D : (M, N) array
        Dictionary with unit-norm columns.
    Y : (B, M, K) array
        ``B`` independent groups of ``K`` signals each.
    sparsity : int
        Number of atoms ``L`` selected per group.
    gram, DtY : optional
        Precomputed ``D.T @ D`` and ``D.T @ Y`` (shape ``(B, N, K)``).

    Returns
    -------
    (B, N, K) array of coefficients with at most ``sparsity`` nonzero rows per
    group.

    Atom selection maximizes ``||R^T d_j||_2`` over inactive atoms, lowest
    index on ties; after each selection all active coefficients are refit by
    least squares over every column of the group.
    """
    D = _check_dictionary(D)
    Y = _check_batch(D, Y)
    B, M, K = Y.shape
    N = D.shape[1]
    if sparsity < 0 or sparsity > min(M, N):
        raise InvalidInputError(f"sparsity must lie in [0, {min(M, N)}], got {sparsity}")
    C = np.zeros((B, N, K))
    if sparsity == 0 or B == 0:
        return C

    G = D.T @ D if gram is None else gram
    if DtY is None:
        DtY = np.matmul(D.T, Y)
    rows = np.arange(B)
    support = np.empty((B, sparsity), dtype=np.intp)
    active = np.zeros((B, N), dtype=bool)
    corr = DtY
    coef = None
    for s in range(sparsity):
        score = np.einsum("bnk,bnk->bn", corr, corr)
        score[active] = -np.inf
        j = np.argmax(score, axis=1)
        support[:, s] = j
        active[rows, j] = True
        S = support[:, : s + 1]
        G_SS = G[S[:, :, None], S[:, None, :]]
        rhs = DtY[rows[:, None], S]
        coef = np.linalg.pinv(G_SS, rcond=1e-10, hermitian=True) @ rhs
        if s + 1 < sparsity:
            corr = DtY - np.swapaxes(G[S], 1, 2) @ coef
    C[rows[:, None], support] = coef
    return C


def somp(D: np.ndarray, Y: np.ndarray, sparsity: int) -> SparseCode:
    """Simultaneous orthogonal matching pursuit for one ``M x K`` group.

    ``sparsity=0`` returns the all-zero code.

    >>> code = somp(np.eye(3), np.array([0.9, 0.1, 0.0]), 1)
    >>> code.active_rows.tolist(), float(code.coefficients[0, 0])
    ([0], 0.9)
    """
    D = _check_dictionary(D)
    Y = _check_group(D, Y)
    C = somp_batch(D, Y[None], sparsity)[0]
    return SparseCode(C, converged=True, n_iter=sparsity)


# ---------------------------------------------------------------------------
# M-FOCUSS
# ---------------------------------------------------------------------------


def _atom_outer_products(D: np.ndarray) -> np.ndarray:
    """``(N, M*M)`` stack of flattened ``d_j d_j^T``, so ``D W D^T`` is one matrix product."""
    return np.einsum("mj,nj->jmn", D, D).reshape(D.shape[1], -1)


def _focuss_step(D: np.ndarray, Y: np.ndarray, C: np.ndarray, lam: float, outer: np.ndarray) -> np.ndarray:
    # C <- W D^T (D W D^T + lam I)^-1 Y, W = diag(row norms of C)
    w = np.linalg.norm(C, axis=2)
    w[w < ROW_FREEZE] = 0.0
    M = D.shape[0]
    A = (w @ outer).reshape(-1, M, M)
    idx = np.arange(D.shape[0])
    A[:, idx, idx] += lam
    try:
        X = np.linalg.solve(A, Y)
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError(
            "singular system in M-FOCUSS update; use a positive regularization"
        ) from exc
    return w[:, :, None] * np.matmul(D.T, X)


def mfocuss_batch(
    D: np.ndarray,
    Y: np.ndarray,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 100,
    record: bool = False,
):
    """Regularized M-FOCUSS on a stack of signal groups.

    Returns ``(C, converged, n_iter, objectives)`` where ``C`` is ``(B, N, K)``,
    ``converged`` and ``n_iter`` are per-group arrays, and ``objectives`` is a
    list of per-group objective traces (empty lists unless ``record``).

    Each group stops updating once its iterate moves less than ``tol`` in
    Frobenius norm, so batching never changes a group's result.
    """
    D = _check_dictionary(D)
    Y = _check_batch(D, Y)
    if not np.isfinite(lam) or lam < 0:
        raise InvalidInputError(f"regularization must be finite and >= 0, got {lam}")
    if max_iter < 1:
        raise InvalidInputError(f"max_iter must be positive, got {max_iter}")
    B = Y.shape[0]
    C = np.matmul(D.T, Y)
    converged = np.zeros(B, dtype=bool)
    n_iter = np.zeros(B, dtype=int)
    objectives: list[list[float]] = [[] for _ in range(B)]
    if record:
        for b in range(B):
            objectives[b].append(joint_objective(D, Y[b], C[b], lam))

    outer = _atom_outer_products(D)
    for _ in range(max_iter):
        todo = np.flatnonzero(~converged)
        if todo.size == 0:
            break
        for start in range(0, todo.size, _FOCUSS_CHUNK):
            idx = todo[start : start + _FOCUSS_CHUNK]
            C_old = C[idx]
            C_new = _focuss_step(D, Y[idx], C_old, lam, outer)
            delta = np.linalg.norm((C_new - C_old).reshape(idx.size, -1), axis=1)
            C[idx] = C_new
            n_iter[idx] += 1
            converged[idx] = delta < tol
            if record:
                for b in idx:
                    objectives[b].append(joint_objective(D, Y[b], C[b], lam))
    return C, converged, n_iter, objectives


def mfocuss(
    D: np.ndarray,
    Y: np.ndarray,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> SparseCode:
    """l2,1-regularized joint sparse coding by M-FOCUSS.

    Starts from ``D.T @ Y`` and iterates the reweighted update until the
    iterate moves less than ``tol`` or ``max_iter`` updates have run.  The
    returned ``objective`` holds the objective of the start point followed by
    one value per update; ``converged`` is False when the iteration budget ran
    out first.
    """
    D = _check_dictionary(D)
    Y = _check_group(D, Y)
    C, conv, n_iter, objs = mfocuss_batch(D, Y[None], lam, tol, max_iter, record=True)
    return SparseCode(C[0], converged=bool(conv[0]), n_iter=int(n_iter[0]), objective=objs[0])


def sparse_code_single(
    D: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> SparseCode:
    """Lasso coding of one signal; the one-column case of :func:`mfocuss`."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidInputError(f"expected a single signal vector, got shape {y.shape}")
    return mfocuss(D, y[:, None], lam, tol, max_iter)
