"""
Comparison graph (all targets pooled) and Laplacian half-powers.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from labeling.comparisons_reader import ComparisonRecord
from tensorcore.linalg import eig_sym

NULL_EIGENVALUE = 1e-10


@dataclass
class ComparisonGraph:
    n_items: int
    adjacency: np.ndarray
    laplacian: np.ndarray
    labels: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def components(self):
        return [np.flatnonzero(self.labels == k) for k in range(self.n_components)]


def component_labels(adjacency: np.ndarray) -> np.ndarray:
    if adjacency.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _, labels = connected_components(csr_matrix(adjacency), directed=False)
    return labels.astype(np.int64)


def graph_laplacian(records: Sequence[ComparisonRecord], n_items: int) -> ComparisonGraph:
    """L = D - A, A_ab = number of comparisons between a and b over all targets."""
    A = np.zeros((n_items, n_items))
    for r in records:
        if r.item_a >= n_items or r.item_b >= n_items:
            raise ValueError(f"Comparison ({r.item_a}, {r.item_b}) outside 0..{n_items - 1}")
        A[r.item_a, r.item_b] += 1.0
        A[r.item_b, r.item_a] += 1.0
    L = np.diag(A.sum(axis=1)) - A
    return ComparisonGraph(n_items, A, L, component_labels(A))


def laplacian_half(L: np.ndarray, labels: Optional[np.ndarray] = None
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Square root, pseudo-inverse square root and null-space basis of L.

    Each connected component is a diagonal block and is decomposed on its own.

    Returns:
        (L^{1/2}, L^{+1/2}, basis) where the basis columns span the null space
        (the constant vector of every connected component, for a Laplacian)
    """
    L = np.asarray(L, dtype=np.float64)
    n = L.shape[0]
    if labels is None:
        off = -L.copy()
        np.fill_diagonal(off, 0.0)
        labels = component_labels((off != 0).astype(np.float64))
    root = np.zeros_like(L)
    pinv_root = np.zeros_like(L)
    n_comp = int(labels.max()) + 1 if n else 0
    null_columns = []
    for k in range(n_comp):
        idx = np.flatnonzero(labels == k)
        values, vectors = eig_sym(L[np.ix_(idx, idx)])
        values = np.maximum(values, 0.0)
        keep = values > NULL_EIGENVALUE
        sq = np.sqrt(values)
        inv_sq = np.where(keep, 1.0 / np.where(keep, sq, 1.0), 0.0)
        root[np.ix_(idx, idx)] = (vectors * sq) @ vectors.T
        pinv_root[np.ix_(idx, idx)] = (vectors * inv_sq) @ vectors.T
        for j in np.flatnonzero(~keep):
            column = np.zeros(n)
            column[idx] = vectors[:, j]
            null_columns.append(column)
    basis = np.stack(null_columns, axis=1) if null_columns else np.zeros((n, 0))
    return root, pinv_root, basis


def center_per_component(theta: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Subtract each connected component's column means."""
    theta = np.array(theta, dtype=np.float64)
    for k in range(int(labels.max()) + 1 if labels.size else 0):
        idx = labels == k
        theta[idx] -= theta[idx].mean(axis=0, keepdims=True)
    return theta
