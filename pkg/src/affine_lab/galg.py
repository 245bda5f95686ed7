"""Small dense linear algebra generic over tower scalars.

numpy's LAPACK-backed routines only accept numeric dtypes, so the
decompositions used on perturbation-valued matrices are re-implemented
here with partial pivoting on the magnitude of the real part.  Float
inputs take the numpy fast path.
"""

from __future__ import annotations

import numpy as np

from . import duals as dn


def _is_object(a):
    return isinstance(a, np.ndarray) and a.dtype == object


def asarray(rows):
    """Array constructor that keeps Dual entries as objects."""
    arr = np.empty(np.shape(rows), dtype=object)
    flat = arr.reshape(-1)
    src = np.asarray(rows, dtype=object).reshape(-1)
    flat[:] = src
    return arr


def gsolve(A, B):
    """Solve A @ X = B with A (m, m) and B (m,) or (m, k)."""
    if not (_is_object(A) or _is_object(B)):
        return np.linalg.solve(np.asarray(A, float), np.asarray(B, float))
    m = A.shape[0]
    M = asarray(A).copy()
    vec = (np.ndim(B) == 1)
    X = asarray(B).reshape(m, -1).copy()
    k = X.shape[1]
    for col in range(m):
        piv = col + max(range(m - col),
                        key=lambda r: abs(dn.real(M[col + r, col])))
        if abs(dn.real(M[piv, col])) == 0.0:
            raise np.linalg.LinAlgError("singular matrix in gsolve")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            X[[col, piv]] = X[[piv, col]]
        inv_p = 1.0 / M[col, col]
        for r in range(col + 1, m):
            f = M[r, col] * inv_p
            for c in range(col + 1, m):
                M[r, c] = M[r, c] - f * M[col, c]
            for c in range(k):
                X[r, c] = X[r, c] - f * X[col, c]
    for col in range(m - 1, -1, -1):
        inv_p = 1.0 / M[col, col]
        for c in range(k):
            acc = X[col, c]
            for r in range(col + 1, m):
                acc = acc - M[col, r] * X[r, c]
            X[col, c] = acc * inv_p
    return X[:, 0] if vec else X


def gdet(A):
    """Determinant via elimination with partial pivoting.

    Sizes 1-3 use division-free cofactor expansion: they sit on the hot
    path of the generalised cross product.
    """
    if not _is_object(A):
        return float(np.linalg.det(np.asarray(A, float)))
    m = A.shape[0]
    if m == 1:
        return A[0, 0]
    if m == 2:
        return A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if m == 3:
        return (A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    M = asarray(A).copy()
    det = 1.0
    for col in range(m):
        piv = col + max(range(m - col),
                        key=lambda r: abs(dn.real(M[col + r, col])))
        if abs(dn.real(M[piv, col])) == 0.0:
            return 0.0 * M[0, 0]
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            det = -det
        det = det * M[col, col]
        inv_p = 1.0 / M[col, col]
        for r in range(col + 1, m):
            f = M[r, col] * inv_p
            for c in range(col + 1, m):
                M[r, c] = M[r, c] - f * M[col, c]
    return det


def ginv(A):
    m = A.shape[0]
    if not _is_object(A):
        return np.linalg.inv(np.asarray(A, float))
    return gsolve(A, np.eye(m))


def gdot(A, B):
    """Matrix/vector product tolerant of object dtypes."""
    if not (_is_object(A) or _is_object(B)):
        return np.asarray(A, float) @ np.asarray(B, float)
    return np.dot(A, B)


def real_array(A):
    """Elementwise real parts as a float array."""
    if not _is_object(A):
        return np.asarray(A, float)
    out = np.empty(A.shape)
    flat_in = A.reshape(-1)
    flat_out = out.reshape(-1)
    for i in range(flat_in.shape[0]):
        flat_out[i] = dn.real(flat_in[i])
    return out


def top_split_array(A):
    """Elementwise duals.split over an array: (value part, derivative part)."""
    lo = np.empty(A.shape, dtype=object)
    hi = np.empty(A.shape, dtype=object)
    fl, fo, fh = A.reshape(-1), lo.reshape(-1), hi.reshape(-1)
    any_dual = False
    for i in range(fl.shape[0]):
        a, b = dn.split(fl[i])
        fo[i], fh[i] = a, b
        any_dual = any_dual or dn.is_dual(a) or dn.is_dual(b)
    if not any_dual:
        return lo.astype(float), hi.astype(float)
    return lo, hi
