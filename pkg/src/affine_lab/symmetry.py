"""Canonical rotation frame, Ricci data and the scalar-field ODE system.

For a hypersurface whose shape operator and difference tensor commute
with all rotations about a tangent axis X_1, an h-orthonormal frame
{X_1, ..., X_n} exists in which

    S = diag(a, b, ..., b),
    K_{X_1} = diag((n-1) r, -r, ..., -r),
    (K_{X_i})_{AB} = -r (delta_{Ai} delta_{B1} + delta_{Bi} delta_{A1}),

with r > 0 after orienting X_1.  The axis is the simple eigenvector of
S when a != b; otherwise the Ricci tensor of the metric connection has
eigenvalue split (n-2)((a-b)/2 + (n+1) r^2) and supplies the axis.  If
both spectra are isotropic the difference tensor vanishes and the point
lies on a quadric.

Along an integral curve of X_1 the scalars satisfy

    X_1(b)     = (a - b)(sigma - r),
    X_1(r)     = -((a - b)/2 + (n+1) sigma r),
    X_1(sigma) = -((a + b)/2 + n r^2 + sigma^2),

with X_i(a) = X_i(b) = X_i(r) = X_i(sigma) = 0 transversally; sigma is
the connection coefficient nabla^h_{X_i} X_1 = sigma X_i.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.interpolate import make_interp_spline

from . import duals as dn
from . import galg
from .affine_core import InducedStructure, blaschke_structure, riemann_hat
from .common import (EXACT_TOL, QuadricDetectedError, SymmetryHypothesisError)
from .multijet import Immersion


@dataclass
class CanonicalFrame:
    """h-orthonormal frame with the rotation axis first.

    ``X[:, 0]`` is the axis (oriented so r > 0); the remaining columns
    are any h-orthonormal completion, unique up to a rotation that the
    canonical form does not see.  ``sigma`` is only available when the
    structure carries derivative blocks (it involves the first
    derivative of the eigenvector field).
    """

    X: np.ndarray
    a: float
    b: float
    r: float
    sigma: Optional[float]
    route: str  # "shape" or "ricci"
    b_values: np.ndarray


@dataclass
class RicciData:
    """Ricci tensor of the metric connection plus its closed-form split."""

    ric: np.ndarray
    ev1: Optional[float] = None
    ev2: Optional[float] = None


def ricci_eigenvalues(n, a, b, r):
    """Closed-form Ricci eigenvalues in the canonical frame."""
    ev1 = (n - 1) * (n * r * r + 0.5 * (a + b))
    ev2 = 0.5 * a + 0.5 * (2 * n - 3) * b + 2.0 * r * r
    return ev1, ev2


def ricci_coord(s: InducedStructure) -> np.ndarray:
    """Ricci tensor of nabla^h in the coordinate frame."""
    if s.dhatGamma is None:
        raise ValueError("ricci tensor needs deriv_order >= 1 blocks")
    R = riemann_hat(galg.real_array(s.hatGamma), galg.real_array(s.dhatGamma))
    return np.einsum("abca->bc", R)


def ricci_tensor(s: InducedStructure,
                 frame: Optional[CanonicalFrame] = None) -> RicciData:
    """Ricci data; components in the canonical frame when one is given."""
    ric = ricci_coord(s)
    if frame is None:
        return RicciData(ric=ric)
    X = frame.X
    ric_f = X.T @ ric @ X
    ev1, ev2 = ricci_eigenvalues(s.n, frame.a, frame.b, frame.r)
    return RicciData(ric=ric_f, ev1=ev1, ev2=ev2)


def _dricci(s: InducedStructure) -> np.ndarray:
    """First derivatives of the coordinate Ricci tensor (needs d2hatGamma)."""
    if s.d2hatGamma is None:
        raise ValueError("Ricci derivative needs deriv_order >= 2 blocks")
    G = galg.real_array(s.hatGamma)
    dG = galg.real_array(s.dhatGamma)
    d2G = galg.real_array(s.d2hatGamma)
    dR = (d2G - d2G.transpose(0, 2, 1, 3, 4)
          + np.einsum("faed,bce->fabcd", dG, G)
          + np.einsum("aed,fbce->fabcd", G, dG)
          - np.einsum("fbed,ace->fabcd", dG, G)
          - np.einsum("bed,face->fabcd", G, dG))
    return np.einsum("fabca->fbc", dR)


def _simple_index(vals, iso_tol):
    """Index of an isolated simple eigenvalue among n values, or None."""
    n = vals.shape[0]
    scale = max(1.0, float(np.max(np.abs(vals))))
    order = np.argsort(vals)
    sv = vals[order]
    best = None
    for cand, rest in ((order[0], sv[1:]), (order[-1], sv[:-1])):
        spread = float(rest[-1] - rest[0])
        gap = float(min(abs(vals[cand] - rest[0]), abs(vals[cand] - rest[-1])))
        if gap > max(10.0 * spread, iso_tol * scale):
            if best is None or gap > best[1]:
                best = (cand, gap)
    return None if best is None else best[0]


def _gs_completion(x1, h):
    """h-orthonormal completion of x1 by Gram-Schmidt on coordinate vectors."""
    n = h.shape[0]
    basis = [x1]
    for j in range(n):
        v = np.zeros(n)
        v[j] = 1.0
        for w in basis:
            v = v - (w @ h @ v) * w
        nrm2 = float(v @ h @ v)
        if nrm2 > 1e-12:
            basis.append(v / np.sqrt(nrm2))
        if len(basis) == n:
            break
    if len(basis) < n:
        raise SymmetryHypothesisError("failed to complete an h-orthonormal frame")
    return np.stack(basis, axis=1)


def _dx1_eig(M, h, dM, dh, vals, vecs, i0):
    """Direction derivative of a simple generalised eigenvector.

    vecs are h-orthonormal solutions of M v = lam h v; returns d(v_{i0})
    given the direction derivatives of M and h.
    """
    n = vals.shape[0]
    lam = vals[i0]
    v0 = vecs[:, i0]
    coef = np.empty(n)
    for mu in range(n):
        if mu == i0:
            coef[mu] = -0.5 * float(v0 @ dh @ v0)
        else:
            coef[mu] = float(vecs[:, mu] @ (dM - lam * dh) @ v0) / (
                lam - vals[mu])
    return vecs @ coef


def canonical_frame(s: InducedStructure, *, iso_tol: float = 1e-6,
                    r_tol: float = EXACT_TOL) -> CanonicalFrame:
    """Extract the rotation axis, completion and scalars (a, b, r, sigma).

    Raises :class:`QuadricDetectedError` when both the shape operator
    and the Ricci tensor are isotropic and the difference tensor is
    below ``r_tol``: the canonical frame of a quadric is undefined.
    """
    n = s.n
    h = galg.real_array(s.h)
    S = galg.real_array(s.S)
    K = galg.real_array(s.K)
    MS = 0.5 * (np.einsum("ec,ea->ca", S, h) + np.einsum("ea,ec->ca", S, h))

    route = None
    vals, vecs = scipy.linalg.eigh(MS, h)
    idx = _simple_index(vals, iso_tol)
    if idx is not None:
        route = "shape"
        M = MS
    else:
        ric = None
        if s.dhatGamma is not None:
            ric = ricci_coord(s)
            ric = 0.5 * (ric + ric.T)
            vals, vecs = scipy.linalg.eigh(ric, h)
            idx = _simple_index(vals, iso_tol)
            if idx is not None:
                route = "ricci"
                M = ric
        if route is None:
            k_mag = float(np.max(np.abs(K)))
            if k_mag < r_tol or s.dhatGamma is None:
                raise QuadricDetectedError(
                    f"quadric detected: difference tensor below tolerance "
                    f"(max |K| = {k_mag:.3g}); symmetry group is O(n)")
            raise SymmetryHypothesisError(
                "no isolated axis in either the shape operator or the "
                "Ricci tensor spectrum")

    x1 = vecs[:, idx]
    kxx = np.einsum("abc,a,b->c", K, x1, x1)
    r = float(kxx @ h @ x1) / (n - 1)
    if r < 0:
        x1 = -x1
        r = -r
    X = _gs_completion(x1, h)
    Sx = S @ X
    a = float(X[:, 0] @ h @ Sx[:, 0])
    b_values = np.array([X[:, i] @ h @ Sx[:, i] for i in range(1, n)])
    b = float(np.mean(b_values))

    sigma = None
    if s.dS is not None:
        dh = galg.real_array(s.dh)
        hatG = galg.real_array(s.hatGamma)
        if route == "shape":
            dS = galg.real_array(s.dS)
            dM = 0.5 * (np.einsum("fec,ea->fca", dS, h)
                        + np.einsum("fea,ec->fca", dS, h)
                        + np.einsum("ec,fea->fca", S, dh)
                        + np.einsum("ea,fec->fca", S, dh))
        elif s.d2hatGamma is not None:
            dM = _dricci(s)
            dM = 0.5 * (dM + dM.transpose(0, 2, 1))
        else:
            dM = None
        if dM is not None:
            # the sign flip applied to x1 must also flip its derivative
            flip = 1.0 if float(vecs[:, idx] @ h @ x1) > 0 else -1.0
            dx1 = np.stack([
                flip * _dx1_eig(M, h, dM[f], dh[f], vals, vecs, idx)
                for f in range(n)])
            # nabla_f X1^c = d_f X1^c + hatGamma^c_{fD} X1^D, averaged as
            # h(nabla_{X_i} X_1, X_i) over the completion
            nab = dx1 + np.einsum("fDc,D->fc", hatG, x1)
            sig_vals = [float(np.einsum("f,fc,cd,d->", X[:, i], nab, h,
                                        X[:, i]))
                        for i in range(1, n)]
            sigma = float(np.mean(sig_vals))
    return CanonicalFrame(X=X, a=a, b=b, r=r, sigma=sigma, route=route,
                          b_values=b_values)


def canonical_form_residual(s: InducedStructure, f: CanonicalFrame) -> float:
    """Max deviation of S and K in the frame from the canonical pattern."""
    n = s.n
    X = f.X
    Xinv = np.linalg.inv(X)
    S_f = Xinv @ galg.real_array(s.S) @ X
    K_f = np.einsum("Cc,abc,aA,bB->ABC", Xinv, galg.real_array(s.K), X, X)
    P_S = np.diag([f.a] + [f.b] * (n - 1))
    P_K = np.zeros((n, n, n))
    P_K[0, 0, 0] = (n - 1) * f.r
    for i in range(1, n):
        P_K[0, i, i] = -f.r
        P_K[i, 0, i] = -f.r
        P_K[i, i, 0] = -f.r
    return max(float(np.max(np.abs(S_f - P_S))),
               float(np.max(np.abs(K_f - P_K))))


# -- fields along the axis -----------------------------------------------------


@dataclass
class AxisFields:
    """Scalars (a, b, r, sigma) read off with a known coordinate axis.

    ``dsdt`` converts coordinate-t derivatives to unit-speed axis
    derivatives: X_1(f) = f'(t) / dsdt.  Entries are tower scalars when
    the evaluation point carries perturbation levels.
    """

    a: object
    b: object
    r: object
    sigma: object
    dsdt: object
    sign: float


def axis_fields(F: Immersion, u, axis: int = 0, sign: Optional[float] = None,
                orth_tol: float = 1e-6) -> AxisFields:
    """Extract (a, b, r, sigma) assuming the rotation axis is a coordinate.

    Valid for warped-product parametrisations where the axis direction
    is h-orthogonal to the remaining coordinates (checked).  The whole
    computation is generic over tower scalars, so seeding ``u`` yields
    exact parameter derivatives of every field.
    """
    s = blaschke_structure(F, u, 0, check=False)
    n = s.n
    h, S, K, hatG, dh = s.h, s.S, s.K, s.hatGamma, s.dh
    h_re = galg.real_array(h)
    off = max(abs(h_re[axis, j]) for j in range(n) if j != axis)
    if off > orth_tol * max(1.0, abs(h_re[axis, axis])):
        raise SymmetryHypothesisError(
            f"axis coordinate not h-orthogonal to the fibers "
            f"(max cross term {off:.3g})")
    h00 = h[axis, axis]
    nrm = dn.sqrt(h00)
    r_num = 0.0
    for c in range(n):
        r_num = r_num + K[axis, axis, c] * h[c, axis]
    if sign is None:
        sign = 1.0 if dn.real(r_num) >= 0.0 else -1.0
    r = sign * r_num * dn.power(h00, -1.5) / (n - 1)
    a = 0.0
    for c in range(n):
        a = a + S[c, axis] * h[c, axis]
    a = a / h00
    tr = S[0, 0]
    for c in range(1, n):
        tr = tr + S[c, c]
    b = (tr - a) / (n - 1)
    div = -sign * dh[axis, axis, axis] * dn.power(h00, -1.5) * 0.5
    for A in range(n):
        div = div + hatG[A, axis, A] * (sign / nrm)
    sigma = div / (n - 1)
    return AxisFields(a=a, b=b, r=r, sigma=sigma, dsdt=sign * nrm, sign=sign)


def axis_transverse_derivatives(F: Immersion, u, axis: int = 0,
                                sign: Optional[float] = None) -> float:
    """Max |X_i(field)| over the fiber frame and the four scalars."""
    base = axis_fields(F, u, axis=axis, sign=sign)
    sign = base.sign
    s = blaschke_structure(F, u, 0, check=False)
    h = galg.real_array(s.h)
    n = s.n
    x1 = np.zeros(n)
    x1[axis] = sign / np.sqrt(h[axis, axis])
    X = _gs_completion(x1, h)
    grads = np.zeros((n, 4))
    for e in range(n):
        ue = [dn.push_level(x, 1.0 if i == e else 0.0)
              for i, x in enumerate(dn.align(list(u)))]
        fe = axis_fields(F, ue, axis=axis, sign=sign)
        for k, name in enumerate(("a", "b", "r", "sigma")):
            grads[e, k] = dn.split(getattr(fe, name))[1]
    worst = 0.0
    for i in range(1, n):
        worst = max(worst, float(np.max(np.abs(X[:, i] @ grads))))
    return worst


@dataclass
class OdeResidualReport:
    """Residuals of the three axis ODEs over the sampled parameter range."""

    b_eq: float
    r_eq: float
    sigma_eq: float
    points: int

    @property
    def max_residual(self):
        return max(self.b_eq, self.r_eq, self.sigma_eq)


def structure_ode_residual(fields, n: int, t_samples,
                           dsdt=None) -> OdeResidualReport:
    """Residuals of the canonical field ODE system along the axis.

    ``fields`` is a callable t -> (a, b, r, sigma) or an array of shape
    (len(t_samples), 4).  Callables built from tower arithmetic are
    differentiated exactly; otherwise derivatives come from a quintic
    spline through the samples.  ``dsdt`` (callable, array or None)
    rescales t-derivatives to unit-speed axis derivatives.
    """
    ts = np.asarray(t_samples, float)
    if ts.ndim != 1 or ts.shape[0] < 2:
        raise ValueError("need at least two t samples")

    def _dsdt(i, t):
        if dsdt is None:
            return 1.0
        if callable(dsdt):
            return float(dn.real(dsdt(t)))
        return float(dsdt[i])

    vals = np.empty((ts.shape[0], 4))
    ddt = np.empty((ts.shape[0], 4))
    analytic = callable(fields)
    if analytic:
        try:
            for i, t in enumerate(ts):
                out = fields(dn.push_level(t, 1.0))
                for k in range(4):
                    v, d = dn.split(out[k])
                    vals[i, k] = dn.real(v)
                    ddt[i, k] = dn.real(d)
        except (TypeError, ValueError, AttributeError):
            analytic = False
    if not analytic:
        if callable(fields):
            vals = np.array([[float(x) for x in fields(t)] for t in ts])
        else:
            vals = np.asarray(fields, float)
            if vals.shape != (ts.shape[0], 4):
                raise ValueError("fields array must have shape (len(t), 4)")
        k = min(5, ts.shape[0] - 1)
        for col in range(4):
            ddt[:, col] = make_interp_spline(ts, vals[:, col], k=k)(ts, nu=1)

    res = np.zeros(3)
    for i, t in enumerate(ts):
        a, b, r, sg = vals[i]
        scale = _dsdt(i, t)
        xb, xr, xs = ddt[i, 1] / scale, ddt[i, 2] / scale, ddt[i, 3] / scale
        res[0] = max(res[0], abs(xb - (a - b) * (sg - r)))
        res[1] = max(res[1], abs(xr + 0.5 * (a - b) + (n + 1) * sg * r))
        res[2] = max(res[2], abs(xs + 0.5 * (a + b) + n * r * r + sg * sg))
    return OdeResidualReport(b_eq=float(res[0]), r_eq=float(res[1]),
                             sigma_eq=float(res[2]), points=ts.shape[0])
