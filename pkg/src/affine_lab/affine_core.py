"""Blaschke normal, induced structure and structure-equation residuals.

Conventions.  For a transversal field xi, second derivatives of the
immersion decompose as

    d_a d_b F = Gamma^c_{ab} d_c F + h_{ab} xi,
    d_a xi    = -S^b_a d_b F + tau_a xi,

and the equiaffine (Blaschke) normal is singled out by tau = 0 together
with omega^2 = |det h| for the induced volume omega = det[dF | xi].

The affine metric is computed first: with any auxiliary transversal the
tentative metric h0 and volume omega0 rescale to the canonical

    h = h0 / lam,   |lam|^(n+2) = |det h0| / omega0^2,

the sign of lam chosen so h is positive definite (strict local
convexity).  The normal itself is then the metric Laplacian of the
position, xi = (1/n) Delta_h F, which satisfies both Blaschke
conditions; they are still verified numerically.

All constructions run unchanged on tower scalars, so derivatives of any
output field are obtained by seeding the parameter point (see
:mod:`affine_lab.duals`).  Tensor index layout: ``h[a,b]``,
``Gamma[a,b,c] = Gamma^c_{ab}``, ``K[a,b,c] = K^c_{ab}``,
``S[c,a] = S^c_a``, and derivative blocks carry the direction first
(``dh[e,a,b] = d_e h_{ab}``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import duals as dn
from . import galg
from .common import (EXACT_TOL, RESIDUAL_TOL, BlaschkeConditionError,
                     NonConvexError, TransversalError)
from .multijet import Immersion, Jet, eval_jet, jet_shift


@dataclass
class InducedStructure:
    """Affine invariants of a hypersurface at one parameter point."""

    point: np.ndarray
    n: int
    h: np.ndarray          # affine metric, coordinate frame
    S: np.ndarray          # shape operator S^c_a
    K: np.ndarray          # difference tensor K^c_{ab}
    Gamma: np.ndarray      # induced connection
    hatGamma: np.ndarray   # Levi-Civita connection of h
    tau: np.ndarray        # transversal connection form
    xi: np.ndarray         # transversal vector in R^(n+1)
    dh: np.ndarray         # d_e h_{ab}, needed for hatGamma anyway
    dxi: Optional[np.ndarray] = None
    # first-derivative blocks (direction index first)
    dS: Optional[np.ndarray] = None
    dK: Optional[np.ndarray] = None
    dGamma: Optional[np.ndarray] = None
    dhatGamma: Optional[np.ndarray] = None
    dtau: Optional[np.ndarray] = None
    # second derivative of the Levi-Civita symbols (Ricci derivative route)
    d2hatGamma: Optional[np.ndarray] = None


@dataclass
class ResidualReport:
    """Maxima of the structure-equation residuals over sampled points."""

    gauss_max: float
    codazzi_max: float
    ricci_max: float
    apolarity_max: float
    nabla_h_sym_max: float
    points_sampled: int
    tol_used: float

    def passed(self):
        return max(self.gauss_max, self.codazzi_max, self.ricci_max,
                   self.apolarity_max, self.nabla_h_sym_max) < self.tol_used

    def as_dict(self):
        return {
            "gauss_max": self.gauss_max,
            "codazzi_max": self.codazzi_max,
            "ricci_max": self.ricci_max,
            "apolarity_max": self.apolarity_max,
            "nabla_h_sym_max": self.nabla_h_sym_max,
            "points_sampled": self.points_sampled,
            "tol_used": self.tol_used,
            "pass": bool(self.passed()),
        }


def _empty_like(jet, shape):
    if jet.d1.dtype == object:
        return np.empty(shape, dtype=object)
    return np.empty(shape)


def _cross(d1):
    """Generalised cross product nu of the tangent vectors.

    nu is orthogonal to every d_a F and det[dF | nu] = |nu|^2 > 0, so it
    is a smooth transversal wherever the map is an immersion.
    """
    n, m = d1.shape
    cols = d1.T  # (n+1, n) with columns d_a F
    nu = np.empty(m, dtype=object if d1.dtype == object else float)
    for i in range(m):
        rows = [r for r in range(m) if r != i]
        minor = cols[rows, :]
        nu[i] = ((-1.0) ** (i + n)) * galg.gdet(minor)
    return nu


def affine_metric(jet: Jet):
    """Canonical (Blaschke) affine metric from an order >= 2 jet."""
    d1, d2 = jet.d1, jet.d2
    n, m = d1.shape
    nu = _cross(d1)
    B = _empty_like(jet, (m, m))
    for a in range(n):
        B[:, a] = d1[a]
    B[:, n] = nu
    npairs = n * (n + 1) // 2
    rhs = _empty_like(jet, (m, npairs))
    cols = []
    idx = 0
    for a in range(n):
        for b in range(a, n):
            rhs[:, idx] = d2[a, b]
            cols.append((a, b))
            idx += 1
    try:
        sol = galg.gsolve(B, rhs)
    except np.linalg.LinAlgError as exc:
        raise TransversalError(str(exc)) from None
    h0 = _empty_like(jet, (n, n))
    for idx, (a, b) in enumerate(cols):
        h0[a, b] = sol[n, idx]
        h0[b, a] = sol[n, idx]
    # definiteness decides the sign of the normalising factor
    ev = np.linalg.eigvalsh(galg.real_array(h0))
    scale = max(abs(ev[0]), abs(ev[-1]))
    if ev[0] > 0:
        sgn = 1.0
    elif ev[-1] < 0:
        sgn = -1.0
    else:
        raise NonConvexError(
            f"second fundamental form indefinite or degenerate "
            f"(eigenvalues in [{ev[0]:.3g}, {ev[-1]:.3g}], scale {scale:.3g})")
    # det[dF | nu] = |nu|^2 for the generalised cross product
    nu_sq = nu[0] * nu[0]
    for i in range(1, m):
        nu_sq = nu_sq + nu[i] * nu[i]
    omega0_sq = nu_sq * nu_sq
    alpha = dn.absolute(galg.gdet(h0)) / omega0_sq
    lam_inv = sgn * dn.power(alpha, -1.0 / (n + 2))
    h = _empty_like(jet, (n, n))
    for a in range(n):
        for b in range(a, n):
            h[a, b] = h0[a, b] * lam_inv
            h[b, a] = h[a, b]
    return h


def _levi_civita(h, dh):
    n = h.shape[0]
    hinv = galg.ginv(h)
    obj = h.dtype == object or (isinstance(dh, np.ndarray) and dh.dtype == object)
    hatG = np.empty((n, n, n), dtype=object if obj else float)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                acc = 0.0
                for e in range(n):
                    acc = acc + hinv[c, e] * (dh[a, b, e] + dh[b, a, e]
                                              - dh[e, a, b])
                hatG[a, b, c] = 0.5 * acc
    return hatG, hinv


def _blaschke_data(jet: Jet):
    """(xi, h, hatGamma, dh, hinv) of the Blaschke normalisation."""
    if jet.order < 3:
        raise ValueError("Blaschke normal needs an order-3 jet")
    n, m = jet.d1.shape
    h = affine_metric(jet)
    obj = h.dtype == object
    dh = np.empty((n, n, n), dtype=object)
    for e in range(n):
        h_shift = affine_metric(jet_shift(jet, e))
        _, hi = galg.top_split_array(h_shift)
        dh[e] = hi
        if isinstance(hi, np.ndarray) and hi.dtype == object:
            obj = True
    if not obj:
        dh = dh.astype(float)
    hatG, hinv = _levi_civita(h, dh)
    xi = np.empty(m, dtype=object if jet.d1.dtype == object else float)
    for i in range(m):
        acc = 0.0
        for a in range(n):
            for b in range(n):
                term = jet.d2[a, b, i]
                for c in range(n):
                    term = term - hatG[a, b, c] * jet.d1[c, i]
                acc = acc + hinv[a, b] * term
        xi[i] = acc / n
    return xi, h, hatG, dh, hinv


def blaschke_normal(jet: Jet, *, check: bool = True, tol: float = EXACT_TOL):
    """Equiaffine normal and affine metric from an order-3 jet.

    The volume normalisation omega^2 = |det h| is verified numerically
    on the real parts; the tau = 0 condition involves one more
    derivative order and is checked by :func:`blaschke_structure`.
    """
    xi, h, _, _, _ = _blaschke_data(jet)
    if check:
        _check_volume(jet, xi, h, tol)
    return xi, h


def _check_volume(jet, xi, h, tol):
    n, m = jet.d1.shape
    B = np.empty((m, m))
    for a in range(n):
        B[:, a] = galg.real_array(jet.d1[a])
    B[:, n] = galg.real_array(xi)
    omega = float(np.linalg.det(B))
    deth = float(np.linalg.det(galg.real_array(h)))
    err = abs(omega * omega - abs(deth))
    if err > tol * max(1.0, abs(deth)):
        raise BlaschkeConditionError(
            f"volume normalisation violated: |omega^2 - |det h|| = {err:.3g}")


def induced_structure(jet: Jet, xi, dxi=None) -> InducedStructure:
    """Structure induced by an arbitrary transversal field.

    ``xi`` is the transversal at the jet's base point and ``dxi`` its
    coordinate derivatives (``dxi[a]`` = d_a xi), required for the shape
    operator and tau.  With an order-3 jet the metric derivative, the
    Levi-Civita symbols and the difference tensor are produced as well.
    """
    n, m = jet.d1.shape
    xi = np.asarray(xi, dtype=object if jet.d1.dtype == object else None)
    Gamma, h, S, tau = _decompose(jet, xi, dxi)
    hatG = None
    dh = None
    K = None
    if jet.order >= 3 and dxi is not None:
        dh = np.empty((n, n, n), dtype=object)
        obj = False
        for e in range(n):
            sjet = jet_shift(jet, e)
            xi_s = np.array([dn.pair(xi[i], dxi[e][i]) for i in range(m)],
                            dtype=object)
            _, h_s, _, _ = _decompose(sjet, xi_s, None)
            _, hi = galg.top_split_array(h_s)
            dh[e] = hi
            obj = obj or (isinstance(hi, np.ndarray) and hi.dtype == object)
        if not obj:
            dh = dh.astype(float)
        hatG, _ = _levi_civita(h, dh)
        K = Gamma - hatG if Gamma.dtype != object else _sub(Gamma, hatG)
    return InducedStructure(point=jet.point, n=n, h=h, S=S, K=K, Gamma=Gamma,
                            hatGamma=hatG, tau=tau, xi=xi, dh=dh, dxi=dxi)


def _sub(A, B):
    out = np.empty(A.shape, dtype=object)
    fa, fb, fo = A.reshape(-1), np.asarray(B, object).reshape(-1), out.reshape(-1)
    for i in range(fa.shape[0]):
        fo[i] = fa[i] - fb[i]
    return out


def _decompose(jet, xi, dxi):
    n, m = jet.d1.shape
    obj = jet.d1.dtype == object or any(dn.is_dual(x) for x in xi)
    B = np.empty((m, m), dtype=object if obj else float)
    for a in range(n):
        B[:, a] = jet.d1[a]
    B[:, n] = xi
    npairs = n * (n + 1) // 2
    extra = n if dxi is not None else 0
    rhs = np.empty((m, npairs + extra), dtype=object if obj else float)
    cols = []
    idx = 0
    for a in range(n):
        for b in range(a, n):
            rhs[:, idx] = jet.d2[a, b]
            cols.append((a, b))
            idx += 1
    if dxi is not None:
        for a in range(n):
            rhs[:, npairs + a] = dxi[a]
    try:
        sol = galg.gsolve(B, rhs)
    except np.linalg.LinAlgError:
        raise TransversalError("transversal field is tangential at the point")
    Gamma = np.empty((n, n, n), dtype=object if obj else float)
    h = np.empty((n, n), dtype=object if obj else float)
    for idx, (a, b) in enumerate(cols):
        for c in range(n):
            Gamma[a, b, c] = sol[c, idx]
            Gamma[b, a, c] = sol[c, idx]
        h[a, b] = sol[n, idx]
        h[b, a] = sol[n, idx]
    S = None
    tau = None
    if dxi is not None:
        S = np.empty((n, n), dtype=object if obj else float)
        tau = np.empty(n, dtype=object if obj else float)
        for a in range(n):
            for c in range(n):
                S[c, a] = -sol[c, npairs + a]
            tau[a] = sol[n, npairs + a]
    return Gamma, h, S, tau


def _seed_point(u, direction):
    u = dn.align(list(u))
    return [dn.push_level(x, 1.0 if i == direction else 0.0)
            for i, x in enumerate(u)]


def _structure_core(F: Immersion, u, check: bool, tol: float) -> InducedStructure:
    jet = eval_jet(F, u, 3, check_rank=check)
    n, m = F.n, F.n + 1
    xi, h, hatG, dh, _ = _blaschke_data(jet)
    dxi = np.empty((n, m), dtype=object)
    for a in range(n):
        ua = _seed_point(u, a)
        jet_a = eval_jet(F, ua, 3, check_rank=False)
        xi_a, _, _, _, _ = _blaschke_data(jet_a)
        for i in range(m):
            dxi[a, i] = dn.split(xi_a[i])[1]
    if not any(dn.is_dual(x) for x in dxi.reshape(-1)):
        dxi = dxi.astype(float)
    Gamma, h2, S, tau = _decompose(jet, xi, dxi)
    K = Gamma - hatG if Gamma.dtype != object else _sub(Gamma, hatG)
    s = InducedStructure(point=jet.point, n=n, h=h, S=S, K=K, Gamma=Gamma,
                         hatGamma=hatG, tau=tau, xi=xi, dh=dh, dxi=dxi)
    if check:
        _check_volume(jet, xi, h, tol)
        tau_max = float(np.max(np.abs(galg.real_array(tau))))
        if tau_max > tol:
            raise BlaschkeConditionError(
                f"transversal form of the Blaschke normal not zero "
                f"(max |tau| = {tau_max:.3g})")
        hdiff = galg.real_array(h) - galg.real_array(h2)
        if float(np.max(np.abs(hdiff))) > tol * max(
                1.0, float(np.max(np.abs(galg.real_array(h))))):
            raise BlaschkeConditionError("metric/decomposition mismatch")
    return s


_BLOCKS = ("S", "K", "Gamma", "hatGamma", "tau")


def blaschke_structure(F: Immersion, u, deriv_order: int = 0, *,
                       check: bool = True,
                       tol: float = EXACT_TOL) -> InducedStructure:
    """Full Blaschke-normalised structure at u.

    ``deriv_order`` >= 1 attaches first derivatives of every field
    (obtained by re-running the construction at seeded points), which
    the structure-equation residuals and the canonical-frame extraction
    consume; ``deriv_order`` >= 2 additionally attaches the second
    derivative of the Levi-Civita symbols for the Ricci-eigenvector
    route.
    """
    s = _structure_core(F, u, check=check, tol=tol)
    if deriv_order <= 0:
        return s
    n = F.n
    firsts = {name: [] for name in _BLOCKS}
    d2hatG = []
    for a in range(n):
        ua = _seed_point(u, a)
        sa = blaschke_structure(F, ua, deriv_order - 1, check=False, tol=tol)
        for name in _BLOCKS:
            _, hi = galg.top_split_array(getattr(sa, name))
            firsts[name].append(hi)
        if deriv_order >= 2:
            _, hi = galg.top_split_array(sa.dhatGamma)
            d2hatG.append(hi)
    s.dS = np.stack(firsts["S"])
    s.dK = np.stack(firsts["K"])
    s.dGamma = np.stack(firsts["Gamma"])
    s.dhatGamma = np.stack(firsts["hatGamma"])
    s.dtau = np.stack(firsts["tau"])
    if deriv_order >= 2:
        s.d2hatGamma = np.stack(d2hatG)
    return s


# -- structure-equation residuals ----------------------------------------------


def riemann_hat(hatGamma, dhatGamma):
    """Curvature of the Levi-Civita connection.

    ``R[a,b,c,d]`` is the d-component of R(X_a, X_b) X_c.
    """
    G = np.asarray(hatGamma, float)
    dG = np.asarray(dhatGamma, float)
    return (dG - dG.transpose(1, 0, 2, 3)
            + np.einsum("aed,bce->abcd", G, G)
            - np.einsum("bed,ace->abcd", G, G))


def residual_fields(s: InducedStructure) -> dict:
    """Pointwise structure-equation residuals from a structure with
    first-derivative blocks."""
    if s.dK is None or s.dS is None or s.dhatGamma is None:
        raise ValueError("residuals need deriv_order >= 1 blocks")
    h = galg.real_array(s.h)
    S = galg.real_array(s.S)
    K = galg.real_array(s.K)
    G = galg.real_array(s.hatGamma)
    Gam = galg.real_array(s.Gamma)
    dh = galg.real_array(s.dh)
    dS = galg.real_array(s.dS)
    dK = galg.real_array(s.dK)
    dG = galg.real_array(s.dhatGamma)
    n = s.n
    eye = np.eye(n)

    Rhat = riemann_hat(G, dG)
    SH = np.einsum("ea,ec->ac", S, h)  # h(S X_a, X_c), symmetric
    comm = (np.einsum("aed,bce->abcd", K, K)
            - np.einsum("bed,ace->abcd", K, K))
    gauss_rhs = 0.5 * (np.einsum("bc,da->abcd", h, S)
                       - np.einsum("ac,db->abcd", h, S)
                       + np.einsum("bc,ad->abcd", SH, eye)
                       - np.einsum("ac,bd->abcd", SH, eye)) - comm
    gauss = float(np.max(np.abs(Rhat - gauss_rhs)))

    covK = (dK
            + np.einsum("aed,bce->abcd", G, K)
            - np.einsum("abe,ecd->abcd", G, K)
            - np.einsum("ace,bed->abcd", G, K))
    cod_lhs = covK - covK.transpose(1, 0, 2, 3)
    cod_rhs = 0.5 * (np.einsum("bc,da->abcd", h, S)
                     - np.einsum("ac,db->abcd", h, S)
                     + np.einsum("ac,bd->abcd", SH, eye)
                     - np.einsum("bc,ad->abcd", SH, eye))
    codazzi = float(np.max(np.abs(cod_lhs - cod_rhs)))

    covS = (dS.transpose(0, 2, 1)
            + np.einsum("aed,eb->abd", G, S)
            - np.einsum("abe,de->abd", G, S))  # covS[a,b,d] = (nabla_a S)^d_b
    ric_lhs = covS - covS.transpose(1, 0, 2)
    ric_rhs = (np.einsum("ea,ebd->abd", S, K)
               - np.einsum("eb,ead->abd", S, K))
    ricci = float(np.max(np.abs(ric_lhs - ric_rhs)))

    apolarity = float(np.max(np.abs(np.einsum("abb->a", K))))

    Th = (dh
          - np.einsum("abe,ec->abc", Gam, h)
          - np.einsum("ace,be->abc", Gam, h))
    nabla_h = 0.0
    for perm in ((0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        nabla_h = max(nabla_h, float(np.max(np.abs(Th - Th.transpose(perm)))))

    return {"gauss": gauss, "codazzi": codazzi, "ricci": ricci,
            "apolarity": apolarity, "nabla_h_sym": nabla_h}


def structure_residuals(F: Immersion, points, *,
                        tol: float = RESIDUAL_TOL) -> ResidualReport:
    """Aggregate structure-equation residuals over parameter points."""
    points = np.atleast_2d(np.asarray(points, float))
    agg = {"gauss": 0.0, "codazzi": 0.0, "ricci": 0.0,
           "apolarity": 0.0, "nabla_h_sym": 0.0}
    for u in points:
        s = blaschke_structure(F, list(u), deriv_order=1)
        r = residual_fields(s)
        for k in agg:
            agg[k] = max(agg[k], r[k])
    return ResidualReport(gauss_max=agg["gauss"], codazzi_max=agg["codazzi"],
                          ricci_max=agg["ricci"],
                          apolarity_max=agg["apolarity"],
                          nabla_h_sym_max=agg["nabla_h_sym"],
                          points_sampled=points.shape[0], tol_used=tol)
