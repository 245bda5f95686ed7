"""Evaluation of immersions together with mixed partials up to order 3.

An :class:`Immersion` wraps a map F: U in R^n -> R^(n+1).  For analytic
maps (built from the arithmetic in :mod:`affine_lab.duals`) the jet is
computed exactly by seeding one tower level per differentiation
direction and reading coefficients off the result; the parameter point
may itself carry tower levels from an enclosing derivative context, in
which case every jet entry keeps that depth.  Maps that are only
sample-defined (splines over integrated curves, measured data) fall
back to central finite differences with one Richardson extrapolation
step and an attached error estimate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import duals as dn
from .common import RANK_TOL, DomainError, NonImmersionError

_EPS = np.finfo(float).eps


@dataclass
class Immersion:
    """Parametrised hypersurface patch F: R^n -> R^(n+1).

    ``eval`` maps a length-n sequence of scalars to a length-(n+1)
    sequence.  Analytic immersions must accept tower scalars (use the
    functions from :mod:`affine_lab.duals` for transcendentals); set
    ``analytic=False`` for sample-defined maps, which restricts jets to
    the finite-difference path.
    """

    n: int
    eval: Callable[[Sequence], Sequence]
    domain: Optional[Sequence[tuple]] = None  # per-coordinate (lo, hi)
    analytic: bool = True
    name: str = ""
    rank_tol: float = RANK_TOL

    def check_domain(self, u):
        if self.domain is None:
            return
        for i, (lo, hi) in enumerate(self.domain):
            x = dn.real(u[i])
            if not (lo <= x <= hi):
                raise DomainError(
                    f"coordinate {i} = {x:.6g} outside [{lo}, {hi}]"
                    f"{' of ' + self.name if self.name else ''}")


@dataclass
class Jet:
    """Value and derivatives of an immersion at one parameter point.

    ``d1[a]``, ``d2[a][b]``, ``d3[a][b][c]`` hold the partial
    derivatives of F as ambient vectors; d2/d3 are stored fully
    symmetric (each index class is evaluated once and mirrored).
    Entries are floats when the point is real, tower scalars otherwise.
    """

    point: np.ndarray
    value: np.ndarray
    d1: np.ndarray
    d2: Optional[np.ndarray] = None
    d3: Optional[np.ndarray] = None
    order: int = 1
    fd_error: Optional[float] = None

    @property
    def n(self):
        return self.d1.shape[0]

    def truncated(self, order):
        if order > self.order:
            raise ValueError("cannot raise jet order by truncation")
        return Jet(self.point, self.value, self.d1,
                   self.d2 if order >= 2 else None,
                   self.d3 if order >= 3 else None,
                   order, self.fd_error)


def _finalize(arr):
    flat = arr.reshape(-1)
    if any(dn.is_dual(x) for x in flat):
        return arr
    return arr.astype(float)


def _rank_check(F, d1):
    from . import galg
    J = galg.real_array(d1)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] <= F.rank_tol * sv[0]:
        raise NonImmersionError(
            f"rank-deficient differential (sv ratio {sv[-1] / sv[0]:.3g})"
            f"{' of ' + F.name if F.name else ''}")


def eval_jet(F: Immersion, u, order: int = 3, *, check_rank: bool = True) -> Jet:
    """Jet of F at u up to ``order`` in {1, 2, 3}."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    u = list(u)
    if len(u) != F.n:
        raise ValueError(f"expected {F.n} coordinates, got {len(u)}")
    F.check_domain(u)
    if not F.analytic:
        return _fd_jet(F, u, order, check_rank)

    u = dn.align(u)
    n, m = F.n, F.n + 1
    value = np.empty(m, dtype=object)
    d1 = np.empty((n, m), dtype=object)
    d2 = np.empty((n, n, m), dtype=object) if order >= 2 else None
    d3 = np.empty((n, n, n, m), dtype=object) if order >= 3 else None

    for combo in itertools.combinations_with_replacement(range(n), order):
        x = []
        for i, ui in enumerate(u):
            xi = ui
            for d in combo:
                xi = dn.push_level(xi, 1.0 if i == d else 0.0)
            x.append(xi)
        w = F.eval(x)
        if len(w) != m:
            raise ValueError("immersion must map into R^(n+1)")
        for comp in range(m):
            wc = w[comp]
            value[comp] = dn.coeff(wc, 0, order)
            for subset_size in range(1, order + 1):
                for levels in itertools.combinations(range(order), subset_size):
                    mask = sum(1 << lv for lv in levels)
                    dirs = tuple(combo[lv] for lv in levels)
                    val = dn.coeff(wc, mask, order)
                    if subset_size == 1:
                        d1[dirs[0], comp] = val
                    elif subset_size == 2:
                        a, b = dirs
                        d2[a, b, comp] = val
                        d2[b, a, comp] = val
                    else:
                        for p in itertools.permutations(dirs):
                            d3[p[0], p[1], p[2], comp] = val

    value = _finalize(value)
    d1 = _finalize(d1)
    if d2 is not None:
        d2 = _finalize(d2)
    if d3 is not None:
        d3 = _finalize(d3)
    if check_rank:
        _rank_check(F, d1)
    point = np.array([dn.real(x) for x in u])
    return Jet(point, value, d1, d2, d3, order)


def jet_shift(jet: Jet, direction: int) -> Jet:
    """Jet of F at the point perturbed along a coordinate direction.

    Returns the order-(k-1) jet whose entries carry one extra tower
    level encoding the `direction` derivative: exactly the jet at
    ``u + eps * e_direction``.  Used to differentiate constructions that
    consume a jet without re-evaluating the immersion.
    """
    if jet.order < 2:
        raise ValueError("jet_shift needs at least an order-2 jet")
    n, m = jet.d1.shape
    value = np.empty(m, dtype=object)
    d1 = np.empty((n, m), dtype=object)
    for comp in range(m):
        value[comp] = dn.pair(jet.value[comp], jet.d1[direction, comp])
        for a in range(n):
            d1[a, comp] = dn.pair(jet.d1[a, comp], jet.d2[a, direction, comp])
    d2 = None
    if jet.order >= 3:
        d2 = np.empty((n, n, m), dtype=object)
        for a in range(n):
            for b in range(n):
                for comp in range(m):
                    d2[a, b, comp] = dn.pair(jet.d2[a, b, comp],
                                             jet.d3[a, b, direction, comp])
    point = jet.point.copy()
    return Jet(point, value, d1, d2, None, jet.order - 1, jet.fd_error)


# -- finite-difference fallback ------------------------------------------------


def _fd_steps(u, order):
    # Error balance with one Richardson level: h**4 truncation against
    # eps/h**k roundoff, so h ~ eps**(1/(k+4)) per derivative order k.
    scale = max(1.0, max(abs(dn.real(x)) for x in u))
    return {k: _EPS ** (1.0 / (k + 4)) * scale for k in (1, 2, 3)}


def _central(F, u, dirs, h):
    """Nested central difference of F along direction indices `dirs`."""
    if not dirs:
        return np.asarray(F.eval(list(u)), dtype=float)
    d, rest = dirs[0], dirs[1:]
    up = list(u)
    um = list(u)
    up[d] = up[d] + h
    um[d] = um[d] - h
    return (_central(F, up, rest, h) - _central(F, um, rest, h)) / (2.0 * h)


def _fd_jet(F, u, order, check_rank):
    u = [float(dn.real(x)) for x in u]
    n, m = F.n, F.n + 1
    steps = _fd_steps(u, order)
    value = np.asarray(F.eval(list(u)), dtype=float)
    mag = max(1.0, float(np.max(np.abs(value))))
    arrs = {1: np.empty((n, m)), 2: np.empty((n, n, m)), 3: np.empty((n, n, n, m))}
    err = 0.0
    for k in range(1, order + 1):
        h = steps[k]
        for combo in itertools.combinations_with_replacement(range(n), k):
            coarse = _central(F, u, combo, h)
            fine = _central(F, u, combo, h / 2.0)
            # central stencils have an even error expansion; one level of
            # Richardson cancels the h**2 term
            rich = (4.0 * fine - coarse) / 3.0
            est = np.max(np.abs(rich - fine)) + 8.0 * _EPS * mag / h ** k
            err = max(err, est)
            for p in itertools.permutations(combo):
                arrs[k][p] = rich
    d1 = arrs[1]
    if check_rank:
        _rank_check(F, d1)
    return Jet(np.asarray(u), value, d1,
               arrs[2] if order >= 2 else None,
               arrs[3] if order >= 3 else None,
               order, err)
