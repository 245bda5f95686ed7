"""Generating-curve machinery for the classified families.

A planar curve gamma = (gamma_1, gamma_2) drives each family.  With
W = dd(gamma_1) d(gamma_2) - dd(gamma_2) d(gamma_1), the strict
convexity conditions are

    case 1:  epsilon * d(gamma_2) * gamma_1 * W < 0,
    case 2:  d(gamma_1) * gamma_1 * (-W) > 0,
    case 3:  W * d(gamma_2) > 0,

and the affine normal of the generated hypersurface is mu * phit +
nu * d_t with phit the fiber quadric's own normal (its position for
curved fibers, the constant vertical for flat ones).  mu solves

    case 1:  mu^(n+2) gamma_1^(n-1) d(gamma_2)^3 = +- epsilon^(n-1) W,
    case 2:  mu^(n+2) d(gamma_1)^3 gamma_1^(n-1) = +- (-W),
    case 3:  mu^(n+2) d(gamma_2)^3 = +- W,

with the branch fixed by positive definiteness of the induced metric,
and nu follows from the equiaffinity relation d(mu)/dt = -nu W /
d(gamma_2) (cases 1, 3; replace d(gamma_2) by -d(gamma_1)... see
normal_coefficients).  Affine spheres impose one more scalar equation
on gamma; those conditions double as residual checks and as second
order ODEs for reconstructing the curves numerically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import make_interp_spline

from . import duals as dn
from .common import (Case, ConvexityError, DegenerateCurveError, GaugeError,
                     InadmissibleSphereCaseError)
from .multijet import Immersion, eval_jet

_DEG_TOL = 1e-10


@dataclass
class CurveJet:
    """Curve value and derivatives up to order 3 at one parameter."""

    t: float
    g1: object
    g2: object
    d1g1: object
    d1g2: object
    d2g1: object
    d2g2: object
    d3g1: object = None
    d3g2: object = None

    @property
    def wronskian(self):
        """W = dd(g1) d(g2) - dd(g2) d(g1)."""
        return self.d2g1 * self.d1g2 - self.d2g2 * self.d1g1


@dataclass
class CurveDef:
    """Planar curve, analytic (tower-capable callables) or sampled."""

    name: str
    f1: Callable
    f2: Callable
    params: dict = field(default_factory=dict)
    t_domain: Optional[tuple] = None
    analytic: bool = True

    def _immersion(self):
        dom = [self.t_domain] if self.t_domain else None
        return Immersion(n=1, eval=lambda x: [self.f1(x[0]), self.f2(x[0])],
                         domain=dom, analytic=self.analytic,
                         name=self.name or "curve")

    def jet(self, t, order: int = 3) -> CurveJet:
        j = eval_jet(self._immersion(), [t], order, check_rank=False)
        return CurveJet(
            t=float(dn.real(t)), g1=j.value[0], g2=j.value[1],
            d1g1=j.d1[0, 0], d1g2=j.d1[0, 1],
            d2g1=j.d2[0, 0, 0] if order >= 2 else None,
            d2g2=j.d2[0, 0, 1] if order >= 2 else None,
            d3g1=j.d3[0, 0, 0, 0] if order >= 3 else None,
            d3g2=j.d3[0, 0, 0, 1] if order >= 3 else None)

    @classmethod
    def from_samples(cls, name, ts, g1, g2, params=None):
        """Sampled curve; jets fall back to finite differences."""
        ts = np.asarray(ts, float)
        k = min(5, ts.shape[0] - 1)
        s1 = make_interp_spline(ts, np.asarray(g1, float), k=k)
        s2 = make_interp_spline(ts, np.asarray(g2, float), k=k)
        return cls(name=name, f1=lambda t: float(s1(t)),
                   f2=lambda t: float(s2(t)), params=params or {},
                   t_domain=(float(ts[0]), float(ts[-1])), analytic=False)


def _jet_shift(cj: CurveJet) -> CurveJet:
    """Order-2 curve jet at a perturbed parameter (for exact d/dt)."""
    if cj.d3g1 is None:
        raise ValueError("need an order-3 curve jet")
    return CurveJet(t=cj.t,
                    g1=dn.pair(cj.g1, cj.d1g1), g2=dn.pair(cj.g2, cj.d1g2),
                    d1g1=dn.pair(cj.d1g1, cj.d2g1),
                    d1g2=dn.pair(cj.d1g2, cj.d2g2),
                    d2g1=dn.pair(cj.d2g1, cj.d3g1),
                    d2g2=dn.pair(cj.d2g2, cj.d3g2))


def _check_nondegenerate(case: Case, cj: CurveJet):
    dg1, dg2 = dn.real(cj.d1g1), dn.real(cj.d1g2)
    scale = max(1.0, abs(dg1), abs(dg2))
    if case is Case.CASE2:
        if abs(dg1) < _DEG_TOL * scale:
            raise DegenerateCurveError("d(gamma_1) vanishes (case 2)")
    else:
        if abs(dg2) < _DEG_TOL * scale:
            raise DegenerateCurveError(f"d(gamma_2) vanishes ({case.value})")


@dataclass
class ConvexityResult:
    ok: bool
    value: float
    required: str  # "negative" or "positive"


def convexity_check(case, cj: CurveJet, epsilon: Optional[int] = None
                    ) -> ConvexityResult:
    """Evaluate the case's strict convexity inequality at one jet."""
    case = Case.parse(case)
    _check_nondegenerate(case, cj)
    W = dn.real(cj.wronskian)
    g1 = dn.real(cj.g1)
    dg1, dg2 = dn.real(cj.d1g1), dn.real(cj.d1g2)
    if case is Case.CASE1:
        if epsilon not in (-1, 1):
            raise ValueError("case 1 needs epsilon in {-1, +1}")
        v = epsilon * dg2 * g1 * W
        return ConvexityResult(ok=v < 0.0, value=v, required="negative")
    if case is Case.CASE2:
        v = dg1 * g1 * (-W)
        return ConvexityResult(ok=v > 0.0, value=v, required="positive")
    v = W * dg2
    return ConvexityResult(ok=v > 0.0, value=v, required="positive")


@dataclass
class NormalCoefficients:
    """Coefficients of the analytic affine normal mu * phit + nu * d_t."""

    mu: float
    nu: float
    branch_sign: int


def _mu_sign(case: Case, cj: CurveJet, epsilon) -> float:
    """Sign of mu forced by positive definiteness of the induced metric."""
    if case is Case.CASE1:
        return -dn.sign(epsilon * dn.real(cj.g1))
    if case is Case.CASE2:
        return dn.sign(dn.real(cj.g1))
    return dn.sign(dn.real(cj.wronskian) * dn.real(cj.d1g2))


def _mu_rhs(case: Case, cj, n: int, epsilon):
    """mu^(n+2) with branch sign +1 (generic scalars)."""
    W = cj.d2g1 * cj.d1g2 - cj.d2g2 * cj.d1g1
    if case is Case.CASE1:
        return (float(epsilon) ** (n - 1)) * W / (
            dn.power(cj.g1, n - 1) * dn.power(cj.d1g2, 3))
    if case is Case.CASE2:
        return -W / (dn.power(cj.d1g1, 3) * dn.power(cj.g1, n - 1))
    return W / dn.power(cj.d1g2, 3)


def _mu_value(case, cj, n, epsilon, smu):
    rhs0 = _mu_rhs(case, cj, n, epsilon)
    if abs(dn.real(rhs0)) < 1e-300:
        raise DegenerateCurveError("normal equation right-hand side vanishes")
    return smu * dn.power(dn.absolute(rhs0), 1.0 / (n + 2)), rhs0


def normal_coefficients(case, cj: CurveJet, n: int,
                        epsilon: Optional[int] = None,
                        branch_sign: Optional[int] = None
                        ) -> NormalCoefficients:
    """Solve the normal equation for mu and derive nu from equiaffinity.

    The real (n+2)-th root is taken with the sign that makes the induced
    affine metric positive definite; the branch sign actually used is
    returned and checked against ``branch_sign`` when supplied.  nu is
    obtained by exact differentiation of the closed-form mu (fractional
    powers make finite differences cancellation-prone).
    """
    case = Case.parse(case)
    _check_nondegenerate(case, cj)
    smu = _mu_sign(case, cj, epsilon)
    mu, rhs0 = _mu_value(case, cj, n, epsilon, smu)
    pow_sign = 1.0 if (n + 2) % 2 == 0 else smu
    bs = int(pow_sign * dn.sign(dn.real(rhs0)))
    if branch_sign is not None and int(branch_sign) != bs:
        raise DegenerateCurveError(
            f"no real root with branch sign {branch_sign:+d}; the metric "
            f"forces {bs:+d}")
    mu_shift, _ = _mu_value(case, _jet_shift(cj), n, epsilon, smu)
    mu_dot = dn.split(mu_shift)[1]
    W = dn.real(cj.wronskian)
    if case is Case.CASE2:
        nu = dn.real(mu_dot) * dn.real(cj.d1g1) / W
    else:
        nu = -dn.real(mu_dot) * dn.real(cj.d1g2) / W
    return NormalCoefficients(mu=float(dn.real(mu)), nu=float(nu),
                              branch_sign=bs)


# -- affine-sphere conditions ---------------------------------------------------


def _sphere_sides(kind: str, case: Case, cj: CurveJet, n: int):
    """(L0, R) with the sphere equation reading c * L0 = R."""
    W = dn.real(cj.wronskian)
    g1, g2 = dn.real(cj.g1), dn.real(cj.g2)
    dg1, dg2 = dn.real(cj.d1g1), dn.real(cj.d1g2)
    if kind == "improper":
        if case is Case.CASE1:
            return dg1 ** (n + 2) * g1 ** (n - 1), dg2 ** (n - 1) * W
        if case is Case.CASE2:
            return dg1 ** 3 * g1 ** (n - 1), -W
        raise AssertionError("case 3 handled by constancy of the normal")
    if case is Case.CASE1:
        return (dg2 * g1 - dg1 * g2) ** (n + 2) * g1 ** (n - 1), \
            dg2 ** (n - 1) * W
    if case is Case.CASE2:
        return (dg1 * g2 - dg2 * g1) ** (n + 2) * g1 ** (n - 1), \
            dg1 ** (n - 1) * (-W)
    raise InadmissibleSphereCaseError(
        "proper affine spheres do not occur in case 3")


@dataclass
class SphereResidual:
    residual: float
    c: Optional[float]
    fitted: bool
    points: int


def _curve_jets(curve, t_samples, jets):
    if jets is not None:
        return list(jets)
    if t_samples is None:
        raise ValueError("need t_samples when passing a CurveDef")
    return [curve.jet(float(t), order=3) for t in np.asarray(t_samples, float)]


def sphere_residual(kind: str, case, curve=None, n: int = 3, *,
                    c: Optional[float] = None, t_samples=None,
                    jets=None, epsilon: Optional[int] = None
                    ) -> SphereResidual:
    """Scale-normalised residual of the affine-sphere condition.

    kind "improper"/"proper"; cases 1-3 improper and 1-2 proper are
    admissible.  For improper case 3 the condition is constancy of the
    analytic normal (no single scalar first integral exists there), and
    ``c`` is ignored.  Elsewhere the equation reads c * L0 = R; with
    ``c=None`` the constant is estimated by least squares over the
    samples before the residual is taken.
    """
    case = Case.parse(case)
    if kind not in ("improper", "proper"):
        raise ValueError("kind must be 'improper' or 'proper'")
    if kind == "proper" and case is Case.CASE3:
        raise InadmissibleSphereCaseError(
            "proper affine spheres do not occur in case 3")
    cjs = _curve_jets(curve, t_samples, jets)
    if kind == "improper" and case is Case.CASE3:
        xs = []
        for cj in cjs:
            nc = normal_coefficients(case, cj, n, epsilon=epsilon)
            xs.append([nc.mu + nc.nu * dn.real(cj.d1g1),
                       nc.nu * dn.real(cj.d1g2)])
        xs = np.asarray(xs)
        mean = xs.mean(axis=0)
        dev = float(np.max(np.abs(xs - mean)))
        return SphereResidual(residual=dev / max(1.0, float(np.max(np.abs(mean)))),
                              c=None, fitted=False, points=len(cjs))
    L0 = np.empty(len(cjs))
    R = np.empty(len(cjs))
    for i, cj in enumerate(cjs):
        L0[i], R[i] = _sphere_sides(kind, case, cj, n)
    fitted = c is None
    if fitted:
        denom = float(L0 @ L0)
        if denom == 0.0:
            raise DegenerateCurveError("sphere equation degenerate (L0 = 0)")
        c = float(L0 @ R) / denom
    res = 0.0
    for i in range(len(cjs)):
        L = c * L0[i]
        res = max(res, abs(L - R[i]) / max(abs(L), abs(R[i]), 1.0))
    return SphereResidual(residual=res, c=float(c), fitted=fitted,
                          points=len(cjs))


# -- sphere curves as ODEs ------------------------------------------------------


@dataclass
class IntegratedCurve:
    """Output samples of a sphere-curve integration."""

    ts: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    d1g1: np.ndarray
    d1g2: np.ndarray
    d2g1: np.ndarray
    d2g2: np.ndarray
    d3g1: np.ndarray
    d3g2: np.ndarray
    kind: str
    case: Case
    c: Optional[float]
    gauge: str
    complete: bool

    def jets(self) -> list:
        out = []
        for i in range(self.ts.shape[0]):
            out.append(CurveJet(
                t=float(self.ts[i]), g1=float(self.g1[i]), g2=float(self.g2[i]),
                d1g1=float(self.d1g1[i]), d1g2=float(self.d1g2[i]),
                d2g1=float(self.d2g1[i]), d2g2=float(self.d2g2[i]),
                d3g1=float(self.d3g1[i]), d3g2=float(self.d3g2[i])))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "gamma1", "gamma2", "dgamma1", "dgamma2"])
            for i in range(self.ts.shape[0]):
                w.writerow([repr(float(x)) for x in
                            (self.ts[i], self.g1[i], self.g2[i],
                             self.d1g1[i], self.d1g2[i])])

    def as_sampled_curvedef(self) -> CurveDef:
        return CurveDef.from_samples(
            f"integrated_{self.kind}_{self.case.value}",
            self.ts, self.g1, self.g2,
            params={"c": self.c, "gauge": self.gauge})


def _second_derivative(kind, case, c, n, gauge, extra):
    """Acceleration of the non-gauged component as f(g1, g2, dg1, dg2)."""
    if kind == "improper" and case is Case.CASE3:
        mu0, nu0, dg10 = extra
        # mu stays affine in the free velocity; the positive-definite
        # branch has mu > 0 and positive acceleration
        def acc(g1, g2, dg1, dg2):
            mu = mu0 + nu0 * (dg10 - dg1)
            return dn.power(mu, n + 2) * dg2 * dg2
        return acc
    if case is Case.CASE1:
        if kind == "improper":
            def num(g1, g2, dg1, dg2):
                return c * dn.power(dg1, n + 2) * dn.power(g1, n - 1)
        else:
            def num(g1, g2, dg1, dg2):
                return c * dn.power(dg2 * g1 - dg1 * g2, n + 2) * \
                    dn.power(g1, n - 1)
        if gauge == "d2":
            return lambda g1, g2, dg1, dg2: \
                num(g1, g2, dg1, dg2) / dn.power(dg2, n)
        return lambda g1, g2, dg1, dg2: \
            -num(g1, g2, dg1, dg2) / (dn.power(dg2, n - 1) * dg1)
    if case is Case.CASE2:
        if kind == "improper":
            def num(g1, g2, dg1, dg2):
                return c * dn.power(dg1, 3) * dn.power(g1, n - 1)
            if gauge == "d1":
                return lambda g1, g2, dg1, dg2: num(g1, g2, dg1, dg2) / dg1
            return lambda g1, g2, dg1, dg2: -num(g1, g2, dg1, dg2) / dg2

        def num(g1, g2, dg1, dg2):
            return c * dn.power(dg1 * g2 - dg2 * g1, n + 2) * \
                dn.power(g1, n - 1)
        if gauge == "d1":
            return lambda g1, g2, dg1, dg2: \
                num(g1, g2, dg1, dg2) / dn.power(dg1, n)
        return lambda g1, g2, dg1, dg2: \
            -num(g1, g2, dg1, dg2) / (dn.power(dg1, n - 1) * dg2)
    raise InadmissibleSphereCaseError(f"{kind} case {case.value} not integrable")


def sphere_curve_integrate(kind: str, case, c: Optional[float], n: int,
                           initial, t_range, *, gauge: Optional[str] = None,
                           rtol: float = 1e-10, atol: float = 1e-10,
                           num_output: int = 65,
                           initial_normal=None,
                           epsilon: Optional[int] = None) -> IntegratedCurve:
    """Integrate an affine-sphere condition as a second-order curve ODE.

    One velocity component is frozen by the gauge ("d1": d(gamma_1)
    constant, "d2": d(gamma_2) constant; defaults: case 2 -> "d1",
    cases 1/3 -> "d2"), the equation is solved for the remaining
    acceleration and advanced with an adaptive embedded Runge-Kutta
    pair.  ``initial`` is ((g1, g2), (dg1, dg2)) at t_range[0].
    Improper case 3 integrates constancy of the analytic normal and
    needs ``initial_normal`` (a NormalCoefficients or (mu, nu) pair) on
    top of the position/velocity data.  Integration stops early if the
    convexity expression crosses zero; the result is then flagged
    incomplete.
    """
    case = Case.parse(case)
    if kind == "proper" and case is Case.CASE3:
        raise InadmissibleSphereCaseError(
            "proper affine spheres do not occur in case 3")
    if gauge is None:
        gauge = "d1" if case is Case.CASE2 else "d2"
    if gauge not in ("d1", "d2"):
        raise ValueError("gauge must be 'd1' or 'd2'")
    (g10, g20), (dg10, dg20) = initial
    fixed = dg10 if gauge == "d1" else dg20
    if abs(fixed) < _DEG_TOL:
        raise GaugeError(f"gauge velocity {gauge} vanishes at t0")

    extra = None
    if kind == "improper" and case is Case.CASE3:
        if gauge != "d2":
            raise GaugeError("improper case 3 integration uses the d2 gauge")
        if initial_normal is None:
            raise ValueError("improper case 3 needs initial_normal=(mu, nu)")
        mu0 = getattr(initial_normal, "mu", None)
        nu0 = getattr(initial_normal, "nu", None)
        if mu0 is None:
            mu0, nu0 = initial_normal
        extra = (float(mu0), float(nu0))
    acc = _second_derivative(kind, case, c, n, gauge, extra)
    if extra is not None:
        acc.dg10 = float(dg10)

    free = 0 if gauge == "d2" else 1  # index of the non-gauged component

    def rhs(t, y):
        g1, g2, dfree = y
        dg1 = dfree if free == 0 else dg10
        dg2 = dfree if free == 1 else dg20
        return [dg1, dg2, acc(g1, g2, dg1, dg2)]

    def convexity_event(t, y):
        g1, g2, dfree = y
        dg1 = dfree if free == 0 else dg10
        dg2 = dfree if free == 1 else dg20
        a = acc(g1, g2, dg1, dg2)
        d2g1 = a if free == 0 else 0.0
        d2g2 = a if free == 1 else 0.0
        W = d2g1 * dg2 - d2g2 * dg1
        if case is Case.CASE1:
            return epsilon * dg2 * g1 * W if epsilon in (-1, 1) else -1.0
        if case is Case.CASE2:
            return -(dg1 * g1 * (-W))
        return -(W * dg2)

    convexity_event.terminal = True
    y0 = [float(g10), float(g20), float(dg10 if free == 0 else dg20)]
    t0, t1 = float(t_range[0]), float(t_range[-1])
    sol = solve_ivp(rhs, (t0, t1), y0, method="RK45", rtol=rtol, atol=atol,
                    dense_output=True, events=convexity_event)
    if not sol.success and sol.status != 1:
        raise GaugeError(f"integration failed: {sol.message}")
    complete = sol.status == 0
    t_end = sol.t[-1]
    ts = np.linspace(t0, t_end, num_output)
    Y = sol.sol(ts)
    g1 = Y[0]
    g2 = Y[1]
    d1g1 = Y[2] if free == 0 else np.full_like(ts, dg10)
    d1g2 = Y[2] if free == 1 else np.full_like(ts, dg20)
    d2 = np.array([acc(g1[i], g2[i], d1g1[i], d1g2[i])
                   for i in range(ts.shape[0])])
    d2g1 = d2 if free == 0 else np.zeros_like(ts)
    d2g2 = d2 if free == 1 else np.zeros_like(ts)
    return IntegratedCurve(ts=ts, g1=g1, g2=g2, d1g1=d1g1, d1g2=d1g2,
                           d2g1=d2g1, d2g2=d2g2, kind=kind, case=case,
                           c=c, gauge=gauge, complete=complete)


# -- builtin catalogue ----------------------------------------------------------


def builtin_curve(name: str, **params) -> CurveDef:
    """Named generating curves of the classification and its examples.

    calabi_proper_point(n)    (e^(-t/n), e^t)          case 1, epsilon -1
    calabi_semiprojective(n)  (e^(t/(n+1)), e^(-t/(n+1)))  case 2
    calabi_standard(n)        (e^(t/2), e^(-t/(n+1)))  case 3
    exp_pair(a, b)            (e^(a t), e^(b t))       case 1
    improper_case1()          exp_pair(1, 2)
    proper_case1(n)           exp_pair(1, -n)
    proper_case2()            (e^t, e^(-t))            case 2
    power_graph(c, n)         (t, c t^(n+1))           case 2, improper
    power_pair(c, n)          (c t^n, t^(n+1))         case 3, improper
    """
    key = name.strip().lower()
    if key == "calabi_proper_point":
        n = int(params["n"])
        return CurveDef(name, lambda t: dn.exp(t * (-1.0 / n)), dn.exp,
                        {"n": n})
    if key == "calabi_semiprojective":
        n = int(params["n"])
        k = 1.0 / (n + 1)
        return CurveDef(name, lambda t: dn.exp(t * k),
                        lambda t: dn.exp(t * (-k)), {"n": n})
    if key == "calabi_standard":
        n = int(params["n"])
        k = 1.0 / (n + 1)
        return CurveDef(name, lambda t: dn.exp(t * 0.5),
                        lambda t: dn.exp(t * (-k)), {"n": n})
    if key == "exp_pair":
        a, b = float(params["a"]), float(params["b"])
        return CurveDef(name, lambda t: dn.exp(t * a), lambda t: dn.exp(t * b),
                        {"a": a, "b": b})
    if key == "improper_case1":
        return builtin_curve("exp_pair", a=1.0, b=2.0)
    if key == "proper_case1":
        n = int(params["n"])
        return builtin_curve("exp_pair", a=1.0, b=-float(n))
    if key == "proper_case2":
        return builtin_curve("exp_pair", a=1.0, b=-1.0)
    if key == "power_graph":
        c, n = float(params["c"]), int(params["n"])
        return CurveDef(name, lambda t: t,
                        lambda t: c * dn.power(t, n + 1), {"c": c, "n": n})
    if key == "power_pair":
        c, n = float(params["c"]), int(params["n"])
        return CurveDef(name, lambda t: c * dn.power(t, n),
                        lambda t: dn.power(t, n + 1), {"c": c, "n": n})
    raise KeyError(f"unknown builtin curve {name!r}")
