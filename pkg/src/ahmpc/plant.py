"""Double pendulum: two point masses on massless links, torques at the base
and the joint, linear damping, Euler discretization.

Angles are absolute, measured counterclockwise from straight up, so the
operating point (upright, at rest, zero torque) is the origin.  With
q = (th1, th2) the Euler-Lagrange equations in manipulator form are

    M(q) q'' = tau - v(q, q') + grav(q)

    M   = [[ (m1+m2) l1^2,    m2 l1 l2 c12 ],
           [ m2 l1 l2 c12,    m2 l2^2      ]]       c12 = cos(th1 - th2)
    v   = ( m2 l1 l2 s12 om2^2, -m2 l1 l2 s12 om1^2 )
    grav= ( (m1+m2) g l1 sin th1, m2 g l2 sin th2 )

Damping enters tau: by default -c1 om1 and -c2 om2 on the two generalized
coordinates; a relative mode damps the joint on (om2 - om1) instead.  The
mass matrix determinant m2 l1^2 l2^2 (m1 + m2 s12^2) is positive for all
angles, so the model has no singular configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .poly import PolyBundle, TaylorMap, Jet, jet_sin, jet_cos

STATE_DIM = 4
CONTROL_DIM = 2


@dataclass(frozen=True)
class PendulumParams:
    l1: float = 1.0
    l2: float = 2.0
    m1: float = 2.0
    m2: float = 1.0
    c1: float = 0.5
    c2: float = 0.5
    g: float = 9.8
    h: float = 0.1
    relative_damping: bool = False

    def __post_init__(self):
        for name in ("l1", "l2", "m1", "m2", "c1", "c2", "g", "h"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _accelerations(p: PendulumParams, th1, th2, om1, om2, u1, u2, sin, cos):
    """Generalized accelerations; generic over floats and jets."""
    a = (p.m1 + p.m2) * p.l1 * p.l1
    b = p.m2 * p.l1 * p.l2
    c = p.m2 * p.l2 * p.l2
    c12 = cos(th1 - th2)
    s12 = sin(th1 - th2)
    if p.relative_damping:
        tau1 = u1 - p.c1 * om1 + p.c2 * (om2 - om1)
        tau2 = u2 - p.c2 * (om2 - om1)
    else:
        tau1 = u1 - p.c1 * om1
        tau2 = u2 - p.c2 * om2
    rhs1 = tau1 - b * s12 * om2 * om2 + (p.m1 + p.m2) * p.g * p.l1 * sin(th1)
    rhs2 = tau2 + b * s12 * om1 * om1 + p.m2 * p.g * p.l2 * sin(th2)
    den = a * c - (b * c12) * (b * c12)
    al1 = (c * rhs1 - b * c12 * rhs2) / den
    al2 = (a * rhs2 - b * c12 * rhs1) / den
    return al1, al2


def continuous_dynamics(x, u, p: PendulumParams = PendulumParams()) -> np.ndarray:
    th1, th2, om1, om2 = x
    al1, al2 = _accelerations(p, th1, th2, om1, om2, u[0], u[1], math.sin, math.cos)
    return np.array([om1, om2, al1, al2])


def discrete_dynamics(x, u, p: PendulumParams = PendulumParams()) -> np.ndarray:
    """Euler step x + h*xdot."""
    th1, th2, om1, om2 = x
    al1, al2 = _accelerations(p, th1, th2, om1, om2, u[0], u[1], math.sin, math.cos)
    h = p.h
    return np.array([th1 + h * om1, th2 + h * om2, om1 + h * al1, om2 + h * al2])


def continuous_jacobians(x, u, p: PendulumParams = PendulumParams(),
                         sin=math.sin, cos=math.cos):
    """Exact (dxdot/dx, dxdot/du)."""
    th1, th2, om1, om2 = x
    a = (p.m1 + p.m2) * p.l1 * p.l1
    b = p.m2 * p.l1 * p.l2
    c = p.m2 * p.l2 * p.l2
    c12 = cos(th1 - th2)
    s12 = sin(th1 - th2)
    if p.relative_damping:
        tau1 = u[0] - p.c1 * om1 + p.c2 * (om2 - om1)
        tau2 = u[1] - p.c2 * (om2 - om1)
        dtau1_dom = (-(p.c1 + p.c2), p.c2)
        dtau2_dom = (p.c2, -p.c2)
    else:
        tau1 = u[0] - p.c1 * om1
        tau2 = u[1] - p.c2 * om2
        dtau1_dom = (-p.c1, 0.0)
        dtau2_dom = (0.0, -p.c2)
    rhs1 = tau1 - b * s12 * om2 * om2 + (p.m1 + p.m2) * p.g * p.l1 * sin(th1)
    rhs2 = tau2 + b * s12 * om1 * om1 + p.m2 * p.g * p.l2 * sin(th2)
    den = a * c - (b * c12) ** 2
    al1 = (c * rhs1 - b * c12 * rhs2) / den
    al2 = (a * rhs2 - b * c12 * rhs1) / den

    # d/dth of cos component: dc12 = -s12 * ddelta, ds12 = c12 * ddelta
    # with ddelta = +1 for th1, -1 for th2.
    dt = np.asarray(c12).dtype
    Jx = np.zeros((4, 4), dtype=dt if dt.kind == "f" else float)
    Jx[0, 2] = 1.0
    Jx[1, 3] = 1.0
    for col, ddelta in ((0, 1.0), (1, -1.0)):
        dc12 = -s12 * ddelta
        ds12 = c12 * ddelta
        drhs1 = -b * ds12 * om2 * om2
        drhs2 = b * ds12 * om1 * om1
        if col == 0:
            drhs1 += (p.m1 + p.m2) * p.g * p.l1 * cos(th1)
        else:
            drhs2 += p.m2 * p.g * p.l2 * cos(th2)
        dden = -2.0 * b * b * c12 * dc12
        dnum1 = c * drhs1 - b * (dc12 * rhs2 + c12 * drhs2)
        dnum2 = a * drhs2 - b * (dc12 * rhs1 + c12 * drhs1)
        Jx[2, col] = (dnum1 - al1 * dden) / den
        Jx[3, col] = (dnum2 - al2 * dden) / den
    for col, om_idx in ((2, 0), (3, 1)):
        if om_idx == 0:
            drhs1 = dtau1_dom[0]
            drhs2 = dtau2_dom[0] + 2.0 * b * s12 * om1
        else:
            drhs1 = dtau1_dom[1] - 2.0 * b * s12 * om2
            drhs2 = dtau2_dom[1]
        Jx[2, col] = (c * drhs1 - b * c12 * drhs2) / den
        Jx[3, col] = (a * drhs2 - b * c12 * drhs1) / den

    Ju = np.zeros((4, 2), dtype=Jx.dtype)
    Ju[2, 0] = c / den
    Ju[2, 1] = -b * c12 / den
    Ju[3, 0] = -b * c12 / den
    Ju[3, 1] = a / den
    return Jx, Ju


def discrete_jacobians(x, u, p: PendulumParams = PendulumParams()):
    """Exact (dx+/dx, dx+/du) of the Euler step."""
    Jx, Ju = continuous_jacobians(x, u, p)
    return np.eye(4) + p.h * Jx, p.h * Ju


def linearization(p: PendulumParams = PendulumParams()):
    """(F, G) of the discrete dynamics about the upright equilibrium."""
    return discrete_jacobians(np.zeros(4), np.zeros(2), p)


def energy(x, p: PendulumParams = PendulumParams()) -> float:
    """Kinetic plus potential energy (potential zero at the hanging pose)."""
    th1, th2, om1, om2 = x
    a = (p.m1 + p.m2) * p.l1 * p.l1
    b = p.m2 * p.l1 * p.l2
    c = p.m2 * p.l2 * p.l2
    ke = 0.5 * a * om1 * om1 + 0.5 * c * om2 * om2 + b * math.cos(th1 - th2) * om1 * om2
    pe = ((p.m1 + p.m2) * p.g * p.l1 * (1.0 + math.cos(th1))
          + p.m2 * p.g * p.l2 * (1.0 + math.cos(th2)))
    return ke + pe


def taylor_dynamics(d: int, p: PendulumParams = PendulumParams(), dtype=float) -> TaylorMap:
    """Taylor polynomials (degrees 1..d) of the discrete dynamics about the
    origin, in the stacked variables (x, u).

    ``dtype`` selects the working precision of the coefficients (float64 by
    default; np.longdouble for residual studies)."""
    if d > 6:
        raise ValueError("expansion degree capped at 6")
    n = STATE_DIM + CONTROL_DIM

    def seed(i: int) -> Jet:
        return Jet.variable(i, 0.0, n, d, dtype=dtype)

    th1, th2, om1, om2, u1, u2 = (seed(i) for i in range(n))
    al1, al2 = _accelerations(p, th1, th2, om1, om2, u1, u2, jet_sin, jet_cos)
    h = p.h
    outputs = [th1 + h * om1, th2 + h * om2, om1 + h * al1, om2 + h * al2]
    rows = []
    for jet in outputs:
        bundle = jet.bundle
        if abs(bundle.coeff((0,) * n)) > 1e-12:
            raise AssertionError("expansion point is not an equilibrium")
        rows.append(bundle.truncate(1, d))
    return TaylorMap(rows)


def hp_discrete_dynamics(x, u, p: PendulumParams = PendulumParams()) -> np.ndarray:
    """Euler step evaluated in extended precision; used by residual-order
    studies where float64 evaluation noise would mask the truncation error."""
    x = np.asarray(x, dtype=np.longdouble)
    u = np.asarray(u, dtype=np.longdouble)
    al1, al2 = _accelerations(p, x[0], x[1], x[2], x[3], u[0], u[1], np.sin, np.cos)
    h = p.h
    return np.array([x[0] + h * x[2], x[1] + h * x[3], x[2] + h * al1, x[3] + h * al2],
                    dtype=np.longdouble)


def hp_discrete_jacobians(x, u, p: PendulumParams = PendulumParams()):
    x = np.asarray(x, dtype=np.longdouble)
    u = np.asarray(u, dtype=np.longdouble)
    Jx, Ju = continuous_jacobians(x, u, p, sin=np.sin, cos=np.cos)
    return np.eye(4, dtype=np.longdouble) + p.h * Jx, p.h * Ju


def add_noise(x, rng: np.random.Generator | None, std: float = 0.02) -> np.ndarray:
    """State disturbance w ~ N(0, std^2 I); identity when rng is None."""
    x = np.asarray(x, dtype=float)
    if rng is None:
        return x.copy()
    return x + rng.normal(0.0, std, size=x.shape)
