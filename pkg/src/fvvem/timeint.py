"""CFL time-step control and the semi-implicit IMEX Runge-Kutta stage loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TimeIntError(Exception):
    pass


@dataclass
class ButcherPair:
    """Explicit/implicit tableau pair sharing the weights b."""

    name: str
    A_expl: np.ndarray     # strictly lower triangular
    A_impl: np.ndarray     # lower triangular, nonzero diagonal
    b: np.ndarray
    c_expl: np.ndarray
    c_impl: np.ndarray

    @property
    def stages(self) -> int:
        return len(self.b)


_SQRT2 = np.sqrt(2.0)
_GAMMA_222 = 1.0 - 1.0 / _SQRT2
_BETA_222 = 1.0 / (2.0 * _GAMMA_222)
_GAMMA_343 = 0.435866


def tableau(name: str) -> ButcherPair:
    """IMEX pairs: SP111 (order 1), LSDIRK222 (order 2), SADIRK343 (order 3).

    Constants carry the full printed precision; c columns come from row sums.
    """
    if name == "SP111":
        Ae = np.array([[0.0]])
        Ai = np.array([[1.0]])
        b = np.array([1.0])
    elif name == "LSDIRK222":
        g, be = _GAMMA_222, _BETA_222
        Ae = np.array([[0.0, 0.0],
                       [be, 0.0]])
        Ai = np.array([[g, 0.0],
                       [1.0 - g, g]])
        b = np.array([1.0 - g, g])
    elif name == "SADIRK343":
        g = _GAMMA_343
        Ae = np.array([[0.0, 0.0, 0.0, 0.0],
                       [g, 0.0, 0.0, 0.0],
                       [1.437745, -0.719812, 0.0, 0.0],
                       [0.916993, 0.5, -0.416993, 0.0]])
        Ai = np.array([[g, 0.0, 0.0, 0.0],
                       [0.0, g, 0.0, 0.0],
                       [0.0, 0.282066, g, 0.0],
                       [0.0, 1.208496, -0.644363, g]])
        b = np.array([0.0, 1.208496, -0.644363, g])
    else:
        raise TimeIntError(f"unknown IMEX scheme '{name}'")
    return ButcherPair(name, Ae, Ai, b, Ae.sum(axis=1), Ai.sum(axis=1))


def compute_dt(h: np.ndarray, max_eig_conv: np.ndarray, cfl: float,
               max_eig_full: np.ndarray | None = None) -> float:
    """dt = cfl * min(h_P / max|lambda|) over cells, convective eigenvalues only.

    When the convective eigenvalues vanish everywhere (cold start), the full
    eigenvalue set (celerity / viscous scale) is used for this step only.
    """
    if not 0.0 < cfl <= 1.0:
        raise TimeIntError("cfl must lie in (0, 1]")
    lam = np.asarray(max_eig_conv, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise TimeIntError("non-finite eigenvalue in dt computation")
    cold = np.max(lam) <= 0.0
    if max_eig_full is not None and np.max(lam) <= 1e-12 * np.max(max_eig_full):
        cold = True       # velocities at roundoff level count as at-rest
    if cold:
        if max_eig_full is None or np.max(max_eig_full) <= 0.0:
            raise TimeIntError("vanishing eigenvalues: prescribe dt explicitly")
        lam = np.asarray(max_eig_full, dtype=float)
    mask = lam > 0.0
    return float(cfl * np.min(h[mask] / lam[mask]))


def imex_advance(state, pair: ButcherPair, stage_solver, dt: float):
    """One IMEX step of Eq-style stage machinery.

    stage_solver(state_E, state_I, tau, t_stage) must return the stage state
    solving  Q = state_I + tau * H(state_E, Q),  i.e. one semi-implicit update
    with effective step tau = a_ii * dt.  States are objects exposing
    .Q (array), .time, .copy(), and a model-owned .lincomb API used to form
    the accumulated stage inputs.  A single stage flux set is kept:
    k_i = (Q_i - state_I_base) / tau, reused by both tableaux.
    """
    s = pair.stages
    if s == 1:
        # reduces exactly (bitwise) to one first-order semi-implicit stage
        out = stage_solver(state, state, dt * pair.A_impl[0, 0], state.time)
        out.time = state.time + dt
        return out
    ks = []
    final = None
    for i in range(s):
        QE = state.lincomb(1.0, [(dt * pair.A_expl[i, j], ks[j]) for j in range(i)])
        QI = state.lincomb(1.0, [(dt * pair.A_impl[i, j], ks[j]) for j in range(i)])
        tau = dt * pair.A_impl[i, i]
        t_stage = state.time + pair.c_impl[i] * dt
        out = stage_solver(QE, QI, tau, t_stage)
        ks.append(out.flux_from(QI, tau))
        final = out
    new = state.lincomb(1.0, [(dt * pair.b[i], ks[i]) for i in range(s)])
    new.time = state.time + dt
    # stiffly accurate pairs: adopt the last stage's auxiliary fields
    if final is not None:
        new.adopt_auxiliary(final)
    return new
