"""Ground-truth generators for the differential-equation case studies: the
SIR epidemic ODE and a 1D transient convection-diffusion equation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded


@dataclass(frozen=True)
class SirConfig:
    r0_min: float = 0.01
    r0_max: float = 5.0
    t_min: float = 0.0
    t_max: float = 10.0
    s0: float = 0.98
    i0: float = 0.02
    r0_init: float = 0.0


@dataclass(frozen=True)
class ConvDiffConfig:
    alpha: float = 0.1
    b_min: float = -1.0
    b_max: float = 0.0
    nx: int = 64
    dt: float = 0.01
    t_final: float = 1.5


def solve_sir(r0: float, t_eval, config: SirConfig = SirConfig()) -> np.ndarray:
    """Removed fraction R(t) of the SIR system at the requested times."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))

    def rhs(_t, y):
        s, i, _r = y
        return [-r0 * s * i, r0 * s * i - i, i]

    sol = solve_ivp(rhs, (0.0, max(config.t_max, float(t_eval.max(initial=0.0)))),
                    [config.s0, config.i0, config.r0_init],
                    method="RK45", rtol=1e-8, atol=1e-10, dense_output=True)
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"SIR integration failed: {sol.message}")
    return sol.sol(t_eval)[2]


@lru_cache(maxsize=256)
def _convdiff_grid(b: float, alpha: float, nx: int, dt: float, t_final: float):
    """Backward-Euler / linear-FEM solution on the full space-time grid.

    Dirichlet u=1 at x=1; the x=0 boundary term from integrating the
    diffusion term by parts is omitted (natural zero-flux condition).
    Returns (x nodes, t levels, U of shape (nt, nx+1)).
    """
    h = 1.0 / nx
    nn = nx + 1
    x = np.linspace(0.0, 1.0, nn)
    nt = int(round(t_final / dt))

    # consistent mass, diffusion stiffness and convection matrices (tridiag)
    mass_d = np.full(nn, 2.0 * h / 3.0)
    mass_d[0] = mass_d[-1] = h / 3.0
    mass_o = np.full(nn - 1, h / 6.0)
    stiff_d = np.full(nn, 2.0 / h)
    stiff_d[0] = stiff_d[-1] = 1.0 / h
    stiff_o = np.full(nn - 1, -1.0 / h)
    # int phi_i phi_j' : antisymmetric pattern, boundary rows +-1/2
    conv_upper = np.full(nn - 1, 0.5)
    conv_lower = np.full(nn - 1, -0.5)
    conv_d = np.zeros(nn)
    conv_d[0] = -0.5
    conv_d[-1] = 0.5

    # system (M + dt*(alpha*K + b*C)) u^{n+1} = M u^n, banded storage
    ab = np.zeros((3, nn))
    ab[0, 1:] = mass_o + dt * (alpha * stiff_o + b * conv_upper)   # superdiag
    ab[1, :] = mass_d + dt * (alpha * stiff_d + b * conv_d)
    ab[2, :-1] = mass_o + dt * (alpha * stiff_o + b * conv_lower)  # subdiag
    # strong Dirichlet at the last node: replace its row, keep the
    # superdiagonal coupling of the adjacent interior equation
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0

    U = np.zeros((nt + 1, nn))
    u = np.zeros(nn)
    for step in range(nt):
        rhs = np.empty(nn)
        rhs[1:-1] = mass_o[:-1] * u[:-2] + mass_d[1:-1] * u[1:-1] + mass_o[1:] * u[2:]
        rhs[0] = mass_d[0] * u[0] + mass_o[0] * u[1]
        rhs[-1] = 1.0
        u = solve_banded((1, 1), ab, rhs)
        U[step + 1] = u
    U[:, -1][1:] = 1.0
    t_levels = np.linspace(0.0, t_final, nt + 1)
    return x, t_levels, U


def solve_convdiff(b: float, eval_points, config: ConvDiffConfig = ConvDiffConfig()) -> np.ndarray:
    """Solution u(x, t) of the convection-diffusion problem at (x, t) pairs,
    bilinearly interpolated from the space-time grid."""
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    if pts.shape[1] != 2:
        raise ValueError("eval_points must be (x, t) pairs")
    if not (config.b_min - 1e-12 <= b <= config.b_max + 1e-12):
        raise ValueError(f"b={b} outside [{config.b_min}, {config.b_max}]")
    if (pts[:, 0] < -1e-12).any() or (pts[:, 0] > 1 + 1e-12).any():
        raise ValueError("x outside [0, 1]")
    if (pts[:, 1] < -1e-12).any() or (pts[:, 1] > config.t_final + 1e-12).any():
        raise ValueError(f"t outside [0, {config.t_final}]")
    x, t_levels, U = _convdiff_grid(float(b), config.alpha, config.nx,
                                    config.dt, config.t_final)
    hx = x[1] - x[0]
    ht = t_levels[1] - t_levels[0]
    xi = np.clip(pts[:, 0] / hx, 0, len(x) - 1 - 1e-12)
    ti = np.clip(pts[:, 1] / ht, 0, len(t_levels) - 1 - 1e-12)
    i0 = xi.astype(int)
    j0 = ti.astype(int)
    fx = xi - i0
    ft = ti - j0
    return ((1 - ft) * ((1 - fx) * U[j0, i0] + fx * U[j0, i0 + 1])
            + ft * ((1 - fx) * U[j0 + 1, i0] + fx * U[j0 + 1, i0 + 1]))
