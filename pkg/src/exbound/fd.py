"""Implicit finite-difference pricing of European and American puts.

The Black-Scholes PDE is marched backward in time in log-price
coordinates y = ln(x), where it has constant coefficients:

    v_t + (sigma^2/2) v_yy + mu v_y - r v = 0,    mu = r - sigma^2/2.

Backward Euler in time and centered differences in space give, per
time step, a tridiagonal system A v^n = v^{n+1} + boundary terms.
For American puts each step additionally enforces v >= payoff, which
turns the step into a linear complementarity problem (LCP).  Two
enforcement variants are provided: projected SOR (solves the LCP to
tolerance) and a direct solve followed by projection onto the
obstacle (Brennan-Schwartz style, cheap cross-check).

Surfaces are stored in natural time: row 0 is the valuation date,
row n_time is maturity.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ConvergenceFailure(Exception):
    """Iterative obstacle solve did not reach tolerance within max_iter."""


class SingularSystemError(Exception):
    """Tridiagonal elimination hit a pivot too close to zero."""


@dataclass(frozen=True)
class MarketParams:
    """Risk-neutral diffusion parameters: dX = X (rate dt + volatility dB)."""

    rate: float
    volatility: float

    def __post_init__(self):
        if self.rate < 0.0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")
        if self.volatility <= 0.0:
            raise ValueError(f"volatility must be > 0, got {self.volatility}")

    @property
    def drift_mu(self) -> float:
        """Log-price drift rate - volatility^2 / 2."""
        return self.rate - 0.5 * self.volatility**2


@dataclass(frozen=True)
class GridSpec:
    """Uniform log-price lattice on [ln x_min, ln x_max] x [0, T]."""

    x_min: float
    x_max: float
    n_space: int
    maturity_T: float
    n_time: int
    y_nodes: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.x_min <= 0.0 or self.x_max <= self.x_min:
            raise ValueError(
                f"need 0 < x_min < x_max, got ({self.x_min}, {self.x_max})"
            )
        if self.n_space < 3:
            raise ValueError(f"n_space must be >= 3, got {self.n_space}")
        if self.n_time < 1:
            raise ValueError(f"n_time must be >= 1, got {self.n_time}")
        if self.maturity_T <= 0.0:
            raise ValueError(f"maturity_T must be > 0, got {self.maturity_T}")
        y = np.log(self.x_min) + np.arange(self.n_space) * self.dy
        object.__setattr__(self, "y_nodes", y)

    @property
    def dy(self) -> float:
        return (np.log(self.x_max) - np.log(self.x_min)) / (self.n_space - 1)

    @property
    def dt(self) -> float:
        return self.maturity_T / self.n_time

    @property
    def x_nodes(self) -> np.ndarray:
        return np.exp(self.y_nodes)

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n_time + 1) * self.dt


def build_grid(x_min: float, x_max: float, n_space: int, maturity_T: float,
               n_time: int) -> GridSpec:
    """Build the uniform log-price space-time grid."""
    return GridSpec(float(x_min), float(x_max), int(n_space),
                    float(maturity_T), int(n_time))


@dataclass(frozen=True)
class PutPayoff:
    """Vanilla put payoff max(strike - x, 0)."""

    strike: float

    def __post_init__(self):
        if self.strike <= 0.0:
            raise ValueError(f"strike must be > 0, got {self.strike}")

    def __call__(self, x):
        return np.maximum(self.strike - np.asarray(x, dtype=float), 0.0)


class SurfaceStyle(Enum):
    EUROPEAN = "european"
    AMERICAN = "american"


@dataclass
class PriceSurface:
    """Solution matrix u(t_n, x_j): (n_time+1) rows by n_space columns."""

    grid: GridSpec
    values: np.ndarray
    style: SurfaceStyle

    def value_at(self, t: float, x: float) -> float:
        """Bilinear interpolation in (t, x) inside the grid box."""
        g = self.grid
        if not (0.0 <= t <= g.maturity_T + 1e-12):
            raise ValueError(f"t={t} outside [0, {g.maturity_T}]")
        tn = min(t / g.dt, g.n_time)
        n0 = min(int(tn), g.n_time - 1)
        wt = tn - n0
        row = (1.0 - wt) * self.values[n0] + wt * self.values[n0 + 1]
        return float(np.interp(x, g.x_nodes, row))

    def interpolate_rows(self, x: np.ndarray) -> np.ndarray:
        """Linear interpolation of every time row at prices x (clamped)."""
        g = self.grid
        out = np.empty((self.values.shape[0], len(x)))
        for n in range(self.values.shape[0]):
            out[n] = np.interp(x, g.x_nodes, self.values[n])
        return out


def validate_surface(surface: PriceSurface, payoff: PutPayoff,
                     obstacle_slack: float = 1e-12) -> None:
    """Check the invariants a solver-produced surface must satisfy."""
    g = surface.grid
    vals = surface.values
    if vals.shape != (g.n_time + 1, g.n_space):
        raise ValueError(f"surface shape {vals.shape} does not match grid")
    if np.any(vals < 0.0):
        raise ValueError("negative surface values")
    terminal = payoff(g.x_nodes)
    if not np.array_equal(vals[-1], terminal):
        raise ValueError("terminal row does not equal the payoff")
    if surface.style is SurfaceStyle.AMERICAN:
        gap = vals - terminal[None, :]
        if gap.min() < -obstacle_slack:
            raise ValueError(f"obstacle violated by {-gap.min():.3e}")


class ObstacleVariant(Enum):
    PROJECTED_DIRECT = "projected_direct"
    PSOR = "psor"


@dataclass(frozen=True)
class ObstacleMethod:
    """How the early-exercise constraint is enforced each time step."""

    variant: ObstacleVariant = ObstacleVariant.PSOR
    omega: float = 1.2
    tol: float = 1e-8
    max_iter: int = 10000

    def __post_init__(self):
        if self.variant is ObstacleVariant.PSOR and not (0.0 < self.omega < 2.0):
            raise ValueError(f"omega must be in (0, 2), got {self.omega}")
        if self.tol <= 0.0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class TridiagonalSystem:
    """Interior-node coefficients of the implicit step.

    All three vectors have the interior length; lower[0] and upper[-1]
    couple to the Dirichlet boundary values and only enter the
    right-hand side, never the matrix itself.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if not (len(self.lower) == len(self.diag) == len(self.upper)):
            raise ValueError("coefficient vectors must have equal length")
        if np.any(self.diag == 0.0):
            raise ValueError("zero diagonal entry")

    @property
    def size(self) -> int:
        return len(self.diag)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out


def assemble_implicit_system(market: MarketParams,
                             grid: GridSpec) -> TridiagonalSystem:
    """Coefficients of the backward-Euler step at the unknown time level."""
    dt, dy = grid.dt, grid.dy
    sig2 = market.volatility**2
    mu = market.drift_mu
    m = grid.n_space - 2
    lower = np.full(m, -dt * (sig2 / (2.0 * dy**2) - mu / (2.0 * dy)))
    diag = np.full(m, 1.0 + dt * (sig2 / dy**2 + market.rate))
    upper = np.full(m, -dt * (sig2 / (2.0 * dy**2) + mu / (2.0 * dy)))
    return TridiagonalSystem(lower, diag, upper)


def thomas_solve(system: TridiagonalSystem, rhs: np.ndarray,
                 pivot_floor: float = 1e-14) -> np.ndarray:
    """Solve the tridiagonal system by forward elimination / back substitution."""
    m = system.size
    if len(rhs) != m:
        raise ValueError(f"rhs length {len(rhs)} != system size {m}")
    c_prime = np.empty(m)
    d_prime = np.empty(m)
    piv = system.diag[0]
    if abs(piv) < pivot_floor:
        raise SingularSystemError(f"pivot {piv:.3e} below {pivot_floor:.1e}")
    c_prime[0] = system.upper[0] / piv
    d_prime[0] = rhs[0] / piv
    for i in range(1, m):
        piv = system.diag[i] - system.lower[i] * c_prime[i - 1]
        if abs(piv) < pivot_floor:
            raise SingularSystemError(f"pivot {piv:.3e} below {pivot_floor:.1e}")
        c_prime[i] = system.upper[i] / piv
        d_prime[i] = (rhs[i] - system.lower[i] * d_prime[i - 1]) / piv
    v = np.empty(m)
    v[-1] = d_prime[-1]
    for i in range(m - 2, -1, -1):
        v[i] = d_prime[i] - c_prime[i] * v[i + 1]
    return v


def psor_step(system: TridiagonalSystem, rhs: np.ndarray,
              obstacle: np.ndarray, omega: float, tol: float,
              max_iter: int, initial: np.ndarray | None = None) -> np.ndarray:
    """Projected SOR sweep for A v = rhs subject to v >= obstacle.

    Each component is relaxed toward its Gauss-Seidel value and then
    projected onto the constraint.  Stops when the max-norm update
    falls below tol.
    """
    m = system.size
    v = np.maximum(initial.copy() if initial is not None else rhs.copy(),
                   obstacle)
    lower, diag, upper = system.lower, system.diag, system.upper
    for _ in range(max_iter):
        delta = 0.0
        prev = 0.0
        for j in range(m):
            acc = rhs[j]
            if j > 0:
                acc -= lower[j] * prev
            if j < m - 1:
                acc -= upper[j] * v[j + 1]
            cand = (1.0 - omega) * v[j] + omega * acc / diag[j]
            cand = max(cand, obstacle[j])
            delta = max(delta, abs(cand - v[j]))
            v[j] = cand
            prev = cand
        if delta < tol:
            return v
    raise ConvergenceFailure(
        f"PSOR did not converge in {max_iter} sweeps (last update {delta:.3e})"
    )


def _psor_step_vectorized(system: TridiagonalSystem, rhs: np.ndarray,
                          obstacle: np.ndarray, omega: float, tol: float,
                          max_iter: int,
                          initial: np.ndarray | None = None) -> np.ndarray:
    """Red-black variant of psor_step; same fixed point, array sweeps.

    Splitting by parity decouples the Gauss-Seidel updates within each
    color so they can be done as numpy slices.  Kept private: it is the
    engine behind price_american, while psor_step keeps the reference
    element order.
    """
    m = system.size
    v = np.maximum(initial.copy() if initial is not None else rhs.copy(),
                   obstacle)
    lower, diag, upper = system.lower, system.diag, system.upper
    colors = []
    for start in (0, 1):
        idx = np.arange(start, m, 2)
        pos_left = np.nonzero(idx > 0)[0]
        pos_right = np.nonzero(idx < m - 1)[0]
        colors.append((
            slice(start, m, 2),
            pos_left, idx[pos_left] - 1, lower[idx[pos_left]],
            pos_right, idx[pos_right] + 1, upper[idx[pos_right]],
        ))
    for _ in range(max_iter):
        delta = 0.0
        for sl, pl, src_l, coef_l, pr, src_r, coef_r in colors:
            acc = rhs[sl].copy()
            acc[pl] -= coef_l * v[src_l]
            acc[pr] -= coef_r * v[src_r]
            cand = np.maximum((1.0 - omega) * v[sl] + omega * acc / diag[sl],
                              obstacle[sl])
            if cand.size:
                delta = max(delta, float(np.max(np.abs(cand - v[sl]))))
            v[sl] = cand
        if delta < tol:
            return v
    raise ConvergenceFailure(
        f"PSOR did not converge in {max_iter} sweeps (last update {delta:.3e})"
    )


def _polish_lcp(system: TridiagonalSystem, rhs: np.ndarray,
                obstacle: np.ndarray, v: np.ndarray,
                slack: float = 1e-12) -> np.ndarray:
    """Resolve the free segments of a converged PSOR iterate exactly.

    The projection step writes binding components exactly onto the
    obstacle, so the active set can be read off by equality.  Each
    maximal free run is then a small tridiagonal solve.  If the exact
    candidate violates feasibility or complementarity (active set
    misread near the contact point), the iterate is kept as is.
    """
    active = v == obstacle
    if not active.any():
        return thomas_solve(system, rhs)
    if active.all():
        return v
    out = v.copy()
    m = system.size
    j = 0
    while j < m:
        if active[j]:
            j += 1
            continue
        a = j
        while j < m and not active[j]:
            j += 1
        b = j  # free run is [a, b)
        seg = TridiagonalSystem(system.lower[a:b], system.diag[a:b],
                                system.upper[a:b])
        seg_rhs = rhs[a:b].copy()
        if a > 0:
            seg_rhs[0] -= system.lower[a] * obstacle[a - 1]
        if b < m:
            seg_rhs[-1] -= system.upper[b - 1] * obstacle[b]
        out[a:b] = thomas_solve(seg, seg_rhs)
    scale = max(1.0, float(np.abs(rhs).max()))
    if (out - obstacle).min() < -slack * scale:
        return v
    resid = system.matvec(out) - rhs
    if resid[active].min() < -slack * scale:
        return v
    return out


def _march(market: MarketParams, grid: GridSpec, payoff: PutPayoff,
           lower_bc, upper_bc, obstacle: np.ndarray | None,
           method: ObstacleMethod | None) -> np.ndarray:
    """Backward time march shared by the European and American solvers.

    lower_bc(t) / upper_bc(t) give the Dirichlet values at x_min and
    x_max.  With an obstacle, each step is solved as an LCP per
    `method`.
    """
    system = assemble_implicit_system(market, grid)
    vals = np.empty((grid.n_time + 1, grid.n_space))
    vals[-1] = payoff(grid.x_nodes)
    t_nodes = grid.t_nodes
    for n in range(grid.n_time - 1, -1, -1):
        rhs = vals[n + 1, 1:-1].copy()
        bc_low = lower_bc(t_nodes[n])
        bc_high = upper_bc(t_nodes[n])
        rhs[0] -= system.lower[0] * bc_low
        rhs[-1] -= system.upper[-1] * bc_high
        if obstacle is None:
            interior = thomas_solve(system, rhs)
        elif method.variant is ObstacleVariant.PSOR:
            interior = _psor_step_vectorized(
                system, rhs, obstacle, method.omega, method.tol,
                method.max_iter, initial=vals[n + 1, 1:-1])
            interior = _polish_lcp(system, rhs, obstacle, interior)
        else:
            interior = np.maximum(thomas_solve(system, rhs), obstacle)
        vals[n, 0] = bc_low
        vals[n, 1:-1] = interior
        vals[n, -1] = bc_high
    return vals


def price_european(market: MarketParams, grid: GridSpec,
                   payoff: PutPayoff) -> PriceSurface:
    """Backward-Euler solve of the European put PDE on the grid."""
    K = payoff.strike

    def lower_bc(t):
        # discounted-strike asymptote at the deep in-the-money edge
        return max(K * np.exp(-market.rate * (grid.maturity_T - t))
                   - grid.x_min, 0.0)

    vals = _march(market, grid, payoff, lower_bc, lambda t: 0.0, None, None)
    np.maximum(vals, 0.0, out=vals)
    surface = PriceSurface(grid, vals, SurfaceStyle.EUROPEAN)
    validate_surface(surface, payoff)
    return surface


def price_american(market: MarketParams, grid: GridSpec, payoff: PutPayoff,
                   method: ObstacleMethod | None = None) -> PriceSurface:
    """Solve the free-boundary put problem: obstacle enforced every step."""
    if method is None:
        method = ObstacleMethod()
    obstacle = payoff(grid.x_nodes[1:-1])
    bc_low = float(payoff(grid.x_min))   # exercise region for x_min = K/2
    bc_high = float(payoff(grid.x_max))  # 0 for every in-range strike
    vals = _march(market, grid, payoff, lambda t: bc_low, lambda t: bc_high,
                  obstacle, method)
    surface = PriceSurface(grid, vals, SurfaceStyle.AMERICAN)
    validate_surface(surface, payoff)
    return surface


def brute_force_lcp(system: TridiagonalSystem, rhs: np.ndarray,
                    obstacle: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Solve the LCP by enumerating all 2^n active sets (oracle, n <= ~12).

    For each candidate set of binding components, fixes v = obstacle
    there, solves the reduced dense system on the rest, and accepts the
    first candidate that satisfies v >= obstacle and A v >= rhs with
    complementarity.
    """
    m = system.size
    if m > 16:
        raise ValueError("brute force enumeration is limited to small systems")
    dense = np.diag(system.diag)
    for i in range(1, m):
        dense[i, i - 1] = system.lower[i]
        dense[i - 1, i] = system.upper[i - 1]
    best = None
    for mask in range(2**m):
        active = np.array([(mask >> i) & 1 for i in range(m)], dtype=bool)
        v = obstacle.copy()
        free = ~active
        if free.any():
            sub = dense[np.ix_(free, free)]
            sub_rhs = rhs[free] - dense[np.ix_(free, active)] @ obstacle[active]
            try:
                v[free] = np.linalg.solve(sub, sub_rhs)
            except np.linalg.LinAlgError:
                continue
        resid = dense @ v - rhs
        if (v - obstacle).min() < -tol:
            continue
        if active.any() and resid[active].min() < -tol:
            continue
        if free.any() and np.abs(resid[free]).max() > tol:
            continue
        comp = np.abs(resid * (v - obstacle)).max()
        if comp > tol * max(1.0, np.abs(rhs).max()):
            continue
        best = v
        break
    if best is None:
        raise ConvergenceFailure("no active set satisfied the LCP conditions")
    return best


# --- serialization ----------------------------------------------------------

SURFACE_BINARY_MAGIC = b"XSRF"


def surface_to_csv(surface: PriceSurface) -> str:
    """Rows are prices, columns are times; full round-trip precision."""
    g = surface.grid
    buf = io.StringIO()
    buf.write("x," + ",".join(repr(float(t)) for t in g.t_nodes) + "\n")
    for j, x in enumerate(g.x_nodes):
        row = surface.values[:, j]
        buf.write(repr(float(x)) + "," +
                  ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def surface_to_binary(surface: PriceSurface, manifest_ref: str) -> bytes:
    """Flat little-endian float64 dump, row-major, after the manifest ref."""
    ref = manifest_ref.encode("utf-8")
    head = SURFACE_BINARY_MAGIC + struct.pack("<I", len(ref)) + ref
    head += struct.pack("<II", surface.values.shape[0], surface.values.shape[1])
    body = surface.values.astype("<f8").tobytes(order="C")
    return head + body


def surface_from_binary(blob: bytes, grid: GridSpec,
                        style: SurfaceStyle) -> tuple[PriceSurface, str]:
    """Inverse of surface_to_binary; returns the surface and manifest ref."""
    if blob[:4] != SURFACE_BINARY_MAGIC:
        raise ValueError("bad surface magic")
    (ref_len,) = struct.unpack_from("<I", blob, 4)
    ref = blob[8:8 + ref_len].decode("utf-8")
    off = 8 + ref_len
    n_rows, n_cols = struct.unpack_from("<II", blob, off)
    off += 8
    vals = np.frombuffer(blob, dtype="<f8", count=n_rows * n_cols,
                         offset=off).reshape(n_rows, n_cols).copy()
    if (n_rows, n_cols) != (grid.n_time + 1, grid.n_space):
        raise ValueError("surface shape does not match grid")
    return PriceSurface(grid, vals, style), ref


def surface_sha256(surface: PriceSurface) -> str:
    return hashlib.sha256(surface.values.astype("<f8").tobytes()).hexdigest()
