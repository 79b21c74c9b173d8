"""Constructive ReLU approximation: hat bumps, products, path-space error.

The building blocks:

* psi  -- a trapezoid hat (1 on |a|<1, linear ramp to 0 by |a|=2),
  realized exactly by four ReLUs.
* phi_center -- product of per-coordinate scaled hats around a grid
  center.  Over the uniform center grid on the cube [-r, r]^d the
  phi's sum to one, so constants are reproduced exactly and Lipschitz
  functions are approximated to O(spacing).
* approx_square / approx_mul -- the sawtooth-refinement squaring
  network and the polarization-identity multiplier built from it,
  with error 2^(-2m-2) and 6 M^2 2^(-2m-2) after m refinement levels.
* product_bump_network -- the nested approximate product of the hat
  factors as one explicit Mlp, within d * delta of phi_center.

Every construction exists twice: as a fast closed-form evaluator and
as an actual weight/bias network; tests pin them to each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neural import Mlp, NetworkClassSpec, mlp_forward
from .sde import PathBatch


@dataclass(frozen=True)
class CenterGrid:
    """Uniform centers {-r, -r + 2r/(N-1), ..., r}^d on the cube Q_r."""

    radius_r: float
    n_per_dim: int
    dim: int

    def __post_init__(self):
        if self.radius_r <= 0.0:
            raise ValueError("radius_r must be > 0")
        if self.n_per_dim < 2:
            raise ValueError("n_per_dim must be >= 2")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius_r / (self.n_per_dim - 1)

    @property
    def scale(self) -> float:
        """Argument scaling of each hat factor, 3 (N-1) / (2 r)."""
        return 3.0 * (self.n_per_dim - 1) / (2.0 * self.radius_r)

    @property
    def axis_coords(self) -> np.ndarray:
        return -self.radius_r + self.spacing * np.arange(self.n_per_dim)

    @property
    def centers(self) -> np.ndarray:
        """All N^d centers as an (N^d, d) array, last axis fastest."""
        axes = [self.axis_coords] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def psi(a):
    """Hat value via its four-ReLU realization.

    relu(a+2) - relu(a+1) - relu(a-1) + relu(a-2) equals 1 on |a| < 1,
    2 - |a| on 1 <= |a| <= 2 and 0 outside.
    """
    a = np.asarray(a, dtype=float)
    r = np.maximum
    out = r(a + 2.0, 0.0) - r(a + 1.0, 0.0) - r(a - 1.0, 0.0) + r(a - 2.0, 0.0)
    return out if out.ndim else float(out)


def psi_piecewise(a):
    """Direct piecewise formula for psi, used to cross-check the ReLU form."""
    a = np.asarray(a, dtype=float)
    out = np.clip(2.0 - np.abs(a), 0.0, 1.0)
    return out if out.ndim else float(out)


def phi_center(x, center, grid: CenterGrid):
    """Product bump around `center`: prod_j psi(scale * (x_j - c_j)).

    Supported where ||x - center||_inf <= 4r / (3 (N-1)), strictly
    inside the 2r/(N-1) neighborhood.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    center = np.asarray(center, dtype=float)
    if x.shape[1] != grid.dim or center.shape != (grid.dim,):
        raise ValueError("dimension mismatch with the center grid")
    factors = psi(grid.scale * (x - center[None, :]))
    out = np.prod(factors, axis=1)
    return float(out[0]) if out.shape == (1,) else out


def partition_sum(x, grid: CenterGrid):
    """Sum of phi over all centers at the points x (1 on the cube)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = np.ones(x.shape[0])
    for j in range(grid.dim):
        fac = psi(grid.scale * (x[:, j:j + 1] - grid.axis_coords[None, :]))
        total = total * fac.sum(axis=1)
    return total


# --- sawtooth squaring and polarization multiplication ----------------------

def _sawtooth(u):
    r = np.maximum
    return 2.0 * r(u, 0.0) - 4.0 * r(u - 0.5, 0.0) + 2.0 * r(u - 1.0, 0.0)


def approx_square(x, m: int):
    """m-level sawtooth refinement of u -> u^2 on [0, 1].

    Exact at dyadic points of level m; error at most 2^(-2m-2)
    everywhere on [0, 1].
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("approx_square domain is [0, 1]")
    acc = arr.copy()
    tooth = arr
    for s in range(1, m + 1):
        tooth = _sawtooth(tooth)
        acc = acc - tooth / 4.0**s
    return acc if acc.ndim else float(acc)


def square_accuracy(m: int) -> float:
    return 2.0 ** (-2 * m - 2)


def approx_mul(x, y, m: int, bound_M: float):
    """Approximate product on [-M, M]^2 via the polarization identity.

    x y = 2 M^2 [ s((x+y)/2M) - s(x/2M) - s(y/2M) ] with s the
    approximate square of the absolute value; three squaring errors
    give the declared accuracy 6 M^2 2^(-2m-2).
    """
    M = float(bound_M)
    if M <= 0.0:
        raise ValueError("bound_M must be > 0")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(np.abs(xa) > M) or np.any(np.abs(ya) > M):
        raise ValueError(f"inputs must lie in [-{M}, {M}]")
    s = 2.0 * M
    out = 2.0 * M * M * (approx_square(np.abs(xa + ya) / s, m)
                         - approx_square(np.abs(xa) / s, m)
                         - approx_square(np.abs(ya) / s, m))
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    return float(out[0]) if scalar else out


def mul_accuracy(m: int, bound_M: float) -> float:
    """Declared sup error of approx_mul on its domain."""
    return 6.0 * bound_M**2 * 2.0 ** (-2 * m - 2)


# --- explicit network realizations ------------------------------------------

class _NetBuilder:
    """Assemble an Mlp layer by layer from sparse row descriptions.

    Each row is (coeffs, bias) where coeffs maps previous-layer column
    indices to weights.  Hidden layers get ReLU from the Mlp forward
    convention; finish() installs the affine output layer.
    """

    def __init__(self, d_in: int):
        self.dims = [d_in]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []

    def _pack(self, rows):
        w = np.zeros((len(rows), self.dims[-1]))
        b = np.zeros(len(rows))
        for i, (coeffs, bias) in enumerate(rows):
            for col, coef in coeffs.items():
                w[i, col] = coef
            b[i] = bias
        return w, b

    def hidden(self, rows) -> None:
        w, b = self._pack(rows)
        self.weights.append(w)
        self.biases.append(b)
        self.dims.append(len(rows))

    def finish(self, rows) -> Mlp:
        w, b = self._pack(rows)
        self.weights.append(w)
        self.biases.append(b)
        self.dims.append(len(rows))
        return Mlp(self.dims, self.weights, self.biases)


def _combine(taps: list[dict], coefs: list[float]) -> dict:
    out: dict = {}
    for tap, c in zip(taps, coefs):
        for col, coef in tap.items():
            out[col] = out.get(col, 0.0) + c * coef
    return out


def _scale_tap(tap: dict, c: float) -> dict:
    return {col: c * coef for col, coef in tap.items()}


def psi_network(scale: float = 1.0, shift: float = 0.0) -> Mlp:
    """One-input network computing psi(scale * x + shift) exactly."""
    b = _NetBuilder(1)
    b.hidden([({0: scale}, shift + off) for off in (2.0, 1.0, -1.0, -2.0)])
    return b.finish([({0: 1.0, 1: -1.0, 2: -1.0, 3: 1.0}, 0.0)])


def square_network(m: int) -> Mlp:
    """Network form of approx_square: m hidden layers of width 4."""
    if m < 1:
        raise ValueError("m must be >= 1")
    b = _NetBuilder(1)
    b.hidden([({0: 1.0}, 0.0), ({0: 1.0}, -0.5), ({0: 1.0}, -1.0),
              ({0: 1.0}, 0.0)])
    for s in range(1, m):
        tooth = {0: 2.0, 1: -4.0, 2: 2.0}
        acc = {0: -2.0 / 4.0**s, 1: 4.0 / 4.0**s, 2: -2.0 / 4.0**s, 3: 1.0}
        b.hidden([(tooth, 0.0), (tooth, -0.5), (tooth, -1.0), (acc, 0.0)])
    final = {0: -2.0 / 4.0**m, 1: 4.0 / 4.0**m, 2: -2.0 / 4.0**m, 3: 1.0}
    return b.finish([(final, 0.0)])


def _emit_mul_block(builder: _NetBuilder, a_tap: dict, b_tap: dict,
                    carries: list[dict], m: int, M: float) -> tuple[dict, list[dict]]:
    """Append the layers of one approximate multiplication to the builder.

    Returns the tap of the product output and the refreshed carry taps.
    Both inputs and all carried values must be representable without a
    bias and nonnegative (carries) so ReLU transports them exactly.
    """
    inv = 1.0 / (2.0 * M)
    plus = _combine([a_tap, b_tap], [inv, inv])
    minus = _scale_tap(plus, -1.0)
    rows = [(plus, 0.0), (minus, 0.0),
            (_scale_tap(a_tap, inv), 0.0), (_scale_tap(a_tap, -inv), 0.0),
            (_scale_tap(b_tap, inv), 0.0), (_scale_tap(b_tap, -inv), 0.0)]
    carry_base = len(rows)
    rows += [(c, 0.0) for c in carries]
    builder.hidden(rows)
    carries = [{carry_base + i: 1.0} for i in range(len(carries))]

    # abs-value taps feeding the three squarers
    sq_inputs = [{0: 1.0, 1: 1.0}, {2: 1.0, 3: 1.0}, {4: 1.0, 5: 1.0}]
    rows = []
    for u in sq_inputs:
        rows += [(u, 0.0), (u, -0.5), (u, -1.0), (u, 0.0)]
    carry_base = len(rows)
    rows += [(c, 0.0) for c in carries]
    builder.hidden(rows)
    carries = [{carry_base + i: 1.0} for i in range(len(carries))]

    for s in range(1, m):
        rows = []
        for blk in range(3):
            base = 4 * blk
            tooth = {base: 2.0, base + 1: -4.0, base + 2: 2.0}
            acc = {base: -2.0 / 4.0**s, base + 1: 4.0 / 4.0**s,
                   base + 2: -2.0 / 4.0**s, base + 3: 1.0}
            rows += [(tooth, 0.0), (tooth, -0.5), (tooth, -1.0), (acc, 0.0)]
        carry_base = len(rows)
        rows += [(c, 0.0) for c in carries]
        builder.hidden(rows)
        carries = [{carry_base + i: 1.0} for i in range(len(carries))]

    prod_tap: dict = {}
    for blk, sign in ((0, 1.0), (1, -1.0), (2, -1.0)):
        base = 4 * blk
        c = sign * 2.0 * M * M
        for col, coef in ((base, -2.0 / 4.0**m), (base + 1, 4.0 / 4.0**m),
                          (base + 2, -2.0 / 4.0**m), (base + 3, 1.0)):
            prod_tap[col] = prod_tap.get(col, 0.0) + c * coef
    return prod_tap, carries


def mul_network(m: int, bound_M: float = 1.0) -> Mlp:
    """Network form of approx_mul on [-M, M]^2."""
    if m < 1:
        raise ValueError("m must be >= 1")
    b = _NetBuilder(2)
    prod, _ = _emit_mul_block(b, {0: 1.0}, {1: 1.0}, [], m, float(bound_M))
    return b.finish([(prod, 0.0)])


def product_bump_network(center, grid: CenterGrid, m: int) -> Mlp:
    """The bump phi_center as one network of nested approximate products.

    For d = 1 the hat factor is exact; for d >= 2 the factors are
    combined innermost-first through approximate multipliers with
    M = 1, so the sup distance to phi_center is at most d * delta with
    delta = mul_accuracy(m, 1).
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    d = grid.dim
    if center.shape != (d,):
        raise ValueError("center dimension mismatch")
    s = grid.scale
    if d == 1:
        return psi_network(scale=s, shift=-s * center[0])
    if m < 1:
        raise ValueError("m must be >= 1")
    b = _NetBuilder(d)
    rows = []
    for j in range(d):
        for off in (2.0, 1.0, -1.0, -2.0):
            rows.append(({j: s}, -s * center[j] + off))
    b.hidden(rows)
    psi_taps = [{4 * j: 1.0, 4 * j + 1: -1.0, 4 * j + 2: -1.0, 4 * j + 3: 1.0}
                for j in range(d)]
    prod = psi_taps[d - 1]
    carries = psi_taps[:d - 1]
    for k in range(d - 2, -1, -1):
        prod, carries = _emit_mul_block(b, carries[k], prod, carries[:k],
                                        m, 1.0)
    return b.finish([(prod, 0.0)])


def bump_network_spec(grid: CenterGrid, m: int,
                      sparsity_K: int | None = None) -> NetworkClassSpec:
    """Declared size class of product_bump_network for this grid and m."""
    d = grid.dim
    if d == 1:
        depth = 2
        width = 4
    else:
        depth = (d - 1) * (m + 1) + 2
        width = max(4 * d, 12 + max(0, d - 2))
    kappa = max(4.0, grid.scale, grid.scale * grid.radius_r + 2.0)
    r_bound = 1.0 + d * mul_accuracy(m, 1.0)
    if sparsity_K is None:
        net = product_bump_network(np.zeros(d), grid, m)
        sparsity_K = sum(int(np.count_nonzero(p)) for p in net.parameters())
    return NetworkClassSpec(d_in=d, d_out=1, depth_L=depth, width_p=width,
                            sparsity_K=sparsity_K, weight_bound_kappa=kappa,
                            output_bound_R=r_bound)


# --- piecewise-constant approximation and its path-space error --------------

def piecewise_const_approx(g, grid: CenterGrid):
    """Return x -> sum_k g(c_k) phi_k(x) on the cube, 0 outside."""
    coords = grid.axis_coords
    if grid.dim == 1:
        # one-dimensional g is vectorized over scalar coordinates
        g_vals = np.asarray(g(coords), dtype=float)

        def approx(x):
            x = np.asarray(x, dtype=float)
            pts = x.reshape(-1, 1)
            fac = psi(grid.scale * (pts - coords[None, :]))
            out = fac @ g_vals
            out[np.abs(pts[:, 0]) > grid.radius_r] = 0.0
            return out.reshape(x.shape) if x.ndim else float(out[0])

        return approx

    centers = grid.centers
    g_vals = np.asarray([g(c) for c in centers], dtype=float)
    g_grid = g_vals.reshape((grid.n_per_dim,) * grid.dim)

    def approx(x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        facs = [psi(grid.scale * (pts[:, j:j + 1] - coords[None, :]))
                for j in range(grid.dim)]
        if grid.dim == 2:
            out = np.einsum("ni,nj,ij->n", facs[0], facs[1], g_grid)
        else:
            out = np.zeros(pts.shape[0])
            for k, c in enumerate(centers):
                w = np.ones(pts.shape[0])
                idx = np.unravel_index(k, g_grid.shape)
                for j in range(grid.dim):
                    w = w * facs[j][:, idx[j]]
                out += g_vals[k] * w
        out[np.max(np.abs(pts), axis=1) > grid.radius_r] = 0.0
        return out if np.asarray(x).ndim > 1 else float(out[0])

    return approx


@dataclass(frozen=True)
class PathApproxError:
    """Mean over paths of squared sup-norm gaps, split by region."""

    total: float
    interior: float
    tail: float
    interior_fraction: float = field(default=1.0)


def path_approx_error(g, grid: CenterGrid, batch: PathBatch) -> PathApproxError:
    """Pathwise sup-squared error of the bump approximation of g.

    Paths are recentered so x0 sits at the cube center.  The interior
    part measures |g - approx| where the recentered path stays in the
    cube; the tail part measures |g| (the approximation is 0 there)
    outside.
    """
    if grid.dim != 1:
        raise ValueError("path batches are one-dimensional")
    z = batch.values - batch.x0
    approx = piecewise_const_approx(g, grid)
    g_vals = np.asarray(g(z.ravel()), dtype=float).reshape(z.shape)
    a_vals = np.asarray(approx(z.ravel()), dtype=float).reshape(z.shape)
    inside = np.abs(z) <= grid.radius_r

    int_gap = np.where(inside, np.abs(g_vals - a_vals), 0.0).max(axis=1)
    tail_gap = np.where(~inside, np.abs(g_vals), 0.0).max(axis=1)
    total = np.maximum(int_gap, tail_gap)
    return PathApproxError(
        total=float((total**2).mean()),
        interior=float((int_gap**2).mean()),
        tail=float((tail_gap**2).mean()),
        interior_fraction=float(inside.all(axis=1).mean()),
    )
