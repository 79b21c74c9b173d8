"""Verification suites: each returns a structured pass/fail report.

Four suites cover the oracle cross-checks, the simulated-process
statistics, the pricing-map stability inequality, and the constructive
approximation error bounds.  Every assertion carries the numbers it
was judged on so reports are auditable after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fd import GridSpec, MarketParams, PutPayoff
from .neural import audit_class, mlp_forward
from .oracles import BsQuote, bs_call, bs_put, crr_american_put, normal_cdf
from .pou import (CenterGrid, approx_mul, approx_square, bump_network_spec,
                  mul_accuracy, mul_network, partition_sum, path_approx_error,
                  phi_center, piecewise_const_approx, product_bump_network,
                  psi, psi_piecewise, square_accuracy)
from .sde import (derive_seed, empirical_sup_moment, empirical_tail_prob,
                  lipschitz_gap_check, simulate_gbm, tail_decay_slope)

SUITE_NAMES = ("assumptions", "approximation", "lipschitz", "oracles")


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class SuiteReport:
    suite: str
    assertions: list[Assertion] = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def check(self, name: str, passed, **detail) -> None:
        self.assertions.append(Assertion(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def first_failure(self) -> str | None:
        for a in self.assertions:
            if not a.passed:
                return a.name
        return None

    def to_json_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "assertions": [
                {"name": a.name, "passed": a.passed, "detail": a.detail}
                for a in self.assertions
            ],
            "tables": self.tables,
        }


def verify_oracles(seed: int = 7) -> SuiteReport:
    rep = SuiteReport("oracles")
    rep.check("normal_cdf_center", abs(normal_cdf(0.0) - 0.5) == 0.0,
              value=normal_cdf(0.0))
    zs = np.linspace(-6, 6, 41)
    sym = max(abs(normal_cdf(z) + normal_cdf(-z) - 1.0) for z in zs)
    rep.check("normal_cdf_symmetry", sym < 1e-14, max_gap=sym)
    q975 = abs(normal_cdf(1.959963985) - 0.975)
    rep.check("normal_cdf_975_quantile", q975 < 1e-9, gap=q975)

    rng = np.random.default_rng(derive_seed(seed, "oracles:quotes"))
    worst = 0.0
    for _ in range(50):
        q = BsQuote(spot=float(rng.uniform(50, 150)),
                    strike=float(rng.uniform(60, 140)),
                    rate=float(rng.uniform(0.0, 0.2)),
                    volatility=float(rng.uniform(0.05, 0.6)),
                    tau=float(rng.uniform(0.05, 3.0)))
        gap = abs(bs_call(q) - bs_put(q)
                  - (q.spot - q.strike * np.exp(-q.rate * q.tau)))
        worst = max(worst, gap)
    rep.check("put_call_parity", worst < 1e-12, max_gap=worst)

    spots = np.linspace(70, 130, 10)
    strikes = np.linspace(80, 120, 10)
    puts = np.array([[bs_put(BsQuote(s, k, 0.1, 0.2, 1.0)) for k in strikes]
                     for s in spots])
    rep.check("bs_put_decreasing_in_spot", np.all(np.diff(puts, axis=0) <= 0))
    rep.check("bs_put_increasing_in_strike", np.all(np.diff(puts, axis=1) >= 0))
    vols = np.linspace(0.05, 0.6, 10)
    vp = np.array([bs_put(BsQuote(100, 100, 0.1, v, 1.0)) for v in vols])
    rep.check("bs_put_increasing_in_vol", np.all(np.diff(vp) >= 0))

    market = MarketParams(0.1, 0.2)
    tree = {n: crr_american_put(100.0, 100.0, market, 1.0, n)
            for n in (250, 500, 1000, 2000, 2500, 5000)}
    gaps = [abs(tree[2 * n] - tree[n]) for n in (250, 500, 1000, 2500)]
    rep.check("tree_self_convergence", all(a > b for a, b in zip(gaps, gaps[1:])),
              gaps=gaps)
    euro = bs_put(BsQuote(100, 100, 0.1, 0.2, 1.0))
    rep.check("early_exercise_premium", tree[5000] >= euro,
              american=tree[5000], european=euro)
    rep.tables["tree_values"] = {str(n): v for n, v in tree.items()}
    return rep


def verify_assumptions(market: MarketParams | None = None, x0: float = 100.0,
                       maturity_T: float = 1.0, n_paths: int = 100_000,
                       seed: int = 7) -> SuiteReport:
    if market is None:
        market = MarketParams(0.1, 0.2)
    rep = SuiteReport("assumptions")
    batch = simulate_gbm(x0, market, maturity_T, n_steps=50, n_paths=n_paths,
                         seed=derive_seed(seed, "assumptions:gbm"))

    disc = np.exp(-market.rate * maturity_T)
    mean = disc * batch.terminal.mean()
    se = disc * batch.terminal.std(ddof=1) / np.sqrt(n_paths)
    rep.check("martingale_mean", abs(mean - x0) <= 4.0 * se,
              discounted_mean=mean, x0=x0, std_error=se,
              z=abs(mean - x0) / se)

    m1 = empirical_sup_moment(batch, 1.0)
    envelope = 3.0 * x0 * np.exp(market.rate * maturity_T) \
        * np.exp(market.volatility**2 * maturity_T)
    rep.check("sup_moment_p1_envelope", np.isfinite(m1) and m1 < envelope,
              estimate=m1, envelope=envelope)

    unit = simulate_gbm(1.0, market, maturity_T, n_steps=50, n_paths=20_000,
                        seed=derive_seed(seed, "assumptions:unit"))
    m2 = empirical_sup_moment(unit, 2.0)
    m4 = empirical_sup_moment(unit, 4.0)
    rep.check("sup_moment_jensen", m4 >= m2**2, p2=m2, p4=m4)

    radii = (20.0, 40.0, 60.0)
    table, slope = tail_decay_slope(batch, radii)
    probs = [p for _, p in table]
    rep.check("tail_strictly_decreasing",
              all(a > b for a, b in zip(probs, probs[1:])), table=table)
    rep.check("tail_negative_slope_vs_r2", slope < 0.0, slope=slope)
    fine = [empirical_tail_prob(batch, r) for r in np.linspace(5, 120, 24)]
    rep.check("tail_monotone_in_radius",
              all(a >= b for a, b in zip(fine, fine[1:])))
    rep.tables["tail"] = {f"{r:g}": p for r, p in table}
    return rep


def verify_lipschitz(market: MarketParams | None = None,
                     grid: GridSpec | None = None, x0: float = 100.0,
                     n_paths: int = 10_000, seed: int = 7,
                     margin: float = 1.05) -> SuiteReport:
    from .fd import build_grid

    if market is None:
        market = MarketParams(0.1, 0.2)
    if grid is None:
        grid = build_grid(45.0, 180.0, 300, 1.0, 50)
    rep = SuiteReport("lipschitz")
    batch = simulate_gbm(x0, market, grid.maturity_T, n_steps=grid.n_time,
                         n_paths=n_paths, seed=derive_seed(seed, "lipschitz"))
    strikes = np.linspace(90.0, 120.0, 5)
    factor = 4.0 * np.exp(2.0 * market.rate * grid.maturity_T)
    worst_ratio = 0.0
    exit_fraction = None
    pair_rows = []
    ok = True
    for k1 in strikes:
        for k2 in strikes:
            gap = lipschitz_gap_check(market, grid, PutPayoff(k1),
                                      PutPayoff(k2), batch)
            exit_fraction = gap.exit_fraction
            bound = factor * (k1 - k2) ** 2
            if gap.rhs > bound * (1.0 + 1e-12):
                ok = False
            if gap.rhs > 0.0:
                worst_ratio = max(worst_ratio, gap.lhs / gap.rhs)
            elif gap.lhs > 0.0:
                ok = False
            pair_rows.append({"k1": k1, "k2": k2, "lhs": gap.lhs,
                              "rhs": gap.rhs})
    rep.check("pathwise_stability_bound", worst_ratio <= margin,
              worst_lhs_over_rhs=worst_ratio, margin=margin)
    rep.check("strike_lipschitz_rhs_bound", ok)
    rep.check("grid_exit_fraction_below_1pct", exit_fraction < 0.01,
              exit_fraction=exit_fraction)
    rep.tables["pairs"] = pair_rows
    return rep


def _grid_sup(f, ref, lo, hi, n) -> float:
    xs = np.linspace(lo, hi, n)
    return float(np.max(np.abs(np.asarray(f(xs)) - np.asarray(ref(xs)))))


def verify_approximation(market: MarketParams | None = None, x0: float = 100.0,
                         n_paths: int = 4_000, seed: int = 7) -> SuiteReport:
    if market is None:
        market = MarketParams(0.1, 0.2)
    rep = SuiteReport("approximation")
    rng = np.random.default_rng(derive_seed(seed, "approx:points"))

    # hat function agrees with its piecewise definition
    zs = rng.uniform(-3, 3, 1000)
    rep.check("hat_relu_equals_piecewise",
              float(np.max(np.abs(psi(zs) - psi_piecewise(zs)))) == 0.0)

    # partition of unity on the cube, several (d, N, r) configurations
    for d, n_per, r in ((1, 9, 2.0), (1, 33, 80.0), (2, 7, 1.5), (2, 5, 3.0)):
        grid = CenterGrid(r, n_per, d)
        pts = rng.uniform(-r, r, size=(1000, d))
        gap = float(np.max(np.abs(partition_sum(pts, grid) - 1.0)))
        rep.check(f"partition_of_unity_d{d}_N{n_per}", gap <= 1e-12,
                  max_gap=gap, r=r)

    # bump support: exact zero at and beyond 2r/(N-1)
    grid = CenterGrid(2.0, 9, 2)
    center = grid.centers[len(grid.centers) // 2]
    cutoff = 2.0 * grid.radius_r / (grid.n_per_dim - 1)
    dirs = rng.standard_normal((200, 2))
    dirs /= np.max(np.abs(dirs), axis=1, keepdims=True)  # inf-norm 1
    radii = cutoff * rng.uniform(1.0, 2.0, size=(200, 1))
    outside = center[None, :] + dirs * radii
    vals = phi_center(outside, center, grid)
    rep.check("bump_support_exact_zero", float(np.max(np.abs(vals))) == 0.0)
    inner = center + np.full(2, 0.9 * 4.0 * grid.radius_r
                             / (3.0 * (grid.n_per_dim - 1)))
    rep.check("bump_positive_inside_support",
              phi_center(inner, center, grid) > 0.0)

    # piecewise-constant error bound for Lipschitz test functions, d = 1
    grid = CenterGrid(2.0, 17, 1)
    bound_scale = 2.0 * grid.radius_r / (grid.n_per_dim - 1)
    xs = np.linspace(-grid.radius_r, grid.radius_r, 10_000)
    cases_1d = [
        ("constant", lambda z: np.full_like(np.asarray(z, float), 7.0), 0.0),
        ("linear", lambda z: 0.5 * np.asarray(z) + 1.0, 0.5),
        ("put", lambda z: np.maximum(-np.asarray(z), 0.0), 1.0),
    ]
    for name, g, lip in cases_1d:
        approx = piecewise_const_approx(g, grid)
        sup = float(np.max(np.abs(approx(xs) - g(xs))))
        bound = lip * bound_scale if lip > 0 else 1e-12
        rep.check(f"piecewise_error_d1_{name}", sup <= bound,
                  sup=sup, bound=bound)

    # same bound in d = 2 (constant and a linear form)
    grid = CenterGrid(1.5, 9, 2)
    bound_scale = 2.0 * grid.radius_r * np.sqrt(2.0) / (grid.n_per_dim - 1)
    xs = np.linspace(-grid.radius_r, grid.radius_r, 200)
    xx2, yy2 = np.meshgrid(xs, xs, indexing="ij")
    pts2 = np.stack([xx2.ravel(), yy2.ravel()], axis=1)
    cases_2d = [
        ("constant", lambda v: 7.0, 0.0),
        ("linear", lambda v: 0.5 * v[0] - 0.25 * v[1], float(np.hypot(0.5, 0.25))),
    ]
    for name, g, lip in cases_2d:
        approx = piecewise_const_approx(g, grid)
        ref = np.array([g(p) for p in pts2])
        sup = float(np.max(np.abs(approx(pts2) - ref)))
        bound = lip * bound_scale if lip > 0 else 1e-12
        rep.check(f"piecewise_error_d2_{name}", sup <= bound,
                  sup=sup, bound=bound)

    # approximate squaring: error bound and 4x decay per level
    sups = {}
    for m in (4, 6, 8):
        sups[m] = _grid_sup(lambda u, m=m: approx_square(u, m),
                            lambda u: u**2, 0.0, 1.0, 10_000)
        rep.check(f"square_error_m{m}", sups[m] <= square_accuracy(m),
                  sup=sups[m], bound=square_accuracy(m))
    for m in (4, 6):
        ratio = sups[m] / sups[m + 2]
        rep.check(f"square_error_quartering_m{m}", 14.0 <= ratio <= 18.0,
                  ratio=ratio)  # two levels: 4^2 = 16

    # approximate multiplication against its declared accuracy
    xs = np.linspace(-1.0, 1.0, 200)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    for m in (6, 8, 10):
        eps = mul_accuracy(m, 1.0)
        err = float(np.max(np.abs(approx_mul(xx.ravel(), yy.ravel(), m, 1.0)
                                  - xx.ravel() * yy.ravel())))
        rep.check(f"mul_error_m{m}", err <= eps, sup=err, declared_eps=eps)

    # mul identity column: x * 1 on a grid
    m = 8
    err = float(np.max(np.abs(approx_mul(xs, np.ones_like(xs), m, 1.0) - xs)))
    rep.check("mul_times_one", err <= mul_accuracy(m, 1.0), sup=err)

    # product bump networks: value agreement and class conformance
    grid1 = CenterGrid(2.0, 9, 1)
    c1 = np.array([grid1.axis_coords[3]])
    net1 = product_bump_network(c1, grid1, m=1)
    xs1 = np.linspace(-2, 2, 2001)
    gap1 = float(np.max(np.abs(mlp_forward(net1, xs1[:, None]).ravel()
                               - phi_center(xs1[:, None], c1, grid1))))
    rep.check("bump_network_d1_exact", gap1 < 1e-12, sup=gap1)
    audit1 = audit_class(net1, bump_network_spec(grid1, 1), xs1[:, None])
    rep.check("bump_network_d1_conforms", audit1.passed,
              checks=audit1.checks)

    grid2 = CenterGrid(1.5, 7, 2)
    c2 = grid2.centers[17]
    m2 = 10
    net2 = product_bump_network(c2, grid2, m=m2)
    xs2 = np.linspace(-1.5, 1.5, 120)
    pg = np.stack(np.meshgrid(xs2, xs2, indexing="ij"), axis=-1).reshape(-1, 2)
    gap2 = float(np.max(np.abs(mlp_forward(net2, pg).ravel()
                               - phi_center(pg, c2, grid2))))
    delta = mul_accuracy(m2, 1.0)
    rep.check("bump_network_d2_within_d_delta", gap2 <= 2.0 * delta,
              sup=gap2, bound=2.0 * delta)
    audit2 = audit_class(net2, bump_network_spec(grid2, m2), pg)
    rep.check("bump_network_d2_conforms", audit2.passed, checks=audit2.checks)
    mnet = mul_network(6, 1.0)
    mpts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    mgap = float(np.max(np.abs(mlp_forward(mnet, mpts).ravel()
                               - approx_mul(xx.ravel(), yy.ravel(), 6, 1.0))))
    rep.check("mul_network_matches_function", mgap < 1e-12, sup=mgap)

    # path-space error: interior contribution drops ~4x when N doubles,
    # tail contribution drops when the cube grows
    batch = simulate_gbm(x0, market, 1.0, n_steps=50, n_paths=n_paths,
                         seed=derive_seed(seed, "approx:paths"))
    put = lambda z: np.maximum(-np.asarray(z, dtype=float), 0.0)  # noqa: E731
    rows = []
    coarse = path_approx_error(put, CenterGrid(80.0, 33, 1), batch)
    fine = path_approx_error(put, CenterGrid(80.0, 65, 1), batch)
    for tag, n_per, res in (("N", 33, coarse), ("2N", 65, fine)):
        rows.append({"d": 1, "N": n_per, "r": 80.0, "interior": res.interior,
                     "tail": res.tail, "total": res.total})
    ratio = coarse.interior / fine.interior
    rep.check("interior_error_quarters_when_N_doubles",
              3.0 <= ratio <= 5.0, ratio=ratio)

    small = path_approx_error(put, CenterGrid(30.0, 31, 1), batch)
    large = path_approx_error(put, CenterGrid(60.0, 61, 1), batch)
    rows.append({"d": 1, "N": 31, "r": 30.0, "interior": small.interior,
                 "tail": small.tail, "total": small.total})
    rows.append({"d": 1, "N": 61, "r": 60.0, "interior": large.interior,
                 "tail": large.tail, "total": large.total})
    rep.check("tail_error_drops_with_radius", large.tail < small.tail,
              tail_small_r=small.tail, tail_large_r=large.tail)
    rep.tables["path_error"] = rows
    return rep


def run_suite(name: str, **kwargs) -> SuiteReport:
    if name == "oracles":
        return verify_oracles(seed=kwargs.get("seed", 7))
    if name == "assumptions":
        return verify_assumptions(
            market=kwargs.get("market"), n_paths=kwargs.get("n_paths", 100_000),
            seed=kwargs.get("seed", 7))
    if name == "lipschitz":
        return verify_lipschitz(
            market=kwargs.get("market"), grid=kwargs.get("grid"),
            n_paths=kwargs.get("n_paths", 10_000), seed=kwargs.get("seed", 7))
    if name == "approximation":
        return verify_approximation(
            market=kwargs.get("market"), n_paths=kwargs.get("n_paths", 4_000),
            seed=kwargs.get("seed", 7))
    raise ValueError(f"unknown suite {name!r}; valid: {', '.join(SUITE_NAMES)}")
