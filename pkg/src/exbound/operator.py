"""Branch/trunk operator model mapping put payoffs to price surfaces.

The payoff is sampled at fixed sensor prices and encoded by the branch
network into latent coefficients; the trunk network maps a normalized
(t, x) query point to latent basis values; the prediction is their
inner product, de-normalized back to price units.  Training minimizes
the mean-squared error against finite-difference surfaces over
(strike, t, x) tuples and never sees the held-out strikes.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .fd import (GridSpec, MarketParams, ObstacleMethod, ObstacleVariant,
                 PriceSurface, PutPayoff, SurfaceStyle, build_grid,
                 price_american, surface_from_binary, surface_to_binary)
from .neural import (AdamState, DivergenceError, Mlp, TrainConfig, adam_step,
                     _forward_cached, grads_from_output_grad, mlp_forward,
                     mlp_from_bytes, mlp_to_bytes, mlp_init)

CHECKPOINT_MAGIC = b"DNOP"
CHECKPOINT_VERSION = 1

DEFAULT_STRIKE_CAP = 120.0  # top of the trained strike family; sets u scaling
DEFAULT_N_SENSORS = 64
DEFAULT_LATENT = 64
DEFAULT_BRANCH_HIDDEN = (128, 128)
DEFAULT_TRUNK_HIDDEN = (128, 128, 128)


class GridMismatchError(Exception):
    """Prediction grid is incompatible with the trained normalization."""


@dataclass(frozen=True)
class SensorSet:
    """Fixed prices at which input payoffs are sampled."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("need at least two sensor points")
        if np.any(np.diff(pts) <= 0.0):
            raise ValueError("sensor points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def equispaced(cls, x_min: float, x_max: float,
                   n: int = DEFAULT_N_SENSORS) -> "SensorSet":
        return cls(np.linspace(x_min, x_max, n))

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Normalization:
    """Affine input/target maps baked into a trained model."""

    t_max: float
    x_min: float
    x_max: float
    u_cap: float = DEFAULT_STRIKE_CAP

    def inputs(self, t, x) -> np.ndarray:
        tt = np.asarray(t, dtype=float) / self.t_max
        xx = (np.asarray(x, dtype=float) - self.x_min) / (self.x_max - self.x_min)
        return np.stack([tt, xx], axis=-1)

    @property
    def payoff_scale(self) -> float:
        return 1.0 / self.u_cap


def encode_payoff(payoff: PutPayoff, sensors: SensorSet,
                  scale: float = 1.0 / DEFAULT_STRIKE_CAP) -> np.ndarray:
    """Sample the payoff at the sensors, scaled for conditioning."""
    return payoff(sensors.points) * scale


@dataclass
class OperatorModel:
    branch: Mlp
    trunk: Mlp
    latent_N1: int
    sensors: SensorSet
    normalization: Normalization

    def __post_init__(self):
        if self.branch.layer_dims[-1] != self.latent_N1:
            raise ValueError("branch output width != latent_N1")
        if self.trunk.layer_dims[-1] != self.latent_N1:
            raise ValueError("trunk output width != latent_N1")
        if self.branch.layer_dims[0] != self.sensors.size:
            raise ValueError("branch input width != sensor count")
        if self.trunk.layer_dims[0] != 2:
            raise ValueError("trunk input width must be 2 (t, x)")


def build_model(grid: GridSpec, n_sensors: int = DEFAULT_N_SENSORS,
                latent: int = DEFAULT_LATENT,
                branch_hidden=DEFAULT_BRANCH_HIDDEN,
                trunk_hidden=DEFAULT_TRUNK_HIDDEN,
                u_cap: float = DEFAULT_STRIKE_CAP,
                seed: int = 7) -> OperatorModel:
    """Fresh model with sensors and normalization tied to the grid."""
    sensors = SensorSet.equispaced(grid.x_min, grid.x_max, n_sensors)
    norm = Normalization(grid.maturity_T, grid.x_min, grid.x_max, u_cap)
    branch = mlp_init([n_sensors, *branch_hidden, latent], seed=seed)
    trunk = mlp_init([2, *trunk_hidden, latent], seed=seed + 1)
    return OperatorModel(branch, trunk, latent, sensors, norm)


@dataclass
class SurfaceDataset:
    """FD surfaces for a strike family on one shared grid."""

    grid: GridSpec
    market: MarketParams
    method: ObstacleMethod
    strikes: list[float]
    surfaces: dict[float, PriceSurface]
    train_strikes: list[float]
    test_strikes: list[float]

    def __post_init__(self):
        overlap = set(self.train_strikes) & set(self.test_strikes)
        if overlap:
            raise ValueError(f"train/test strikes overlap: {sorted(overlap)}")
        missing = set(self.strikes) - set(self.surfaces)
        if missing:
            raise ValueError(f"missing surfaces for strikes {sorted(missing)}")


DEFAULT_TEST_STRIKES = (95.0, 105.0, 113.0, 117.0)


def default_strikes() -> list[float]:
    return [float(k) for k in range(90, 121)]


def split_strikes(strikes, test_strikes=DEFAULT_TEST_STRIKES):
    test = [float(k) for k in test_strikes if float(k) in set(map(float, strikes))]
    train = [float(k) for k in strikes if float(k) not in set(test)]
    return train, test


def build_dataset(strikes, market: MarketParams, grid: GridSpec,
                  method: ObstacleMethod | None = None,
                  test_strikes=DEFAULT_TEST_STRIKES) -> SurfaceDataset:
    """Price one American surface per strike; deterministic node-by-node."""
    if method is None:
        method = ObstacleMethod()
    strikes = [float(k) for k in strikes]
    surfaces = {k: price_american(market, grid, PutPayoff(k), method)
                for k in strikes}
    train, test = split_strikes(strikes, test_strikes)
    return SurfaceDataset(grid, market, method, strikes, surfaces, train, test)


# --- forward evaluation ------------------------------------------------------

def operator_forward(model: OperatorModel, payoff: PutPayoff, t: float,
                     x: float) -> float:
    """Predicted price at one (t, x); raises outside the trained box."""
    norm = model.normalization
    if not (0.0 <= t <= norm.t_max * (1.0 + 1e-12)):
        raise ValueError(f"t={t} outside [0, {norm.t_max}]")
    if not (norm.x_min - 1e-9 <= x <= norm.x_max + 1e-9):
        raise ValueError(f"x={x} outside [{norm.x_min}, {norm.x_max}]")
    g = encode_payoff(payoff, model.sensors, norm.payoff_scale)
    b = mlp_forward(model.branch, g)
    q = mlp_forward(model.trunk, norm.inputs(t, x))
    return float(b @ q) * norm.u_cap


def predict_values(model: OperatorModel, payoff: PutPayoff,
                   grid: GridSpec) -> np.ndarray:
    """Raw (unclipped) predicted surface over every grid node."""
    norm = model.normalization
    if (abs(grid.x_min - norm.x_min) > 1e-9 * norm.x_min
            or abs(grid.x_max - norm.x_max) > 1e-9 * norm.x_max
            or abs(grid.maturity_T - norm.t_max) > 1e-12):
        raise GridMismatchError(
            "grid ranges differ from the trained normalization")
    g = encode_payoff(payoff, model.sensors, norm.payoff_scale)
    b = mlp_forward(model.branch, g)
    tt, xx = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
    pts = norm.inputs(tt.ravel(), xx.ravel())
    q = mlp_forward(model.trunk, pts)
    vals = (q @ b) * norm.u_cap
    return vals.reshape(grid.n_time + 1, grid.n_space)


def predict_surface(model: OperatorModel, payoff: PutPayoff,
                    grid: GridSpec) -> PriceSurface:
    """Predicted surface, clipped at zero, tagged American-style."""
    vals = np.maximum(predict_values(model, payoff, grid), 0.0)
    return PriceSurface(grid, vals, SurfaceStyle.AMERICAN)


# --- training ----------------------------------------------------------------

@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_train_loss: float = float("nan")
    final_test_loss: float | None = None
    n_steps: int = 0
    elapsed_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        # elapsed time is excluded: persisted artifacts must be
        # reproducible byte-for-byte from (config, seed)
        return {
            "epoch_losses": self.epoch_losses,
            "final_train_loss": self.final_train_loss,
            "final_test_loss": self.final_test_loss,
            "n_steps": self.n_steps,
        }


def _tuples(dataset: SurfaceDataset, model: OperatorModel, strikes):
    """Stack encodings, normalized trunk points and normalized targets."""
    norm = model.normalization
    grid = dataset.grid
    enc = np.stack([encode_payoff(PutPayoff(k), model.sensors,
                                  norm.payoff_scale) for k in strikes])
    tt, xx = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
    pts = norm.inputs(tt.ravel(), xx.ravel())
    targets = np.stack([dataset.surfaces[k].values.ravel() for k in strikes])
    return enc, pts, targets / norm.u_cap


def dataset_loss(model: OperatorModel, dataset: SurfaceDataset,
                 strikes) -> float:
    """Mean-squared error in normalized units over all (k, t, x) tuples."""
    strikes = list(strikes)
    if not strikes:
        raise ValueError("no strikes to evaluate")
    enc, pts, targets = _tuples(dataset, model, strikes)
    b = mlp_forward(model.branch, enc)
    q = mlp_forward(model.trunk, pts)
    pred = b @ q.T
    return float(((pred - targets) ** 2).mean())


def train(model: OperatorModel, dataset: SurfaceDataset,
          config: TrainConfig | None = None,
          divergence_factor: float = 10.0) -> TrainReport:
    """Mini-batch Adam on the empirical MSE over (strike, t, x, u) tuples.

    Each batch pairs a shuffled chunk of grid points with every
    training strike, so one epoch covers every tuple exactly once while
    the trunk activations are shared across strikes.  Deterministic for
    a fixed (seed, config, dataset).
    """
    if config is None:
        config = TrainConfig()
    if not dataset.train_strikes:
        raise ValueError("dataset has no training strikes")
    t0 = time.perf_counter()
    enc, pts, targets = _tuples(dataset, model, dataset.train_strikes)
    n_strikes, n_points = targets.shape
    chunk = max(1, int(round(config.batch_size / n_strikes)))

    rng = np.random.default_rng(config.seed)
    b_state = AdamState.zeros_like(model.branch)
    t_state = AdamState.zeros_like(model.trunk)
    report = TrainReport()
    guard_loss = None
    for epoch in range(config.epochs):
        lr = config.rate_at(epoch)
        perm = rng.permutation(n_points)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n_points, chunk):
            idx = perm[lo:lo + chunk]
            b_acts = _forward_cached(model.branch, enc)
            q_acts = _forward_cached(model.trunk, pts[idx])
            b_out, q_out = b_acts[-1], q_acts[-1]
            pred = b_out @ q_out.T
            resid = pred - targets[:, idx]
            loss = float((resid**2).mean())
            d_pred = (2.0 / resid.size) * resid
            b_grads = grads_from_output_grad(model.branch, b_acts,
                                             d_pred @ q_out)
            q_grads = grads_from_output_grad(model.trunk, q_acts,
                                             d_pred.T @ b_out)
            adam_step(model.branch, b_grads, b_state, config, lr=lr)
            adam_step(model.trunk, q_grads, t_state, config, lr=lr)
            epoch_loss += loss
            n_batches += 1
            report.n_steps += 1
        epoch_loss /= n_batches
        report.epoch_losses.append(epoch_loss)
        if guard_loss is None:
            guard_loss = epoch_loss
        elif epoch_loss > divergence_factor * guard_loss:
            raise DivergenceError(
                f"epoch loss {epoch_loss:.3e} exceeded "
                f"{divergence_factor}x the initial {guard_loss:.3e}")
    report.final_train_loss = dataset_loss(model, dataset,
                                           dataset.train_strikes)
    if dataset.test_strikes:
        report.final_test_loss = dataset_loss(model, dataset,
                                              dataset.test_strikes)
    report.elapsed_seconds = time.perf_counter() - t0
    return report


# --- persistence -------------------------------------------------------------

def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dataset_manifest(dataset: SurfaceDataset, blob_hashes: dict) -> dict:
    g = dataset.grid
    return {
        "format_version": 1,
        "grid": {"x_min": g.x_min, "x_max": g.x_max, "n_space": g.n_space,
                 "maturity_T": g.maturity_T, "n_time": g.n_time},
        "market": {"rate": dataset.market.rate,
                   "volatility": dataset.market.volatility},
        "method": {"variant": dataset.method.variant.value,
                   "omega": dataset.method.omega,
                   "tol": dataset.method.tol,
                   "max_iter": dataset.method.max_iter},
        "strikes": dataset.strikes,
        "train_strikes": dataset.train_strikes,
        "test_strikes": dataset.test_strikes,
        "surfaces": blob_hashes,
    }


def save_dataset(dataset: SurfaceDataset, out_dir) -> dict:
    """Write manifest + one binary surface per strike; returns manifest."""
    import hashlib
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blob_hashes = {}
    for k in dataset.strikes:
        name = f"surface_K{k:g}.bin"
        blob = surface_to_binary(dataset.surfaces[k], "manifest.json")
        (out / name).write_bytes(blob)
        blob_hashes[f"{k:g}"] = {
            "file": name, "sha256": hashlib.sha256(blob).hexdigest()}
    manifest = dataset_manifest(dataset, blob_hashes)
    (out / "manifest.json").write_text(_canonical_json(manifest) + "\n")
    return manifest


def load_dataset(in_dir) -> SurfaceDataset:
    """Read a dataset directory back, verifying blob hashes."""
    import hashlib
    from pathlib import Path

    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    g = manifest["grid"]
    grid = build_grid(g["x_min"], g["x_max"], g["n_space"], g["maturity_T"],
                      g["n_time"])
    market = MarketParams(**manifest["market"])
    meth = manifest["method"]
    method = ObstacleMethod(ObstacleVariant(meth["variant"]), meth["omega"],
                            meth["tol"], meth["max_iter"])
    surfaces = {}
    for key, entry in manifest["surfaces"].items():
        blob = (src / entry["file"]).read_bytes()
        digest = hashlib.sha256(blob).hexdigest()
        if digest != entry["sha256"]:
            raise ValueError(f"hash mismatch for {entry['file']}")
        surface, _ = surface_from_binary(blob, grid, SurfaceStyle.AMERICAN)
        surfaces[float(key)] = surface
    return SurfaceDataset(grid, market, method,
                          [float(k) for k in manifest["strikes"]], surfaces,
                          [float(k) for k in manifest["train_strikes"]],
                          [float(k) for k in manifest["test_strikes"]])


def operator_to_bytes(model: OperatorModel) -> bytes:
    header = _canonical_json({
        "kind": "put-pricing-operator",
        "latent_N1": model.latent_N1,
        "sensors": model.sensors.points.tolist(),
        "normalization": {
            "t_max": model.normalization.t_max,
            "x_min": model.normalization.x_min,
            "x_max": model.normalization.x_max,
            "u_cap": model.normalization.u_cap,
        },
    }).encode("utf-8")
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<I", len(header))
    out += header
    out += mlp_to_bytes(model.branch)
    out += mlp_to_bytes(model.trunk)
    return bytes(out)


def operator_from_bytes(blob: bytes) -> OperatorModel:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("bad operator checkpoint magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported operator checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    off = 12 + hlen
    branch, off = mlp_from_bytes(blob, off)
    trunk, _ = mlp_from_bytes(blob, off)
    norm = Normalization(**header["normalization"])
    return OperatorModel(branch, trunk, header["latent_N1"],
                         SensorSet(np.asarray(header["sensors"])), norm)


def save_operator(model: OperatorModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(operator_to_bytes(model))


def load_operator(path) -> OperatorModel:
    with open(path, "rb") as fh:
        return operator_from_bytes(fh.read())
