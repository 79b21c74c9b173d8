"""Run configuration: one human-readable INI file drives every command.

Defaults reproduce the reference experiment: r = 0.1, sigma = 0.2,
T = 1 on a 300 x 50 log-price grid over [45, 180], strikes 90..120
with {95, 105, 113, 117} held out.  A single root seed is fanned out
to purpose-labeled streams so every artifact is reproducible from the
file alone.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .fd import GridSpec, MarketParams, ObstacleMethod, ObstacleVariant, build_grid
from .neural import TrainConfig
from .sde import derive_seed

TRAINED_STRIKE_MIN = 90.0
TRAINED_STRIKE_MAX = 120.0


@dataclass(frozen=True)
class StrikePlan:
    k_min: float = TRAINED_STRIKE_MIN
    k_max: float = TRAINED_STRIKE_MAX
    step: float = 1.0
    test: tuple = (95.0, 105.0, 113.0, 117.0)

    def strikes(self) -> list[float]:
        out = []
        k = self.k_min
        while k <= self.k_max + 1e-9:
            out.append(round(k, 10))
            k += self.step
        return out


@dataclass(frozen=True)
class OperatorArch:
    n_sensors: int = 64
    latent: int = 64
    branch_hidden: tuple = (128, 128)
    trunk_hidden: tuple = (128, 128, 128)


@dataclass(frozen=True)
class VerifySizes:
    assumption_paths: int = 100_000
    lipschitz_paths: int = 10_000
    mc_paths: int = 1_000_000
    path_error_paths: int = 4_000


@dataclass
class RunConfig:
    market: MarketParams = field(default_factory=lambda: MarketParams(0.1, 0.2))
    grid_x_min: float = 45.0
    grid_x_max: float = 180.0
    grid_n_space: int = 300
    grid_maturity_T: float = 1.0
    grid_n_time: int = 50
    strikes: StrikePlan = field(default_factory=StrikePlan)
    method: ObstacleMethod = field(default_factory=ObstacleMethod)
    arch: OperatorArch = field(default_factory=OperatorArch)
    learning_rate: float = 1e-3
    epochs: int = 1250
    batch_size: int = 4096
    lr_decay: float = 0.3
    decay_every: int = 250
    verify: VerifySizes = field(default_factory=VerifySizes)
    seed: int = 7
    out_dir: str = "runs/default"

    def grid(self) -> GridSpec:
        return build_grid(self.grid_x_min, self.grid_x_max, self.grid_n_space,
                          self.grid_maturity_T, self.grid_n_time)

    def stream_seed(self, purpose: str) -> int:
        return derive_seed(self.seed, purpose)

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate,
                           epochs=self.epochs, batch_size=self.batch_size,
                           seed=self.stream_seed("train"),
                           lr_decay=self.lr_decay,
                           decay_every=self.decay_every)


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_ints(text: str) -> tuple:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def config_from_ini(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    cfg = RunConfig()

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            return cast(parser.get(section, key))
        return default

    cfg.market = MarketParams(
        rate=get("market", "rate", float, cfg.market.rate),
        volatility=get("market", "volatility", float, cfg.market.volatility))
    cfg.grid_x_min = get("grid", "x_min", float, cfg.grid_x_min)
    cfg.grid_x_max = get("grid", "x_max", float, cfg.grid_x_max)
    cfg.grid_n_space = get("grid", "n_space", int, cfg.grid_n_space)
    cfg.grid_maturity_T = get("grid", "maturity_T", float, cfg.grid_maturity_T)
    cfg.grid_n_time = get("grid", "n_time", int, cfg.grid_n_time)
    cfg.strikes = StrikePlan(
        k_min=get("strikes", "k_min", float, cfg.strikes.k_min),
        k_max=get("strikes", "k_max", float, cfg.strikes.k_max),
        step=get("strikes", "step", float, cfg.strikes.step),
        test=get("strikes", "test", _parse_floats, cfg.strikes.test))
    cfg.method = ObstacleMethod(
        variant=ObstacleVariant(get("fd", "variant", str,
                                    cfg.method.variant.value)),
        omega=get("fd", "omega", float, cfg.method.omega),
        tol=get("fd", "tol", float, cfg.method.tol),
        max_iter=get("fd", "max_iter", int, cfg.method.max_iter))
    cfg.arch = OperatorArch(
        n_sensors=get("operator", "n_sensors", int, cfg.arch.n_sensors),
        latent=get("operator", "latent", int, cfg.arch.latent),
        branch_hidden=get("operator", "branch_hidden", _parse_ints,
                          cfg.arch.branch_hidden),
        trunk_hidden=get("operator", "trunk_hidden", _parse_ints,
                         cfg.arch.trunk_hidden))
    cfg.learning_rate = get("train", "learning_rate", float, cfg.learning_rate)
    cfg.epochs = get("train", "epochs", int, cfg.epochs)
    cfg.batch_size = get("train", "batch_size", int, cfg.batch_size)
    cfg.lr_decay = get("train", "lr_decay", float, cfg.lr_decay)
    cfg.decay_every = get("train", "decay_every", int, cfg.decay_every)
    cfg.verify = VerifySizes(
        assumption_paths=get("verify", "assumption_paths", int,
                             cfg.verify.assumption_paths),
        lipschitz_paths=get("verify", "lipschitz_paths", int,
                            cfg.verify.lipschitz_paths),
        mc_paths=get("verify", "mc_paths", int, cfg.verify.mc_paths),
        path_error_paths=get("verify", "path_error_paths", int,
                             cfg.verify.path_error_paths))
    cfg.seed = get("run", "seed", int, cfg.seed)
    cfg.out_dir = get("run", "out_dir", str, cfg.out_dir)
    return cfg


def config_to_ini(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    parser["market"] = {"rate": repr(cfg.market.rate),
                        "volatility": repr(cfg.market.volatility)}
    parser["grid"] = {"x_min": repr(cfg.grid_x_min),
                      "x_max": repr(cfg.grid_x_max),
                      "n_space": str(cfg.grid_n_space),
                      "maturity_T": repr(cfg.grid_maturity_T),
                      "n_time": str(cfg.grid_n_time)}
    parser["strikes"] = {"k_min": repr(cfg.strikes.k_min),
                         "k_max": repr(cfg.strikes.k_max),
                         "step": repr(cfg.strikes.step),
                         "test": ", ".join(repr(k) for k in cfg.strikes.test)}
    parser["fd"] = {"variant": cfg.method.variant.value,
                    "omega": repr(cfg.method.omega),
                    "tol": repr(cfg.method.tol),
                    "max_iter": str(cfg.method.max_iter)}
    parser["operator"] = {
        "n_sensors": str(cfg.arch.n_sensors),
        "latent": str(cfg.arch.latent),
        "branch_hidden": ", ".join(str(w) for w in cfg.arch.branch_hidden),
        "trunk_hidden": ", ".join(str(w) for w in cfg.arch.trunk_hidden)}
    parser["train"] = {"learning_rate": repr(cfg.learning_rate),
                       "epochs": str(cfg.epochs),
                       "batch_size": str(cfg.batch_size),
                       "lr_decay": repr(cfg.lr_decay),
                       "decay_every": str(cfg.decay_every)}
    parser["verify"] = {
        "assumption_paths": str(cfg.verify.assumption_paths),
        "lipschitz_paths": str(cfg.verify.lipschitz_paths),
        "mc_paths": str(cfg.verify.mc_paths),
        "path_error_paths": str(cfg.verify.path_error_paths)}
    parser["run"] = {"seed": str(cfg.seed), "out_dir": cfg.out_dir}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return config_from_ini(fh.read())
