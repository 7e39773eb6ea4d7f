"""Flat ``key = value`` configuration with ``#`` comments."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

from .nn import NetSpec
from .ot_guidance import SinkhornConfig
from .paths import PathKind, make_path
from .sampler import SamplerConfig

SEED_ENV = "FLOWGUIDE_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # run
    mode: str = "guided"  # guided | unconditional | offline
    seed: int = 0
    # data
    dataset: str = "ring8"
    n: int = 8192
    ring_radius: float = 2.0
    data_noise: float = 0.1
    # probability path
    path: str = "cv"
    vp_beta: float = 10.0
    ve_alpha_max: float = 100.0
    # network
    width: int = 256
    hidden_layers: int = 4
    time_freqs: int = 16
    feature_dim: int = 16
    # optimisation
    total_iters: int = 20000
    batch_size: int = 256
    lr: float = 1e-3
    ema_decay: float = 0.999
    # guidance
    warmup: float = 0.5
    p_drop: float = 0.15
    clusters: int = 8
    sk_lambda: float = 100.0
    sk_iters: int = 3
    # let the velocity loss move the prototypes it is conditioned on
    proto_cond_grad: bool = True
    feature_t: float = 0.2
    feature_layer: int = 2
    sk_mask_lo: float = 0.15
    sk_mask_hi: float = 0.25
    # sampling
    steps: int = 50
    guidance: float = 0.4
    method: str = "heun"
    # evaluation
    eval_interval: int = 2000
    eval_samples: int = 4096
    # offline guidance
    labels_file: str = ""
    init_ckpt: str = ""

    def __post_init__(self):
        if self.mode not in ("guided", "unconditional", "offline"):
            raise ConfigError(f"mode must be guided, unconditional or offline, got {self.mode!r}")
        if not 0.0 < self.warmup < 1.0:
            raise ConfigError("warmup must lie in (0, 1)")
        if not 0.0 <= self.p_drop <= 1.0:
            raise ConfigError("p_drop must lie in [0, 1]")
        if not 0.0 <= self.sk_mask_lo < self.sk_mask_hi <= 1.0:
            raise ConfigError("need 0 <= sk_mask_lo < sk_mask_hi <= 1")
        if not 0.0 <= self.feature_t <= 1.0:
            raise ConfigError("feature_t must lie in [0, 1]")
        if self.total_iters < 0 or self.batch_size < 1 or self.eval_interval < 1:
            raise ConfigError("total_iters >= 0, batch_size >= 1 and eval_interval >= 1 required")
        if not 1 <= self.feature_layer <= self.hidden_layers - 1:
            raise ConfigError(f"feature_layer must lie in [1, {self.hidden_layers - 1}]")
        try:
            self.path_kind()
            self.sinkhorn()
            self.sampler()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def path_kind(self) -> PathKind:
        return make_path(self.path, self.vp_beta, self.ve_alpha_max)

    def sinkhorn(self) -> SinkhornConfig:
        return SinkhornConfig(self.sk_lambda, self.sk_iters)

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.steps, self.guidance, self.method)

    def net_spec(self, cond_dim: int | None = None) -> NetSpec:
        return NetSpec(
            data_dim=2,
            cond_dim=self.feature_dim if cond_dim is None else cond_dim,
            width=self.width,
            hidden_layers=self.hidden_layers,
            time_freqs=self.time_freqs,
        )

    def replace(self, **changes) -> "Config":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _parse_value(raw: str, kind: type, key: str):
    raw = raw.strip()
    try:
        if kind is str:
            if len(raw) >= 2 and raw[0] == raw[-1] == '"':
                return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            return raw
        if kind is bool:
            if raw not in ("true", "false"):
                raise ValueError(raw)
            return raw == "true"
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r} (expected {kind.__name__})") from None
    raise ConfigError(f"unsupported type for {key!r}")


_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def render(cfg: Config) -> str:
    return "".join(f"{f.name} = {_render_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def _strip_comment(line: str) -> str:
    in_str = False
    for i, ch in enumerate(line):
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def parse(text: str, base: Config | None = None) -> Config:
    """Parse a config document; keys not given keep the values from ``base``."""
    types = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _strip_comment(line).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(raw, types[key], key)
    return (base or Config()).replace(**values)


def load(path: str | os.PathLike, env: dict | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        cfg = parse(fh.read())
    return apply_env(cfg, env)


def apply_env(cfg: Config, env: dict | None = None) -> Config:
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        cfg = cfg.replace(seed=seed)
    return cfg
