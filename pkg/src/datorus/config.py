"""Run configuration: a flat key=value text file plus command-line overrides."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace

from .anosov import DEFAULT_MATRIX


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # linear model
    matrix: tuple = tuple(v for row in DEFAULT_MATRIX for v in row)
    power: int = 1
    # surgery
    surgery: bool = True
    q: tuple = (0.0, 0.0, 0.0)
    delta: float = 0.08
    mu_s: float = 0.88
    mu_w: float = 1.20
    beta: float = 0.25
    aspect: float = 0.05
    log_range: float = 8.0
    # cones and property sampling
    theta_u: float = 0.15
    theta_cs: float = 0.15
    property_samples: int = 20_000
    # semiconjugacy
    n_trunc: int = 80
    semiconj_samples: int = 10_000
    witness_radius: float = 0.01
    witness_probes: int = 401
    # chain graphs
    chain_depths: tuple = (4, 5, 6)
    refine: bool = False
    samples_k: int = 2
    samples_m: int = 0
    bloat_scale: float = 1.0
    export_edges_max_depth: int = 5
    localize_depth: int = 6
    localize_max_period: int = 6
    # ergodic diagnostics
    lyap_orbits: int = 4
    lyap_iters: int = 10_000
    cs_points: int = 1000
    cs_iters: int = 100_000
    srb_starts: int = 10
    srb_iters: int = 1_000_000
    srb_depth: int = 4
    basin_depth: int = 5
    basin_samples: int = 10_000
    basin_iters: int = 10_000
    entropy_depth: int = 5
    # run control
    seed: int = 0
    workers: int = 0               # 0: hardware parallelism
    output: str = "out"

    def validate(self) -> "RunConfig":
        if len(self.matrix) != 9 or any(int(v) != v for v in self.matrix):
            raise ConfigError("matrix needs nine integers")
        if self.power < 1:
            raise ConfigError("power must be >= 1")
        if len(self.q) != 3:
            raise ConfigError("q needs three coordinates")
        if self.surgery and self.mu_s * self.mu_w <= 1:
            raise ConfigError(f"mu_s * mu_w = {self.mu_s * self.mu_w:.4g} must exceed 1")
        if not self.chain_depths or any(not 1 <= d <= 9 for d in self.chain_depths):
            raise ConfigError("chain_depths must lie in [1, 9]")
        for name in ("delta", "beta", "theta_u", "theta_cs", "n_trunc", "lyap_iters"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        return self

    @property
    def matrix_rows(self) -> tuple:
        m = [int(v) for v in self.matrix]
        return tuple(tuple(m[3 * i:3 * i + 3]) for i in range(3))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        """Digest of every key that can change a result (not output dir or threads)."""
        d = {k: v for k, v in self.to_dict().items() if k not in _NOT_HASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_NOT_HASHED = ("output", "workers")
_TYPES = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    default = getattr(RunConfig(), key)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
            cast = type(default[0]) if default else float
            return tuple(cast(p.strip()) for p in parts)
        return type(default)(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_assignments(items, base: RunConfig | None = None) -> RunConfig:
    """Apply 'key=value' strings on top of ``base``."""
    updates = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip().replace("-", "_")
        if k not in _TYPES:
            raise ConfigError(f"unknown config key {k!r}")
        updates[k] = _parse_value(k, v)
    return replace(base or RunConfig(), **updates)


def load_config(path=None, overrides=()) -> RunConfig:
    items = []
    if path is not None:
        try:
            text = open(path).read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            items.append(line)
    cfg = parse_assignments(items)
    cfg = parse_assignments(overrides, cfg)
    return cfg.validate()
