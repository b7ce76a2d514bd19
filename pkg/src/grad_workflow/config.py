"""Run configuration: ``key = value`` files with ``#`` comments, overridable from the CLI."""

import dataclasses
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    epochs: int = 30
    batch_size: int = 64          # frames per optimiser step
    lr: float = 1e-4
    window: int = 64
    stride: int = 32
    alpha: float = 0.3
    beta: float = 0.7
    gamma: float = 0.9
    delta: float = 0.1
    lam: float = 0.02
    enable_vka: bool = True
    enable_calibration: bool = True
    enable_wavelet: bool = True
    enable_fourier: bool = True
    fusion: str = "graph"         # graph | add | concat
    vka_source: str = "iwf"       # modalities the discriminator calls true
    vka_target: str = "k"         # modalities the discriminator calls false
    val_fraction: float = 0.2
    # frame backbone pre-training (features are cached for the temporal stage)
    backbone_epochs: int = 3
    backbone_lr: float = 1e-3
    backbone_stride: int = 3
    backbone_batch: int = 64
    # synthetic data
    data_seed: int = 42
    n_train: int = 48
    n_test: int = 12
    n_classes: int = 6
    seq_len: int = 240
    train_path: str = ""
    test_path: str = ""
    out: str = "runs/default"

    def validate(self):
        if self.fusion not in ("graph", "add", "concat"):
            raise ConfigError(f"fusion must be graph, add or concat, got {self.fusion!r}")
        for name in ("lr", "backbone_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("alpha", "beta", "gamma", "delta", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.epochs < 0 or self.backbone_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.window < 4 or self.stride < 1 or self.batch_size < 1:
            raise ConfigError("window >= 4, stride >= 1 and batch_size >= 1 are required")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        for name in ("vka_source", "vka_target"):
            val = getattr(self, name)
            if not val or set(val) - set("iwfk"):
                raise ConfigError(f"{name} must be a non-empty subset of 'iwfk', got {val!r}")
        if set(self.vka_source) & set(self.vka_target):
            raise ConfigError("vka_source and vka_target must not overlap")
        return self

    @property
    def domains(self):
        d = ["i"]
        if self.enable_wavelet:
            d.append("w")
        if self.enable_fourier:
            d.append("f")
        return tuple(d)

    @property
    def effective_delta(self):
        return self.delta if self.enable_vka else 0.0

    @property
    def effective_lam(self):
        return self.lam if self.enable_calibration else 0.0

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_text(self):
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    typ = _TYPES[key]
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_config_text(text, base=None):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = line.split("=", 1)
        key = key.strip()
        values[key] = _coerce(key, val)
    cfg = dataclasses.replace(base or RunConfig(), **values)
    return cfg.validate()


def load_config(path, base=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` strings (from ``--set``) on top of ``cfg``."""
    values = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), val)
    return dataclasses.replace(cfg, **values).validate()
