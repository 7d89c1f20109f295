"""Flat key=value run configuration with an effective-config dump.

Every output directory receives the fully resolved configuration so a
sweep of runs stays auditable; the dump re-parses to an identical run.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import DataError


@dataclass
class RunConfig:
    data_dir: str = ""
    embeddings: str = ""
    d_box: int = 64
    epochs: int = 100
    batch_queries: int = 16
    neg_per_pos: int = 63
    lr: float = 0.001
    alpha: float = 0.5
    tau_train: float = 10.0
    tau_predict: float = 20.0
    n_heads: int = 4
    dropout: float = 0.1
    max_children: int = 30
    pos_weight: float = -1.0  # -1 means "use neg_per_pos"
    seed: int = 0
    precision: str = "single"  # single|double
    sim_group: str = "query"   # query|batch
    rank_pairs: str = "all"    # all|sampled
    hard_negatives: bool = False
    use_cls_loss: bool = True
    use_box_loss: bool = True
    use_rank_loss: bool = True
    scheduler_patience: int = 10
    scheduler_factor: float = 0.1
    early_stop_patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.precision not in ("single", "double"):
            raise DataError(f"precision must be single|double, got {self.precision!r}")
        if self.sim_group not in ("query", "batch"):
            raise DataError(f"sim_group must be query|batch, got {self.sim_group!r}")
        if self.rank_pairs not in ("all", "sampled"):
            raise DataError(f"rank_pairs must be all|sampled, got {self.rank_pairs!r}")
        for name in ("d_box", "epochs", "batch_queries", "neg_per_pos",
                     "n_heads", "max_children"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if not 0 < self.alpha < 1:
            raise DataError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.tau_train <= 0 or self.tau_predict <= 0:
            raise DataError("tau values must be positive")

    @property
    def effective_pos_weight(self) -> float:
        return float(self.neg_per_pos) if self.pos_weight < 0 else self.pos_weight


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    known = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise DataError(f"{path}: unknown config key {key!r}")
        kwargs[key] = _convert(key, raw, known[key], path)
    return RunConfig(**kwargs)


def _convert(key: str, raw: str, type_name: str, path) -> object:
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            if raw.lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.lower()]
        return raw
    except ValueError as exc:
        raise DataError(f"{path}: bad value for {key}: {raw!r}") from exc


def dump_config(cfg: RunConfig, path) -> None:
    lines = ["# effective-config"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name}={value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
