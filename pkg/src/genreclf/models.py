"""The three classifier architectures sharing one interface: per-modality
feature sequences in, 21 genre logits out.

* MLP: temporal mean per modality, channel concat, one hidden layer.
* Single-transformer: every modality projected to a common width, given its
  own learned positions and SEP marker, fused into one sequence behind a
  learned CLS vector, encoded, classified from the CLS output.
* Multi-transformer: one small encoder per modality with its own CLS;
  the per-modality CLS outputs are concatenated channel-wise. Streams
  flagged for temporal averaging skip their encoder and contribute their
  averaged, projected vector directly.

Sequences longer than a modality's learned positional table are truncated
to the table length on the transformer paths (the tables bound usable
positions); the MLP path always consumes the full duration.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .data import Batch, temporal_average
from .errors import ConfigError, DataError
from .modalities import ModalitySpec, default_modalities
from .nn import Linear, ParameterStore, TransformerEncoderLayer, init_embedding
from .rng import SeededRng, derive_seed
from .vocab import NUM_GENRES

ARCHITECTURES = ("mlp", "single_transformer", "multi_transformer")

PRESETS = {
    "mlp": {"model_dim": 256, "num_layers": 1, "num_heads": 1},
    "single_transformer": {"model_dim": 256, "num_layers": 2, "num_heads": 8},
    "multi_transformer": {"model_dim": 128, "num_layers": 1, "num_heads": 8},
}


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    model_dim: int
    num_layers: int
    num_heads: int
    dropout_rate: float = 0.5
    modalities: tuple[ModalitySpec, ...] = field(default_factory=default_modalities)
    positive_weight: float = 0.25
    threshold: float = 0.5

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.architecture != "mlp" and self.model_dim % self.num_heads != 0:
            raise ConfigError(f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}")
        names = [s.name for s in self.modalities]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate modality names: {names}")
        if not self.modalities:
            raise ConfigError("at least one modality is required")

    @classmethod
    def preset(cls, architecture: str, modalities=None, averaged=(), **overrides) -> "ModelConfig":
        if architecture not in PRESETS:
            raise ConfigError(f"unknown architecture {architecture!r}")
        kw = dict(PRESETS[architecture])
        kw["modalities"] = default_modalities(modalities, averaged)
        kw.update(overrides)
        return cls(architecture=architecture, **kw)

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "model_dim": self.model_dim,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "dropout_rate": self.dropout_rate,
            "modalities": [s.to_dict() for s in self.modalities],
            "positive_weight": self.positive_weight,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            architecture=d["architecture"],
            model_dim=int(d["model_dim"]),
            num_layers=int(d["num_layers"]),
            num_heads=int(d["num_heads"]),
            dropout_rate=float(d.get("dropout_rate", 0.5)),
            modalities=tuple(ModalitySpec.from_dict(m) for m in d["modalities"]),
            positive_weight=float(d.get("positive_weight", 0.25)),
            threshold=float(d.get("threshold", 0.5)),
        )


def _modality_batch(batch: Batch, spec: ModalitySpec):
    if spec.name not in batch.features:
        raise DataError(f"batch is missing modality {spec.name!r}")
    x = batch.features[spec.name]
    m = batch.masks[spec.name]
    if x.ndim != 3 or x.shape[2] != spec.input_dim:
        raise DataError(f"modality {spec.name}: batch width {x.shape} incompatible with input_dim {spec.input_dim}")
    return x, m


def _masked_means(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Per-sample temporal mean over valid positions. (B, L, D) -> (B, D)"""
    return np.stack([temporal_average(x[i], m[i]) for i in range(x.shape[0])]) if x.shape[0] else \
        np.zeros((0, x.shape[2]), dtype=np.float32)


class _Model:
    def __init__(self, config: ModelConfig, seed: int, dtype=np.float32):
        self.config = config
        self.seed = seed
        self.params = ParameterStore(dtype=dtype)
        self._build(SeededRng(derive_seed(seed, "init")))

    def parameter_count(self) -> int:
        return self.params.total_parameter_count()

    def forward(self, batch: Batch, train: bool = False, rng: SeededRng = None) -> Tensor:
        raise NotImplementedError


class MlpModel(_Model):
    """Temporal averaging front end plus a one-hidden-layer classifier."""

    def _build(self, rng: SeededRng):
        total = sum(s.input_dim for s in self.config.modalities)
        self.hidden = Linear(self.params, "hidden", total, self.config.model_dim, rng)
        self.head = Linear(self.params, "head", self.config.model_dim, NUM_GENRES, rng)

    def forward(self, batch: Batch, train: bool = False, rng: SeededRng = None) -> Tensor:
        cols = []
        for spec in self.config.modalities:
            x, m = _modality_batch(batch, spec)
            cols.append(_masked_means(x, m))
        h = ag.relu(self.hidden(Tensor(np.concatenate(cols, axis=1))))
        h = ag.dropout(h, self.config.dropout_rate, train, rng)
        return self.head(h)


class SingleTransformerModel(_Model):
    """One fused sequence: [CLS, SEP_m, frames_m, SEP_m', frames_m', ...]."""

    def _build(self, rng: SeededRng):
        cfg = self.config
        self.proj = {}
        for spec in cfg.modalities:
            self.proj[spec.name] = Linear(self.params, f"proj.{spec.name}", spec.input_dim, cfg.model_dim, rng)
            self.params.add(f"pos.{spec.name}", init_embedding(rng, (spec.train_max_len, cfg.model_dim)))
            self.params.add(f"sep.{spec.name}", init_embedding(rng, (cfg.model_dim,)))
        self.params.add("cls", init_embedding(rng, (cfg.model_dim,)))
        self.layers = [
            TransformerEncoderLayer(self.params, f"enc.{i}", cfg.model_dim, cfg.num_heads, cfg.dropout_rate, rng)
            for i in range(cfg.num_layers)
        ]
        self.head = Linear(self.params, "head", cfg.model_dim, NUM_GENRES, rng)

    def _assemble(self, batch: Batch):
        """Project, position and fuse the enabled modalities into one
        sequence per sample, returning (sequence Tensor, validity mask)."""
        cfg = self.config
        b = batch.size
        ones = np.ones((b, 1), dtype=bool)
        segs = [ag.broadcast_to(ag.reshape(self.params["cls"], (1, 1, cfg.model_dim)), (b, 1, cfg.model_dim))]
        mask_parts = [ones]
        for spec in cfg.modalities:
            x, m = _modality_batch(batch, spec)
            if x.shape[1] > spec.train_max_len:
                x = x[:, :spec.train_max_len]
                m = m[:, :spec.train_max_len]
            if spec.temporal_average:
                x = _masked_means(x, m)[:, None, :]
                m = m.any(axis=1, keepdims=True)
            sep = ag.broadcast_to(ag.reshape(self.params[f"sep.{spec.name}"], (1, 1, cfg.model_dim)),
                                  (b, 1, cfg.model_dim))
            segs.append(sep)
            mask_parts.append(ones)
            proj = self.proj[spec.name](Tensor(x))
            t = x.shape[1]
            if t > 0:
                proj = ag.add(proj, ag.getitem(self.params[f"pos.{spec.name}"], slice(0, t)))
            segs.append(proj)
            mask_parts.append(m)
        return ag.concat(segs, axis=1), np.concatenate(mask_parts, axis=1)

    def forward(self, batch: Batch, train: bool = False, rng: SeededRng = None) -> Tensor:
        x, mask = self._assemble(batch)
        for layer in self.layers:
            x = layer(x, mask, train, rng)
        return self.head(x[:, 0])


class MultiTransformerModel(_Model):
    """Per-modality encoders whose CLS outputs are concatenated channel-wise.
    Averaged streams contribute their projected mean vector directly."""

    def _build(self, rng: SeededRng):
        cfg = self.config
        self.proj = {}
        self.encoders = {}
        for spec in cfg.modalities:
            self.proj[spec.name] = Linear(self.params, f"proj.{spec.name}", spec.input_dim, cfg.model_dim, rng)
            if not spec.temporal_average:
                self.params.add(f"pos.{spec.name}", init_embedding(rng, (spec.train_max_len, cfg.model_dim)))
                self.params.add(f"cls.{spec.name}", init_embedding(rng, (cfg.model_dim,)))
                self.encoders[spec.name] = [
                    TransformerEncoderLayer(self.params, f"enc.{spec.name}.{i}", cfg.model_dim,
                                            cfg.num_heads, cfg.dropout_rate, rng)
                    for i in range(cfg.num_layers)
                ]
        self.head = Linear(self.params, "head", cfg.model_dim * len(cfg.modalities), NUM_GENRES, rng)

    def forward(self, batch: Batch, train: bool = False, rng: SeededRng = None) -> Tensor:
        cfg = self.config
        b = batch.size
        cols = []
        for spec in cfg.modalities:
            x, m = _modality_batch(batch, spec)
            if spec.temporal_average:
                cols.append(self.proj[spec.name](Tensor(_masked_means(x, m))))
                continue
            if x.shape[1] > spec.train_max_len:
                x = x[:, :spec.train_max_len]
                m = m[:, :spec.train_max_len]
            proj = self.proj[spec.name](Tensor(x))
            t = x.shape[1]
            if t > 0:
                proj = ag.add(proj, ag.getitem(self.params[f"pos.{spec.name}"], slice(0, t)))
            cls = ag.broadcast_to(ag.reshape(self.params[f"cls.{spec.name}"], (1, 1, cfg.model_dim)),
                                  (b, 1, cfg.model_dim))
            seq = ag.concat([cls, proj], axis=1)
            mask = np.concatenate([np.ones((b, 1), dtype=bool), m], axis=1)
            for layer in self.encoders[spec.name]:
                seq = layer(seq, mask, train, rng)
            cols.append(seq[:, 0])
        return self.head(ag.concat(cols, axis=1))


_MODEL_CLASSES = {
    "mlp": MlpModel,
    "single_transformer": SingleTransformerModel,
    "multi_transformer": MultiTransformerModel,
}


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> _Model:
    return _MODEL_CLASSES[config.architecture](config, seed, dtype=dtype)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def predict_scores(model: _Model, batch: Batch) -> np.ndarray:
    """Eval-mode genre probabilities for a prepared batch. (B, 21)"""
    with no_grad():
        logits = model.forward(batch, train=False)
    return _sigmoid(logits.data.astype(np.float64)).astype(np.float32)


def predict(model: _Model, record, threshold: float = None):
    """Probabilities and threshold decisions for one record at its full
    duration. A probability equal to the threshold counts as positive."""
    from .data import make_batch
    if threshold is None:
        threshold = model.config.threshold
    batch = make_batch([record], model.config.modalities, lengths="full")
    probs = predict_scores(model, batch)[0]
    return probs, probs >= threshold
