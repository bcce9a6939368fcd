"""The four reconstruction autoencoders and their training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nn
from .data import NormalizedPdp, chunk_sequence, reassemble
from .errors import ConfigError, DataError, DivergenceError, ShapeError
from .nn import checkpoint
from .nn.functional import conv1d_output_length, conv_transpose1d_output_length
from .nn.tensor import Tensor, add, no_grad, relu

log = logging.getLogger(__name__)

ARCHS = ("CNN", "LSTM", "GRU", "TRANSFORMER")

# arch -> (layers, channels/embedding, attention heads, kernel size)
TABLE_I = {
    "CNN": (4, (64, 128, 256, 512), None, 14),
    "LSTM": (4, (64, 32, 16, 8), None, None),
    "GRU": (4, (64, 32, 16, 8), None, None),
    "TRANSFORMER": (1, (8,), 1, None),
}

DEFAULT_RECURRENT_CHUNK = 85
TRANSFORMER_FFN_WIDTH = 32


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    layers: int
    channels_or_embedding: tuple[int, ...]
    attention_heads: int | None = None
    kernel_size: int | None = None
    chunk_length: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "arch", self.arch.upper())
        object.__setattr__(self, "channels_or_embedding", tuple(int(c) for c in self.channels_or_embedding))
        self.validate()

    @classmethod
    def for_arch(cls, arch, chunk_length=None):
        arch = arch.upper()
        if arch not in TABLE_I:
            raise ConfigError(f"unknown architecture {arch!r}; choose from {', '.join(ARCHS)}")
        layers, widths, heads, kernel = TABLE_I[arch]
        if arch in ("LSTM", "GRU") and chunk_length is None:
            chunk_length = DEFAULT_RECURRENT_CHUNK
        return cls(arch, layers, widths, heads, kernel, chunk_length)

    def validate(self):
        if self.arch not in TABLE_I:
            raise ConfigError(f"unknown architecture {self.arch!r}; choose from {', '.join(ARCHS)}")
        layers, widths, heads, kernel = TABLE_I[self.arch]
        row = (f"Table I row {self.arch}: layers={layers}, widths={list(widths)}, "
               f"heads={heads or '-'}, kernel={kernel or '-'}")
        if (self.layers, self.channels_or_embedding, self.attention_heads, self.kernel_size) != (
                layers, widths, heads, kernel):
            raise ConfigError(f"configuration violates {row}")
        if self.arch in ("LSTM", "GRU"):
            if self.chunk_length is None or self.chunk_length < 1:
                raise ConfigError(f"{self.arch} needs a positive chunk_length")
        elif self.chunk_length is not None:
            raise ConfigError(f"{self.arch} trains on full sequences; chunk_length must be unset")

    @property
    def is_recurrent(self):
        return self.arch in ("LSTM", "GRU")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 50
    batch_size: int = 16
    validation_fraction: float = 0.1
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs and batch_size must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if not 1 <= self.early_stop_patience < self.max_epochs:
            raise ConfigError("early_stop_patience must be >= 1 and < max_epochs")


# -- architectures -------------------------------------------------------------


class CNNAutoencoder(nn.Module):
    """Strided conv encoder, mirrored transposed-conv decoder, linear output."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        k = cfg.kernel_size
        widths = (1,) + cfg.channels_or_embedding
        self.encoder = [nn.Conv1d(a, b, k, rng, stride=2) for a, b in zip(widths[:-1], widths[1:])]
        rev = widths[::-1]
        self.decoder = [nn.ConvTranspose1d(a, b, k, rng, stride=2) for a, b in zip(rev[:-1], rev[1:])]
        for i, m in enumerate(self.encoder):
            setattr(self, f"enc{i}", m)
        for i, m in enumerate(self.decoder):
            setattr(self, f"dec{i}", m)

    def encoder_lengths(self, length):
        lengths = [length]
        for m in self.encoder:
            lengths.append(m.output_length(lengths[-1]))
        return lengths

    def forward(self, x):
        B, L = x.shape
        lengths = self.encoder_lengths(L)
        h = x.reshape(B, 1, L)
        for m in self.encoder:
            h = relu(m(h))
        for j, m in enumerate(self.decoder):
            n, target = lengths[-1 - j], lengths[-2 - j]
            op = target - conv_transpose1d_output_length(n, m.kernel_size, m.stride, m.padding)
            if not 0 <= op < m.stride:
                raise ShapeError(f"transposed conv cannot map length {n} back to {target}")
            h = m(h, output_padding=op)
            if j < len(self.decoder) - 1:
                h = relu(h)
        return h.reshape(B, L)


class RecurrentAutoencoder(nn.Module):
    """Sequence-to-sequence recurrent autoencoder with a per-step linear head."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        cell = nn.LSTM if cfg.arch == "LSTM" else nn.GRU
        widths = (1,) + cfg.channels_or_embedding  # 1, 64, 32, 16, 8
        dec = cfg.channels_or_embedding[::-1]  # 8, 16, 32, 64
        self.stack = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            m = cell(a, b, rng)
            setattr(self, f"enc{i}", m)
            self.stack.append(m)
        for i, (a, b) in enumerate(zip(dec[:-1], dec[1:])):
            m = cell(a, b, rng)
            setattr(self, f"dec{i}", m)
            self.stack.append(m)
        self.head = nn.Linear(dec[-1], 1, rng)

    def forward(self, x):
        B, T = x.shape
        h = x.reshape(B, T, 1)
        for m in self.stack:
            h = m(h)
        return self.head(h).reshape(B, T)


class TransformerAutoencoder(nn.Module):
    """Input projection + sine-cosine positions, one post-norm encoder block,
    output projection."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        d = cfg.channels_or_embedding[0]
        self.d_model = d
        self.embed = nn.Linear(1, d, rng)
        self.attn = nn.SelfAttention(d, cfg.attention_heads, rng)
        self.norm1 = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, TRANSFORMER_FFN_WIDTH, rng)
        self.ff2 = nn.Linear(TRANSFORMER_FFN_WIDTH, d, rng)
        self.norm2 = nn.LayerNorm(d)
        self.head = nn.Linear(d, 1, rng)
        self._pe = np.zeros((0, d))

    def positions(self, length):
        if self._pe.shape[0] < length:
            object.__setattr__(self, "_pe", nn.positional_encoding(length, self.d_model))
        return self._pe[:length]

    def forward(self, x):
        B, T = x.shape
        h = add(self.embed(x.reshape(B, T, 1)), self.positions(T))
        h = self.norm1(add(h, self.attn(h)))
        h = self.norm2(add(h, self.ff2(relu(self.ff1(h)))))
        return self.head(h).reshape(B, T)


_BUILDERS = {
    "CNN": CNNAutoencoder,
    "LSTM": RecurrentAutoencoder,
    "GRU": RecurrentAutoencoder,
    "TRANSFORMER": TransformerAutoencoder,
}


def build_model(config: ModelConfig, seed: int):
    """Instantiate the architecture with seeded Glorot-uniform weights and
    zero biases."""
    config.validate()
    net = _BUILDERS[config.arch](config, np.random.default_rng(seed))
    object.__setattr__(net, "config", config)
    object.__setattr__(net, "seed", seed)
    return net


# -- trained model / reconstruction --------------------------------------------


@dataclass
class TrainedModel:
    config: ModelConfig
    network: nn.Module
    loss_history: list = field(default_factory=list)  # (train_mse, val_mse) per epoch
    best_epoch: int = 0
    frozen: bool = False
    seed: int = 0
    train_config: TrainConfig | None = None

    @property
    def parameters(self):
        return self.network.state_dict()

    def reconstruct(self, values):
        return reconstruct(self, values)


def _as_model(model):
    if isinstance(model, TrainedModel):
        return model.network, model.config
    return model, model.config


def _forward_chunked(net, cfg, x):
    """Run ``net`` on (B, L) numpy input, chunking for recurrent archs."""
    if cfg.is_recurrent:
        chunks, plan = chunk_sequence(x, min(cfg.chunk_length, x.shape[-1]))
        stacked = np.concatenate(chunks, axis=0)
        out = net(Tensor(stacked)).data
        b = x.shape[0]
        return reassemble([out[i * b:(i + 1) * b] for i in range(len(chunks))], plan)
    return net(Tensor(x)).data


def reconstruct(model, values, batch_size=64):
    """Reconstruct one sequence (L,) or a batch (B, L); same shape out.

    Never records a graph or touches parameters.
    """
    net, cfg = _as_model(model)
    x = np.asarray(values, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] == 0:
        raise ShapeError(f"reconstruct expects (L,) or (B, L) input, got {np.shape(values)}")
    outs = []
    with no_grad():
        for start in range(0, x.shape[0], batch_size):
            outs.append(_forward_chunked(net, cfg, x[start:start + batch_size]))
    out = np.concatenate(outs, axis=0)
    if out.shape != x.shape:
        raise ShapeError(f"reconstruction shape {out.shape} != input shape {x.shape}")
    return out[0] if single else out


def _training_view(cfg, x):
    """Network inputs for one batch: whole sequences, or stacked chunks."""
    if cfg.is_recurrent:
        chunks, _ = chunk_sequence(x, min(cfg.chunk_length, x.shape[-1]))
        return np.concatenate(chunks, axis=0)
    return x


def split_validation(records: Sequence[NormalizedPdp], fraction: float):
    """Hold out the originals of the last ``fraction`` of source ids.

    Augmented variants of a held-out source are dropped from training too.
    """
    sources = list(dict.fromkeys(r.source_id for r in records))
    n_val = int(math.floor(fraction * len(sources) + 1e-9))
    if n_val < 1:
        raise ConfigError(
            f"validation_fraction {fraction} x {len(sources)} sources leaves no validation record")
    if n_val >= len(sources):
        raise DataError("validation split would leave no training sources")
    val_ids = set(sources[-n_val:])
    train = [r for r in records if r.source_id not in val_ids]
    val = [r for r in records if r.source_id in val_ids and r.variant == 0]
    if not val:
        val = [r for r in records if r.source_id in val_ids]
    return train, val


def _mse(model, x):
    recon = reconstruct(model, x)
    return float(np.mean((recon - x) ** 2))


def early_stop_epoch(val_history, patience):
    """Replay the stop rule on a validation-loss sequence.

    Returns ``(stop_epoch, best_epoch)``, both 1-based. An epoch improves only
    if its loss is strictly below the best so far.
    """
    best, best_epoch, stale = math.inf, 0, 0
    for epoch, v in enumerate(val_history, start=1):
        if v < best:
            best, best_epoch, stale = v, epoch, 0
        else:
            stale += 1
            if stale >= patience:
                return epoch, best_epoch
    return len(val_history), best_epoch


def train(model, train_set: Sequence[NormalizedPdp], cfg: TrainConfig = TrainConfig(),
          progress: Callable[[int, float, float], None] | None = None) -> TrainedModel:
    """Fit ``model`` by minimizing mean squared reconstruction error with Adam.

    Stops after ``cfg.max_epochs`` or once validation MSE has not improved for
    ``cfg.early_stop_patience`` consecutive epochs, then restores the
    parameters of the best validation epoch and freezes the model.
    """
    net, mcfg = _as_model(model)
    if not train_set:
        raise DataError("empty training set")
    fit_records, val_records = split_validation(train_set, cfg.validation_fraction)
    x_fit = np.stack([r.values for r in fit_records])
    x_val = np.stack([r.values for r in val_records])

    rng = np.random.default_rng(cfg.seed)
    opt = nn.Adam(net.parameters(), lr=cfg.learning_rate)
    history = []
    best_val, best_epoch, best_state, stale = math.inf, 0, net.state_dict(), 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x_fit))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            xb = _training_view(mcfg, x_fit[order[start:start + cfg.batch_size]])
            opt.zero_grad()
            loss = nn.mse_loss(net(Tensor(xb)), xb)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
            loss.backward()
            opt.step()
            total += value * xb.size
            count += xb.size
        train_mse = total / count
        val_mse = _mse(model, x_val)
        if not math.isfinite(val_mse):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
        history.append((train_mse, val_mse))
        log.info("%s epoch %d train_mse=%.6g val_mse=%.6g", mcfg.arch, epoch, train_mse, val_mse)
        if progress is not None:
            progress(epoch, train_mse, val_mse)
        if val_mse < best_val:
            best_val, best_epoch, best_state, stale = val_mse, epoch, net.state_dict(), 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    net.load_state_dict(best_state)
    return TrainedModel(mcfg, net, history, best_epoch, True, getattr(model, "seed", cfg.seed), cfg)


# -- persistence -----------------------------------------------------------------


def manifest_text(trained: TrainedModel) -> str:
    c = trained.config
    lines = [
        f"arch={c.arch}",
        f"layers={c.layers}",
        f"channels_or_embedding={','.join(str(w) for w in c.channels_or_embedding)}",
        f"attention_heads={c.attention_heads if c.attention_heads is not None else ''}",
        f"kernel_size={c.kernel_size if c.kernel_size is not None else ''}",
        f"chunk_length={c.chunk_length if c.chunk_length is not None else ''}",
        f"seed={trained.seed}",
        f"best_epoch={trained.best_epoch}",
        f"frozen={str(trained.frozen).lower()}",
        f"n_parameters={trained.network.num_parameters()}",
    ]
    if trained.train_config is not None:
        for k, v in asdict(trained.train_config).items():
            lines.append(f"train.{k}={v!r}" if isinstance(v, float) else f"train.{k}={v}")
    return "\n".join(lines) + "\n"


def loss_history_csv(trained: TrainedModel) -> str:
    rows = ["epoch,train_mse,val_mse"]
    for i, (t, v) in enumerate(trained.loss_history, start=1):
        rows.append(f"{i},{t!r},{v!r}")
    return "\n".join(rows) + "\n"


def save_model(trained: TrainedModel, directory):
    """Write ``model.ckpt``, ``model_manifest.txt`` and ``loss_history.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    checkpoint.save(trained.network.state_dict(), d / "model.ckpt")
    (d / "model_manifest.txt").write_text(manifest_text(trained), encoding="utf-8")
    (d / "loss_history.csv").write_text(loss_history_csv(trained), encoding="utf-8")
    return d


def _parse_opt_int(s):
    return int(s) if s else None


def load_model(directory) -> TrainedModel:
    d = Path(directory)
    kv = {}
    for line in (d / "model_manifest.txt").read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            kv[k] = v
    cfg = ModelConfig(
        kv["arch"], int(kv["layers"]),
        tuple(int(w) for w in kv["channels_or_embedding"].split(",")),
        _parse_opt_int(kv["attention_heads"]), _parse_opt_int(kv["kernel_size"]),
        _parse_opt_int(kv["chunk_length"]),
    )
    seed = int(kv["seed"])
    net = build_model(cfg, seed)
    net.load_state_dict(checkpoint.load(d / "model.ckpt"))
    history = []
    hist_path = d / "loss_history.csv"
    if hist_path.exists():
        for line in hist_path.read_text(encoding="utf-8").splitlines()[1:]:
            _, t, v = line.split(",")
            history.append((float(t), float(v)))
    tkw = {k[6:]: v for k, v in kv.items() if k.startswith("train.")}
    tcfg = None
    if tkw:
        tcfg = TrainConfig(**{k: (float(v) if k in ("learning_rate", "validation_fraction") else int(v))
                              for k, v in tkw.items()})
    return TrainedModel(cfg, net, history, int(kv["best_epoch"]), kv.get("frozen") == "true", seed, tcfg)
