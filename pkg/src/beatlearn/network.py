"""Declarative construction and forward evaluation of the 1-D residual network.

The backbone counts 12 convolutional layers: one stem conv, two per
residual block (5 blocks), and one final 1x1 conv before the dense/softmax
head; shortcut projection convs sit outside that count.  Filters start at
``base_filters`` and double at the last block; blocks 2 and 4 halve the
feature length via max-pooling applied at the block entry, so both the
residual path and the shortcut see the subsampled input.

Convs that feed a batch-norm layer carry no bias (the normalization would
cancel it, leaving a permanently dead parameter).  The last batch-norm of
every block starts at gamma == 0, so an untrained network initially
computes only the shortcut cascade.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Parameter, Tensor
from .errors import CheckpointError, ConfigError, DimensionError

BLOCKS_PER_NETWORK = 5
CONV_LAYER_COUNT = 12  # stem + 2 per block + final 1x1


@dataclass
class ResidualBlockSpec:
    channels_in: int
    channels_out: int
    kernel_size: int = 15
    subsample: bool = False
    dropout_rate: float = 0.2

    @property
    def needs_projection(self) -> bool:
        return self.channels_in != self.channels_out or self.subsample

    def validate(self):
        if self.channels_in < 1 or self.channels_out < 1 or self.kernel_size < 1:
            raise ConfigError(f"invalid block spec {self}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class NetworkSpec:
    input_length: int = 250
    n_classes: int = 6
    stem_channels: int = 32
    stem_kernel: int = 15
    stem_stride: int = 1
    blocks: tuple = ()

    def validate(self):
        if self.input_length < 1 or self.n_classes < 2:
            raise ConfigError(
                f"need input_length >= 1 and n_classes >= 2, got "
                f"{self.input_length}, {self.n_classes}")
        if self.stem_channels < 1 or self.stem_kernel < 1 or self.stem_stride < 1:
            raise ConfigError("invalid stem configuration")
        if len(self.blocks) != BLOCKS_PER_NETWORK:
            raise ConfigError(
                f"expected {BLOCKS_PER_NETWORK} residual blocks, got {len(self.blocks)}")
        channels = self.stem_channels
        for i, block in enumerate(self.blocks):
            block.validate()
            if block.channels_in != channels:
                raise ConfigError(
                    f"block {i + 1} expects {block.channels_in} input channels, "
                    f"previous stage provides {channels}")
            channels = block.channels_out
        if min(self.feature_lengths().values()) < 1:
            raise ConfigError("feature length shrinks below 1 sample")

    @property
    def conv_layer_count(self) -> int:
        return 1 + 2 * len(self.blocks) + 1

    def feature_lengths(self) -> dict:
        """Realized feature length after the stem and after each block."""
        pad = (self.stem_kernel - 1) // 2
        length = (self.input_length + 2 * pad - self.stem_kernel) // self.stem_stride + 1
        out = {"stem": length}
        for i, block in enumerate(self.blocks):
            if block.subsample:
                length = (length - 2) // 2 + 1
            out[f"block{i + 1}"] = length
        return out

    def to_json_dict(self) -> dict:
        return {
            "input_length": self.input_length,
            "n_classes": self.n_classes,
            "stem_channels": self.stem_channels,
            "stem_kernel": self.stem_kernel,
            "stem_stride": self.stem_stride,
            "blocks": [
                {
                    "channels_in": b.channels_in,
                    "channels_out": b.channels_out,
                    "kernel_size": b.kernel_size,
                    "subsample": b.subsample,
                    "dropout_rate": b.dropout_rate,
                }
                for b in self.blocks
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "NetworkSpec":
        spec = cls(
            input_length=int(data["input_length"]),
            n_classes=int(data["n_classes"]),
            stem_channels=int(data["stem_channels"]),
            stem_kernel=int(data["stem_kernel"]),
            stem_stride=int(data["stem_stride"]),
            blocks=tuple(ResidualBlockSpec(
                channels_in=int(b["channels_in"]),
                channels_out=int(b["channels_out"]),
                kernel_size=int(b["kernel_size"]),
                subsample=bool(b["subsample"]),
                dropout_rate=float(b["dropout_rate"]),
            ) for b in data["blocks"]),
        )
        spec.validate()
        return spec


def default_network_spec(base_filters: int = 32, n_classes: int = 6,
                         input_length: int = 250, dropout_rate: float = 0.2,
                         stem_stride: int = 1) -> NetworkSpec:
    """The standard 5-block layout: width doubles at the last block,
    blocks 2 and 4 subsample."""
    b = base_filters

    def block(cin, cout, subsample=False):
        return ResidualBlockSpec(cin, cout, kernel_size=15, subsample=subsample,
                                 dropout_rate=dropout_rate)

    spec = NetworkSpec(
        input_length=input_length,
        n_classes=n_classes,
        stem_channels=b,
        stem_kernel=15,
        stem_stride=stem_stride,
        blocks=(
            block(b, b),
            block(b, b, subsample=True),
            block(b, b),
            block(b, b, subsample=True),
            block(b, 2 * b),
        ),
    )
    spec.validate()
    return spec


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Model:
    """Parameters, batch-norm state, and the forward function for one spec."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self._params: dict[str, Parameter] = {}
        self._bn_states: dict[str, BatchNormState] = {}
        self._zero_biases: dict[int, Tensor] = {}

        def conv_param(name, c_out, c_in, k):
            self._add(Parameter(name, _uniform_init(rng, (c_out, c_in, k), c_in * k)))

        def bn_params(name, channels, zero_gamma=False):
            gamma = np.zeros(channels) if zero_gamma else np.ones(channels)
            self._add(Parameter(f"{name}.gamma", gamma))
            self._add(Parameter(f"{name}.beta", np.zeros(channels)))
            self._bn_states[name] = BatchNormState.initial(channels)

        conv_param("stem.conv.weight", spec.stem_channels, 1, spec.stem_kernel)
        bn_params("stem.bn", spec.stem_channels)
        for i, block in enumerate(spec.blocks, start=1):
            cin, cout, k = block.channels_in, block.channels_out, block.kernel_size
            conv_param(f"block{i}.conv1.weight", cout, cin, k)
            bn_params(f"block{i}.bn1", cout)
            conv_param(f"block{i}.conv2.weight", cout, cout, k)
            bn_params(f"block{i}.bn2", cout, zero_gamma=True)
            if block.needs_projection:
                conv_param(f"block{i}.proj.weight", cout, cin, 1)
                self._add(Parameter(f"block{i}.proj.bias", np.zeros(cout)))

        final_c = spec.blocks[-1].channels_out
        conv_param("final.conv.weight", final_c, final_c, 1)
        self._add(Parameter("final.conv.bias", np.zeros(final_c)))
        head_in = final_c * spec.feature_lengths()[f"block{len(spec.blocks)}"]
        self._add(Parameter("head.weight",
                            _uniform_init(rng, (spec.n_classes, head_in), head_in)))
        self._add(Parameter("head.bias", np.zeros(spec.n_classes)))

    def _add(self, param: Parameter) -> None:
        if param.name in self._params:
            raise ConfigError(f"duplicate parameter name {param.name!r}")
        self._params[param.name] = param

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> list:
        return list(self._params.values())

    def param(self, name: str) -> Parameter:
        return self._params[name]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def state_dict(self) -> dict:
        state = {name: p.data.copy() for name, p in self._params.items()}
        for name, bn in self._bn_states.items():
            state[f"{name}.running_mean"] = bn.running_mean.copy()
            state[f"{name}.running_var"] = bn.running_var.copy()
        return state

    def load_state_dict(self, state: dict) -> None:
        expected = set(self._params)
        for name in self._bn_states:
            expected.update((f"{name}.running_mean", f"{name}.running_var"))
        if set(state) != expected:
            missing = expected - set(state)
            extra = set(state) - expected
            raise CheckpointError(
                f"state does not match architecture (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)})")
        for name, p in self._params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise CheckpointError(
                    f"{name}: checkpoint shape {arr.shape} != model shape {p.data.shape}")
            p.data = arr.copy()
        for name, bn in self._bn_states.items():
            bn.running_mean = np.asarray(state[f"{name}.running_mean"], dtype=np.float64).copy()
            bn.running_var = np.asarray(state[f"{name}.running_var"], dtype=np.float64).copy()

    # -- forward ------------------------------------------------------------

    def forward(self, batch, mode: str = "eval", tape=None,
                dropout_rng: np.random.Generator | None = None) -> Tensor:
        """Map [batch, 1, input_length] to class probabilities [batch, n_classes]."""
        if mode not in ("train", "eval"):
            raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.spec.input_length:
            raise DimensionError(
                f"expected input [batch, 1, {self.spec.input_length}], got {x.shape}")
        if (mode == "train" and dropout_rng is None
                and any(b.dropout_rate > 0 for b in self.spec.blocks)):
            raise ConfigError("train-mode forward with dropout needs a dropout_rng")

        p = self._params
        h = ad.conv1d(tape, x, p["stem.conv.weight"], self._zero_bias(self.spec.stem_channels),
                      stride=self.spec.stem_stride,
                      padding=(self.spec.stem_kernel - 1) // 2)
        h = ad.batchnorm1d(tape, h, p["stem.bn.gamma"], p["stem.bn.beta"],
                           self._bn_states["stem.bn"], mode)
        h = ad.relu(tape, h)
        for i, block in enumerate(self.spec.blocks, start=1):
            h = self._block_forward(tape, h, block, i, mode, dropout_rng)
        h = ad.conv1d(tape, h, p["final.conv.weight"], p["final.conv.bias"])
        h = ad.relu(tape, h)
        h = ad.flatten(tape, h)
        logits = ad.dense(tape, h, p["head.weight"], p["head.bias"])
        return ad.softmax(tape, logits)

    def _block_forward(self, tape, x, block: ResidualBlockSpec, index: int,
                       mode: str, dropout_rng) -> Tensor:
        p = self._params
        name = f"block{index}"
        if block.subsample:
            x = ad.maxpool1d(tape, x, window=2, stride=2)
        pad = (block.kernel_size - 1) // 2
        h = ad.conv1d(tape, x, p[f"{name}.conv1.weight"],
                      self._zero_bias(block.channels_out), padding=pad)
        h = ad.batchnorm1d(tape, h, p[f"{name}.bn1.gamma"], p[f"{name}.bn1.beta"],
                           self._bn_states[f"{name}.bn1"], mode)
        h = ad.relu(tape, h)
        h = ad.dropout(tape, h, block.dropout_rate, mode, dropout_rng)
        h = ad.conv1d(tape, h, p[f"{name}.conv2.weight"],
                      self._zero_bias(block.channels_out), padding=pad)
        h = ad.batchnorm1d(tape, h, p[f"{name}.bn2.gamma"], p[f"{name}.bn2.beta"],
                           self._bn_states[f"{name}.bn2"], mode)
        if block.needs_projection:
            shortcut = ad.conv1d(tape, x, p[f"{name}.proj.weight"], p[f"{name}.proj.bias"])
        else:
            shortcut = x
        return ad.relu(tape, ad.add(tape, h, shortcut))

    def _zero_bias(self, channels: int) -> Tensor:
        # convs feeding a batch norm carry no trainable bias (the
        # normalization would cancel it); a constant zero tensor keeps the
        # conv1d signature uniform
        bias = self._zero_biases.get(channels)
        if bias is None:
            bias = Tensor(np.zeros(channels))
            self._zero_biases[channels] = bias
        return bias


def build_network(spec: NetworkSpec, rng: np.random.Generator) -> Model:
    """Construct a model with freshly initialized parameters."""
    return Model(spec, rng)


def predict_proba(model: Model, batch) -> np.ndarray:
    """Eval-mode class probabilities for a batch [n, 1, input_length]."""
    return model.forward(batch, mode="eval", tape=None).data
