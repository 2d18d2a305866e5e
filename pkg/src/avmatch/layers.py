"""Neural building blocks: linear stacks, batch/layer norm, positional
encoding, multi-head self-attention, transformer encoder blocks, and a
stacked bidirectional LSTM.

Initialization: uniform(-sqrt(6/(fan_in+fan_out))) for weights, zero
biases, LSTM forget-gate bias 1.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError
from .tensor import Tensor, concat, dropout, matmul, softmax_rows, stack


def _uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Parameter container; collects trainable tensors recursively."""

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                params[key] = value
            elif isinstance(value, Module):
                params.update(value.parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        params.update(item.parameters(f"{key}.{i}."))
        return params

    def buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Non-trainable state (running statistics) included in checkpoints."""
        bufs: dict[str, np.ndarray] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Module):
                bufs.update(value.buffers(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        bufs.update(item.buffers(f"{key}.{i}."))
        return bufs

    def astype_(self, dtype) -> "Module":
        """Convert all parameters in place (float64 for gradient checks)."""
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
        return self


def param_count(module: Module) -> int:
    """Exact number of trainable scalars."""
    return sum(p.size for p in module.parameters().values())


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.weight = Tensor(
            _uniform_init(rng, in_dim, out_dim, (in_dim, out_dim), dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(
                f"linear expects width {self.weight.shape[0]}, got {x.shape}"
            )
        if x.ndim == 2:
            return matmul(x, self.weight) + self.bias
        flat = x.reshape(-1, x.shape[-1])
        out = matmul(flat, self.weight) + self.bias
        return out.reshape(*x.shape[:-1], self.weight.shape[1])


class BatchNorm(Module):
    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            f"{prefix}running_mean": self.running_mean,
            f"{prefix}running_var": self.running_var,
        }

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if training:
            if x.shape[0] < 2:
                raise DegenerateInputError(
                    "batchnorm in training mode needs a batch of at least 2"
                )
            mu = x.mean(axis=0, keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=0, keepdims=True)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mu.data.reshape(-1)
            self.running_var = (1 - m) * self.running_var + m * var.data.reshape(-1)
            xhat = centered / (var + self.eps).sqrt()
        else:
            mean = self.running_mean.astype(x.dtype)
            std = np.sqrt(self.running_var + self.eps).astype(x.dtype)
            xhat = (x - Tensor(mean)) / Tensor(std)
        return xhat * self.gamma + self.beta


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gamma + self.beta


def positional_encoding(length: int, dim: int, dtype=np.float32) -> Tensor:
    """Sinusoidal table: sin on even columns, cos on odd, shape (length, dim)."""
    if dim % 2 != 0:
        raise ParameterError(f"positional encoding needs even dim, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return Tensor(table.astype(dtype))


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 dtype=np.float32):
        if dim % heads != 0:
            raise ParameterError(f"model dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.dim = dim
        self.q_proj = Linear(dim, dim, rng, dtype)
        self.k_proj = Linear(dim, dim, rng, dtype)
        self.v_proj = Linear(dim, dim, rng, dtype)
        self.out_proj = Linear(dim, dim, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        """Full bidirectional self-attention over (N, T, d) or (T, d)."""
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        n, t, d = x.shape
        h = self.heads
        dh = d // h

        def split(z: Tensor) -> Tensor:
            return z.reshape(n, t, h, dh).transpose(0, 2, 1, 3)  # (N, h, T, dh)

        q, k, v = split(self.q_proj.forward(x)), split(self.k_proj.forward(x)), \
            split(self.v_proj.forward(x))
        scores = matmul(q, k.swap_last_two()) * (1.0 / np.sqrt(dh))
        weights = softmax_rows(scores)
        ctx = matmul(weights, v)  # (N, h, T, dh)
        merged = ctx.transpose(0, 2, 1, 3).reshape(n, t, d)
        out = self.out_proj.forward(merged)
        return out.reshape(t, d) if squeeze else out

    def attention_weights(self, x: Tensor) -> np.ndarray:
        """Row-stochastic attention maps, for inspection and tests."""
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        n, t, d = x.shape
        h, dh = self.heads, d // self.heads
        q = self.q_proj.forward(x).reshape(n, t, h, dh).transpose(0, 2, 1, 3)
        k = self.k_proj.forward(x).reshape(n, t, h, dh).transpose(0, 2, 1, 3)
        scores = matmul(q, k.swap_last_two()) * (1.0 / np.sqrt(dh))
        return softmax_rows(scores).data


class TransformerEncoderLayer(Module):
    """Post-norm block: x -> LN(x + drop(attn(x))) -> LN(h + drop(ff(h)))."""

    def __init__(self, dim: int, heads: int, ff_dim: int, drop_rate: float,
                 rng: np.random.Generator, dtype=np.float32):
        self.attn = MultiHeadAttention(dim, heads, rng, dtype)
        self.ff1 = Linear(dim, ff_dim, rng, dtype)
        self.ff2 = Linear(ff_dim, dim, rng, dtype)
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.drop_rate = drop_rate

    def forward(self, x: Tensor, training: bool, rng: np.random.Generator) -> Tensor:
        h = self.norm1.forward(
            x + dropout(self.attn.forward(x), self.drop_rate, training, rng)
        )
        ff = self.ff2.forward(self.ff1.forward(h).relu())
        return self.norm2.forward(h + dropout(ff, self.drop_rate, training, rng))


class TransformerEncoder(Module):
    def __init__(self, dim: int, heads: int, ff_dim: int, n_layers: int,
                 drop_rate: float, rng: np.random.Generator, dtype=np.float32,
                 use_positional: bool = True):
        self.dim = dim
        self.use_positional = use_positional
        self.blocks = [
            TransformerEncoderLayer(dim, heads, ff_dim, drop_rate, rng, dtype)
            for _ in range(n_layers)
        ]

    def forward(self, x: Tensor, training: bool, rng: np.random.Generator) -> Tensor:
        if x.shape[-1] != self.dim:
            raise ShapeError(f"encoder expects width {self.dim}, got {x.shape}")
        t = x.shape[-2]
        if self.use_positional:
            x = x + positional_encoding(t, self.dim, dtype=x.dtype)
        for block in self.blocks:
            x = block.forward(x, training, rng)
        return x


class BiLSTM(Module):
    """Stacked bidirectional LSTM over (N, T, in) -> (N, T, 2h).

    Gate layout inside each (in+h, 4h) weight: input, forget, candidate,
    output. Forget-gate bias starts at 1.
    """

    def __init__(self, in_dim: int, hidden: int, n_layers: int, drop_rate: float,
                 rng: np.random.Generator, dtype=np.float32):
        self.in_dim = in_dim
        self.hidden = hidden
        self.drop_rate = drop_rate
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        layer_in = in_dim
        for _ in range(n_layers):
            for _direction in range(2):
                w = Tensor(
                    _uniform_init(rng, layer_in + hidden, 4 * hidden,
                                  (layer_in + hidden, 4 * hidden), dtype),
                    requires_grad=True,
                )
                b = np.zeros(4 * hidden, dtype=dtype)
                b[hidden:2 * hidden] = 1.0
                self.weights.append(w)
                self.biases.append(Tensor(b, requires_grad=True))
            layer_in = 2 * hidden

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{prefix}w{i}"] = w
            params[f"{prefix}b{i}"] = b
        return params

    def _run_direction(self, x: Tensor, w: Tensor, b: Tensor,
                       reverse: bool) -> Tensor:
        n, t, _ = x.shape
        hdim = self.hidden
        h = Tensor(np.zeros((n, hdim), dtype=x.dtype))
        c = Tensor(np.zeros((n, hdim), dtype=x.dtype))
        steps: list[Tensor | None] = [None] * t
        order = range(t - 1, -1, -1) if reverse else range(t)
        for ti in order:
            z = matmul(concat([x[:, ti, :], h], axis=1), w) + b
            i_gate = z[:, :hdim].sigmoid()
            f_gate = z[:, hdim:2 * hdim].sigmoid()
            g_cand = z[:, 2 * hdim:3 * hdim].tanh()
            o_gate = z[:, 3 * hdim:].sigmoid()
            c = f_gate * c + i_gate * g_cand
            h = o_gate * c.tanh()
            steps[ti] = h
        return stack(steps, axis=1)  # (N, T, h)

    def forward(self, x: Tensor, training: bool, rng: np.random.Generator) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"bilstm expects width {self.in_dim}, got {x.shape}")
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        n_layers = len(self.weights) // 2
        for layer in range(n_layers):
            fwd = self._run_direction(
                x, self.weights[2 * layer], self.biases[2 * layer], reverse=False)
            bwd = self._run_direction(
                x, self.weights[2 * layer + 1], self.biases[2 * layer + 1],
                reverse=True)
            x = concat([fwd, bwd], axis=2)
            if layer < n_layers - 1:
                x = dropout(x, self.drop_rate, training, rng)
        return x.reshape(*x.shape[1:]) if squeeze else x
