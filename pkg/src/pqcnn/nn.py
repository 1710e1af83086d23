"""A small 1-D CNN written directly in numpy.

Activations are laid out as ``(batch, channels, length)``; every layer-level
function also accepts an unbatched ``(channels, length)`` array. All math is
float64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_ALPHA = 0.001
N_CLASSES = 6


class ShapeError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (channels, length) or (batch, channels, length), got {x.shape}")
    return x, False


def conv_output_length(in_len: int, kernel_len: int, stride: int) -> int:
    return (in_len - kernel_len) // stride + 1


# ---------------------------------------------------------------- convolution


def _windows(x: np.ndarray, kernel_len: int, stride: int) -> np.ndarray:
    """(N, C, L) -> (N, L_out, C * K) patch matrix."""
    win = sliding_window_view(x, kernel_len, axis=2)[:, :, ::stride, :]
    n, c, lout, k = win.shape
    return win.transpose(0, 2, 1, 3).reshape(n, lout, c * k)


def conv1d_forward(x, kernels: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation: ``out[o, j] = b[o] + sum_{c,m} w[o, c, m] * x[c, j*stride + m]``."""
    x, squeeze = _batched(x)
    out_ch, in_ch, k = kernels.shape
    if x.shape[1] != in_ch:
        raise ShapeError(f"input has {x.shape[1]} channels, kernels expect {in_ch}")
    if stride < 1 or conv_output_length(x.shape[2], k, stride) < 1:
        raise ShapeError(f"kernel length {k} / stride {stride} do not fit input length {x.shape[2]}")
    cols = _windows(x, k, stride)
    n, lout, _ = cols.shape
    out = cols.reshape(n * lout, -1) @ kernels.reshape(out_ch, -1).T + bias
    out = out.reshape(n, lout, out_ch).transpose(0, 2, 1)
    return out[0] if squeeze else out


def conv1d_backward(x, kernels, bias, grad_out, stride: int = 1, need_input_grad: bool = True):
    """Gradients ``(grad_x, grad_kernels, grad_bias)``, summed over the batch.

    ``grad_x`` is None when ``need_input_grad`` is false.
    """
    x, squeeze = _batched(x)
    g, _ = _batched(grad_out)
    out_ch, in_ch, k = kernels.shape
    n, _, length = x.shape
    lout = conv_output_length(length, k, stride)
    if g.shape != (n, out_ch, lout):
        raise ShapeError(f"grad_out shape {g.shape} != forward output shape {(n, out_ch, lout)}")

    cols = _windows(x, k, stride)  # (N, L_out, C*K)
    gt = g.transpose(0, 2, 1).reshape(n * lout, out_ch)  # (N*L_out, O)
    grad_kernels = (gt.T @ cols.reshape(n * lout, -1)).reshape(kernels.shape)
    grad_bias = g.sum(axis=(0, 2))

    grad_x = None
    if need_input_grad:
        # full correlation of the zero-dilated, zero-padded output gradient with flipped kernels
        span = stride * (lout - 1) + 1
        padded = np.zeros((n, out_ch, span + 2 * (k - 1)))
        padded[:, :, k - 1 : k - 1 + span : stride] = g
        flipped = kernels[:, :, ::-1].transpose(1, 0, 2)  # (C, O, K)
        grad_x = np.zeros_like(x)
        grad_x[:, :, : span + k - 1] = conv1d_forward(padded, flipped, np.zeros(in_ch), 1)
        if squeeze:
            grad_x = grad_x[0]
    return grad_x, grad_kernels, grad_bias


# ---------------------------------------------------------------- pointwise / dense


def leaky_relu_forward(x, alpha: float = LEAKY_ALPHA) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(alpha * x, x)


def leaky_relu_backward(x, grad_out, alpha: float = LEAKY_ALPHA) -> np.ndarray:
    # slope 1 at exactly x == 0
    return np.where(np.asarray(x) >= 0, 1.0, alpha) * grad_out


def dense_forward(x, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weights.shape[1]:
        raise ShapeError(f"input dim {x.shape[-1]} != weight in_dim {weights.shape[1]}")
    return x @ weights.T + bias


def dense_backward(x, weights, grad_out):
    """``(grad_x, grad_weights, grad_bias)``; batch dimension, if any, is summed."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape[-1] != weights.shape[0] or x.shape[-1] != weights.shape[1]:
        raise ShapeError("grad_out / input do not match layer dimensions")
    x2, g2 = np.atleast_2d(x), np.atleast_2d(g)
    return g @ weights, g2.T @ x2, g2.sum(axis=0)


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_loss(z, label: int, n_classes: int | None = None) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of ``label`` under ``softmax(z)`` and its gradient w.r.t. ``z``."""
    z = np.asarray(z, dtype=np.float64)
    n_classes = z.shape[-1] if n_classes is None else n_classes
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} outside [0, {n_classes})")
    loss = -log_softmax(z)[label]
    grad = softmax(z)
    grad[label] -= 1.0
    return float(loss), grad


def batch_cross_entropy(z: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss over a batch of logits ``(N, K)`` and the gradient of that mean."""
    n = z.shape[0]
    if np.any(labels < 0) or np.any(labels >= z.shape[1]):
        raise ValueError("label out of range")
    rows = np.arange(n)
    loss = -log_softmax(z)[rows, labels].mean()
    grad = softmax(z)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


# ---------------------------------------------------------------- layers


class Conv1D:
    kind = 1

    def __init__(self, in_ch: int, out_ch: int, kernel_len: int, stride: int = 1):
        if kernel_len < 1 or stride < 1:
            raise ShapeError("kernel_len and stride must be >= 1")
        self.stride = stride
        self.params = {
            "kernels": np.zeros((out_ch, in_ch, kernel_len)),
            "bias": np.zeros(out_ch),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.need_input_grad = True

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.params["kernels"].shape

    def output_shape(self, in_shape):
        c, length = in_shape
        out_ch, in_ch, k = self.shape
        if c != in_ch:
            raise ShapeError(f"conv expects {in_ch} channels, got {c}")
        lout = conv_output_length(length, k, self.stride)
        if lout < 1:
            raise ShapeError(f"kernel length {k} does not fit input length {length}")
        return (out_ch, lout)

    def init(self, rng: np.random.Generator) -> None:
        out_ch, in_ch, k = self.shape
        limit = np.sqrt(6.0 / (in_ch * k + out_ch * k))
        self.params["kernels"][...] = rng.uniform(-limit, limit, self.shape)
        self.params["bias"][...] = 0.0

    def forward(self, x):
        self._x = x
        return conv1d_forward(x, self.params["kernels"], self.params["bias"], self.stride)

    def backward(self, g):
        gx, gk, gb = conv1d_backward(
            self._x, self.params["kernels"], self.params["bias"], g, self.stride, self.need_input_grad
        )
        self.grads["kernels"][...] = gk
        self.grads["bias"][...] = gb
        return gx


class LeakyReLU:
    kind = 2

    def __init__(self, alpha: float = LEAKY_ALPHA):
        self.alpha = alpha
        self.params, self.grads = {}, {}

    def output_shape(self, in_shape):
        return in_shape

    def init(self, rng):
        pass

    def forward(self, x):
        self._x = x
        return leaky_relu_forward(x, self.alpha)

    def backward(self, g):
        return leaky_relu_backward(self._x, g, self.alpha)


class Flatten:
    kind = 3

    def __init__(self):
        self.params, self.grads = {}, {}

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def init(self, rng):
        pass

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


class Dense:
    kind = 4

    def __init__(self, in_dim: int, out_dim: int):
        self.params = {"weights": np.zeros((out_dim, in_dim)), "bias": np.zeros(out_dim)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def output_shape(self, in_shape):
        if in_shape != (self.params["weights"].shape[1],):
            raise ShapeError(f"dense expects ({self.params['weights'].shape[1]},), got {in_shape}")
        return (self.params["weights"].shape[0],)

    def init(self, rng):
        out_dim, in_dim = self.params["weights"].shape
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        self.params["weights"][...] = rng.uniform(-limit, limit, (out_dim, in_dim))
        self.params["bias"][...] = 0.0

    def forward(self, x):
        self._x = x
        return dense_forward(x, self.params["weights"], self.params["bias"])

    def backward(self, g):
        gx, gw, gb = dense_backward(self._x, self.params["weights"], g)
        self.grads["weights"][...] = gw
        self.grads["bias"][...] = gb
        return gx


class Network:
    """Layer stack ending in logits; softmax/cross-entropy are applied by the callers below."""

    def __init__(self, layers, input_shape: tuple[int, int], name: str = "custom"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.name = name
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if len(shape) != 1:
            raise ShapeError(f"network must end in a flat score vector, got {shape}")
        self.n_classes = shape[0]
        # the input never needs a gradient
        for layer in self.layers:
            if isinstance(layer, Conv1D):
                layer.need_input_grad = False
                break

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params.values()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads.values()]

    def get_weights(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def set_weights(self, weights) -> None:
        for p, w in zip(self.parameters(), weights, strict=True):
            p[...] = w

    def logits(self, x) -> np.ndarray:
        x, squeeze = _batched(x)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"network expects input {self.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x[0] if squeeze else x

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        x, _ = _batched(x)
        out = [np.argmax(self.logits(x[i : i + batch_size]), axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def backward(self, x, labels) -> float:
        """Mean cross-entropy over the batch; fills every layer's ``grads`` with its gradient."""
        x, _ = _batched(x)
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        z = self.logits(x)
        loss, g = batch_cross_entropy(z, labels)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return loss


def network_forward(net: Network, x) -> np.ndarray:
    return net.predict_proba(x)


def network_backward(net: Network, x, labels) -> list[np.ndarray]:
    net.backward(x, labels)
    return net.gradients()


# ---------------------------------------------------------------- architectures

ARCHITECTURES = {
    "cnn-1a": (200, 100, 50),
    "cnn-1b": (200, 100),
    "cnn-1c": (200,),
    "cnn-1d": (400,),
}
STRUCTURE_STRINGS = {
    "cnn-1a": "3 layers, 200x1, 100x1, 50x1",
    "cnn-1b": "2 layers, 200x1, 100x1",
    "cnn-1c": "1 layer, 200x1",
    "cnn-1d": "1 layer, 400x1",
}
DEFAULT_FILTERS = 8
FIRST_STRIDE = 4


def build_network(
    input_len: int,
    kernel_lens,
    filters: int = DEFAULT_FILTERS,
    strides=None,
    seed: int = 0,
    n_classes: int = N_CLASSES,
    name: str = "custom",
) -> Network:
    """conv -> leaky-ReLU blocks, then flatten and a dense score layer."""
    kernel_lens = list(kernel_lens)
    strides = [1] * len(kernel_lens) if strides is None else list(strides)
    layers, in_ch, length = [], 1, input_len
    for k, s in zip(kernel_lens, strides, strict=True):
        conv = Conv1D(in_ch, filters, k, s)
        in_ch, length = conv.output_shape((in_ch, length))
        layers += [conv, LeakyReLU()]
        in_ch = filters
    layers += [Flatten(), Dense(in_ch * length, n_classes)]
    net = Network(layers, (1, input_len), name=name)
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        layer.init(rng)
    return net


def build_architecture(name: str, input_len: int = 1000, seed: int = 0, filters: int = DEFAULT_FILTERS) -> Network:
    """One of the four named conv stacks. Only the first conv is strided."""
    key = name.lower()
    if key not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {name!r}; choose from {{{', '.join(ARCHITECTURES)}}}")
    kernels = ARCHITECTURES[key]
    strides = [FIRST_STRIDE] + [1] * (len(kernels) - 1)
    return build_network(input_len, kernels, filters, strides, seed, name=key)


# ---------------------------------------------------------------- model file
#
#   magic "PQNN" | u16 version | u16 name_len + utf-8 name | u32 in_ch | u32 in_len | u32 n_layers
#   per layer:   u8 kind, then  conv: 4 x u32 (in_ch, out_ch, kernel_len, stride)
#                               leaky: f64 alpha
#                               flatten: -
#                               dense: 2 x u32 (in_dim, out_dim)
#   then every parameter array in layer order, little-endian f64

MODEL_MAGIC = b"PQNN"
MODEL_VERSION = 1


def save_model(net: Network, path) -> None:
    name = net.name.encode()
    out = [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, len(name)), name]
    out.append(struct.pack("<III", *net.input_shape, len(net.layers)))
    for layer in net.layers:
        out.append(struct.pack("<B", layer.kind))
        if isinstance(layer, Conv1D):
            o, c, k = layer.shape
            out.append(struct.pack("<IIII", c, o, k, layer.stride))
        elif isinstance(layer, LeakyReLU):
            out.append(struct.pack("<d", layer.alpha))
        elif isinstance(layer, Dense):
            o, i = layer.params["weights"].shape
            out.append(struct.pack("<II", i, o))
    for p in net.parameters():
        out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(b"".join(out))
    tmp.replace(path)


def load_model(path) -> Network:
    buf = Path(path).read_bytes()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(buf):
            raise ModelFormatError(f"truncated model file at byte {off}")
        vals = struct.unpack_from(fmt, buf, off)
        off += size
        return vals

    if buf[:4] != MODEL_MAGIC:
        raise ModelFormatError("bad magic, not a PQNN model")
    off = 4
    version, name_len = take("<HH")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    name = buf[off : off + name_len].decode()
    off += name_len
    in_ch, in_len, n_layers = take("<III")
    layers = []
    for _ in range(n_layers):
        (kind,) = take("<B")
        if kind == Conv1D.kind:
            c, o, k, s = take("<IIII")
            layers.append(Conv1D(c, o, k, s))
        elif kind == LeakyReLU.kind:
            layers.append(LeakyReLU(*take("<d")))
        elif kind == Flatten.kind:
            layers.append(Flatten())
        elif kind == Dense.kind:
            i, o = take("<II")
            layers.append(Dense(i, o))
        else:
            raise ModelFormatError(f"unknown layer kind {kind} at byte {off - 1}")
    net = Network(layers, (in_ch, in_len), name=name)
    for p in net.parameters():
        size = 8 * p.size
        if off + size > len(buf):
            raise ModelFormatError(f"truncated parameters at byte {off}")
        p[...] = np.frombuffer(buf, "<f8", p.size, off).reshape(p.shape)
        off += size
    if off != len(buf):
        raise ModelFormatError(f"trailing bytes after parameters at byte {off}")
    return net
