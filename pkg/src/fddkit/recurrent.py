"""LSTM forward/backward passes, softmax, Adam, and a finite-difference gradient oracle.

All math is dense float64 numpy. Gate blocks are packed row-wise in the
order forget, input, candidate, output, so W has shape (4*d_h, d_x),
R has shape (4*d_h, d_h) and b has shape (4*d_h,).
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from .errors import DimensionError, NumericError

GATE_ORDER = ("forget", "input", "candidate", "output")

_MAGIC = b"FDK1"


def sigmoid(x):
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits):
    """Softmax along the last axis, shifted by the row max for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax received non-finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


@dataclass
class LstmParams:
    """One recurrent layer: input kernel W, recurrent kernel R, bias b."""

    W: np.ndarray
    R: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.R.ndim != 2 or self.b.ndim != 1:
            raise DimensionError("LSTM parameter arrays have wrong rank")
        four_dh = self.W.shape[0]
        if four_dh % 4 != 0:
            raise DimensionError("first axis of W must be a multiple of 4")
        d_h = four_dh // 4
        if self.R.shape != (four_dh, d_h):
            raise DimensionError(
                f"R must be {(four_dh, d_h)}, got {self.R.shape}")
        if self.b.shape != (four_dh,):
            raise DimensionError(
                f"b must be {(four_dh,)}, got {self.b.shape}")

    @property
    def d_h(self):
        return self.W.shape[0] // 4

    @property
    def d_x(self):
        return self.W.shape[1]

    def copy(self):
        return LstmParams(self.W.copy(), self.R.copy(), self.b.copy())

    def zeros_like(self):
        return LstmParams(np.zeros_like(self.W), np.zeros_like(self.R),
                          np.zeros_like(self.b))


@dataclass
class ParamSet:
    """All trainable parameters of a recurrent autoencoder with a classifier head.

    ``layers`` holds encoder layers first, then decoder layers;
    ``n_encoder`` marks the split. The classifier reads the hidden state of
    layer ``n_encoder - 1``, so W_c has shape (n_classes, d_z) with d_z the
    hidden size of that layer.
    """

    layers: list = field(default_factory=list)
    W_c: np.ndarray = None
    b_c: np.ndarray = None
    n_encoder: int = None

    def __post_init__(self):
        if self.n_encoder is None:
            self.n_encoder = len(self.layers)
        if not 1 <= self.n_encoder <= len(self.layers):
            raise DimensionError("n_encoder out of range")
        for k in range(1, len(self.layers)):
            if self.layers[k].d_x != self.layers[k - 1].d_h:
                raise DimensionError(
                    f"layer {k} expects input size {self.layers[k].d_x}, "
                    f"previous layer produces {self.layers[k - 1].d_h}")
        self.W_c = np.asarray(self.W_c, dtype=np.float64)
        self.b_c = np.asarray(self.b_c, dtype=np.float64)
        d_z = self.layers[self.n_encoder - 1].d_h
        if self.W_c.ndim != 2 or self.W_c.shape[1] != d_z:
            raise DimensionError(
                f"W_c must have {d_z} columns, got shape {self.W_c.shape}")
        if self.b_c.shape != (self.W_c.shape[0],):
            raise DimensionError("b_c does not match W_c")

    @property
    def d_z(self):
        return self.layers[self.n_encoder - 1].d_h

    @property
    def n_classes(self):
        return self.W_c.shape[0]

    def flat_arrays(self):
        """References (not copies) to every parameter array, fixed order."""
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.R, layer.b))
        out.extend((self.W_c, self.b_c))
        return out

    def copy(self):
        return ParamSet([la.copy() for la in self.layers], self.W_c.copy(),
                        self.b_c.copy(), self.n_encoder)

    def zeros_like(self):
        return ParamSet([la.zeros_like() for la in self.layers],
                        np.zeros_like(self.W_c), np.zeros_like(self.b_c),
                        self.n_encoder)


def init_params(layer_dims, n_classes, seed, n_encoder=None):
    """Draw an initial ParamSet.

    Parameters
    ----------
    layer_dims : sequence of (d_x, d_h)
        Sizes of each recurrent layer, encoder first. Consecutive layers
        must chain: layer k input size equals layer k-1 hidden size.
    n_classes : int
        Output size of the classifier head.
    seed : int
        Seed for the generator; same seed gives identical parameters.
    n_encoder : int, optional
        Number of leading layers that form the encoder. Defaults to all.

    Weights are uniform on +-sqrt(1/fan_in). Forget-gate biases start at
    1.0 so early training does not wipe the cell state; all other biases
    start at zero.
    """
    if not layer_dims:
        raise DimensionError("need at least one layer")
    if n_classes < 2:
        raise DimensionError("classifier needs at least two classes")
    rng = np.random.default_rng(seed)
    layers = []
    for d_x, d_h in layer_dims:
        if d_x < 1 or d_h < 1:
            raise DimensionError("layer sizes must be positive")
        sw = np.sqrt(1.0 / d_x)
        sr = np.sqrt(1.0 / d_h)
        W = rng.uniform(-sw, sw, size=(4 * d_h, d_x))
        R = rng.uniform(-sr, sr, size=(4 * d_h, d_h))
        b = np.zeros(4 * d_h)
        b[:d_h] = 1.0
        layers.append(LstmParams(W, R, b))
    if n_encoder is None:
        n_encoder = len(layers)
    d_z = layers[n_encoder - 1].d_h
    sc = np.sqrt(1.0 / d_z)
    W_c = rng.uniform(-sc, sc, size=(n_classes, d_z))
    b_c = np.zeros(n_classes)
    return ParamSet(layers, W_c, b_c, n_encoder)


@dataclass
class LstmCache:
    """Everything the backward pass needs from one layer's forward pass."""

    x: np.ndarray        # (N, T, d_x)
    h: np.ndarray        # (N, T, d_h)
    c: np.ndarray        # (N, T, d_h)
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray
    h0: np.ndarray       # (N, d_h)
    c0: np.ndarray
    params: LstmParams
    single: bool = False


def lstm_forward_batch(x, params, h0=None, c0=None):
    """Run one LSTM layer over a batch of sequences.

    Parameters
    ----------
    x : ndarray, shape (N, T, d_x)
    params : LstmParams
    h0, c0 : ndarray (N, d_h), optional
        Initial states; zeros when omitted.

    Returns
    -------
    h : ndarray, shape (N, T, d_h)
    c : ndarray, shape (N, T, d_h)
    cache : LstmCache
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"expected (N, T, d_x) input, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("LSTM input contains non-finite values")
    n, t_len, d_x = x.shape
    if d_x != params.d_x:
        raise DimensionError(
            f"input feature size {d_x} does not match layer input size {params.d_x}")
    d_h = params.d_h
    if h0 is None:
        h0 = np.zeros((n, d_h))
    if c0 is None:
        c0 = np.zeros((n, d_h))

    h = np.empty((n, t_len, d_h))
    c = np.empty((n, t_len, d_h))
    f = np.empty((n, t_len, d_h))
    i = np.empty((n, t_len, d_h))
    g = np.empty((n, t_len, d_h))
    o = np.empty((n, t_len, d_h))
    tanh_c = np.empty((n, t_len, d_h))

    # Hoist the input projection out of the time loop; only the recurrent
    # term depends on the previous step.
    xw = x @ params.W.T + params.b
    h_prev, c_prev = h0, c0
    for t in range(t_len):
        a = xw[:, t] + h_prev @ params.R.T
        f[:, t] = sigmoid(a[:, :d_h])
        i[:, t] = sigmoid(a[:, d_h:2 * d_h])
        g[:, t] = np.tanh(a[:, 2 * d_h:3 * d_h])
        o[:, t] = sigmoid(a[:, 3 * d_h:])
        c[:, t] = f[:, t] * c_prev + i[:, t] * g[:, t]
        tanh_c[:, t] = np.tanh(c[:, t])
        h[:, t] = o[:, t] * tanh_c[:, t]
        h_prev, c_prev = h[:, t], c[:, t]

    cache = LstmCache(x, h, c, f, i, g, o, tanh_c, h0, c0, params)
    return h, c, cache


def lstm_forward(seq, params, h0=None, c0=None):
    """Single-sequence wrapper: seq is (T, d_x), outputs are (T, d_h)."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise DimensionError(f"expected (T, d_x) sequence, got shape {seq.shape}")
    h0b = None if h0 is None else np.asarray(h0)[None, :]
    c0b = None if c0 is None else np.asarray(c0)[None, :]
    h, c, cache = lstm_forward_batch(seq[None], params, h0b, c0b)
    cache.single = True
    return h[0], c[0], cache


def lstm_backward(cache, grad_h, grad_c_last=None):
    """Backpropagate through one layer's unrolled forward pass.

    Parameters
    ----------
    cache : LstmCache
        From lstm_forward / lstm_forward_batch.
    grad_h : ndarray
        Loss gradient with respect to every hidden state, same shape as
        the forward h output.
    grad_c_last : ndarray, optional
        Extra gradient flowing into the final cell state.

    Returns
    -------
    grads : LstmParams
        Accumulated dW, dR, db.
    grad_x : ndarray
        Gradient with respect to the layer input, same shape as x.
    """
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if cache.single:
        grad_h = grad_h[None]
        if grad_c_last is not None:
            grad_c_last = np.asarray(grad_c_last)[None]
    if grad_h.shape != cache.h.shape:
        raise DimensionError(
            f"grad_h shape {grad_h.shape} does not match h {cache.h.shape}")
    p = cache.params
    n, t_len, d_h = cache.h.shape

    dW = np.zeros_like(p.W)
    dR = np.zeros_like(p.R)
    db = np.zeros_like(p.b)
    dx = np.empty_like(cache.x)
    dh_next = np.zeros((n, d_h))
    dc = np.zeros((n, d_h)) if grad_c_last is None else grad_c_last.astype(np.float64).copy()

    da = np.empty((n, 4 * d_h))
    for t in range(t_len - 1, -1, -1):
        f = cache.f[:, t]
        i = cache.i[:, t]
        g = cache.g[:, t]
        o = cache.o[:, t]
        tc = cache.tanh_c[:, t]
        c_prev = cache.c[:, t - 1] if t > 0 else cache.c0
        h_prev = cache.h[:, t - 1] if t > 0 else cache.h0

        dh = grad_h[:, t] + dh_next
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        df = dc * c_prev
        di = dc * g
        dg = dc * i

        da[:, :d_h] = df * f * (1.0 - f)
        da[:, d_h:2 * d_h] = di * i * (1.0 - i)
        da[:, 2 * d_h:3 * d_h] = dg * (1.0 - g * g)
        da[:, 3 * d_h:] = do * o * (1.0 - o)

        dW += da.T @ cache.x[:, t]
        dR += da.T @ h_prev
        db += da.sum(axis=0)
        dx[:, t] = da @ p.W
        dh_next = da @ p.R
        dc = dc * f

    if cache.single:
        dx = dx[0]
    return LstmParams(dW, dR, db), dx


@dataclass
class AdamState:
    """First/second moment estimates aligned with ParamSet.flat_arrays()."""

    m: list
    v: list
    step: int = 0


def init_adam(params):
    return AdamState([np.zeros_like(a) for a in params.flat_arrays()],
                     [np.zeros_like(a) for a in params.flat_arrays()], 0)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    t = state.step + 1
    new = params.copy()
    new_m, new_v = [], []
    arrays = new.flat_arrays()
    for a, g, m, v in zip(arrays, grads.flat_arrays(), state.m, state.v):
        m1 = beta1 * m + (1.0 - beta1) * g
        v1 = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m1 / (1.0 - beta1 ** t)
        v_hat = v1 / (1.0 - beta2 ** t)
        a -= lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m.append(m1)
        new_v.append(v1)
    return new, AdamState(new_m, new_v, t)


def global_norm(grads):
    """L2 norm over every gradient array taken together."""
    total = 0.0
    for g in grads.flat_arrays():
        total += float(np.sum(g * g))
    return np.sqrt(total)


def clip_global_norm(grads, max_norm):
    """Scale all gradients down so their joint L2 norm is at most max_norm."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    clipped = grads.copy()
    for g in clipped.flat_arrays():
        g *= scale
    return clipped, norm


def finite_diff_grad(loss_fn, params, eps=1e-5):
    """Central-difference gradient of a scalar loss over every parameter.

    Perturbs one coordinate at a time, so cost is two loss evaluations per
    parameter. Intended as a correctness oracle at toy sizes, not for
    training.
    """
    grads = params.zeros_like()
    work = params.copy()
    for arr, garr in zip(work.flat_arrays(), grads.flat_arrays()):
        flat = arr.reshape(-1)
        gflat = garr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(work)
            flat[j] = orig - eps
            down = loss_fn(work)
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("loss is non-finite near the given parameters")
            gflat[j] = (up - down) / (2.0 * eps)
    return grads


def max_rel_error(grads_a, grads_b):
    """Worst-case elementwise relative error between two gradient sets.

    The denominator is floored at 1.0 so coordinates near zero compare
    absolutely instead of blowing up.
    """
    worst = 0.0
    for a, b in zip(grads_a.flat_arrays(), grads_b.flat_arrays()):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def save_params(params, path):
    """Write a ParamSet to a flat binary file (little-endian float64)."""
    chunks = [_MAGIC,
              struct.pack("<III", len(params.layers), params.n_encoder,
                          params.n_classes)]
    for layer in params.layers:
        chunks.append(struct.pack("<II", layer.d_x, layer.d_h))
    for arr in params.flat_arrays():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_params(path):
    """Read a ParamSet written by save_params."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise NumericError(f"{path} is not a parameter file")
    off = 4
    n_layers, n_encoder, n_classes = struct.unpack_from("<III", blob, off)
    off += 12
    dims = []
    for _ in range(n_layers):
        dims.append(struct.unpack_from("<II", blob, off))
        off += 8

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        off += count * 8
        return arr.reshape(shape).astype(np.float64)

    layers = []
    for d_x, d_h in dims:
        W = take((4 * d_h, d_x))
        R = take((4 * d_h, d_h))
        b = take((4 * d_h,))
        layers.append(LstmParams(W, R, b))
    d_z = dims[n_encoder - 1][1]
    W_c = take((n_classes, d_z))
    b_c = take((n_classes,))
    if off != len(blob):
        raise NumericError(f"{path} has trailing bytes; file is corrupt")
    return ParamSet(layers, W_c, b_c, n_encoder)
