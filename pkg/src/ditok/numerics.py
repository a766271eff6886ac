"""Dense tensors with reverse-mode gradient accumulation.

Just enough substrate for the transducer: each op computes its forward value
eagerly with numpy and records a closure that scatters the output gradient
back into its parents. Gradients accumulate (+=); zeroing is owned by the
optimizer. Tests run in 64-bit; training may switch to 32-bit.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    ConfigurationError,
    DeterminismError,
    DimensionError,
    NumericError,
    ValidationError,
)

DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    global DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ConfigurationError(f"unsupported dtype {dtype}; use float32 or float64")
    DEFAULT_DTYPE = dtype.type


class Tensor:
    """A dense real array plus a lazily allocated gradient buffer."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise DimensionError(f"backward() requires a scalar, got shape {self.shape}")
        # Iterative topological order (graphs can be deep).
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Parameter:
    """A named trainable tensor with Adam state."""

    def __init__(self, data, name: str):
        self.tensor = Tensor(np.array(data, copy=True))
        self.name = name
        self.adam_m = np.zeros_like(self.tensor.data)
        self.adam_v = np.zeros_like(self.tensor.data)
        self.step_count = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value) -> None:
        self.tensor.data = np.asarray(value, dtype=self.tensor.data.dtype)

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    @property
    def shape(self):
        return self.tensor.data.shape

    def zero_grad(self) -> None:
        self.tensor.zero_grad()

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _t(x) -> Tensor:
    return x.tensor if isinstance(x, Parameter) else x


def constant(data) -> Tensor:
    return Tensor(data)


# ---------------------------------------------------------------------------
# Elementwise and linear ops
# ---------------------------------------------------------------------------


def affine(x, w, b) -> Tensor:
    """out[n, j] = sum_a x[n, a] * w[a, j] + b[j]."""
    xt, wt, bt = _t(x), _t(w), _t(b)
    if xt.ndim != 2 or wt.ndim != 2 or xt.shape[1] != wt.shape[0]:
        raise DimensionError(f"affine: x {xt.shape} incompatible with w {wt.shape}")
    if bt.shape != (wt.shape[1],):
        raise DimensionError(f"affine: bias {bt.shape} incompatible with w {wt.shape}")
    out_data = xt.data @ wt.data + bt.data

    def backward(g):
        xt.accumulate(g @ wt.data.T)
        wt.accumulate(xt.data.T @ g)
        bt.accumulate(g.sum(axis=0))

    return Tensor(out_data, (xt, wt, bt), backward)


def matmul(a, b) -> Tensor:
    at, bt = _t(a), _t(b)
    if at.ndim != 2 or bt.ndim != 2 or at.shape[1] != bt.shape[0]:
        raise DimensionError(f"matmul: {at.shape} x {bt.shape}")
    out_data = at.data @ bt.data

    def backward(g):
        at.accumulate(g @ bt.data.T)
        bt.accumulate(at.data.T @ g)

    return Tensor(out_data, (at, bt), backward)


def add(a, b) -> Tensor:
    at, bt = _t(a), _t(b)
    if at.shape != bt.shape:
        raise DimensionError(f"add: {at.shape} vs {bt.shape}")
    out_data = at.data + bt.data

    def backward(g):
        at.accumulate(g)
        bt.accumulate(g)

    return Tensor(out_data, (at, bt), backward)


def scale(x, c: float) -> Tensor:
    xt = _t(x)
    c = float(c)

    def backward(g):
        xt.accumulate(g * c)

    return Tensor(xt.data * c, (xt,), backward)


def mul_const(x, arr) -> Tensor:
    """Elementwise multiply by a non-trainable array (masks)."""
    xt = _t(x)
    arr = np.asarray(arr, dtype=xt.data.dtype)
    out_data = xt.data * arr

    def backward(g):
        xt.accumulate(g * arr)

    return Tensor(out_data, (xt,), backward)


def add_const(x, arr) -> Tensor:
    """Elementwise add a non-trainable array (noise, positional offsets)."""
    xt = _t(x)
    arr = np.asarray(arr, dtype=xt.data.dtype)

    def backward(g):
        xt.accumulate(g)

    return Tensor(xt.data + arr, (xt,), backward)


def relu(x) -> Tensor:
    xt = _t(x)
    mask = xt.data > 0

    def backward(g):
        xt.accumulate(g * mask)

    return Tensor(xt.data * mask, (xt,), backward)


def reshape(x, shape) -> Tensor:
    xt = _t(x)
    out_data = xt.data.reshape(shape)

    def backward(g):
        xt.accumulate(g.reshape(xt.shape))

    return Tensor(out_data, (xt,), backward)


def concat_cols(parts: list) -> Tensor:
    """Concatenate 2-D tensors along the last axis."""
    ts = [_t(p) for p in parts]
    widths = [t.shape[1] for t in ts]
    out_data = np.concatenate([t.data for t in ts], axis=1)
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            t.accumulate(g[:, lo:hi])

    return Tensor(out_data, tuple(ts), backward)


def sum_all(x) -> Tensor:
    xt = _t(x)

    def backward(g):
        xt.accumulate(np.full_like(xt.data, float(g)))

    return Tensor(np.asarray(xt.data.sum()), (xt,), backward)


def mean_all(x) -> Tensor:
    xt = _t(x)
    n = xt.data.size

    def backward(g):
        xt.accumulate(np.full_like(xt.data, float(g) / n))

    return Tensor(np.asarray(xt.data.mean()), (xt,), backward)


def mean_rows(x) -> Tensor:
    """Mean over axis 0 of a T x D tensor -> (D,)."""
    xt = _t(x)
    T = xt.shape[0]

    def backward(g):
        xt.accumulate(np.broadcast_to(g / T, xt.shape))

    return Tensor(xt.data.mean(axis=0), (xt,), backward)


def tile_rows(x, n: int) -> Tensor:
    """Broadcast a (D,) tensor to (n, D)."""
    xt = _t(x)
    out_data = np.broadcast_to(xt.data, (n, xt.shape[0])).copy()

    def backward(g):
        xt.accumulate(g.sum(axis=0))

    return Tensor(out_data, (xt,), backward)


# ---------------------------------------------------------------------------
# Normalization and softmax
# ---------------------------------------------------------------------------


def log_softmax(x) -> Tensor:
    """Log-softmax along the last axis, max-shifted for stability."""
    xt = _t(x)
    if xt.shape[-1] < 1:
        raise DimensionError("log_softmax: empty last axis")
    if not np.all(np.isfinite(xt.data)):
        raise NumericError("log_softmax: non-finite input")
    shifted = xt.data - xt.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse
    softmax = np.exp(out_data)

    def backward(g):
        xt.accumulate(g - softmax * g.sum(axis=-1, keepdims=True))

    return Tensor(out_data, (xt,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-vector zero mean / unit variance over the last axis, then scale+shift."""
    xt, gt, bt = _t(x), _t(gamma), _t(beta)
    D = xt.shape[-1]
    if gt.shape != (D,) or bt.shape != (D,):
        raise DimensionError(f"layer_norm: gamma/beta must be ({D},)")
    mu = xt.data.mean(axis=-1, keepdims=True)
    var = xt.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    z = (xt.data - mu) * inv
    out_data = z * gt.data + bt.data

    def backward(g):
        gz = g * gt.data
        xt.accumulate(
            (gz - gz.mean(axis=-1, keepdims=True) - z * (gz * z).mean(axis=-1, keepdims=True)) * inv
        )
        axes = tuple(range(g.ndim - 1))
        gt.accumulate((g * z).sum(axis=axes))
        bt.accumulate(g.sum(axis=axes))

    return Tensor(out_data, (xt, gt, bt), backward)


# ---------------------------------------------------------------------------
# Lookup, pooling, resampling
# ---------------------------------------------------------------------------


def embedding(table, ids) -> Tensor:
    """Row lookup: ids of any shape -> ids.shape + (E,)."""
    tt = _t(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= tt.shape[0]):
        raise ValidationError(
            f"embedding: id out of range [0, {tt.shape[0]}), got min={ids.min()} max={ids.max()}"
        )
    out_data = tt.data[ids]

    def backward(g):
        if tt.grad is None:
            tt.grad = np.zeros_like(tt.data)
        np.add.at(tt.grad, ids.reshape(-1), g.reshape(-1, tt.shape[1]))

    return Tensor(out_data, (tt,), backward)


def add_positional(x, pos) -> Tensor:
    """x[T x D] + pos[:T]; pos is a trainable (max_len, D) table."""
    xt, pt = _t(x), _t(pos)
    T = xt.shape[0]
    if T > pt.shape[0]:
        raise DimensionError(f"add_positional: T={T} exceeds table length {pt.shape[0]}")
    out_data = xt.data + pt.data[:T]

    def backward(g):
        xt.accumulate(g)
        if pt.grad is None:
            pt.grad = np.zeros_like(pt.data)
        pt.grad[:T] += g

    return Tensor(out_data, (xt, pt), backward)


def mean_pool(x, k: int) -> Tensor:
    """Mean-pool a T x D tensor by factor k along time; last pool may be partial."""
    xt = _t(x)
    if k == 1:
        return xt if isinstance(x, Tensor) else Tensor(xt.data, (xt,), lambda g: xt.accumulate(g))
    T, D = xt.shape
    T_out = -(-T // k)
    T_full = (T // k) * k
    full = xt.data[:T_full].reshape(-1, k, D).mean(axis=1)
    if T_full == T:
        out_data = full
    else:
        out_data = np.concatenate([full, xt.data[T_full:].mean(axis=0, keepdims=True)])
    tail = T - T_full

    def backward(g):
        gx = np.empty_like(xt.data)
        gx[:T_full] = np.repeat(g[: T_full // k] / k, k, axis=0)
        if tail:
            gx[T_full:] = g[-1] / tail
        xt.accumulate(gx)

    return Tensor(out_data, (xt,), backward)


def repeat_upsample(x, k: int, out_len: int) -> Tensor:
    """Nearest-neighbor upsample: out[i] = x[i // k], truncated to out_len."""
    xt = _t(x)
    idx = np.minimum(np.arange(out_len) // k, xt.shape[0] - 1)
    out_data = xt.data[idx]

    def backward(g):
        gx = np.zeros_like(xt.data)
        np.add.at(gx, idx, g)
        xt.accumulate(gx)

    return Tensor(out_data, (xt,), backward)


def linear_resample(x, positions) -> Tensor:
    """Sample a T x D tensor at fractional time positions (endpoint-clamped)."""
    xt = _t(x)
    T = xt.shape[0]
    pos = np.clip(np.asarray(positions, dtype=np.float64), 0.0, T - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, T - 1)
    frac = (pos - lo).astype(xt.data.dtype)[:, None]
    out_data = xt.data[lo] + frac * (xt.data[hi] - xt.data[lo])

    def backward(g):
        gx = np.zeros_like(xt.data)
        np.add.at(gx, lo, g * (1.0 - frac))
        np.add.at(gx, hi, g * frac)
        xt.accumulate(gx)

    return Tensor(out_data, (xt,), backward)


# ---------------------------------------------------------------------------
# Fused sequence ops (manual backward, verified by check_gradients)
# ---------------------------------------------------------------------------


def self_attention(x, wq, wk, wv, wo, n_heads: int) -> Tensor:
    """Full (non-causal) multi-head self-attention over a T x D sequence."""
    xt = _t(x)
    wqt, wkt, wvt, wot = _t(wq), _t(wk), _t(wv), _t(wo)
    T, D = xt.shape
    if D % n_heads != 0:
        raise DimensionError(f"self_attention: D={D} not divisible by n_heads={n_heads}")
    dh = D // n_heads
    q = xt.data @ wqt.data
    k = xt.data @ wkt.data
    v = xt.data @ wvt.data
    # (H, T, dh)
    qh = np.ascontiguousarray(q.reshape(T, n_heads, dh).transpose(1, 0, 2))
    kh = np.ascontiguousarray(k.reshape(T, n_heads, dh).transpose(1, 0, 2))
    vh = np.ascontiguousarray(v.reshape(T, n_heads, dh).transpose(1, 0, 2))
    inv_sqrt = 1.0 / np.sqrt(dh)
    scores = (qh @ kh.transpose(0, 2, 1)) * inv_sqrt
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    ctx = att @ vh  # (H, T, dh)
    ctx_flat = ctx.transpose(1, 0, 2).reshape(T, D)
    out_data = ctx_flat @ wot.data

    def backward(g):
        g_ctx_flat = g @ wot.data.T
        wot.accumulate(ctx_flat.T @ g)
        g_ctx = np.ascontiguousarray(g_ctx_flat.reshape(T, n_heads, dh).transpose(1, 0, 2))
        g_att = g_ctx @ vh.transpose(0, 2, 1)
        g_vh = att.transpose(0, 2, 1) @ g_ctx
        g_scores = att * (g_att - (g_att * att).sum(axis=-1, keepdims=True))
        g_qh = (g_scores @ kh) * inv_sqrt
        g_kh = (g_scores.transpose(0, 2, 1) @ qh) * inv_sqrt
        g_q = g_qh.transpose(1, 0, 2).reshape(T, D)
        g_k = g_kh.transpose(1, 0, 2).reshape(T, D)
        g_v = g_vh.transpose(1, 0, 2).reshape(T, D)
        xt.accumulate(g_q @ wqt.data.T + g_k @ wkt.data.T + g_v @ wvt.data.T)
        wqt.accumulate(xt.data.T @ g_q)
        wkt.accumulate(xt.data.T @ g_k)
        wvt.accumulate(xt.data.T @ g_v)

    return Tensor(out_data, (xt, wqt, wkt, wvt, wot), backward)


def depthwise_conv1d(x, kernel) -> Tensor:
    """Per-channel 1-D convolution along time, zero-padded ('same' length).

    kernel is (k, D); out[t, d] = sum_j x[t + j - k//2, d] * kernel[j, d].
    """
    xt, kt = _t(x), _t(kernel)
    T, D = xt.shape
    k = kt.shape[0]
    if kt.shape[1] != D:
        raise DimensionError(f"depthwise_conv1d: kernel {kt.shape} vs input D={D}")
    half = k // 2
    padded = np.zeros((T + k - 1, D), dtype=xt.data.dtype)
    padded[half : half + T] = xt.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, k, axis=0)  # (T, D, k)
    # out[t, d] = windows[t, d, :] . kernel[:, d], batched over channels
    win_d = np.ascontiguousarray(windows.transpose(1, 0, 2))  # (D, T, k)
    out_data = (win_d @ kt.data.T[:, :, None])[:, :, 0].T

    def backward(g):
        g_d = g.T[:, :, None]  # (D, T, 1)
        kt.accumulate((win_d.transpose(0, 2, 1) @ g_d)[:, :, 0].T)
        gpad = np.zeros_like(padded)
        for j in range(k):
            gpad[j : j + T] += g * kt.data[j]
        xt.accumulate(gpad[half : half + T])

    return Tensor(out_data, (xt, kt), backward)


def joint_broadcast_add(h, f) -> Tensor:
    """h[T x J] (+) f[U1 x J] -> T x U1 x J via broadcast addition."""
    ht, ft = _t(h), _t(f)
    if ht.shape[1] != ft.shape[1]:
        raise DimensionError(f"joint_broadcast_add: {ht.shape} vs {ft.shape}")
    out_data = ht.data[:, None, :] + ft.data[None, :, :]

    def backward(g):
        ht.accumulate(g.sum(axis=1))
        ft.accumulate(g.sum(axis=0))

    return Tensor(out_data, (ht, ft), backward)


# ---------------------------------------------------------------------------
# Optimizer and gradient checking
# ---------------------------------------------------------------------------


def adam_step(p: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.98,
              eps: float = 1e-9) -> Parameter:
    """Bias-corrected Adam update; zeroes the grad buffer and bumps step_count."""
    if lr <= 0:
        raise ConfigurationError(f"adam_step: lr must be positive, got {lr}")
    if p.grad is None:
        raise ValidationError(f"adam_step: parameter {p.name!r} has no gradient")
    g = p.grad
    p.step_count += 1
    t = p.step_count
    p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
    p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (g * g)
    m_hat = p.adam_m / (1.0 - beta1**t)
    v_hat = p.adam_v / (1.0 - beta2**t)
    p.tensor.data = p.tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    p.zero_grad()
    return p


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale all grads so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for p in params:
            g = p.grad
            if g is not None:
                g *= factor
    return norm


def check_gradients(f, params: list[Parameter], h: float = 1e-5,
                    n_sample: int = 32, seed: int = 0) -> float:
    """Compare accumulated analytic gradients of scalar f() against central differences.

    Returns the max relative error |a - n| / max(1, |a|, |n|) over a random
    subsample of at least min(n_sample, size) coordinates per parameter.
    """
    for p in params:
        p.zero_grad()
    out1 = f()
    out2 = f()
    if not np.array_equal(out1.data, out2.data):
        raise DeterminismError("check_gradients: two forward passes disagree")
    out1.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for p in params}
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for p in params:
        flat = p.tensor.data.reshape(-1)
        n = min(n_sample, flat.size)
        coords = rng.choice(flat.size, size=n, replace=False)
        a_flat = analytic[p.name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp = float(f().data)
            flat[c] = orig - h
            fm = float(f().data)
            flat[c] = orig
            num = (fp - fm) / (2.0 * h)
            a = float(a_flat[c])
            rel = abs(a - num) / max(1.0, abs(a), abs(num))
            if rel > max_rel:
                max_rel = rel
    for p in params:
        p.zero_grad()
    return max_rel
