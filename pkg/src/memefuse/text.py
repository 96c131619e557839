"""Text feature extractors: BiLSTM, BiGRU, BiLSTM with attention, sentence dense.

LSTM memory block, gates acting on ``[h_prev, x_t]``::

    f = sigmoid(W_f [h, x] + b_f)    i = sigmoid(W_i [h, x] + b_i)
    o = sigmoid(W_o [h, x] + b_o)    C~ = tanh(W_c [h, x] + b_c)
    C_t = f * C_prev + i * C~        h_t = o * tanh(C_t)

GRU (update gate z, reset gate r)::

    z = sigmoid(W_z [h, x] + b_z)    r = sigmoid(W_r [h, x] + b_r)
    h~ = tanh(W_h [r * h, x] + b_h)  h_t = (1 - z) * h + z * h~

Sequences are batched as (B, T, d) with a (B, T) 0/1 mask; padding sits on the
right. At padded positions the recurrent state is carried unchanged, so the
state at the last step equals the state at the last real token.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ConfigError, EmptyInputError, ShapeError, UsageError
from .layers import Dense, Dropout, Module, fan_in_scale
from .tensor import Rng, init_uniform, sigmoid, softmax

LSTM_GATES = ("f", "i", "o", "c")
GRU_GATES = ("z", "r", "h")


def lstm_params(rng: Rng, d_in: int, hidden: int) -> dict[str, np.ndarray]:
    s = fan_in_scale(hidden + d_in)
    p = {}
    for g in LSTM_GATES:
        p[f"W_{g}"] = init_uniform(rng, (hidden, hidden + d_in), s)
        p[f"b_{g}"] = init_uniform(rng, (hidden,), s)
    return p


def gru_params(rng: Rng, d_in: int, hidden: int) -> dict[str, np.ndarray]:
    s = fan_in_scale(hidden + d_in)
    p = {}
    for g in GRU_GATES:
        p[f"W_{g}"] = init_uniform(rng, (hidden, hidden + d_in), s)
        p[f"b_{g}"] = init_uniform(rng, (hidden,), s)
    return p


def _check_cell(p: Mapping[str, np.ndarray], gates, h_prev, x_t):
    hidden = p[f"b_{gates[0]}"].shape[0]
    width = p[f"W_{gates[0]}"].shape[1]
    for g in gates:
        if p[f"W_{g}"].shape != (hidden, width) or p[f"b_{g}"].shape != (hidden,):
            raise ShapeError(f"cell parameter W_{g}/b_{g} inconsistent with hidden={hidden}")
    if h_prev.shape[-1] != hidden or h_prev.shape[-1] + x_t.shape[-1] != width:
        raise ShapeError(
            f"cell expects hidden {hidden} and input {width - hidden}, "
            f"got h {h_prev.shape} and x {x_t.shape}"
        )


# Fused-weight kernels. ``W`` stacks the gate matrices row-wise.

def _lstm_fwd(W, b, h_prev, c_prev, x):
    n = h_prev.shape[-1]
    hx = np.concatenate([h_prev, x], axis=-1)
    z = hx @ W.T + b
    f = sigmoid(z[..., :n])
    i = sigmoid(z[..., n:2 * n])
    o = sigmoid(z[..., 2 * n:3 * n])
    g = np.tanh(z[..., 3 * n:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (hx, f, i, o, g, c_prev, tc)


def _lstm_bwd(W, cache, dh, dc):
    hx, f, i, o, g, c_prev, tc = cache
    n = f.shape[-1]
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dc * c_prev * f * (1.0 - f),
            dc * g * i * (1.0 - i),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ],
        axis=-1,
    )
    dhx = dz @ W
    return dz, dhx[..., :n], dc * f, dhx[..., n:]


def _gru_fwd(Wzr, bzr, Wh, bh, h_prev, x):
    n = h_prev.shape[-1]
    hx = np.concatenate([h_prev, x], axis=-1)
    a = sigmoid(hx @ Wzr.T + bzr)
    z, r = a[..., :n], a[..., n:]
    rhx = np.concatenate([r * h_prev, x], axis=-1)
    ht = np.tanh(rhx @ Wh.T + bh)
    h = (1.0 - z) * h_prev + z * ht
    return h, (hx, rhx, z, r, ht, h_prev)


def _gru_bwd(Wzr, Wh, cache, dh):
    hx, rhx, z, r, ht, h_prev = cache
    n = z.shape[-1]
    dz = dh * (ht - h_prev)
    da_h = dh * z * (1.0 - ht * ht)
    drhx = da_h @ Wh
    drh = drhx[..., :n]
    dr = drh * h_prev
    da_zr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=-1)
    dhx = da_zr @ Wzr
    dh_prev = dh * (1.0 - z) + drh * r + dhx[..., :n]
    dx = drhx[..., n:] + dhx[..., n:]
    return da_zr, da_h, dh_prev, dx


def lstm_step(p: Mapping[str, np.ndarray], h_prev, c_prev, x_t):
    """One memory-block update; returns ``(h_t, C_t)``."""
    h_prev, c_prev, x_t = (np.asarray(a, dtype=np.float64) for a in (h_prev, c_prev, x_t))
    _check_cell(p, LSTM_GATES, h_prev, x_t)
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"cell state {c_prev.shape} does not match hidden {h_prev.shape}")
    W = np.concatenate([p[f"W_{g}"] for g in LSTM_GATES])
    b = np.concatenate([p[f"b_{g}"] for g in LSTM_GATES])
    h, c, _ = _lstm_fwd(W, b, h_prev, c_prev, x_t)
    return h, c


def lstm_step_backward(p, h_prev, c_prev, x_t, dh, dc):
    """Gradients of one LSTM step given upstream ``dh`` and ``dc``.

    Returns ``(param_grads, dh_prev, dc_prev, dx)``.
    """
    W = np.concatenate([p[f"W_{g}"] for g in LSTM_GATES])
    b = np.concatenate([p[f"b_{g}"] for g in LSTM_GATES])
    _, _, cache = _lstm_fwd(W, b, np.asarray(h_prev, float), np.asarray(c_prev, float), np.asarray(x_t, float))
    dz, dh_prev, dc_prev, dx = _lstm_bwd(W, cache, np.asarray(dh, float), np.asarray(dc, float))
    hx = cache[0]
    n = dh_prev.shape[-1]
    dz2, hx2 = np.atleast_2d(dz), np.atleast_2d(hx)
    grads = {}
    for k, g in enumerate(LSTM_GATES):
        grads[f"W_{g}"] = dz2[:, k * n:(k + 1) * n].T @ hx2
        grads[f"b_{g}"] = dz2[:, k * n:(k + 1) * n].sum(axis=0)
    return grads, dh_prev, dc_prev, dx


def gru_step(p: Mapping[str, np.ndarray], h_prev, x_t):
    h_prev, x_t = np.asarray(h_prev, dtype=np.float64), np.asarray(x_t, dtype=np.float64)
    _check_cell(p, GRU_GATES, h_prev, x_t)
    Wzr = np.concatenate([p["W_z"], p["W_r"]])
    bzr = np.concatenate([p["b_z"], p["b_r"]])
    h, _ = _gru_fwd(Wzr, bzr, p["W_h"], p["b_h"], h_prev, x_t)
    return h


def gru_step_backward(p, h_prev, x_t, dh):
    """Returns ``(param_grads, dh_prev, dx)`` for one GRU step."""
    Wzr = np.concatenate([p["W_z"], p["W_r"]])
    bzr = np.concatenate([p["b_z"], p["b_r"]])
    _, cache = _gru_fwd(Wzr, bzr, p["W_h"], p["b_h"], np.asarray(h_prev, float), np.asarray(x_t, float))
    da_zr, da_h, dh_prev, dx = _gru_bwd(Wzr, p["W_h"], cache, np.asarray(dh, float))
    hx, rhx = np.atleast_2d(cache[0]), np.atleast_2d(cache[1])
    da_zr, da_h = np.atleast_2d(da_zr), np.atleast_2d(da_h)
    n = dh_prev.shape[-1]
    grads = {
        "W_z": da_zr[:, :n].T @ hx,
        "b_z": da_zr[:, :n].sum(axis=0),
        "W_r": da_zr[:, n:].T @ hx,
        "b_r": da_zr[:, n:].sum(axis=0),
        "W_h": da_h.T @ rhx,
        "b_h": da_h.sum(axis=0),
    }
    return grads, dh_prev, dx


def _reverse_index(mask: np.ndarray) -> np.ndarray:
    """Per-row index that reverses the valid prefix and leaves padding in place."""
    B, T = mask.shape
    lengths = mask.sum(axis=1).astype(np.int64)
    t = np.arange(T)[None, :]
    return np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)


def _gather_time(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(x, idx.reshape(idx.shape + (1,) * (x.ndim - 2)), axis=1)


class Recurrent(Module):
    """A unidirectional LSTM or GRU layer over padded batches."""

    def __init__(self, kind: str, d_in: int, hidden: int, rng: Rng):
        super().__init__()
        if kind not in ("lstm", "gru"):
            raise ConfigError(f"unknown recurrent cell {kind!r}")
        self.kind, self.d_in, self.hidden = kind, d_in, hidden
        init = lstm_params if kind == "lstm" else gru_params
        for name, value in init(rng, d_in, hidden).items():
            self.add_param(name, value)
        self._cache = None

    @classmethod
    def from_params(cls, params: Mapping[str, np.ndarray]) -> "Recurrent":
        kind = "lstm" if "W_f" in params else "gru"
        gate = "W_f" if kind == "lstm" else "W_z"
        hidden, width = params[gate].shape
        layer = cls(kind, width - hidden, hidden, Rng(0))
        for name, value in params.items():
            layer.params[name][...] = value
        return layer

    def forward(self, x: np.ndarray, mask: np.ndarray, reverse: bool = False) -> np.ndarray:
        B, T, d = x.shape
        if T == 0:
            raise EmptyInputError("recurrent layer: empty sequence")
        if d != self.d_in:
            raise ShapeError(f"recurrent layer: expected input width {self.d_in}, got {d}")
        rev = _reverse_index(mask) if reverse else None
        if rev is not None:
            x = _gather_time(x, rev)
        p, n = self.params, self.hidden
        m = mask[:, :, None].astype(np.float64)
        h = np.zeros((B, n))
        c = np.zeros((B, n))
        out = np.empty((B, T, n))
        caches = []
        if self.kind == "lstm":
            W = np.concatenate([p[f"W_{g}"] for g in LSTM_GATES])
            b = np.concatenate([p[f"b_{g}"] for g in LSTM_GATES])
            for t in range(T):
                hn, cn, cache = _lstm_fwd(W, b, h, c, x[:, t])
                mt = m[:, t]
                h = mt * hn + (1.0 - mt) * h
                c = mt * cn + (1.0 - mt) * c
                out[:, t] = h
                caches.append(cache)
            self._cache = (W, caches, m, rev)
        else:
            Wzr = np.concatenate([p["W_z"], p["W_r"]])
            bzr = np.concatenate([p["b_z"], p["b_r"]])
            for t in range(T):
                hn, cache = _gru_fwd(Wzr, bzr, p["W_h"], p["b_h"], h, x[:, t])
                mt = m[:, t]
                h = mt * hn + (1.0 - mt) * h
                out[:, t] = h
                caches.append(cache)
            self._cache = (Wzr, caches, m, rev)
        return _gather_time(out, rev) if rev is not None else out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("recurrent layer: backward called before forward")
        Wc, caches, m, rev = self._cache
        if rev is not None:
            dout = _gather_time(dout, rev)
        B, T, n = dout.shape
        dx = np.empty((B, T, self.d_in))
        dh = np.zeros((B, n))
        if self.kind == "lstm":
            dc = np.zeros((B, n))
            dW = np.zeros_like(Wc)
            db = np.zeros(Wc.shape[0])
            for t in range(T - 1, -1, -1):
                mt = m[:, t]
                dh = dh + dout[:, t]
                dz, dh_p, dc_p, dx_t = _lstm_bwd(Wc, caches[t], mt * dh, mt * dc)
                dW += dz.T @ caches[t][0]
                db += dz.sum(axis=0)
                dh = (1.0 - mt) * dh + dh_p
                dc = (1.0 - mt) * dc + dc_p
                dx[:, t] = dx_t
            for k, g in enumerate(LSTM_GATES):
                self.grads[f"W_{g}"] += dW[k * n:(k + 1) * n]
                self.grads[f"b_{g}"] += db[k * n:(k + 1) * n]
        else:
            Wh = self.params["W_h"]
            dWzr = np.zeros_like(Wc)
            dbzr = np.zeros(Wc.shape[0])
            dWh = np.zeros_like(Wh)
            dbh = np.zeros(n)
            for t in range(T - 1, -1, -1):
                mt = m[:, t]
                dh = dh + dout[:, t]
                hx, rhx = caches[t][0], caches[t][1]
                da_zr, da_h, dh_p, dx_t = _gru_bwd(Wc, Wh, caches[t], mt * dh)
                dWzr += da_zr.T @ hx
                dbzr += da_zr.sum(axis=0)
                dWh += da_h.T @ rhx
                dbh += da_h.sum(axis=0)
                dh = (1.0 - mt) * dh + dh_p
                dx[:, t] = dx_t
            self.grads["W_z"] += dWzr[:n]
            self.grads["W_r"] += dWzr[n:]
            self.grads["b_z"] += dbzr[:n]
            self.grads["b_r"] += dbzr[n:]
            self.grads["W_h"] += dWh
            self.grads["b_h"] += dbh
        return _gather_time(dx, rev) if rev is not None else dx


class Bidirectional(Module):
    """Forward and backward recurrent layers; output rows are ``[fwd_t, bwd_t]``."""

    def __init__(self, kind: str, d_in: int, hidden: int, rng: Rng):
        super().__init__()
        self.hidden = hidden
        self.fwd = self.add_child("fwd", Recurrent(kind, d_in, hidden, rng))
        self.bwd = self.add_child("bwd", Recurrent(kind, d_in, hidden, rng))

    def forward(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return np.concatenate([self.fwd.forward(x, mask), self.bwd.forward(x, mask, reverse=True)], axis=-1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        n = self.hidden
        return self.fwd.backward(dout[..., :n]) + self.bwd.backward(dout[..., n:])


def run_bidirectional(cell: Mapping[str, np.ndarray], inputs, backward_cell=None) -> np.ndarray:
    """Run a cell over a single (T, d_in) sequence in both directions.

    ``backward_cell`` defaults to ``cell``. Row ``t`` of the (T, 2h) result is
    the forward state after ``x_0..x_t`` followed by the backward state after
    ``x_{T-1}..x_t``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyInputError(f"run_bidirectional: need a non-empty (T, d) sequence, got {x.shape}")
    backward_cell = cell if backward_cell is None else backward_cell
    mask = np.ones((1, x.shape[0]))
    fwd = Recurrent.from_params(cell).forward(x[None], mask)[0]
    bwd = Recurrent.from_params(backward_cell).forward(x[None], mask, reverse=True)[0]
    return np.concatenate([fwd, bwd], axis=-1)


def attention_params(rng: Rng, state_dim: int, attn_dim: int) -> dict[str, np.ndarray]:
    return {
        "W_a": init_uniform(rng, (attn_dim, state_dim), fan_in_scale(state_dim)),
        "v_a": init_uniform(rng, (attn_dim,), fan_in_scale(attn_dim)),
    }


class Attention(Module):
    """Additive scoring ``e_t = v_a . tanh(W_a s_t)``, softmax over valid steps."""

    def __init__(self, state_dim: int, attn_dim: int, rng: Rng):
        super().__init__()
        for name, value in attention_params(rng, state_dim, attn_dim).items():
            self.add_param(name, value)
        self.weights = None
        self._cache = None

    def forward(self, states: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if states.shape[1] == 0:
            raise EmptyInputError("attention: empty sequence")
        u = np.tanh(states @ self.params["W_a"].T)
        e = u @ self.params["v_a"]
        e = np.where(mask > 0, e, -np.inf)
        alpha = softmax(e, axis=1)
        self.weights = alpha
        self._cache = (states, u, alpha)
        return np.einsum("bt,btd->bd", alpha, states)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("attention: backward called before forward")
        states, u, alpha = self._cache
        dalpha = np.einsum("bd,btd->bt", dout, states)
        de = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        self.grads["v_a"] += np.einsum("bt,bta->a", de, u)
        dpre = de[:, :, None] * self.params["v_a"] * (1.0 - u * u)
        self.grads["W_a"] += np.einsum("bta,btd->ad", dpre, states)
        return alpha[:, :, None] * dout[:, None, :] + dpre @ self.params["W_a"]


def attend(p: Mapping[str, np.ndarray], states) -> np.ndarray:
    """Attention-weighted sum of a single (T, D) sequence of states."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] == 0:
        raise EmptyInputError(f"attend: need a non-empty (T, D) sequence, got {s.shape}")
    e = np.tanh(s @ p["W_a"].T) @ p["v_a"]
    return softmax(e) @ s


TEXT_EXTRACTORS = {1: "bilstm", 2: "bigru", 3: "bilstm_attention", 4: "sentence_dense"}


class TextExtractor(Module):
    """Text feature extractor ``i`` in 1..4.

    1-3 stack three bidirectional layers (widths ``h12``, ``h12``, ``h3``) over
    token embeddings; 1 and 2 emit the final forward and backward states, 3
    emits the attention summary of the top layer. 4 is a ReLU dense layer over
    the sentence vector. Dropout follows every layer during training.
    """

    def __init__(self, i: int, d_in: int, rng: Rng, *, h12: int, h3: int, dropout: float,
                 dense_size: int, attn_dim: int | None = None):
        super().__init__()
        if i not in TEXT_EXTRACTORS:
            raise ConfigError(f"text extractor id must be one of 1..4, got {i!r}")
        self.i, self.d_in = i, d_in
        if i == 4:
            if dense_size <= 0:
                raise ConfigError("sentence extractor needs a positive dense size")
            self.dense = self.add_child("dense", Dense(d_in, dense_size, rng, activation="relu"))
            self.drops = [Dropout(dropout)]
            self.out_dim = dense_size
            return
        kind = "gru" if i == 2 else "lstm"
        widths = [h12, h12, h3]
        self.rnns = []
        d = d_in
        for k, w in enumerate(widths, 1):
            self.rnns.append(self.add_child(f"rnn{k}", Bidirectional(kind, d, w, rng)))
            d = 2 * w
        self.drops = [Dropout(dropout) for _ in widths]
        self.attn = None
        if i == 3:
            self.attn = self.add_child("attn", Attention(2 * h3, attn_dim or h3, rng))
        self.out_dim = 2 * h3
        self._mask = None

    def forward(self, inputs: np.ndarray, mask: np.ndarray | None = None, rng: Rng | None = None) -> np.ndarray:
        """``inputs`` is (B, T, d) tokens for 1-3 or (B, d) sentence vectors for 4."""
        if self.i == 4:
            return self.drops[0].forward(self.dense.forward(inputs), rng)
        if mask is None:
            mask = np.ones(inputs.shape[:2])
        if np.any(mask.sum(axis=1) == 0):
            raise EmptyInputError("text extractor: a sequence has no tokens")
        self._mask = mask
        x = inputs
        for rnn, drop in zip(self.rnns, self.drops):
            x = drop.forward(rnn.forward(x, mask), rng)
        if self.attn is not None:
            return self.attn.forward(x, mask)
        n = self.rnns[-1].hidden
        last = mask.sum(axis=1).astype(np.int64) - 1
        rows = np.arange(x.shape[0])
        return np.concatenate([x[rows, last, :n], x[:, 0, n:]], axis=-1)

    def backward(self, dfeat: np.ndarray) -> np.ndarray:
        if self.i == 4:
            return self.dense.backward(self.drops[0].backward(dfeat))
        top = self.rnns[-1]
        B, T = self._mask.shape
        if self.attn is not None:
            dx = self.attn.backward(dfeat)
        else:
            n = top.hidden
            dx = np.zeros((B, T, 2 * n))
            last = self._mask.sum(axis=1).astype(np.int64) - 1
            dx[np.arange(B), last, :n] += dfeat[:, :n]
            dx[:, 0, n:] += dfeat[:, n:]
        for rnn, drop in zip(reversed(self.rnns), reversed(self.drops)):
            dx = rnn.backward(drop.backward(dx))
        return dx


def extract_text_feature(extractor: TextExtractor, inputs, mask=None) -> np.ndarray:
    """Inference-mode feature for a single record (no batch axis)."""
    x = np.asarray(inputs, dtype=np.float64)[None]
    m = None if mask is None else np.asarray(mask, dtype=np.float64)[None]
    return extractor.forward(x, m)[0]
