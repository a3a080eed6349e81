"""Neural building blocks: LSTM cells, the bidirectional local-context
encoder, the character-level CNN, bilinear attention, the context-fusion
gate, and the soft-mask network used by the I-Attention baseline.

Layers are pure functions of (params, inputs). Parameter containers expose
``named(prefix)`` so the model can assemble a flat name -> tensor registry.
Batch convention: vectors ``(B, D)``, sequences ``(B, T, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from logcad.tensor import (
    ShapeError,
    Tensor,
    add,
    concat,
    dropout,
    gather_time,
    matmul,
    mul,
    reduce_max,
    reduce_sum,
    reshape,
    sigmoid,
    slice_axis,
    softmax,
    sub,
    take_rows,
    tanh,
)

INIT_SCALE = 0.08  # uniform weight init range; forget-gate bias starts at 1
MASK_BIAS = -1e9  # additive score mask for padded positions (keeps values finite)

GATE_NAMES = ("i", "f", "g", "o")


def uniform_init(rng: np.random.Generator, shape, dtype=np.float64,
                 scale: float = INIT_SCALE) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape).astype(dtype), requires_grad=True)


def matrix_init(rng: np.random.Generator, shape, dtype=np.float64) -> Tensor:
    """Init for matmul weight matrices: uniform [-0.08, 0.08] floored by the
    Glorot bound sqrt(6/(fan_in+fan_out)). At the full-size widths (300-600)
    the flat 0.08 dominates; at the reduced test widths the floor keeps
    activations from vanishing through the deep stack."""
    fan_in, fan_out = shape[0], shape[-1]
    scale = max(INIT_SCALE, np.sqrt(6.0 / (fan_in + fan_out)))
    return uniform_init(rng, shape, dtype, scale=scale)


# ---------------------------------------------------------------------------
# LSTM


@dataclass
class LstmParams:
    """Input-to-hidden / hidden-to-hidden weights and biases for the four
    LSTM gates (input, forget, candidate, output), all ``hidden`` wide."""

    wx: dict  # gate -> (input_dim, hidden) Tensor
    wh: dict  # gate -> (hidden, hidden) Tensor
    b: dict   # gate -> (hidden,) Tensor
    input_dim: int
    hidden: int

    @classmethod
    def create(cls, rng: np.random.Generator, input_dim: int, hidden: int,
               dtype=np.float64) -> "LstmParams":
        wx, wh, b = {}, {}, {}
        for gate in GATE_NAMES:
            wx[gate] = matrix_init(rng, (input_dim, hidden), dtype)
            wh[gate] = matrix_init(rng, (hidden, hidden), dtype)
            if gate == "f":
                b[gate] = Tensor(np.ones(hidden, dtype=dtype), requires_grad=True)
            else:
                b[gate] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
        return cls(wx=wx, wh=wh, b=b, input_dim=input_dim, hidden=hidden)

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for gate in GATE_NAMES:
            yield f"{prefix}.wx_{gate}", self.wx[gate]
            yield f"{prefix}.wh_{gate}", self.wh[gate]
            yield f"{prefix}.b_{gate}", self.b[gate]


def lstm_cell(p: LstmParams, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One step of the standard LSTM recurrence.

    i = sigmoid(x Wx_i + h Wh_i + b_i)        f = sigmoid(... + b_f)
    g = tanh(x Wx_g + h Wh_g + b_g)           o = sigmoid(... + b_o)
    c' = f*c + i*g                            h' = o * tanh(c')
    """
    if x.shape[-1] != p.input_dim or h.shape[-1] != p.hidden or c.shape[-1] != p.hidden:
        raise ShapeError(
            f"lstm_cell: got x {x.shape}, h {h.shape}, c {c.shape} for "
            f"(input_dim={p.input_dim}, hidden={p.hidden})"
        )

    def pre(gate):
        return add(add(matmul(x, p.wx[gate]), matmul(h, p.wh[gate])), p.b[gate])

    i = sigmoid(pre("i"))
    f = sigmoid(pre("f"))
    g = tanh(pre("g"))
    o = sigmoid(pre("o"))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def _zero_state(p: LstmParams, batch: int, dtype) -> tuple[Tensor, Tensor]:
    z = Tensor(np.zeros((batch, p.hidden), dtype=dtype))
    return z, Tensor(np.zeros((batch, p.hidden), dtype=dtype))


def run_lstm(p: LstmParams, steps: Sequence[Tensor]) -> list[Tensor]:
    """Run a unidirectional LSTM over per-step inputs, zero initial state."""
    batch = steps[0].shape[0]
    h, c = _zero_state(p, batch, steps[0].dtype)
    out = []
    for x in steps:
        h, c = lstm_cell(p, x, h, c)
        out.append(h)
    return out


def stack_steps(steps: Sequence[Tensor]) -> Tensor:
    """List of (B, D) -> (B, T, D)."""
    b, d = steps[0].shape
    return concat([reshape(s, (b, 1, d)) for s in steps], axis=1)


def split_steps(x: Tensor) -> list[Tensor]:
    """(B, T, D) -> list of (B, D)."""
    b, t, d = x.shape
    return [reshape(slice_axis(x, 1, i, i + 1), (b, d)) for i in range(t)]


def reverse_valid(x: Tensor, lengths: np.ndarray) -> Tensor:
    """Reverse each sequence within its true length; padded tail untouched
    in meaning (its contents are garbage either way and must stay masked)."""
    b, t, _ = x.shape
    pos = np.arange(t)[None, :]
    idx = np.clip(lengths[:, None] - 1 - pos, 0, t - 1)
    idx = np.where(pos < lengths[:, None], idx, pos)
    return gather_time(x, idx)


# ---------------------------------------------------------------------------
# bidirectional encoder


@dataclass
class BiLstmParams:
    """Stacked bidirectional encoder; layer k consumes layer k-1's output
    sequence (forward/backward halves concatenated)."""

    layers: list  # list of (fwd LstmParams, bwd LstmParams)
    out_width: int

    @classmethod
    def create(cls, rng: np.random.Generator, input_dim: int, out_width: int,
               n_layers: int, dtype=np.float64) -> "BiLstmParams":
        if out_width % 2:
            raise ValueError("encoder width must be even (two directions)")
        half = out_width // 2
        layers = []
        in_dim = input_dim
        for _ in range(n_layers):
            fwd = LstmParams.create(rng, in_dim, half, dtype)
            bwd = LstmParams.create(rng, in_dim, half, dtype)
            layers.append((fwd, bwd))
            in_dim = out_width
        return cls(layers=layers, out_width=out_width)

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for k, (fwd, bwd) in enumerate(self.layers):
            yield from fwd.named(f"{prefix}.l{k}.fwd")
            yield from bwd.named(f"{prefix}.l{k}.bwd")


def bilstm_encode(p: BiLstmParams, embs: Tensor, lengths: np.ndarray,
                  drop: float = 0.0, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Encode (B, T, E) token embeddings into (B, T, out_width) states.

    Each position's state is [forward half; backward half] for that position.
    ``lengths`` gives true sequence lengths; states past them are garbage and
    must be masked by the consumer. Dropout, when requested, is applied
    between stacked layers.
    """
    if embs.ndim != 3 or embs.shape[1] == 0:
        raise ShapeError(f"bilstm_encode: need a nonempty (B, T, E) sequence, got {embs.shape}")
    seq = embs
    for k, (fwd, bwd) in enumerate(p.layers):
        if k > 0 and drop > 0.0 and rng is not None:
            seq = dropout(seq, drop, rng)
        fwd_out = stack_steps(run_lstm(fwd, split_steps(seq)))
        rev_in = reverse_valid(seq, lengths)
        bwd_out = reverse_valid(stack_steps(run_lstm(bwd, split_steps(rev_in))), lengths)
        seq = concat([fwd_out, bwd_out], axis=2)
    return seq


# ---------------------------------------------------------------------------
# character-level CNN


class CharAlphabet:
    """Printable ASCII plus a padding symbol and an out-of-alphabet symbol."""

    PAD = 0
    OOV = 1

    def __init__(self):
        self._index = {ch: i + 2 for i, ch in enumerate(chr(c) for c in range(32, 127))}

    def __len__(self) -> int:
        return 2 + len(self._index)

    def encode(self, text: str, width: int) -> np.ndarray:
        ids = np.full(width, self.PAD, dtype=np.intp)
        for i, ch in enumerate(text[:width]):
            ids[i] = self._index.get(ch, self.OOV)
        return ids


WORD_JOINER = "_"


def join_words(words: Sequence[str]) -> str:
    return WORD_JOINER.join(words)


@dataclass
class CharCnnParams:
    """Character embeddings plus 1-D convolution banks; the pooled bank
    outputs concatenate to ``out_width``."""

    emb: Tensor          # (alphabet, char_emb)
    banks: list          # list of (width, kernel (width*char_emb, channels), bias (channels,))
    alphabet: CharAlphabet
    char_emb: int
    out_width: int

    # kernel widths 2..6 with channel counts summing to 160
    DEFAULT_BANKS = ((2, 10), (3, 30), (4, 40), (5, 40), (6, 40))

    @classmethod
    def create(cls, rng: np.random.Generator, char_emb: int = 16,
               bank_spec: Sequence[tuple[int, int]] = DEFAULT_BANKS,
               dtype=np.float64) -> "CharCnnParams":
        alphabet = CharAlphabet()
        emb = uniform_init(rng, (len(alphabet), char_emb), dtype)
        banks = []
        for width, channels in bank_spec:
            kernel = matrix_init(rng, (width * char_emb, channels), dtype)
            bias = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
            banks.append((width, kernel, bias))
        return cls(emb=emb, banks=banks, alphabet=alphabet, char_emb=char_emb,
                   out_width=sum(c for _, c in bank_spec))

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.emb", self.emb
        for width, kernel, bias in self.banks:
            yield f"{prefix}.k{width}", kernel
            yield f"{prefix}.k{width}_bias", bias


def char_cnn(p: CharCnnParams, phrases: Sequence[Sequence[str]]) -> Tensor:
    """Surface-form encoding of target phrases.

    Each phrase's words are joined with "_" (e.g. "sonic_boom"), characters
    are embedded, each kernel bank is convolved with stride 1 and max-pooled
    over time, and the pooled outputs are concatenated. Strings shorter than
    a kernel are right-padded so every bank yields at least one window;
    windows made of padding beyond that are masked out of the pool, so extra
    trailing padding never changes the output.
    """
    if not phrases or any(len(ws) == 0 for ws in phrases):
        raise ShapeError("char_cnn: phrases must be nonempty word lists")
    texts = [join_words(ws) for ws in phrases]
    max_kernel = max(w for w, _, _ in p.banks)
    lens = np.array([len(t) for t in texts], dtype=np.intp)
    width = max(int(lens.max()), max_kernel)
    ids = np.stack([p.alphabet.encode(t, width) for t in texts])
    x = take_rows(p.emb, ids)  # (B, L, E)
    dtype = p.emb.dtype

    pooled = []
    for w, kernel, bias in p.banks:
        lw = width - w + 1
        windows = concat([slice_axis(x, 1, i, i + lw) for i in range(w)], axis=2)
        conv = add(matmul(windows, kernel), bias)  # (B, lw, C)
        n_valid = np.maximum(lens - w + 1, 1)
        pos = np.arange(lw)[None, :]
        bias_mask = np.where(pos < n_valid[:, None], 0.0, MASK_BIAS).astype(dtype)
        conv = add(conv, Tensor(bias_mask[:, :, None]))
        pooled.append(reduce_max(conv, axis=1))
    return concat(pooled, axis=1)


# ---------------------------------------------------------------------------
# attention


@dataclass
class AttentionParams:
    """Maps encoder and decoder states into one shared space; the score of a
    position is the inner product of the two projections."""

    u_h: Tensor  # (enc_width, attn_width)
    u_s: Tensor  # (dec_width, attn_width)

    @classmethod
    def create(cls, rng: np.random.Generator, enc_width: int, dec_width: int,
               attn_width: int, dtype=np.float64) -> "AttentionParams":
        return cls(u_h=matrix_init(rng, (enc_width, attn_width), dtype),
                   u_s=matrix_init(rng, (dec_width, attn_width), dtype))

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.u_h", self.u_h
        yield f"{prefix}.u_s", self.u_s


def project_context(p: AttentionParams, states: Tensor) -> Tensor:
    """Precompute U_h @ h_i for all positions; reused across decode steps."""
    return matmul(states, p.u_h)


def attention(p: AttentionParams, states: Tensor, s_t: Tensor,
              mask_bias: Optional[np.ndarray] = None,
              projected: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """Weighted summary of encoder states for one decoder state.

    score_i = (U_h h_i) . (U_s s_t); weights are a softmax over positions;
    the summary is the weight-averaged encoder state. ``mask_bias`` (B, T)
    holds 0 for valid positions and a large negative value for padding.
    Returns (summary (B, enc_width), weights (B, T)).
    """
    if states.ndim != 3 or states.shape[1] == 0:
        raise ShapeError(f"attention: need nonempty (B, T, D) states, got {states.shape}")
    b, t, _ = states.shape
    hp = projected if projected is not None else project_context(p, states)
    q = matmul(s_t, p.u_s)  # (B, A)
    scores = reshape(matmul(hp, reshape(q, (b, q.shape[1], 1))), (b, t))
    if mask_bias is not None:
        scores = add(scores, Tensor(mask_bias.astype(states.dtype)))
    alpha = softmax(scores, axis=1)
    summary = reshape(matmul(reshape(alpha, (b, 1, t)), states), (b, states.shape[2]))
    return summary, alpha


# ---------------------------------------------------------------------------
# context-fusion gate


@dataclass
class GateParams:
    """GRU-style interpolation of the decoder state with a candidate state
    conditioned on the concatenated context features."""

    w_z: Tensor
    b_z: Tensor
    w_r: Tensor
    b_r: Tensor
    w_s: Tensor
    b_s: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, feature_dim: int, state_dim: int,
               dtype=np.float64) -> "GateParams":
        # the reset vector multiplies f_t element-wise, so W_r maps to the
        # feature width; the update gate and candidate map to the state width
        total = feature_dim + state_dim
        return cls(
            w_z=matrix_init(rng, (total, state_dim), dtype),
            b_z=Tensor(np.zeros(state_dim, dtype=dtype), requires_grad=True),
            w_r=matrix_init(rng, (total, feature_dim), dtype),
            b_r=Tensor(np.zeros(feature_dim, dtype=dtype), requires_grad=True),
            w_s=matrix_init(rng, (total, state_dim), dtype),
            b_s=Tensor(np.zeros(state_dim, dtype=dtype), requires_grad=True),
        )

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for name in ("w_z", "b_z", "w_r", "b_r", "w_s", "b_s"):
            yield f"{prefix}.{name}", getattr(self, name)


def gate(p: GateParams, s_t: Tensor, f_t: Tensor) -> Tensor:
    """z = sig(W_z[f;s]+b_z);  r = sig(W_r[f;s]+b_r);
    s~ = tanh(W_s[(r*f);s]+b_s);  s' = (1-z)*s + z*s~."""
    fs = concat([f_t, s_t], axis=1)
    z = sigmoid(add(matmul(fs, p.w_z), p.b_z))
    r = sigmoid(add(matmul(fs, p.w_r), p.b_r))
    candidate = tanh(add(matmul(concat([mul(r, f_t), s_t], axis=1), p.w_s), p.b_s))
    return add(mul(sub(1.0, z), s_t), mul(z, candidate))


# ---------------------------------------------------------------------------
# I-Attention soft mask


@dataclass
class MaskNetParams:
    """Per-position feed-forward map of encoder states, averaged over the
    sentence, then projected to a sigmoid mask over the phrase embedding."""

    w_ff: Tensor  # (enc_width, ff_width)
    b_ff: Tensor
    w_m: Tensor   # (ff_width, emb_width)
    b_m: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, enc_width: int, ff_width: int,
               emb_width: int, dtype=np.float64) -> "MaskNetParams":
        return cls(
            w_ff=matrix_init(rng, (enc_width, ff_width), dtype),
            b_ff=Tensor(np.zeros(ff_width, dtype=dtype), requires_grad=True),
            w_m=matrix_init(rng, (ff_width, emb_width), dtype),
            b_m=Tensor(np.zeros(emb_width, dtype=dtype), requires_grad=True),
        )

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for name in ("w_ff", "b_ff", "w_m", "b_m"):
            yield f"{prefix}.{name}", getattr(self, name)


def iattention_mask(p: MaskNetParams, states: Tensor, x_trg: Tensor,
                    lengths: Optional[np.ndarray] = None) -> Tensor:
    """Soft binary mask over the phrase embedding, derived from the averaged
    feed-forward image of the encoded local context:
    m = sig(W_m * mean_i FFNN(h_i) + b_m);  x'_trg = x_trg * m."""
    if states.ndim != 3 or states.shape[1] == 0:
        raise ShapeError(f"iattention_mask: need nonempty (B, T, D) states, got {states.shape}")
    b, t, _ = states.shape
    dtype = states.dtype
    if lengths is None:
        lengths = np.full(b, t, dtype=np.intp)
    mapped = tanh(add(matmul(states, p.w_ff), p.b_ff))  # (B, T, F)
    valid = (np.arange(t)[None, :] < lengths[:, None]).astype(dtype)
    mapped = mul(mapped, Tensor(valid[:, :, None]))
    mean = mul(reduce_sum(mapped, axis=1), Tensor((1.0 / lengths.astype(dtype))[:, None]))
    m = sigmoid(add(matmul(mean, p.w_m), p.b_m))
    return mul(x_trg, m)
