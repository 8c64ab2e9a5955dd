"""Phone Augmented Transformer (PAT).

Two encoders (sub-word text, phonemes) and a decoder whose layers run causal
self-attention, then cross-attention over the text encoding, then
cross-attention over the phoneme encoding, then a feed-forward block.
Blocks are pre-norm residual; the final layer norm output is the decoder
state matrix that both feeds the vocabulary projection and keys the kNN
datastore.
"""
import json
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import lexicon as lx
from .nn import checkpoint
from .nn import tensor as T
from .nn.module import Embedding, LayerNorm, Linear, Module
from .nn.tensor import Tensor, no_grad
from .tokenizer import BOS, EOS, PAD, TokenSequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatConfig:
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_k: int = 64
    n_heads: int = 4
    d_ff: int = 256
    text_vocab: int = 1000
    phone_vocab: int = len(lx.PHONE_VOCAB)
    dropout_rate: float = 0.1
    input_dropout_rate: float = 0.1
    clean_swap_prob: float = 0.3
    attn_temperature: float = 1.0
    label_smoothing: float = 0.0
    max_len: int = 64
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        dims = (self.n_enc_layers, self.n_dec_layers, self.d_k, self.n_heads, self.d_ff,
                self.text_vocab, self.phone_vocab, self.max_len)
        if min(dims) <= 0:
            raise ValueError(f"all model dimensions must be positive: {self}")
        if self.d_k % self.n_heads:
            raise ValueError(f"d_k={self.d_k} not divisible by n_heads={self.n_heads}")
        if self.attn_temperature <= 0:
            raise ValueError("attn_temperature must be positive")

    @classmethod
    def desk(cls, **kw):
        return cls(**kw)

    @classmethod
    def paper(cls, **kw):
        base = dict(n_enc_layers=4, n_dec_layers=4, d_k=128, n_heads=8, d_ff=512, text_vocab=32000)
        base.update(kw)
        return cls(**base)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass
class EncoderOutput:
    hidden: Tensor          # (B, L, d)
    pad: np.ndarray         # (B, L) True where padding

    @property
    def key_mask(self):
        m = np.zeros(self.pad.shape, dtype=self.hidden.dtype)
        m[self.pad] = -np.inf
        return m[:, None, None, :]


def sinusoid(n, d, dtype):
    pos = np.arange(n)[:, None]
    i = np.arange(d // 2)[None, :]
    ang = pos / np.power(10000.0, 2 * i / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)
    return pe.astype(dtype)


def pad_batch(seqs, pad=PAD):
    n = max(len(s) for s in seqs)
    out = np.full((len(seqs), n), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


class MultiHeadAttention(Module):
    def __init__(self, rng, d, heads, temp, dtype):
        self.heads = heads
        self.temp = temp
        self.wq = Linear(rng, d, d, dtype)
        self.wk = Linear(rng, d, d, dtype, bias=False)  # a key bias cannot change attention weights
        self.wv = Linear(rng, d, d, dtype)
        self.wo = Linear(rng, d, d, dtype)

    def _split(self, x):
        b, n, d = x.shape
        return T.transpose(T.reshape(x, (b, n, self.heads, d // self.heads)), (0, 2, 1, 3))

    def __call__(self, x, mem, mask):
        q = self._split(self.wq(x))
        k = self._split(self.wk(mem))
        v = self._split(self.wv(mem))
        ctx = T.attention(q, k, v, mask, self.temp)
        b, h, n, dh = ctx.shape
        return self.wo(T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, n, h * dh)))


class FeedForward(Module):
    def __init__(self, rng, d, d_ff, dtype):
        self.up = Linear(rng, d, d_ff, dtype)
        self.down = Linear(rng, d_ff, d, dtype)

    def __call__(self, x, drop):
        return self.down(drop(T.gelu(self.up(x))))


class EncoderLayer(Module):
    def __init__(self, rng, cfg, dtype):
        self.ln_attn = LayerNorm(cfg.d_k, dtype)
        self.attn = MultiHeadAttention(rng, cfg.d_k, cfg.n_heads, cfg.attn_temperature, dtype)
        self.ln_ff = LayerNorm(cfg.d_k, dtype)
        self.ff = FeedForward(rng, cfg.d_k, cfg.d_ff, dtype)

    def __call__(self, x, mask, drop):
        h = self.ln_attn(x)
        x = x + drop(self.attn(h, h, mask))
        return x + drop(self.ff(self.ln_ff(x), drop))


class DecoderLayer(Module):
    def __init__(self, rng, cfg, dtype):
        d, h, t = cfg.d_k, cfg.n_heads, cfg.attn_temperature
        self.ln_self = LayerNorm(d, dtype)
        self.self_attn = MultiHeadAttention(rng, d, h, t, dtype)
        self.ln_text = LayerNorm(d, dtype)
        self.text_attn = MultiHeadAttention(rng, d, h, t, dtype)
        self.ln_phone = LayerNorm(d, dtype)
        self.phone_attn = MultiHeadAttention(rng, d, h, t, dtype)
        self.ln_ff = LayerNorm(d, dtype)
        self.ff = FeedForward(rng, d, cfg.d_ff, dtype)

    def __call__(self, x, text, phone, self_mask, drop):
        h = self.ln_self(x)
        x = x + drop(self.self_attn(h, h, self_mask))
        x = x + drop(self.text_attn(self.ln_text(x), text.hidden, text.key_mask))
        x = x + drop(self.phone_attn(self.ln_phone(x), phone.hidden, phone.key_mask))
        return x + drop(self.ff(self.ln_ff(x), drop))


class Encoder(Module):
    def __init__(self, rng, cfg, vocab, dtype):
        self.embed = Embedding(rng, vocab, cfg.d_k, dtype)
        self.layers = [EncoderLayer(rng, cfg, dtype) for _ in range(cfg.n_enc_layers)]
        self.ln_out = LayerNorm(cfg.d_k, dtype)


class PAT(Module):
    def __init__(self, cfg: PatConfig):
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        self._dtype = dtype
        rng = np.random.default_rng(cfg.seed)
        self.text_encoder = Encoder(rng, cfg, cfg.text_vocab, dtype)
        self.phone_encoder = Encoder(rng, cfg, cfg.phone_vocab, dtype)
        self.dec_embed = Embedding(rng, cfg.text_vocab, cfg.d_k, dtype)
        self.dec_layers = [DecoderLayer(rng, cfg, dtype) for _ in range(cfg.n_dec_layers)]
        self.dec_ln = LayerNorm(cfg.d_k, dtype)
        self.out_proj = Linear(rng, cfg.d_k, cfg.text_vocab, dtype)
        self._pe = sinusoid(cfg.max_len + 2, cfg.d_k, dtype)
        self._drop_rng = np.random.default_rng(cfg.seed + 1)
        self.training = False

    # -- helpers -----------------------------------------------------------
    def _drop(self, x):
        return T.dropout(x, self.cfg.dropout_rate, self._drop_rng, self.training)

    def _embed(self, table, ids):
        ids = np.asarray(ids)
        x = T.scale(table(ids), np.sqrt(self.cfg.d_k))
        return self._drop(x + Tensor(self._pe[:ids.shape[1]]))

    def wrap(self, seqs):
        """Surround with BOS/EOS and pad into a batch; truncates over-long
        inputs to ``max_len`` with a warning."""
        out = []
        for s in seqs:
            s = list(s)
            if len(s) + 2 > self.cfg.max_len:
                log.warning("input of length %d truncated to max_len=%d", len(s), self.cfg.max_len)
                s = s[:self.cfg.max_len - 2]
            out.append([BOS] + s + [EOS])
        return pad_batch(out)

    def _encode(self, enc, ids):
        ids = np.asarray(ids)
        pad = ids == PAD
        mask = np.zeros(pad.shape, dtype=self._dtype)
        mask[pad] = -np.inf
        mask = mask[:, None, None, :]
        x = self._embed(enc.embed, ids)
        for layer in enc.layers:
            x = layer(x, mask, self._drop)
        return EncoderOutput(enc.ln_out(x), pad)

    # -- public API ----------------------------------------------------------
    def encode_text(self, ids):
        """ids: (B, N) already wrapped with BOS/EOS and padded."""
        return self._encode(self.text_encoder, ids)

    def encode_phones(self, ids):
        return self._encode(self.phone_encoder, ids)

    def decode_states(self, text, phone, prefix):
        """Decoder states D_w (B, O, d) and vocabulary logits (B, O, V) for a
        target prefix (B, O) that starts with BOS."""
        prefix = np.asarray(prefix)
        if prefix.ndim != 2 or prefix.shape[1] == 0:
            raise ValueError("decode_states needs a non-empty prefix")
        if not (prefix[:, 0] == BOS).all():
            raise ValueError("target prefix must begin with BOS")
        n = prefix.shape[1]
        causal = T.causal_mask(n, self._dtype)[None, None]
        pad = np.zeros(prefix.shape, dtype=self._dtype)
        pad[prefix == PAD] = -np.inf
        self_mask = causal + pad[:, None, None, :]
        x = self._embed(self.dec_embed, prefix)
        for layer in self.dec_layers:
            x = layer(x, text, phone, self_mask, self._drop)
        states = self.dec_ln(x)
        return states, self.out_proj(states)

    def forward(self, text_ids, phone_ids, tgt_in):
        return self.decode_states(self.encode_text(text_ids), self.encode_phones(phone_ids), tgt_in)

    def loss(self, text_ids, phone_ids, tgt_in, tgt_out):
        _, logits = self.forward(text_ids, phone_ids, tgt_in)
        return T.cross_entropy(logits, tgt_out, PAD, self.cfg.label_smoothing)

    def checksum(self):
        return checkpoint.checksum(self)

    def save(self, path):
        with open(path + ".json", "w") as f:
            f.write(self.cfg.to_json())
        return checkpoint.save(path, self)

    @classmethod
    def load(cls, path, **overrides):
        try:
            with open(path + ".json") as f:
                cfg = PatConfig.from_json(f.read())
        except (OSError, ValueError, TypeError) as e:
            raise checkpoint.CheckpointError(f"unreadable model config {path}.json: {e}") from None
        if overrides:
            cfg = replace(cfg, **overrides)
        model = cls(cfg)
        checkpoint.load_into(path, model)
        return model


def softmax_np(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def greedy_loop(model, text_ids, phone_ids, max_len, step_hook=None):
    """Batched greedy decoding.

    ``step_hook(step, states, probs, active)`` may return a replacement
    probability matrix for the rows being decoded; ``states`` is the full
    (B, t, d) decoder-state array so far.  Returns one id list per row,
    without BOS/EOS.
    """
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            text = model.encode_text(model.wrap(text_ids))
            phone = model.encode_phones(model.wrap(phone_ids))
            b = len(text_ids)
            prefix = np.full((b, 1), BOS, dtype=np.int64)
            done = np.zeros(b, dtype=bool)
            outs = [[] for _ in range(b)]
            for step in range(max_len):
                states, logits = model.decode_states(text, phone, prefix)
                probs = softmax_np(logits.data[:, -1, :])
                if step_hook is not None:
                    probs = step_hook(step, states.data, probs, ~done)
                nxt = probs.argmax(axis=1)
                for i in np.nonzero(~done)[0]:
                    if nxt[i] == EOS:
                        done[i] = True
                    else:
                        outs[i].append(int(nxt[i]))
                if done.all():
                    break
                nxt = np.where(done, PAD, nxt)
                prefix = np.concatenate([prefix, nxt[:, None]], axis=1)
    finally:
        model.train(was_training)
    return outs


def greedy_decode(model, asr_tokens, phonemes, max_len=None):
    """Decode one utterance (or a batch when given lists of sequences)."""
    single = len(asr_tokens) == 0 or np.isscalar(asr_tokens[0])
    batch_t = [asr_tokens] if single else asr_tokens
    batch_p = [phonemes] if single else phonemes
    max_len = model.cfg.max_len if max_len is None else max_len
    outs = greedy_loop(model, batch_t, batch_p, max_len)
    seqs = [TokenSequence(o) for o in outs]
    return seqs[0] if single else seqs
