"""Teacher-forced training for PAT."""
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import lexicon as lx
from .model import pad_batch
from .nn.optim import Adam, noam_lr
from .nn.tensor import no_grad
from .tokenizer import BOS, EOS, PAD, UNK

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    pass


@dataclass
class Example:
    asr: list        # text token ids of the ASR hypothesis
    phones: list     # phoneme ids of the ASR hypothesis
    ref: list        # text token ids of the reference


def make_examples(utterances, vocab, lexicon):
    out = []
    for u in utterances:
        out.append(Example(
            vocab.encode(u.asr).ids,
            lx.phonemize(u.asr, lexicon).ids,
            vocab.encode(u.ref).ids,
        ))
    return out


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    warmup: int = 400
    lr_factor: float = 1.0
    clip_norm: float = 5.0
    seed: int = 0


def batches(examples, batch_size, rng=None):
    """Length-bucketed batches; shuffled when ``rng`` is given."""
    idx = np.arange(len(examples))
    if rng is not None:
        idx = rng.permutation(idx)
    out = []
    span = batch_size * 32
    for s in range(0, len(idx), span):
        chunk = sorted(idx[s:s + span], key=lambda i: (len(examples[i].asr), len(examples[i].ref)))
        out.extend(chunk[j:j + batch_size] for j in range(0, len(chunk), batch_size))
    if rng is not None:
        out = [out[i] for i in rng.permutation(len(out))]
    return [[examples[i] for i in b] for b in out]


def collate(model, batch, rng=None):
    """Arrays for one batch; with ``rng`` the training-time input
    corruptions (clean swap-in, token dropout) are applied."""
    cfg = model.cfg
    texts = []
    for ex in batch:
        src = ex.asr
        if rng is not None:
            if rng.random() < cfg.clean_swap_prob:
                src = ex.ref
            if cfg.input_dropout_rate > 0 and len(src):
                drop = rng.random(len(src)) < cfg.input_dropout_rate
                src = [UNK if d else t for t, d in zip(src, drop)]
        texts.append(src)
    lim = cfg.max_len - 1
    tgt_in = pad_batch([[BOS] + ex.ref[:lim] for ex in batch])
    tgt_out = pad_batch([ex.ref[:lim] + [EOS] for ex in batch])
    return model.wrap(texts), model.wrap([ex.phones for ex in batch]), tgt_in, tgt_out


def train_step(model, opt, arrays, lr):
    model.train()
    model.zero_grad()
    loss = model.loss(*arrays)
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value} at step {opt.t + 1}")
    loss.backward()
    opt.step(lr)
    return value


def token_accuracy(model, examples, batch_size=128):
    """Teacher-forced next-token accuracy (EOS included)."""
    model.eval()
    hit = tot = 0
    with no_grad():
        for b in batches(examples, batch_size):
            text, phone, tgt_in, tgt_out = collate(model, b)
            _, logits = model.forward(text, phone, tgt_in)
            pred = logits.data.argmax(axis=-1)
            keep = tgt_out != PAD
            hit += int(((pred == tgt_out) & keep).sum())
            tot += int(keep.sum())
    return hit / max(tot, 1)


class Trainer:
    def __init__(self, model, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.opt = Adam(model.parameters(), betas=(0.9, 0.98), eps=1e-9, clip_norm=cfg.clip_norm)
        self.rng = np.random.default_rng(cfg.seed)

    def lr(self):
        return noam_lr(self.opt.t + 1, self.model.cfg.d_k, self.cfg.warmup, self.cfg.lr_factor)

    def step(self, batch):
        return train_step(self.model, self.opt, collate(self.model, batch, self.rng), self.lr())

    def epoch(self, examples):
        losses = []
        for b in batches(examples, self.cfg.batch_size, self.rng):
            losses.append(self.step(b))
        return float(np.mean(losses))

    def fit(self, examples, epochs=None, on_epoch=None):
        """Run ``epochs`` passes.  ``on_epoch(epoch, loss)`` may return True
        to stop early."""
        epochs = self.cfg.epochs if epochs is None else epochs
        history = []
        for ep in range(1, epochs + 1):
            t0 = time.perf_counter()
            loss = self.epoch(examples)
            history.append(loss)
            log.info("epoch %d loss %.4f (%.1fs)", ep, loss, time.perf_counter() - t0)
            if on_epoch is not None and on_epoch(ep, loss):
                break
        self.model.eval()
        return history
