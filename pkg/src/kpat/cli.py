"""Command-line pipeline: gen-data, train, build-datastore, build-index,
decode, eval.

Every command reads one JSON config (``--config``) and accepts dotted
overrides such as ``--train.epochs 5`` or ``--seed 3``.  Exit codes: 0 ok,
2 config error, 3 data mismatch, 4 numeric failure.
"""
import argparse
import copy
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import errorsim as es
from . import lexicon as lx
from . import metrics
from .ann import AnnError, ExactIndex, IvfIndex, build_index, exact_search
from .datastore import Datastore, DatastoreError, build_datastore, merge_datastores
from .knn import InterpolationParams, decode_kpat, write_trace
from .model import PAT, PatConfig, greedy_decode
from .nn.checkpoint import CheckpointError
from .tokenizer import Vocabulary, train_bpe
from .train import NumericError, Trainer, TrainConfig, make_examples, token_accuracy

log = logging.getLogger("kpat")

DEFAULTS = {
    "seed": 0,
    "paths": {
        "workdir": ".",
        "lexicon": lx.DEFAULT_LEXICON,
        "catalogs": es.CATALOG_DIR,
        "templates": es.TEMPLATES_PATH,
        "corpus_dir": "corpus",
        "vocab": "vocab.json",
        "checkpoint": "model.patw",
        "datastore": "datastore.kpat",
        "index": "index.kivf",
        "hyp": "hyp.jsonl",
        "report": "report",
    },
    "corpus": {"train": 8000, "dev": 1000, "test": 1000, "variants": 2,
               "oov_entities": 25, "oov_refs_per_entity": 2, "zipf_s": 1.2},
    "noise": {"sub": 0.10, "ins": 0.03, "dele": 0.03, "class_bias": 0.7, "slot_multiplier": 2.0},
    "vocab_size": 1000,
    "model": {"preset": "desk"},
    "train": {"epochs": 20, "batch_size": 64, "warmup": 400, "lr_factor": 1.0,
              "clip_norm": 5.0, "dev_eval_size": 200},
    "datastore": {"splits": ["train"], "domain": None, "strict": False},
    "index": {"n_centroids": None, "nprobe": 32},
    "decode": {"split": "test", "mode": "pat", "lambda": 0.5, "k": 10,
               "temperature": 1.0, "nprobe": 32, "exact": False, "batch_size": 64},
}

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class ConfigError(ValueError):
    pass


class DataMismatch(ValueError):
    pass


# -- config -------------------------------------------------------------

def _merge(base, over, where=""):
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config field {where + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k != "model":
            _merge(base[k], v, where + k + ".")
        elif k == "model" and isinstance(v, dict):
            base[k].update(v)
        else:
            base[k] = v


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items):
    """``["--a.b", "1", "--c", "x"]`` -> {"a": {"b": 1}, "c": "x"}"""
    out = {}
    it = iter(items)
    for flag in it:
        if not flag.startswith("--"):
            raise ConfigError(f"unexpected argument {flag!r}")
        try:
            value = next(it)
        except StopIteration:
            raise ConfigError(f"override {flag} has no value") from None
        node = out
        parts = flag[2:].replace("-", "_").split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(value)
    return out


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                user = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        _merge(cfg, user)
    _merge(cfg, parse_overrides(overrides))
    if not isinstance(cfg["seed"], int):
        raise ConfigError("field 'seed' must be an integer")
    return cfg


def config_hash(cfg):
    """Hash of everything except the working directory."""
    cfg = dict(cfg, paths={k: v for k, v in cfg["paths"].items() if k != "workdir"})
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()[:16]


class Run:
    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.seed = cfg["seed"]
        self.hash = config_hash(cfg)

    def path(self, name):
        p = self.cfg["paths"][name]
        if p is None:
            raise ConfigError(f"paths.{name} is not set")
        return p if os.path.isabs(p) else os.path.join(self.cfg["paths"]["workdir"], p)

    def need(self, name):
        p = self.path(name)
        if not os.path.exists(p):
            raise ConfigError(f"paths.{name}: {p} does not exist")
        return p

    def corpus_file(self, split):
        return os.path.join(self.path("corpus_dir"), f"{split}.jsonl")

    def split(self, split):
        p = self.corpus_file(split)
        if not os.path.exists(p):
            raise ConfigError(f"paths.corpus_dir: {p} does not exist (run gen-data)")
        return es.read_jsonl(p)

    def stamp(self, **extra):
        return dict({"config_hash": self.hash, "seed": self.seed, "command": self.command}, **extra)

    def write_meta(self, artifact, **extra):
        with open(artifact + ".meta.json", "w", encoding="utf-8") as f:
            json.dump(self.stamp(**extra), f, indent=1, sort_keys=True)

    def lexicon(self):
        try:
            return lx.load_lexicon(self.need("lexicon"))
        except lx.LexiconError as e:
            raise ConfigError(f"paths.lexicon: {e}") from None

    def vocab(self):
        return Vocabulary.load(self.need("vocab"))

    def model(self):
        try:
            return PAT.load(self.need("checkpoint"))
        except CheckpointError as e:
            raise DataMismatch(f"paths.checkpoint: {e}") from None


def model_config(cfg, vocab_size):
    m = dict(cfg["model"])
    preset = m.pop("preset", "desk")
    if preset not in ("desk", "paper"):
        raise ConfigError(f"model.preset must be 'desk' or 'paper', got {preset!r}")
    m.setdefault("seed", cfg["seed"])
    try:
        return getattr(PatConfig, preset)(text_vocab=vocab_size, **m)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"model: {e}") from None


def _noise(cfg):
    try:
        return es.NoiseParams(seed=cfg["seed"], **cfg["noise"])
    except (TypeError, es.CorpusError) as e:
        raise ConfigError(f"noise: {e}") from None


# -- commands -----------------------------------------------------------

def cmd_gen_data(run, args):
    cfg = run.cfg
    lex = run.lexicon()
    for name in ("catalogs", "templates"):
        run.need(name)
    catalog = es.load_catalogs(run.path("catalogs"))
    templates = es.load_templates(run.path("templates"))
    c = cfg["corpus"]
    sizes = es.CorpusSizes(c["train"], c["dev"], c["test"], c["variants"], c["oov_entities"], c["oov_refs_per_entity"])
    corpus = es.build_corpus(catalog, templates, sizes, _noise(cfg), run.seed, lex, zipf_s=c["zipf_s"])
    out = run.path("corpus_dir")
    os.makedirs(out, exist_ok=True)
    for split, utts in corpus.items():
        es.write_jsonl(run.corpus_file(split), utts)
        log.info("%s: %d utterances", split, len(utts))
    run.write_meta(os.path.join(out, "corpus"), counts={k: len(v) for k, v in corpus.items()})


def _hyps(model, vocab, lex, utts, batch_size):
    out = []
    for s in range(0, len(utts), batch_size):
        chunk = utts[s:s + batch_size]
        seqs = greedy_decode(model, [vocab.encode(u.asr).ids for u in chunk],
                             [lx.phonemize(u.asr, lex).ids for u in chunk])
        out.extend(vocab.decode(q.ids) for q in seqs)
    return out


def cmd_train(run, args):
    cfg = run.cfg
    lex = run.lexicon()
    train = run.split("train")
    dev = run.split("dev")[:cfg["train"]["dev_eval_size"]]
    vocab = train_bpe([u.ref for u in train] + [u.asr for u in train], cfg["vocab_size"])
    vocab_path = run.path("vocab")
    vocab.save(vocab_path)
    run.write_meta(vocab_path)
    model = PAT(model_config(cfg, len(vocab)))
    t = cfg["train"]
    trainer = Trainer(model, TrainConfig(t["epochs"], t["batch_size"], t["warmup"], t["lr_factor"],
                                         t["clip_norm"], run.seed))
    examples = make_examples(train, vocab, lex)
    ckpt = run.path("checkpoint")
    rows = ["epoch\tloss\tdev_wer"]

    def on_epoch(ep, loss):
        dev_wer = metrics.corpus_wer([u.ref for u in dev], _hyps(model, vocab, lex, dev, 64)) if dev else float("nan")
        log.info("epoch %d loss %.4f dev WER %.4f", ep, loss, dev_wer)
        rows.append(f"{ep}\t{loss:.6f}\t{dev_wer:.6f}")

    trainer.fit(examples, on_epoch=on_epoch)
    acc = token_accuracy(model, examples[:1000])
    log.info("train token accuracy %.4f", acc)
    with open(ckpt + ".train.tsv", "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")
    digest = model.save(ckpt)
    run.write_meta(ckpt, sha256=digest.hex(), train_token_accuracy=acc)


def cmd_build_datastore(run, args):
    cfg = run.cfg
    lex, vocab, model = run.lexicon(), run.vocab(), run.model()
    d = cfg["datastore"]
    domain = args.domain if args.domain is not None else d["domain"]
    store = None
    for split in d["splits"]:
        part = build_datastore(model, run.split(split), vocab, lex, domain_filter=domain, strict=d["strict"])
        store = part if store is None else merge_datastores(store, part)
    if store is None:
        raise ConfigError("datastore.splits is empty")
    store.meta.update(run.stamp(splits=d["splits"]))
    path = run.path("datastore")
    store.save(path)
    run.write_meta(path, entries=len(store))
    log.info("datastore: %d entries", len(store))


def cmd_build_index(run, args):
    cfg = run.cfg
    store = Datastore.load(run.need("datastore"))
    index = build_index(store, cfg["index"]["n_centroids"], run.seed, cfg["index"]["nprobe"])
    path = run.path("index")
    index.save(path)
    run.write_meta(path, n_centroids=index.n_centroids)
    log.info("index: %d centroids over %d entries", index.n_centroids, len(store))
    if args.self_check:
        rng = np.random.default_rng(run.seed)
        for i in rng.choice(len(store), size=min(20, len(store)), replace=False):
            nb = index.search(store.keys[i], 1, index.n_centroids)
            ex = exact_search(store, store.keys[i], 1)
            if nb.distances[0] != 0.0 or ex.distances[0] != 0.0:
                raise DataMismatch(f"self-check failed for entry {i}")
        log.info("self-check passed")


def cmd_decode(run, args):
    cfg = run.cfg
    d = cfg["decode"]
    mode = args.mode or d["mode"]
    lam = d["lambda"] if args.lam is None else args.lam
    k = d["k"] if args.k is None else args.k
    lex, vocab, model = run.lexicon(), run.vocab(), run.model()
    if len(vocab) != model.cfg.text_vocab:
        raise DataMismatch("vocabulary does not match the checkpoint")
    utts = run.split(d["split"])
    asr = [vocab.encode(u.asr).ids for u in utts]
    ph = [lx.phonemize(u.asr, lex).ids for u in utts]
    trace = [] if args.trace else None
    bs = d["batch_size"]
    if mode == "pat":
        seqs = []
        for s in range(0, len(utts), bs):
            seqs.extend(greedy_decode(model, asr[s:s + bs], ph[s:s + bs]))
        params = None
    elif mode == "kpat":
        try:
            params = InterpolationParams(lam, k, d["temperature"], d["nprobe"])
        except ValueError as e:
            raise ConfigError(f"decode: {e}") from None
        store = Datastore.load(run.need("datastore"))
        index = ExactIndex(store) if d["exact"] else IvfIndex.load(run.need("index"), store)
        seqs = []
        for s in range(0, len(utts), bs):
            seqs.extend(decode_kpat(model, store, index, asr[s:s + bs], ph[s:s + bs], params, trace=trace))
    else:
        raise ConfigError(f"decode.mode must be 'pat' or 'kpat', got {mode!r}")
    path = run.path("hyp")
    with open(path, "w", encoding="utf-8") as f:
        for q in seqs:
            f.write(json.dumps({"hyp": vocab.decode(q.ids)}) + "\n")
    extra = {"mode": mode, "split": d["split"]}
    if params is not None:
        extra.update(lam=params.lam, k=params.k, temperature=params.temperature, nprobe=params.nprobe,
                     distance="squared_l2", exact=bool(d["exact"]))
    run.write_meta(path, **extra)
    if trace is not None:
        write_trace(path + ".trace.jsonl", trace, vocab)


def _read_hyps(path):
    if not os.path.exists(path):
        raise ConfigError(f"hypothesis file {path} does not exist")
    with open(path, encoding="utf-8") as f:
        hyps = [json.loads(line)["hyp"] for line in f if line.strip()]
    meta = {}
    if os.path.exists(path + ".meta.json"):
        with open(path + ".meta.json", encoding="utf-8") as f:
            meta = json.load(f)
    return hyps, meta


def cmd_eval(run, args):
    cfg = run.cfg
    hyp_path = args.hyp or run.path("hyp")
    hyps, hmeta = _read_hyps(hyp_path)
    split = hmeta.get("split", cfg["decode"]["split"])
    test = run.split(split)
    if len(hyps) != len(test):
        raise DataMismatch(f"{len(hyps)} hypotheses for {len(test)} {split} utterances")
    freq = metrics.train_frequencies(run.split("train"))
    name = hmeta.get("mode", "hyp")
    systems = {}
    base = None
    if args.baseline:
        bhyps, bmeta = _read_hyps(args.baseline)
        if len(bhyps) != len(test):
            raise DataMismatch(f"{len(bhyps)} baseline hypotheses for {len(test)} {split} utterances")
        bname = bmeta.get("mode", "base")
        if bname == name:
            bname, name = "base", "hyp"
        systems[bname] = bhyps
        base = metrics.evaluate(test, bhyps)
    report = metrics.evaluate(test, hyps, freq, systems, run.stamp(hyp=hmeta, split=split), name)
    if base is not None:
        metrics.compare_report(base, report, os.path.basename(args.baseline))
    prefix = run.path("report")
    with open(prefix + ".json", "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    with open(prefix + ".tsv", "w", encoding="utf-8") as f:
        f.write(report.to_tsv())
    log.info("WER %.4f  slot recall %.4f  slot accuracy %.4f%s", report.wer, report.slot_recall,
             report.slot_accuracy, "" if report.werr is None else f"  WERR {report.werr:.2f}%")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "build-datastore": cmd_build_datastore,
    "build-index": cmd_build_index,
    "decode": cmd_decode,
    "eval": cmd_eval,
}


def build_parser():
    p = argparse.ArgumentParser(prog="kpat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run config")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "build-datastore":
            s.add_argument("--domain", help="only utterances of this slot domain")
        if name == "build-index":
            s.add_argument("--self-check", action="store_true", help="verify stored keys retrieve themselves")
        if name == "decode":
            s.add_argument("--mode", choices=["pat", "kpat"])
            s.add_argument("--lambda", dest="lam", type=float)
            s.add_argument("--k", type=int)
            s.add_argument("--trace", action="store_true")
        if name == "eval":
            s.add_argument("--hyp")
            s.add_argument("--baseline")
    return p


def main(argv=None):
    args, rest = build_parser().parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        run = Run(load_config(args.config, rest), args.command)
        COMMANDS[args.command](run, args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (DataMismatch, DatastoreError, AnnError, metrics.EvalError) as e:
        log.error("data mismatch: %s", e)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
