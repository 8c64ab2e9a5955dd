import numpy as np
import pytest

from kpat import errorsim as es
from kpat import lexicon as lx
from kpat.model import PAT, PatConfig
from kpat.tokenizer import train_bpe


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment")


@pytest.fixture(scope="session")
def lexicon():
    return lx.default_lexicon()


@pytest.fixture(scope="session")
def tiny_corpus(lexicon):
    catalog = es.load_catalogs()
    catalog = es.SlotCatalog({d: v[:30] for d, v in catalog.entities.items()})
    sizes = es.CorpusSizes(train=40, dev=5, test=12, variants=1, oov_entities=3, oov_refs_per_entity=1)
    return es.build_corpus(catalog, es.load_templates(), sizes, es.NoiseParams(seed=1), 1, lexicon)


@pytest.fixture(scope="session")
def tiny_vocab(tiny_corpus):
    lines = [u.ref for s in tiny_corpus.values() for u in s] + [u.asr for s in tiny_corpus.values() for u in s]
    return train_bpe(lines, 120)


@pytest.fixture(scope="session")
def tiny_model(tiny_vocab):
    cfg = PatConfig(n_enc_layers=1, n_dec_layers=1, d_k=16, n_heads=2, d_ff=32,
                    text_vocab=len(tiny_vocab), max_len=40, seed=5)
    m = PAT(cfg)
    m.eval()
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(0)
