import numpy as np
import pytest

from ctxaug import bilm, synthetic
from ctxaug.corpus import build_vocab, encode, load_labeled_tsv, load_plain_corpus
from ctxaug.numcore import Tensor, grad_check, kernels, kink_margin

BACKENDS = kernels.available_backends()
ACCEPTANCE_LINES = []  # filled by test_acceptance, echoed in the terminal summary


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available kernel backend."""
    previous = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param64(rng, shape, scale=0.5):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


@pytest.fixture(scope="session")
def polarity_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("polarity")
    synthetic.write_polarity_task(out, seed=0, n_pretrain=1500)
    return out


@pytest.fixture(scope="session")
def polarity(polarity_dir):
    """Vocabulary, pretrained LM and conditional LM on the synthetic polarity task."""
    raw = load_plain_corpus(polarity_dir / "pretrain.txt")
    vocab = build_vocab(raw)
    vocab.save(polarity_dir / "vocab.txt")
    dims = bilm.BiLMDims(vocab.size, 16, 32, 32)
    cfg = bilm.LMTrainConfig(epochs=4, lr=0.01)
    lm = bilm.pretrain([encode(s, vocab) for s in raw], cfg, dims, vocab.digest())
    lm.save(polarity_dir / "lm.ckpt")
    finetune, _ = load_labeled_tsv(polarity_dir / "finetune.tsv", vocab, synthetic.LABEL_NAMES)
    cond = bilm.retrofit_conditional(lm, 2, 8, label_names=synthetic.LABEL_NAMES)
    cond = bilm.finetune_conditional(cond, finetune, cfg)
    cond.save(polarity_dir / "clm.ckpt")
    return {"dir": polarity_dir, "vocab": vocab, "lm": lm, "clm": cond}


MIN_KINK_MARGIN = 5e-3  # five times the 5-point stencil reach (2 * 5e-4)


def smooth_grad_errors(build, trials, max_draws=None):
    """Grad-check errors for ``trials`` random points that sit away from ReLU/max kinks.

    ``build(rng)`` returns ``(f, params)``. Draws whose kink margin is below
    MIN_KINK_MARGIN are skipped because finite differences straddle a
    non-differentiable point there. Returns ``(errors, skipped)``.
    """
    errors, skipped, seed = [], 0, 0
    max_draws = max_draws or 5 * trials
    while len(errors) < trials:
        if seed >= max_draws:
            raise RuntimeError(f"only {len(errors)} smooth points in {max_draws} draws")
        f, params = build(np.random.default_rng(seed))
        seed += 1
        if kink_margin(f()) < MIN_KINK_MARGIN:
            skipped += 1
            continue
        errors.append(grad_check(f, params))
    return errors, skipped
