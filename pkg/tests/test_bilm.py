import math

import numpy as np
import pytest

from ctxaug import bilm
from ctxaug.bilm import BiLM, BiLMDims, ClozeContext, LMTrainConfig, StateError
from ctxaug.checkpoint import CheckpointError
from ctxaug.corpus import LabeledExample, build_vocab
from ctxaug.numcore import Tensor, cross_entropy, grad_check


def tiny_lm(seed=0, vocab=9, conditional=False, scale=0.5):
    """Float64 model with O(1) random weights (label pathway nonzero when conditional)."""
    dims = BiLMDims(vocab, embed_dim=3, hidden_dim=4, combiner_dim=5)
    model = BiLM.initialize(dims, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    if conditional:
        model = bilm.retrofit_conditional(model, 3, label_dim=2, seed=seed)
    for t in model.params.values():
        t.data[...] = rng.normal(0.0, scale, t.shape)
    return model


def random_sentence(rng, vocab, low=1, high=7):
    return rng.integers(4, vocab, size=int(rng.integers(low, high))).tolist()


@pytest.mark.parametrize("conditional", [False, True])
def test_full_model_gradient(conditional, backend):
    model = tiny_lm(3, conditional=conditional)
    sents = [[4, 5, 6, 7], [8, 4]]
    labels = [0, 2] if conditional else None
    def f():
        logits, _ = model._logits(sents, labels)
        return cross_entropy(logits, np.concatenate(sents))

    assert grad_check(f, list(model.params.values())) < 1e-4


def test_distributions_sum_to_one():
    model = tiny_lm()
    probs = model.predict_all([4, 5, 6])
    assert probs.shape == (3, 9)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_cloze_independence_under_target_replacement(backend):
    rng = np.random.default_rng(0)
    model = tiny_lm(1, conditional=True)
    for _ in range(30):
        s = random_sentence(rng, 9)
        pos = int(rng.integers(len(s)))
        y = int(rng.integers(3))
        base = model.predict_distribution(ClozeContext(s, pos, y))
        s2 = list(s)
        s2[pos] = int(rng.integers(0, 9))
        np.testing.assert_array_equal(base, model.predict_distribution(ClozeContext(s2, pos, y)))


def test_states_respect_direction():
    model = tiny_lm(2)
    s = [4, 5, 6, 7, 8]
    f0, b0 = model.contextual_states(s)
    s2 = list(s)
    s2[2] = 4
    f1, b1 = model.contextual_states(s2)
    # position i never sees w_i; forward state at 3 and backward state at 1 do see w_2
    np.testing.assert_array_equal(f0[:3], f1[:3])
    np.testing.assert_array_equal(b0[2:], b1[2:])
    assert not np.allclose(f0[3], f1[3])
    assert not np.allclose(b0[1], b1[1])


def test_single_token_states_encode_boundaries_only():
    model = tiny_lm(4)
    fa, ba = model.contextual_states([5])
    fb, bb = model.contextual_states([8])
    np.testing.assert_array_equal(fa, fb)
    np.testing.assert_array_equal(ba, bb)


def test_batch_prediction_matches_single():
    rng = np.random.default_rng(5)
    model = tiny_lm(5, conditional=True)
    sents = [random_sentence(rng, 9) for _ in range(6)]
    labels = [int(rng.integers(3)) for _ in sents]
    batch = model.predict_batch(sents, labels)
    for s, y, p in zip(sents, labels, batch):
        np.testing.assert_allclose(p, model.predict_all(s, y), atol=1e-12)


def test_retrofit_equivalence_and_copy_contract():
    rng = np.random.default_rng(0)
    base = tiny_lm(6)
    before = {k: t.data.copy() for k, t in base.params.items()}
    cond = bilm.retrofit_conditional(base, 3, label_dim=4)
    for k, arr in before.items():
        assert cond.params[k].data.tobytes() == arr.tobytes()
        assert base.params[k].data.tobytes() == arr.tobytes()
    for _ in range(20):
        s = random_sentence(rng, 9)
        ref = base.predict_all(s)
        for y in range(3):
            assert np.abs(cond.predict_all(s, y) - ref).max() < 1e-6
    with pytest.raises(StateError):
        bilm.retrofit_conditional(cond, 3)


def test_label_requires_conditional_model():
    with pytest.raises(StateError):
        tiny_lm().predict_all([4, 5], label=0)
    with pytest.raises(ValueError):
        tiny_lm(conditional=True).predict_all([4, 5], label=3)


def test_uniform_output_model_has_log_v_loss():
    model = tiny_lm()
    model.params["out.W"].data[...] = 0
    model.params["out.b"].data[...] = 0
    assert float(model.lm_loss([4, 5, 6]).data) == pytest.approx(math.log(9))


@pytest.mark.parametrize("k", [1, 4, 9])
def test_topk_matches_full_sort(k):
    model = tiny_lm(7)
    ctx = ClozeContext([4, 5, 6, 7], 2)
    dist = model.predict_distribution(ctx)
    top = model.topk(ctx, k)
    assert [i for i, _ in top] == np.argsort(-dist, kind="stable")[:k].tolist()
    probs = [p for _, p in top]
    assert probs == sorted(probs, reverse=True)
    if k == 1:
        assert top[0][0] == int(np.argmax(dist))
    with pytest.raises(ValueError):
        model.topk(ctx, 10)


def _toy_corpus():
    return [[4 + (i + j) % 5 for j in range(4 + i % 3)] for i in range(50)]


def test_pretraining_reduces_loss_and_is_deterministic():
    corpus = _toy_corpus()
    cfg = LMTrainConfig(epochs=5, batch_size=10, lr=0.01, dropout=0.0)
    a = bilm.pretrain(corpus, cfg, BiLMDims(10, 8, 8, 8))
    b = bilm.pretrain(corpus, cfg, BiLMDims(10, 8, 8, 8))
    assert a.history[-1] < a.history[0]
    for k in a.params:
        assert a.params[k].data.tobytes() == b.params[k].data.tobytes()


def test_memorizes_a_repeated_sentence():
    sent = [4, 5, 6, 7, 8]
    cfg = LMTrainConfig(epochs=60, batch_size=8, lr=0.02, dropout=0.0)
    model = bilm.pretrain([sent] * 8, cfg, BiLMDims(10, 8, 16, 16))
    assert model.predict_all(sent).argmax(axis=1).tolist() == sent


def test_conditional_finetune_reduces_loss_and_is_deterministic():
    examples = [LabeledExample([4, 5 + y, 6], y) for y in (0, 1) for _ in range(10)]
    base = bilm.pretrain(_toy_corpus(), LMTrainConfig(epochs=2, lr=0.01), BiLMDims(10, 8, 8, 8))
    cond = bilm.retrofit_conditional(base, 2, 4)
    cfg = LMTrainConfig(epochs=6, batch_size=5, lr=0.02)
    a = bilm.finetune_conditional(cond, examples, cfg)
    b = bilm.finetune_conditional(cond, examples, cfg)
    assert a.history[-1] < a.history[0]
    assert all(a.params[k].data.tobytes() == b.params[k].data.tobytes() for k in a.params)
    with pytest.raises(StateError):
        bilm.finetune_conditional(base, examples, cfg)
    with pytest.raises(StateError):
        bilm.finetune_unconditional(cond, [[4, 5]], cfg)


def test_freeze_pretrained_updates_only_label_pathway():
    examples = [LabeledExample([4, 5, 6], 0), LabeledExample([4, 7, 6], 1)]
    cond = bilm.retrofit_conditional(tiny_lm(conditional=False), 2, 2)
    out = bilm.finetune_conditional(cond, examples, LMTrainConfig(epochs=2, lr=0.01, freeze_pretrained=True))
    for k, t in out.params.items():
        same = t.data.tobytes() == cond.params[k].data.tobytes()
        assert same == (k not in ("label.embed", "comb.W_label"))


def test_checkpoint_round_trip(tmp_path):
    vocab = build_vocab([["w%d" % i for i in range(5)]])
    model = tiny_lm(vocab=vocab.size, conditional=True)
    model.vocab_digest = vocab.digest()
    model.label_names = ("a", "b", "c")
    model.save(tmp_path / "m.ckpt")
    back = BiLM.load(tmp_path / "m.ckpt", vocab)
    assert back.conditional and back.label_names == ("a", "b", "c")
    for k, t in model.params.items():
        assert back.params[k].data.tobytes() == t.data.tobytes()
    with pytest.raises(CheckpointError):
        BiLM.load(tmp_path / "m.ckpt", build_vocab([["other"]]))
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        BiLM.load(tmp_path / "cut.ckpt", vocab)


@pytest.mark.parametrize("bad", [[], [99], [-1]])
def test_bad_sentences_rejected(bad):
    with pytest.raises(ValueError):
        tiny_lm().predict_all(bad)


def test_config_validation():
    with pytest.raises(ValueError):
        LMTrainConfig(epochs=0)
    with pytest.raises(ValueError):
        LMTrainConfig(dropout=1.0)
    with pytest.raises(ValueError):
        bilm.retrofit_conditional(tiny_lm(), 1)


def test_params_are_tensors():
    assert all(isinstance(t, Tensor) for t in tiny_lm().params.values())
