"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is timed on a few shapes typical of this package (classifier and
cloze-LM sizes) plus one end-to-end case: a training epoch of the LSTM
classifier and a batch of LM cloze predictions. Reported numbers are the best
of ``--repeat`` runs, in milliseconds per call.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from ctxaug import bilm
from ctxaug.classify import RnnConfig, TrainConfig, train_classifier
from ctxaug.corpus import LabeledExample
from ctxaug.numcore import kernels


def _lstm_inputs(rng, steps, n, h, dtype):
    xproj = rng.normal(0, 0.5, (steps, n, 4 * h)).astype(dtype)
    w_h = rng.normal(0, 0.3, (h, 4 * h)).astype(dtype)
    h0 = np.zeros((n, h), dtype)
    return xproj, w_h, h0, h0.copy()


def kernel_cases(rng, dtype):
    """``(name, shape label, {backend: callable})`` triples."""
    cases = []
    for steps, n, h in ((20, 16, 32), (40, 32, 64), (12, 1, 32)):
        args = _lstm_inputs(rng, steps, n, h, dtype)
        label = f"T={steps} n={n} h={h}"
        cases.append(("lstm_forward", label, lambda impl, a=args: impl.lstm_forward(*a)))
        H, C, G = kernels.get_backend("python").lstm_forward(*args)
        dH = rng.normal(size=H.shape).astype(dtype)
        cases.append((
            "lstm_backward", label,
            lambda impl, a=args, s=(H, C, G), d=dH: impl.lstm_backward(d, *s, a[1], a[2], a[3]),
        ))
    for rows, dim, k in ((5000, 32, 512), (20000, 64, 4096)):
        idx = rng.integers(0, rows, size=k)
        src = rng.normal(size=(k, dim)).astype(dtype)
        out = np.zeros((rows, dim), dtype)
        cases.append((
            "scatter_add_rows", f"rows={rows} d={dim} k={k}",
            lambda impl, o=out, i=idx, s=src: impl.scatter_add_rows(o, i, s),
        ))
    for n, V in ((64, 2000), (256, 20000)):
        probs = rng.dirichlet(np.full(V, 0.1), size=n)
        u = rng.random(n)
        cases.append(("sample_rows", f"n={n} V={V}", lambda impl, p=probs, uu=u: impl.sample_rows(p, uu)))
    return cases


def end_to_end_cases(rng):
    V = 400
    examples = [LabeledExample(rng.integers(4, V, size=int(rng.integers(5, 25))).tolist(), int(rng.integers(2)))
                for _ in range(200)]
    arch = RnnConfig(2, V, hidden_dim=32, embed_dim=32)
    cfg = TrainConfig(max_epochs=1, patience=1)
    lm = bilm.BiLM.initialize(bilm.BiLMDims(V, 32, 64, 64), seed=0)
    sents = [ex.tokens for ex in examples[:64]]
    return [
        ("rnn classifier epoch", "200 sentences", lambda: train_classifier(examples, examples[:20], arch, cfg)),
        ("lm predict_batch", "64 sentences", lambda: lm.predict_batch(sents)),
    ]


def best_ms(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return 1e3 * min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    parser.add_argument("--json", help="also write the results to this file")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("note: compiled kernels are not importable; only the numpy fallback is timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    for name, label, call in kernel_cases(rng, np.dtype(args.dtype)):
        rows.append((name, label, {b: best_ms(lambda c=call, b=b: c(kernels.get_backend(b)), args.repeat)
                                   for b in backends}))
    previous = kernels.BACKEND
    for name, label, call in end_to_end_cases(rng):
        timings = {}
        for b in backends:
            kernels.use_backend(b)
            timings[b] = best_ms(call, max(1, args.repeat // 2))
        rows.append((name, label, timings))
    kernels.use_backend(previous)

    header = f"{'kernel':<22} {'shape':<24}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for name, label, t in rows:
        line = f"{name:<22} {label:<24}" + "".join(f"{t[b]:>14.3f}" for b in backends)
        if len(backends) > 1:
            line += f"{t['python'] / t['cython']:>9.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump([{"kernel": n, "shape": s, "ms": t} for n, s, t in rows], fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
