#!/usr/bin/env python3
"""Smoke test for the semder Python bindings.

Build the module first, then run this script from anywhere:

    cargo build -p semder-python
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_semder(tmp: Path):
    candidates = [
        ROOT / "target" / "debug" / "libsemder.so",
        ROOT / "target" / "release" / "libsemder.so",
    ]
    built = next((c for c in candidates if c.exists()), None)
    if built is None:
        sys.exit("libsemder.so not found; run `cargo build -p semder-python` first")
    shutil.copy(built, tmp / "semder.so")
    sys.path.insert(0, str(tmp))
    import semder

    return semder


CORPUS = """\
comparison\tthe hot sun\tvery cold ice
comparison\tvery warm day\tthe cold night
expansion\tthe hot sun\tvery warm day
expansion\tthe cold ice\tvery cold night
"""

MEMORY = """\
6 4
hot 1.0 0.2 -0.3 0.5
cold -0.8 0.1 0.4 -0.2
warm 0.9 0.3 -0.1 0.4
ice -0.7 0.2 0.3 -0.3
the 0.01 0.02 0.01 -0.01
very 0.02 -0.01 0.03 0.02
"""


def main():
    tmpdir = tempfile.TemporaryDirectory()
    tmp = Path(tmpdir.name)
    semder = import_semder(tmp)

    train_tsv = tmp / "train.tsv"
    memory_txt = tmp / "memory.txt"
    train_tsv.write_text(CORPUS * 8)
    memory_txt.write_text(MEMORY)

    # corpus parsing
    rows = semder.load_corpus(train_tsv)
    assert len(rows) == 32, len(rows)
    arg1, arg2, relation = rows[0]
    assert arg1 == ["the", "hot", "sun"] and relation == "comparison", rows[0]

    # memory table
    mem = semder.Memory.load(memory_txt)
    assert mem.dim == 4 and len(mem) == 6
    assert "hot" in mem and "HOT" in mem and "sun" not in mem
    assert len(mem.vector("cold")) == 4

    # numeric helpers
    probs = semder.softmax([1.0, 2.0, 3.0])
    assert abs(sum(probs) - 1.0) < 1e-12 and probs[2] > probs[0]
    unit = semder.tanh_normalize([0.3, -1.2, 2.0])
    assert abs(math.fsum(x * x for x in unit) - 1.0) < 1e-12

    # training
    model, info = semder.train(
        train_tsv, memory_txt, "comparison", d1=6, da=4, seed=7, max_iters=100
    )
    assert info["train_accuracy"] >= 0.95, info
    assert info["positives"] == 16 and info["negatives"] == 16, info
    assert model.target == "comparison"
    d1, d2, da, l = model.dims
    assert (d1, d2, da, l) == (6, 4, 4, 2), model.dims

    # prediction and attention
    label, y_p = model.predict(mem, ["the", "hot", "sun"], ["very", "cold", "ice"])
    assert label == "comparison", (label, y_p)
    assert abs(sum(y_p) - 1.0) < 1e-12 and len(y_p) == 2
    label, _ = model.predict(mem, ["the", "hot", "sun"], ["very", "warm", "day"])
    assert label == semder.NEGATIVE_LABEL, label
    top = model.attention(mem, ["the", "hot", "sun"], ["very", "cold", "ice"], k=3)
    assert len(top) == 3 and all(w > 0.0 for _, w in top), top
    words = [w for w, _ in top]
    assert set(words) <= {"the", "hot", "very", "cold", "ice"}, words

    # evaluation
    report = model.evaluate_file(mem, train_tsv)
    assert report["accuracy"] >= 0.95, report
    assert report["tp"] + report["fn"] == 16, report

    # save / load round trip
    model_path = tmp / "model.bin"
    model.save(model_path)
    again = semder.Model.load(model_path)
    label2, y_p2 = again.predict(mem, ["the", "hot", "sun"], ["very", "cold", "ice"])
    assert label2 == "comparison" and y_p2 == y_p

    # gradient audit
    audit = semder.grad_check(seed=11)
    assert audit["passed"], audit
    assert audit["max_rel_err"] <= audit["tolerance"]
    assert set(audit["blocks"]) == {
        "theta_l", "w_rp", "w_rk", "b_r", "w_p", "w_m", "w_s", "b_a",
    }, audit["blocks"]

    # error paths surface as exceptions
    try:
        semder.grad_check(eps=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("eps validation did not raise")
    bad = tmp / "missing.tsv"
    try:
        semder.load_corpus(bad)
    except IOError:
        pass
    else:
        raise AssertionError("missing file did not raise")

    print("smoke test passed")


if __name__ == "__main__":
    main()
