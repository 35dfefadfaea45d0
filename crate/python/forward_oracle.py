#!/usr/bin/env python3
"""Independent straight-line reference for the full forward pass.

Generates random model parameters and discourse instances, runs the forward
computation exactly as written out below (surface pooling encoder, attention
over the word-vector memory, softmax head), and freezes the expected class
probabilities into a JSON fixture. The Rust acceptance suite replays the same
inputs through the library and compares predictions against this file.

Regenerate with:  python3 python/forward_oracle.py
"""

import json
import os

import numpy as np

GROUPS = 20
INSTANCES_PER_GROUP = 5
D1, D2, DA, L = 8, 12, 6, 2
BASE_SEED = 20250823

OUT = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "crates", "cli", "tests", "fixtures", "forward_oracle.json",
)


def forward(params, memory_table, arg1, arg2):
    vocab_index = {w: i for i, w in enumerate(params["vocab"])}
    emb = np.array(params["theta_l"])        # one row per vocabulary word
    w_rp = np.array(params["w_rp"])
    w_rk = np.array(params["w_rk"])
    b_r = np.array(params["b_r"])
    w_p = np.array(params["w_p"])
    w_m = np.array(params["w_m"])
    w_s = np.array(params["w_s"])
    b_a = np.array(params["b_a"])

    # Surface path: token matrix, avg/max/min pooling, normalized tanh.
    x1 = np.stack([emb[vocab_index[w]] for w in arg1], axis=1)    # d1 x n
    x2 = np.stack([emb[vocab_index[w]] for w in arg2], axis=1)
    c1 = np.concatenate([x1.mean(axis=1), x1.max(axis=1), x1.min(axis=1)])
    c2 = np.concatenate([x2.mean(axis=1), x2.max(axis=1), x2.min(axis=1)])
    u = np.concatenate([c1, c2])
    t = np.tanh(u)
    norm = np.sqrt((t * t).sum())
    p = t / norm if norm >= 1e-12 else np.zeros_like(t)

    # Memory rows: distinct in-memory tokens, arg1 then arg2, first occurrence.
    words = []
    for w in list(arg1) + list(arg2):
        if w in memory_table and w not in words:
            words.append(w)
    m = len(words)

    if m == 0:
        p_k = np.zeros(D2)
    else:
        mem = np.array([memory_table[w] for w in words])          # m x d2
        p_a = np.tanh(w_p @ p + b_a)
        m_a = np.tanh(mem @ w_m.T + b_a)                          # rows in attention space
        s = np.array([p_a @ w_s @ m_a[i] for i in range(m)])
        alpha = np.exp(s) / np.exp(s).sum()
        p_k = alpha @ mem

    z = w_rp @ p + w_rk @ p_k + b_r
    return (np.exp(z) / np.exp(z).sum()).tolist()


def make_group(group_idx):
    rng = np.random.default_rng(BASE_SEED + group_idx)
    vocab_size = int(rng.integers(8, 15))
    vocab = [f"w{i}" for i in range(vocab_size)]

    params = {
        "d1": D1, "d2": D2, "da": DA, "l": L,
        "vocab": vocab,
        "theta_l": rng.normal(0.0, 0.5, (vocab_size, D1)).tolist(),
        "w_rp": rng.normal(0.0, 0.4, (L, 6 * D1)).tolist(),
        "w_rk": rng.normal(0.0, 0.4, (L, D2)).tolist(),
        "b_r": rng.normal(0.0, 0.2, L).tolist(),
        "w_p": rng.normal(0.0, 0.4, (DA, 6 * D1)).tolist(),
        "w_m": rng.normal(0.0, 0.4, (DA, D2)).tolist(),
        "w_s": rng.normal(0.0, 0.4, (DA, DA)).tolist(),
        "b_a": rng.normal(0.0, 0.2, DA).tolist(),
    }

    # Every fifth group gets an empty memory table to pin the m = 0 path.
    if group_idx % 5 == 4:
        memory_words = []
    else:
        k = int(rng.integers(2, 6))
        memory_words = [vocab[i] for i in rng.choice(vocab_size, size=k, replace=False)]
    memory_table = {w: rng.normal(0.0, 1.0, D2).tolist() for w in memory_words}

    instances = []
    for _ in range(INSTANCES_PER_GROUP):
        n1 = int(rng.integers(2, 6))
        n2 = int(rng.integers(2, 6))
        arg1 = [vocab[i] for i in rng.integers(0, vocab_size, n1)]
        arg2 = [vocab[i] for i in rng.integers(0, vocab_size, n2)]
        instances.append({
            "arg1": arg1,
            "arg2": arg2,
            "expected_y_p": forward(params, memory_table, arg1, arg2),
        })

    return {
        "params": params,
        "memory_words": memory_words,
        "memory_vectors": [memory_table[w] for w in memory_words],
        "instances": instances,
    }


def main():
    fixture = {"groups": [make_group(g) for g in range(GROUPS)]}
    n = sum(len(g["instances"]) for g in fixture["groups"])
    with open(OUT, "w") as f:
        json.dump(fixture, f)
    print(f"wrote {n} oracle instances to {OUT}")


if __name__ == "__main__":
    main()
