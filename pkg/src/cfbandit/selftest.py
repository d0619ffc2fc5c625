"""Fast invariant checks runnable from an installed package (``cfbandit selftest``)."""
from __future__ import annotations

import math
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from cfbandit import io
from cfbandit.contexts import co_click_matrix, similarity_vectors
from cfbandit.numerics import (
    NotPositiveDefinite,
    TriFactor,
    cholesky_factor,
    paired_t_test,
    pca_fit,
    rank_one_update,
    spd_solve,
)
from cfbandit.policies import Policy
from cfbandit.replay import augment_dataset
from cfbandit.synthenv import GeneratorParams, generate_corpus


def _cholesky_examples():
    L = cholesky_factor([[4.0, 2.0], [2.0, 3.0]]).L
    assert np.allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-12)
    try:
        cholesky_factor([[1.0, 2.0], [2.0, 1.0]])
    except NotPositiveDefinite:
        pass
    else:
        raise AssertionError("indefinite matrix was factored")


def _rank_one_matches_refactor():
    rng = np.random.default_rng(0)
    d = 16
    B = np.eye(d)
    fac = TriFactor.identity(d)
    for _ in range(300):
        x = rng.normal(size=d)
        B += np.outer(x, x)
        fac = rank_one_update(fac, x)
    assert np.max(np.abs(fac.L - cholesky_factor(B).L)) < 1e-8
    b = rng.normal(size=d)
    assert np.allclose(B @ spd_solve(fac, b), b, atol=1e-8)


def _ttest_example():
    res = paired_t_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    assert abs(res.t_stat - 2.0 * math.sqrt(3.0)) < 1e-12
    assert abs(res.p_two_sided - 0.07417990022744853) < 1e-9
    assert paired_t_test([1.0, 2.0], [1.0, 2.0]).p_two_sided == 1.0


def _pca_signs_and_orthonormality():
    rows = np.random.default_rng(1).normal(size=(40, 6))
    model = pca_fit(rows, 4)
    C = model.components
    assert np.allclose(C @ C.T, np.eye(4), atol=1e-8)
    for row in C:
        assert row[np.argmax(np.abs(row))] > 0


def _co_click_example():
    from cfbandit.contexts import SessionRecord

    sessions = [SessionRecord("a", ("1", "2"), 0, 0), SessionRecord("b", ("1", "2", "3"), 0, 0)]
    sim = similarity_vectors(co_click_matrix(sessions, ["1", "2", "3"]))
    assert np.allclose(sim[0], [0.0, 2 / 3, 1 / 3])


def _constant_intuition_equivalence():
    rng = np.random.default_rng(2)
    d, A = 4, 3
    cf = Policy("cfts", A, d, seed=11)
    ts = Policy("ts", A, d, seed=11)
    for _ in range(200):
        x = rng.normal(size=d)
        label = int(rng.integers(A))
        a, b = cf.select_arm(x, 1), ts.select_arm(x, 1)
        assert a == b
        reward = int(a.arm == label)
        cf.update(x, 1, a.arm, reward)
        ts.update(x, 1, b.arm, reward)
    for y in range(A):
        assert np.array_equal(cf.slices[1][y].mu_hat, ts.slices[y].mu_hat)


def _augmentation_identity():
    corpus = generate_corpus(GeneratorParams(), 20, np.random.default_rng(3))
    events = augment_dataset(corpus.sessions, 1, 0.0, np.random.default_rng(4), shuffle=False)
    assert [e.surviving_images for e in events] == [s.clicked_images for s in corpus.sessions]


def _file_round_trip():
    corpus = generate_corpus(GeneratorParams(), 25, np.random.default_rng(5))
    with tempfile.TemporaryDirectory() as tmp:
        sp, fp = Path(tmp) / "sessions.jsonl", Path(tmp) / "features.csv"
        io.write_sessions(sp, corpus.sessions)
        io.write_features(fp, corpus.features)
        assert io.read_sessions(sp) == corpus.sessions
        back = io.read_features(fp)
        assert list(back.rows) == list(corpus.features.rows)
        assert all(np.array_equal(back.rows[k], v) for k, v in corpus.features.rows.items())


CHECKS: dict[str, Callable[[], None]] = {
    "cholesky examples": _cholesky_examples,
    "rank-one update matches refactorisation": _rank_one_matches_refactor,
    "paired t-test example": _ttest_example,
    "PCA orthonormality and sign convention": _pca_signs_and_orthonormality,
    "co-click similarity example": _co_click_example,
    "CF-TS equals TS under constant intuition": _constant_intuition_equivalence,
    "augmentation with r=1, p_drop=0 is the identity": _augmentation_identity,
    "sessions/features file round trip": _file_round_trip,
}


def run_selftest() -> list[tuple[str, bool, str]]:
    results = []
    for name, check in CHECKS.items():
        try:
            check()
        except Exception as err:  # noqa: BLE001 - every failure is reported, not raised
            results.append((name, False, f"{type(err).__name__}: {err}"))
        else:
            results.append((name, True, ""))
    return results
