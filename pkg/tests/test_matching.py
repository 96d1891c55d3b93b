import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fprecon import synth
from fprecon.errors import EmptyInput, EmptyTemplate
from fprecon.matching import AttackReport, MatchResult, attack_csv, attack_eval, decide, match
from fprecon.minutiae import Kind, Minutia, Template

GOLDEN = Path(__file__).parent / "golden"


def shifted(t, dx, dy, rot=0.0, cx=0.0, cy=0.0):
    return Template(t.width, t.height, tuple(oracles.rigid(t, dx, dy, rot, cx, cy)))


def test_self_match():
    t = oracles.random_template(np.random.default_rng(0), 15)
    r = match(t, t)
    assert r.score == 1.0 and r.paired == 15
    assert r.alignment == (0.0, 0.0, 0.0)


def test_single_minutia_templates_always_match():
    a = Template(300, 300, (Minutia(10, 10, 0.3, Kind.ENDING),))
    b = Template(300, 300, (Minutia(250, 40, 4.0, Kind.BIFURCATION),))
    r = match(a, b)
    assert (r.score, r.paired) == (1.0, 1)


def test_far_apart_pairs_only_anchor():
    # two minutiae 100 px apart vs two minutiae 20 px apart: only the anchor pairs
    a = Template(300, 300, (Minutia(50, 50, 0.0), Minutia(150, 50, 0.0)))
    b = Template(300, 300, (Minutia(50, 50, 0.0), Minutia(70, 50, 0.0)))
    r = match(a, b)
    assert r.paired == 1 and r.score == pytest.approx(0.25)


def test_translated_query():
    t = oracles.random_template(np.random.default_rng(5), 14, margin=20)
    q = shifted(t, 10, 5)
    # oracle: undoing the known shift lands every query minutia on its source
    for a, b in zip(t, q):
        assert math.hypot(a.x - (b.x - 10), a.y - (b.y - 5)) <= 12
    r = match(t, q)
    assert r.score == 1.0
    assert r.alignment[0] == pytest.approx(-10) and r.alignment[1] == pytest.approx(-5)


def test_empty_template():
    t = oracles.random_template(np.random.default_rng(0), 3)
    with pytest.raises(EmptyTemplate):
        match(t, Template(300, 300, ()))
    with pytest.raises(EmptyTemplate):
        match(Template(300, 300, ()), t)


@pytest.mark.parametrize("score,expected", [(1.0, True), (0.0, False), (0.25, True), (0.2499, False)])
def test_decide(score, expected):
    assert decide(MatchResult(score, 0, (0.0, 0.0, 0.0)), 0.25) is expected


def _noisy_copy(rng, t, keep=0.8, jitter=2.0):
    out = []
    for m in t:
        if rng.random() < keep:
            out.append(
                Minutia(
                    min(max(m.x + rng.normal(0, jitter), 0), t.width - 1e-3),
                    min(max(m.y + rng.normal(0, jitter), 0), t.height - 1e-3),
                    m.direction + rng.normal(0, 0.1),
                    m.kind,
                )
            )
    return Template(t.width, t.height, tuple(out or t.minutiae[:1]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n1=st.integers(1, 9), n2=st.integers(1, 9))
def test_matches_bruteforce_oracle(seed, n1, n2):
    rng = np.random.default_rng(seed)
    a = oracles.random_template(rng, n1, 80, 80)
    b = _noisy_copy(rng, a) if rng.random() < 0.5 else oracles.random_template(rng, n2, 80, 80)
    r = match(a, b)
    assert r.paired == oracles.greedy_match(a.minutiae, b.minutiae)
    assert r.score == pytest.approx(r.paired**2 / (len(a) * len(b)))
    assert 0.0 <= r.score <= 1.0 and r.paired <= min(len(a), len(b))
    assert len(r.pairs) == r.paired


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = oracles.random_template(rng, int(rng.integers(1, 16)))
    b = _noisy_copy(rng, a) if rng.random() < 0.5 else oracles.random_template(rng, 12)
    assert abs(match(a, b).score - match(b, a).score) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    dx=st.floats(-40, 40),
    dy=st.floats(-40, 40),
    rot=st.floats(-math.pi, math.pi),
)
def test_rigid_motion_invariance(seed, dx, dy, rot):
    rng = np.random.default_rng(seed)
    a = oracles.random_template(rng, 12)
    b = _noisy_copy(rng, a)
    moved = shifted(b, dx, dy, rot, 150, 150)
    assert abs(match(a, b).score - match(a, moved).score) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_removing_paired_minutia_never_increases_pairs(seed):
    rng = np.random.default_rng(seed)
    a = oracles.random_template(rng, 10)
    b = _noisy_copy(rng, a, keep=0.9)
    r = match(a, b)
    if len(b) < 2:
        return
    drop = r.pairs[int(rng.integers(len(r.pairs)))][1]
    smaller = Template(b.width, b.height, tuple(m for k, m in enumerate(b) if k != drop))
    assert match(a, smaller).paired <= r.paired


def test_random_imposters_reject():
    rng = np.random.default_rng(2024)
    scores = [
        match(oracles.random_template(rng, 12), oracles.random_template(rng, 12)).score for _ in range(100)
    ]
    assert sum(s < 0.25 for s in scores) >= 95


# --- attack evaluation -----------------------------------------------------------


@pytest.fixture(scope="module")
def attack_set():
    originals, impressions = [], []
    for k in range(10):
        image, truth = synth.generate(synth.random_spec(300, 300, 12, seed=700 + k))
        originals.append(truth)
        impressions.append([t for _, t in synth.impressions(image, truth, 2, seed=900 + k)])
    return originals, impressions


def test_attack_eval_vacuous_threshold(attack_set):
    originals, impressions = attack_set
    one, two = attack_eval(originals[:3], impressions[:3], threshold=0.0)
    assert (one.rate, two.rate) == (1.0, 1.0)
    assert (one.trials, two.trials) == (3, 6)


def test_attack_eval_unattainable_threshold(attack_set):
    originals, impressions = attack_set
    one, two = attack_eval(originals[:3], impressions[:3], threshold=1.01)
    assert (one.rate, two.rate) == (0.0, 0.0)


def test_attack_eval_without_impressions(attack_set):
    one, two = attack_eval(attack_set[0][:1])
    assert one.trials == 1 and two.trials == 0 and two.rate == 0.0


def test_attack_eval_empty():
    with pytest.raises(EmptyInput):
        attack_eval([])


def test_attack_eval_golden(attack_set):
    one, two = attack_eval(*attack_set, threshold=0.25)
    got = {r.kind: [r.trials, r.successes] for r in (one, two)}
    expected = json.loads((GOLDEN / "attack_eval_10x2.json").read_text())
    assert got == expected
    assert 0.0 <= two.rate <= one.rate <= 1.0


def test_attack_csv():
    text = attack_csv([AttackReport("type-I", 4, 3, 0.25), AttackReport("type-II", 8, 2, 0.25)])
    assert text == "kind,trials,successes,rate\ntype-I,4,3,0.750000\ntype-II,8,2,0.250000\n"
