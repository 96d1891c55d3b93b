"""Alignment-based greedy minutiae matching and masquerade-attack evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, EmptyTemplate
from .minutiae import Template
from .phase import FrequencyMap, reconstruct, reextract

DEFAULT_R0 = 12.0
DEFAULT_A0 = math.pi / 6
DEFAULT_THRESHOLD = 0.25


@dataclass(frozen=True)
class MatchResult:
    score: float
    paired: int
    alignment: tuple[float, float, float]  # dx, dy, rot taking query onto reference
    pairs: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class AttackReport:
    kind: str
    trials: int
    successes: int
    threshold: float

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def csv_row(self) -> str:
        return f"{self.kind},{self.trials},{self.successes},{self.rate:.6f}"


def _angle_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(np.mod(a - b, 2.0 * math.pi))
    return np.minimum(d, 2.0 * math.pi - d)


def _greedy_pairs(dist: np.ndarray, ok: np.ndarray) -> list[tuple[int, int, float]]:
    """Pair candidates in ascending distance (ties: lower reference, then
    lower query index), each minutia used at most once."""
    ri, qi = np.nonzero(ok)
    if len(ri) == 0:
        return []
    d = dist[ri, qi]
    order = np.lexsort((qi, ri, d))
    used_r, used_q = set(), set()
    out = []
    for k in order:
        r, q = int(ri[k]), int(qi[k])
        if r in used_r or q in used_q:
            continue
        used_r.add(r)
        used_q.add(q)
        out.append((r, q, float(d[k])))
    return out


def match(
    reference: Template,
    query: Template,
    r0: float = DEFAULT_R0,
    a0: float = DEFAULT_A0,
) -> MatchResult:
    """Best greedy pairing over all single-pair alignment hypotheses.

    Each hypothesis rotates the query by the direction difference of one
    reference/query pair and translates it so the pair coincides. The
    hypothesis pairing the most minutiae wins (ties: smaller mean paired
    distance, then the earlier hypothesis in row-major order). The score is
    ``paired**2 / (len(reference) * len(query))``.
    """
    if len(reference) == 0 or len(query) == 0:
        raise EmptyTemplate("matching needs two non-empty templates")
    rx, ry, rd = reference.as_arrays()
    qx, qy, qd = query.as_arrays()
    n1, n2 = len(rx), len(qx)

    best = None  # (paired, mean_dist, i, j, pairs)
    for i in range(n1):
        rot = rd[i] - qd  # one rotation per query anchor j
        c, s = np.cos(rot), np.sin(rot)
        # transformed[j, k]: query minutia k under hypothesis (i, j)
        ox = qx[None, :] - qx[:, None]
        oy = qy[None, :] - qy[:, None]
        tx = c[:, None] * ox - s[:, None] * oy + rx[i]
        ty = s[:, None] * ox + c[:, None] * oy + ry[i]
        td = qd[None, :] + rot[:, None]
        for j in range(n2):
            dist = np.hypot(rx[:, None] - tx[j][None, :], ry[:, None] - ty[j][None, :])
            ok = (dist <= r0) & (_angle_diff(rd[:, None], td[j][None, :]) <= a0)
            pairs = _greedy_pairs(dist, ok)
            paired = len(pairs)
            mean = sum(p[2] for p in pairs) / paired if paired else math.inf
            if best is None or paired > best[0] or (paired == best[0] and mean < best[1]):
                best = (paired, mean, i, j, pairs)

    paired, _, i, j, pairs = best
    rot = math.remainder(rd[i] - qd[j], 2.0 * math.pi)
    c, s = math.cos(rot), math.sin(rot)
    dx = rx[i] - (c * qx[j] - s * qy[j])
    dy = ry[i] - (s * qx[j] + c * qy[j])
    return MatchResult(
        score=paired * paired / (n1 * n2),
        paired=paired,
        alignment=(float(dx), float(dy), float(rot)),
        pairs=tuple((r, q) for r, q, _ in pairs),
    )


def decide(result: MatchResult, threshold: float = DEFAULT_THRESHOLD) -> bool:
    return result.score >= threshold


def _score(a: Template, b: Template) -> float:
    return match(a, b).score if len(a) and len(b) else 0.0


def reconstruct_and_reextract(t: Template, freq: FrequencyMap = FrequencyMap()) -> Template:
    return reextract(reconstruct(t, freq))


def attack_eval(
    originals: Sequence[Template],
    impressions: Optional[Sequence[Sequence[Template]]] = None,
    threshold: float = DEFAULT_THRESHOLD,
    freq: FrequencyMap = FrequencyMap(),
) -> tuple[AttackReport, AttackReport]:
    """Type-I and type-II masquerade attack rates.

    ``impressions[k]`` holds the other impressions of ``originals[k]``.
    Every original is reconstructed and re-extracted once; a comparison
    involving an empty template scores 0.
    """
    if not originals:
        raise EmptyInput("attack evaluation needs at least one original template")
    if impressions is None:
        impressions = [[] for _ in originals]
    if len(impressions) != len(originals):
        raise ValueError("impressions must be aligned with originals")

    t1 = s1 = t2 = s2 = 0
    for original, others in zip(originals, impressions):
        recon = reconstruct_and_reextract(original, freq)
        t1 += 1
        if _score(original, recon) >= threshold:
            s1 += 1
        for imp in others:
            t2 += 1
            if _score(imp, recon) >= threshold:
                s2 += 1
    return (
        AttackReport("type-I", t1, s1, threshold),
        AttackReport("type-II", t2, s2, threshold),
    )


def attack_csv(reports: Sequence[AttackReport]) -> str:
    return "kind,trials,successes,rate\n" + "".join(r.csv_row() + "\n" for r in reports)
