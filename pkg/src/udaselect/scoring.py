"""Sample transfer scores used for pseudo-label selection and rejection.

The main score adds the domain classifier's source probability to the
label classifier's top probability.  Two competitor schemes (the
domain-minus-entropy score and a pure entropy score) plus two single
component ablations are exposed under the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as md
from .errors import ContractError
from .model import ModelBundle

SCHEMES = ("ours", "uan", "entropy", "ours_no_d", "ours_no_maxy")

# theoretical score range per scheme, used for threshold validation and
# histogram bin edges
SCHEME_RANGES = {
    "ours": (0.0, 2.0),
    "uan": (-1.0, 1.0),
    "entropy": (0.0, 1.0),
    "ours_no_d": (0.0, 1.0),
    "ours_no_maxy": (0.0, 1.0),
}


@dataclass(frozen=True)
class ScoreRecord:
    """Per-sample score bundle: domain prob, class probs and derived stats."""

    d: float
    y_bar: np.ndarray
    max_prob: float
    entropy: float
    w: float


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ContractError("entropy requires nonnegative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ContractError(f"entropy requires a probability vector, sum={p.sum()}")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def score_ours(d: float, y_bar: np.ndarray) -> float:
    """d + max prob, in [0, 2]."""
    if not 0.0 <= d <= 1.0:
        raise ContractError(f"d must be in [0,1], got {d}")
    return float(d + np.max(y_bar))


def score_uan(d: float, y_bar: np.ndarray) -> float:
    """d - H(y_bar)/ln(K), in [-1, 1]; requires at least two classes."""
    if not 0.0 <= d <= 1.0:
        raise ContractError(f"d must be in [0,1], got {d}")
    k = len(y_bar)
    if k < 2:
        raise ContractError("uan score needs at least 2 classes")
    return float(d - entropy(y_bar) / np.log(k))


def score_uan_source(d: float, y_bar: np.ndarray) -> float:
    """Negated target score, as applied to source samples by that scheme."""
    return -score_uan(d, y_bar)


def score_entropy(y_bar: np.ndarray) -> float:
    """1 - H(y_bar)/ln(K): 1 for one-hot, 0 for uniform."""
    k = len(y_bar)
    if k < 2:
        raise ContractError("entropy score needs at least 2 classes")
    return float(1.0 - entropy(y_bar) / np.log(k))


def score_for_scheme(scheme: str, d: float, y_bar: np.ndarray) -> float:
    if scheme == "ours":
        return score_ours(d, y_bar)
    if scheme == "uan":
        return score_uan(d, y_bar)
    if scheme == "entropy":
        return score_entropy(y_bar)
    if scheme == "ours_no_d":
        return float(np.max(y_bar))
    if scheme == "ours_no_maxy":
        if not 0.0 <= d <= 1.0:
            raise ContractError(f"d must be in [0,1], got {d}")
        return float(d)
    raise ContractError(f"unknown scheme {scheme!r}")


def scores_from_outputs(d: np.ndarray, probs: np.ndarray, scheme: str) -> np.ndarray:
    """Vectorized scheme score for aligned d values and probability rows."""
    if scheme not in SCHEMES:
        raise ContractError(f"unknown scheme {scheme!r}")
    return np.array([score_for_scheme(scheme, float(di), row)
                     for di, row in zip(d, probs)])


def score_batch(m: ModelBundle, x: np.ndarray, scheme: str) -> list[ScoreRecord]:
    """Score every row of ``x`` under a no-gradient forward pass."""
    if scheme not in SCHEMES:
        raise ContractError(f"unknown scheme {scheme!r}")
    feats = md.features(m, x)
    probs = md.label_probs(m, feats).value
    d = md.domain_prob(m, feats, lam=0.0).value[:, 0]
    records = []
    for di, row in zip(d, probs):
        records.append(ScoreRecord(
            d=float(di), y_bar=row.copy(), max_prob=float(row.max()),
            entropy=entropy(row), w=score_for_scheme(scheme, float(di), row)))
    return records


def write_score_dump(path, records: list[ScoreRecord], domains: list[str],
                     labels: list[int | None]) -> None:
    """One tab-delimited row per sample, for external density plots."""
    with open(path, "w") as fh:
        fh.write("id\tdomain\tlabel\td\tmax_prob\tentropy\tw\n")
        for i, (r, dom, y) in enumerate(zip(records, domains, labels)):
            lab = "" if y is None else str(int(y))
            fh.write(f"{i}\t{dom}\t{lab}\t{float(r.d)!r}\t{float(r.max_prob)!r}\t"
                     f"{float(r.entropy)!r}\t{float(r.w)!r}\n")
