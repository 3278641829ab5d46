"""Reward signals and the change-discovery metric suite.

Metric conventions (all restricted to explorable cells, maps binarized):
  change sets   D* = prior != truth, D^ = belief != prior
  Acc           |D^ n D*| / |D*|                     (percent)
  IoU+ / IoU-   added (free->occupied) / removed sets, intersection over union
  IoU           over D^ and D*
  Seen%         sensed fraction of truth-free explorable cells (percent)
  masked (m*)   the same with every set intersected with the seen mask first
Empty-set convention: a ratio with an empty denominator set is 1.0 when the
corresponding predicted set is empty too, else 0.0 (relevant for Acc; the
IoU family uses union emptiness).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .som import FREE, OCCUPIED, DimensionMismatch, OccupancyGrid


def _state(grid) -> np.ndarray:
    return grid.state if isinstance(grid, OccupancyGrid) else np.asarray(grid)


def _check_dims(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise DimensionMismatch(f"grid shapes differ: {sorted(shapes)}")


def difference_reward(prev, curr, truth, explorable: np.ndarray) -> int:
    """Increase in the number of explorable cells agreeing with the truth."""
    prev, curr, truth = _state(prev), _state(curr), _state(truth)
    explorable = np.asarray(explorable, dtype=bool)
    _check_dims(prev, curr, truth, explorable)
    match_curr = int(np.count_nonzero((curr == truth) & explorable))
    match_prev = int(np.count_nonzero((prev == truth) & explorable))
    return match_curr - match_prev


def coverage_reward(seen_prev: np.ndarray, seen_curr: np.ndarray,
                    explorable: np.ndarray) -> int:
    """Count of newly seen explorable cells."""
    seen_prev = np.asarray(seen_prev, dtype=bool)
    seen_curr = np.asarray(seen_curr, dtype=bool)
    explorable = np.asarray(explorable, dtype=bool)
    _check_dims(seen_prev, seen_curr, explorable)
    return int(np.count_nonzero(seen_curr & ~seen_prev & explorable))


def combined_reward(r_exp: float, r_diff: float, beta1: float, beta2: float) -> float:
    if beta1 < 0 or beta2 < 0:
        raise ValueError("reward coefficients must be >= 0")
    return beta1 * r_exp + beta2 * r_diff


@dataclass
class RewardTrace:
    """Per-step reward records for one episode."""

    t: list = field(default_factory=list)
    r_diff: list = field(default_factory=list)
    r_exp: list = field(default_factory=list)
    r_global: list = field(default_factory=list)
    r_local: list = field(default_factory=list)

    def append(self, t, r_diff, r_exp, r_global, r_local):
        self.t.append(int(t))
        self.r_diff.append(int(r_diff))
        self.r_exp.append(int(r_exp))
        self.r_global.append(float(r_global))
        self.r_local.append(float(r_local))

    def totals(self) -> dict:
        return {
            "r_diff": int(sum(self.r_diff)),
            "r_exp": int(sum(self.r_exp)),
            "r_global": float(sum(self.r_global)),
            "r_local": float(sum(self.r_local)),
        }


@dataclass
class MetricsReport:
    seen_pct: float
    acc: float
    iou_plus: float
    iou_minus: float
    iou: float
    m_acc: float
    m_iou_plus: float
    m_iou_minus: float
    m_iou: float
    curves: list = field(default_factory=list)  # [(t, acc, iou), ...]

    def to_dict(self) -> dict:
        return {
            "seen_pct": self.seen_pct, "acc": self.acc,
            "iou_plus": self.iou_plus, "iou_minus": self.iou_minus, "iou": self.iou,
            "m_acc": self.m_acc, "m_iou_plus": self.m_iou_plus,
            "m_iou_minus": self.m_iou_minus, "m_iou": self.m_iou,
        }

    COLUMNS = ("seen_pct", "acc", "iou_plus", "iou_minus", "iou",
               "m_acc", "m_iou_plus", "m_iou_minus", "m_iou")


def _iou(pred: np.ndarray, actual: np.ndarray) -> float:
    union = int(np.count_nonzero(pred | actual))
    if union == 0:
        return 1.0
    return float(np.count_nonzero(pred & actual)) / union


def _recall(pred: np.ndarray, actual: np.ndarray) -> float:
    n_actual = int(np.count_nonzero(actual))
    if n_actual == 0:
        return 1.0 if not pred.any() else 0.0
    return float(np.count_nonzero(pred & actual)) / n_actual


def change_scores(prior, truth, belief, explorable: np.ndarray,
                  seen: np.ndarray | None = None) -> tuple[float, float]:
    """(Acc percent, IoU) of the belief's predicted changes; the curve sample."""
    prior, truth, belief = _state(prior), _state(truth), _state(belief)
    expl = np.asarray(explorable, dtype=bool)
    d_star = (prior != truth) & expl
    d_hat = (belief != prior) & expl
    if seen is not None:
        s = np.asarray(seen, dtype=bool)
        d_star, d_hat = d_star & s, d_hat & s
    return 100.0 * _recall(d_hat, d_star), _iou(d_hat, d_star)


def compute_metrics(prior, truth, final_belief, seen: np.ndarray,
                    explorable: np.ndarray, curve_samples=None) -> MetricsReport:
    """Full metric suite from the episode's final snapshots.

    curve_samples, when given, is an iterable of (t, belief, seen) snapshots
    turned into (t, acc, iou) curve points.
    """
    prior_s, truth_s, belief_s = _state(prior), _state(truth), _state(final_belief)
    seen = np.asarray(seen, dtype=bool)
    expl = np.asarray(explorable, dtype=bool)
    _check_dims(prior_s, truth_s, belief_s, seen, expl)

    prior_occ = (prior_s == OCCUPIED) & expl
    truth_occ = (truth_s == OCCUPIED) & expl
    belief_occ = (belief_s == OCCUPIED) & expl
    prior_free = (prior_s == FREE) & expl
    truth_free = (truth_s == FREE) & expl
    belief_free = (belief_s == FREE) & expl

    d_star = prior_occ ^ truth_occ
    d_hat = prior_occ ^ belief_occ
    star_plus = prior_free & truth_occ
    hat_plus = prior_free & belief_occ
    star_minus = prior_occ & truth_free
    hat_minus = prior_occ & belief_free

    navigable = truth_free
    n_nav = int(np.count_nonzero(navigable))
    seen_pct = 100.0 * np.count_nonzero(seen & navigable) / n_nav if n_nav else 100.0

    curves = []
    if curve_samples is not None:
        for t, b, s in curve_samples:
            a, i = change_scores(prior_s, truth_s, b, expl, seen=None)
            curves.append((int(t), a, i))

    return MetricsReport(
        seen_pct=seen_pct,
        acc=100.0 * _recall(d_hat, d_star),
        iou_plus=_iou(hat_plus, star_plus),
        iou_minus=_iou(hat_minus, star_minus),
        iou=_iou(d_hat, d_star),
        m_acc=100.0 * _recall(d_hat & seen, d_star & seen),
        m_iou_plus=_iou(hat_plus & seen, star_plus & seen),
        m_iou_minus=_iou(hat_minus & seen, star_minus & seen),
        m_iou=_iou(d_hat & seen, d_star & seen),
        curves=curves,
    )
