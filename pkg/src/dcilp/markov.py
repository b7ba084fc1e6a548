"""Markov blanket estimation from a thresholded empirical precision matrix."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

EIG_RTOL = 1e-10
GRID_COUNT = 20


@dataclass
class PrecisionEstimate:
    theta: np.ndarray
    lambda1: float

    @property
    def support(self) -> set[tuple[int, int]]:
        rows, cols = np.nonzero(self.theta)
        return {(int(i), int(j)) for i, j in zip(rows, cols) if i != j}


@dataclass
class MarkovBlankets:
    sets: list[set[int]]

    @property
    def d(self) -> int:
        return len(self.sets)

    def scope(self, i: int) -> list[int]:
        """``sorted(MB(X_i) | {i})``."""
        return sorted(self.sets[i] | {i})

    def mutual(self, i: int, j: int) -> bool:
        return j in self.sets[i] and i in self.sets[j]

    def to_json(self) -> str:
        return json.dumps({str(i): sorted(s) for i, s in enumerate(self.sets)},
                          indent=1, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "MarkovBlankets":
        raw = json.loads(text)
        d = len(raw)
        return cls([set(int(j) for j in raw[str(i)]) for i in range(d)])

    @classmethod
    def from_support(cls, theta: np.ndarray) -> "MarkovBlankets":
        nz = theta != 0
        return cls([set(np.flatnonzero(nz[i]).tolist()) - {i} for i in range(theta.shape[0])])


@dataclass
class GridPoint:
    lambda1: float
    criterion: float
    support_size: int


def empirical_covariance(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean(axis=0)
    return xc.T @ xc / x.shape[0]


def pseudo_inverse(c: np.ndarray) -> tuple[np.ndarray, bool]:
    """Symmetric pseudo-inverse; the flag is True when ``c`` is rank deficient."""
    w, v = np.linalg.eigh(c)
    cutoff = EIG_RTOL * max(w.max(initial=0.0), 0.0)
    keep = w > cutoff
    inv = (v[:, keep] / w[keep]) @ v[:, keep].T
    return (inv + inv.T) / 2, bool(not keep.all())


def empirical_precision(data) -> np.ndarray:
    x = getattr(data, "values", data)
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    theta, deficient = pseudo_inverse(empirical_covariance(x))
    if deficient:
        log.warning("empirical covariance is rank deficient (n=%d, d=%d); using pseudo-inverse",
                    x.shape[0], x.shape[1])
    return theta


def _offdiag_abs(theta: np.ndarray) -> np.ndarray:
    a = np.abs(theta).copy()
    np.fill_diagonal(a, 0.0)
    return a


def threshold(theta: np.ndarray, lambda1: float) -> PrecisionEstimate:
    """Zero off-diagonal entries with ``|t_ij| <= lambda1 * max_{i!=j} |t_ij|``."""
    if not 0.0 < lambda1 < 1.0:
        raise ValueError(f"lambda1 must lie in (0, 1), got {lambda1}")
    off = _offdiag_abs(theta)
    cut = lambda1 * off.max(initial=0.0)
    out = theta.copy()
    kill = off <= cut
    np.fill_diagonal(kill, False)
    out[kill] = 0.0
    return PrecisionEstimate(out, lambda1)


def criterion(c_hat: np.ndarray, prec, logdet: str = "signed") -> float:
    """``trace(C @ Theta) - log det(Theta)``.

    ``logdet="signed"`` returns ``inf`` unless ``det(Theta) > 0``;
    ``logdet="abs"`` uses ``log|det(Theta)|`` and is ``inf`` only for singular
    Theta. Hard thresholding routinely leaves Theta indefinite, so grid
    selection uses the ``abs`` form by default.
    """
    if logdet not in ("signed", "abs"):
        raise ValueError(f"logdet must be 'signed' or 'abs', got {logdet!r}")
    theta = getattr(prec, "theta", prec)
    sign, lad = np.linalg.slogdet(theta)
    if sign == 0 or (logdet == "signed" and sign < 0) or not np.isfinite(lad):
        return math.inf
    return float(np.sum(c_hat * theta)) - float(lad)


def percentile_lambda_max(theta: np.ndarray, q: float = 98.0) -> float:
    """Ratio of the ``q``-th percentile off-diagonal magnitude to the largest one."""
    iu = np.triu_indices(theta.shape[0], k=1)
    mags = np.abs(theta[iu])
    if mags.size == 0 or mags.max() == 0:
        return 0.5
    return float(np.percentile(mags, q) / mags.max())


def lambda_grid(lo: float, hi: float, count: int = GRID_COUNT) -> np.ndarray:
    return np.linspace(lo, hi, count)


def select_lambda1(data, grid_min: float = 0.05, grid_max: float | None = 0.3,
                   count: int = GRID_COUNT, select: str = "argmin",
                   logdet: str = "abs"):
    """Grid search of the threshold level.

    Returns ``(PrecisionEstimate, MarkovBlankets, diagnostics)`` where the
    diagnostics list holds one ``GridPoint`` per grid value. ``select`` picks
    the ``argmin`` (default) or ``argmax`` of the criterion over feasible
    points; ties keep the smallest threshold.
    """
    if select not in ("argmin", "argmax"):
        raise ValueError(f"select must be 'argmin' or 'argmax', got {select!r}")
    x = np.asarray(getattr(data, "values", data), dtype=float)
    d = x.shape[1]
    c_hat = empirical_covariance(x)
    theta = empirical_precision(x)
    if d == 1:
        est = PrecisionEstimate(theta, grid_min)
        return est, MarkovBlankets([set()]), []

    if grid_max is None:
        grid_max = percentile_lambda_max(theta)
        grid_max = min(max(grid_max, grid_min), 1.0 - 1e-9)
    if not 0.0 < grid_min <= grid_max < 1.0:
        raise ValueError(f"invalid grid [{grid_min}, {grid_max}]")

    diag = []
    best = None
    sign = 1.0 if select == "argmin" else -1.0
    for lam in lambda_grid(grid_min, grid_max, count):
        est = threshold(theta, float(lam))
        val = criterion(c_hat, est, logdet)
        diag.append(GridPoint(float(lam), val, len(est.support)))
        if math.isfinite(val) and (best is None or sign * val < sign * best[0]):
            best = (val, est)
    if best is None:
        raise ValueError("every grid point gives an infeasible thresholded precision "
                         f"matrix (logdet={logdet!r}, grid [{grid_min}, {grid_max}], n={x.shape[0]}, d={d})")
    est = best[1]
    return est, MarkovBlankets.from_support(est.theta), diag


def write_diagnostics(path, diag: list[GridPoint]) -> None:
    lines = ["lambda1,criterion,support_size"]
    for p in diag:
        lines.append(f"{p.lambda1!r},{p.criterion!r},{p.support_size}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
