"""Discrete Young measures, the quantile transform and narrow-convergence tables.

A discrete Young measure assigns to every base point theta_j a probability
measure given by sorted atoms xi_{j,i} with weights w_{j,i}. The quantile
transform uses the strict convention

    u(theta, lam) = inf{c : nu(theta)((-inf, c)) > lam},

which for atomic measures is the first atom whose cumulative weight exceeds
lam. u(theta, .) is piecewise constant on [C_{i-1}, C_i), so lam-integrals
of h(u(theta, lam)) are evaluated exactly as sums over those segments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DiscreteYoungMeasure",
    "quantile",
    "pushforward_sides",
    "pushforward_identity",
    "h_catalog",
    "narrow_convergence_test",
    "from_ensemble",
    "dirac",
]


@dataclass
class DiscreteYoungMeasure:
    """Atoms and weights with shape (M, n): M base points, n atoms each."""

    atoms: np.ndarray
    weights: np.ndarray
    mu: np.ndarray | None = None  # base-point weights (default uniform)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if a.shape != w.shape:
            raise ValueError("atoms and weights must have the same shape")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        tot = w.sum(axis=1)
        if np.any(np.abs(tot - 1.0) > 1e-12):
            raise ValueError("weights must sum to one at every base point")
        order = np.argsort(a, axis=1, kind="stable")
        self.atoms = np.take_along_axis(a, order, axis=1)
        self.weights = np.take_along_axis(w, order, axis=1)
        M = a.shape[0]
        mu = np.full(M, 1.0 / M) if self.mu is None else np.asarray(self.mu, dtype=float)
        if mu.shape != (M,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("base-point weights must be a probability vector")
        self.mu = mu

    @classmethod
    def from_lists(cls, measures: Sequence[tuple[Sequence[float], Sequence[float]]],
                   mu=None) -> "DiscreteYoungMeasure":
        """Ragged input; shorter rows are padded with zero-weight copies of their largest atom."""
        n = max(len(a) for a, _ in measures)
        A = np.empty((len(measures), n))
        W = np.zeros((len(measures), n))
        for j, (a, w) in enumerate(measures):
            a = np.asarray(a, dtype=float)
            w = np.asarray(w, dtype=float)
            order = np.argsort(a, kind="stable")
            a, w = a[order], w[order]
            A[j, : len(a)] = a
            A[j, len(a):] = a[-1]
            W[j, : len(a)] = w
        return cls(A, W, mu)

    @property
    def n_base(self) -> int:
        return self.atoms.shape[0]

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.weights, axis=1)

    def quantile(self, lam) -> np.ndarray:
        """u(theta_j, lam) for every base point; lam scalar or (L,) -> (M,) or (M, L)."""
        lam_arr = np.asarray(lam, dtype=float)
        if np.any((lam_arr <= 0) | (lam_arr >= 1)):
            raise ValueError("lambda must lie in (0, 1)")
        C = self.cumulative()
        n = self.atoms.shape[1]
        lam2 = np.atleast_1d(lam_arr)
        idx = np.empty((self.n_base, lam2.size), dtype=np.int64)
        for j in range(self.n_base):
            idx[j] = np.searchsorted(C[j], lam2, side="right")
        idx = np.minimum(idx, n - 1)
        out = np.take_along_axis(self.atoms, idx, axis=1)
        return out[:, 0] if lam_arr.ndim == 0 else out

    def to_csv(self, dest: str | Path) -> None:
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "atom", "weight"])
            for j in range(self.n_base):
                for a, wt in zip(self.atoms[j], self.weights[j]):
                    if wt > 0:
                        w.writerow([j, repr(float(a)), repr(float(wt))])


def quantile(atoms: Sequence[float], weights: Sequence[float], lam: float) -> float:
    """Strict-convention quantile of a single atomic measure."""
    return float(DiscreteYoungMeasure(np.asarray([atoms]), np.asarray([weights])).quantile(lam)[0])


def dirac(values: np.ndarray) -> DiscreteYoungMeasure:
    """nu(theta) = delta_{u(theta)} for every entry of ``values``."""
    v = np.asarray(values, dtype=float).ravel()
    return DiscreteYoungMeasure(v[:, None], np.ones((v.size, 1)))


def h_catalog(a: float = 0.5) -> dict[str, Callable]:
    """Caratheodory test integrands h(xi): xi, xi^2, (xi - a)^+, arctan(xi)."""
    return {
        "xi": lambda x: x,
        "xi2": lambda x: x * x,
        "pos_part": lambda x: np.maximum(x - a, 0.0),
        "bounded_smooth": np.arctan,
    }


def pushforward_sides(nu: DiscreteYoungMeasure, h: Callable) -> tuple[float, float]:
    """(int int h dnu dmu, int int_0^1 h(u(theta, lam)) dlam dmu).

    The right side integrates the quantile exactly over its constant pieces
    [C_{i-1}, C_i), taking the segment lengths from the cumulative weights.
    """
    lhs_j = np.sum(h(nu.atoms) * nu.weights, axis=1)
    C = nu.cumulative()
    C = C / C[:, -1:]  # pin the top of the last segment at exactly 1
    lengths = np.diff(np.concatenate([np.zeros((nu.n_base, 1)), C], axis=1), axis=1)
    rhs_j = np.sum(h(nu.atoms) * lengths, axis=1)
    return float(lhs_j @ nu.mu), float(rhs_j @ nu.mu)


def pushforward_identity(measures: DiscreteYoungMeasure | Sequence[DiscreteYoungMeasure],
                         catalog: dict[str, Callable] | None = None) -> float:
    """Max |lhs - rhs| over the measures and the h-catalog."""
    catalog = h_catalog() if catalog is None else catalog
    ms = [measures] if isinstance(measures, DiscreteYoungMeasure) else list(measures)
    worst = 0.0
    for nu in ms:
        for h in catalog.values():
            lhs, rhs = pushforward_sides(nu, h)
            worst = max(worst, abs(lhs - rhs))
    return worst


def from_ensemble(saved: np.ndarray, time_bins: Sequence[Sequence[int]] | None = None,
                  cells: np.ndarray | None = None) -> DiscreteYoungMeasure:
    """Empirical Young measure on (time bin, cell) base points with uniform atom weights.

    ``saved`` has shape (P, S, *grid) (ensemble of saved fields). Each time
    bin is a list of save indices; its atoms at a cell are all path values at
    those saves. ``cells`` optionally selects flat cell indices (a compact
    window).
    """
    saved = np.asarray(saved, dtype=float)
    P, S = saved.shape[:2]
    flat = saved.reshape(P, S, -1)
    if cells is not None:
        flat = flat[:, :, np.asarray(cells)]
    bins = [[s] for s in range(S)] if time_bins is None else [list(b) for b in time_bins]
    atoms = []
    for b in bins:
        vals = flat[:, b, :]                          # (P, |b|, X)
        atoms.append(vals.reshape(-1, vals.shape[-1]).T)  # (X, P|b|)
    sizes = {a.shape[1] for a in atoms}
    if len(sizes) != 1:
        raise ValueError("time bins must contain the same number of saves")
    A = np.concatenate(atoms, axis=0)
    W = np.full(A.shape, 1.0 / A.shape[1])
    return DiscreteYoungMeasure(A, W)


def narrow_convergence_test(fields: Sequence[np.ndarray], catalog: dict[str, Callable] | None = None,
                            cells: np.ndarray | None = None) -> dict:
    """Table of int h(u_n) dmu for a sequence of ensembles on a shared window.

    Each entry of ``fields`` is an array (P, *grid) (or (P, S, *grid)); mu is
    uniform over paths, saves and the selected cells. Also returns the
    successive differences used to judge Cauchy behavior.
    """
    catalog = h_catalog() if catalog is None else catalog
    table = {name: [] for name in catalog}
    for u in fields:
        u = np.asarray(u, dtype=float)
        flat = u.reshape(u.shape[0], -1) if cells is None else u.reshape(u.shape[0], -1)[:, cells]
        for name, h in catalog.items():
            table[name].append(float(np.mean(h(flat))))
    table = {k: np.array(v) for k, v in table.items()}
    diffs = {k: np.abs(np.diff(v)) for k, v in table.items()}
    return {"table": table, "differences": diffs}
