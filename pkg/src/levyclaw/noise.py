"""Levy measures and reproducible compensated-Poisson noise paths.

Two measure families are supported:

* ``finite_atomic``: m = sum_i lam_i * delta_{z_i}
* ``truncated_power_law``: m(dz) = c |z|^(-1-alpha) dz on z_min <= |z| <= z_max
  (two-sided, symmetric)

Jumps with |z| >= cutoff are sampled as a marked Poisson process. Jumps below
the cutoff are not sampled; their compensated contribution has zero mean and
is dropped, with ``second_moment_below_cutoff`` reporting the truncation size.

Paths are drawn with numpy's PCG64 generator seeded by the path seed, so a
(spec, horizon, seed) triple always reproduces the same events.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidMeasure

__all__ = [
    "LevyMeasureSpec",
    "JumpEvent",
    "NoisePath",
    "WEIGHTS",
    "validate_measure",
    "compensator_moments",
    "sample_path",
    "sample_paths",
    "write_path_csv",
]

# weight catalog for compensator moments
WEIGHTS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "min1": lambda z: np.minimum(np.abs(z), 1.0),
    "min1_sq": lambda z: np.minimum(np.abs(z), 1.0) ** 2,
}
_WEIGHT_POWER = {"mass": 0, "min1": 1, "min1_sq": 2}

_QUAD_NODES = 24


@dataclass(frozen=True)
class LevyMeasureSpec:
    kind: str
    cutoff: float
    atoms: tuple[tuple[float, float], ...] = ()
    alpha: float = 0.0
    c: float = 0.0
    z_min: float = 0.0
    z_max: float = 0.0

    @classmethod
    def finite_atomic(cls, atoms: Iterable[Sequence[float]], cutoff: float) -> "LevyMeasureSpec":
        spec = cls(kind="finite_atomic", cutoff=float(cutoff),
                   atoms=tuple((float(z), float(lam)) for z, lam in atoms))
        validate_measure(spec)
        return spec

    @classmethod
    def truncated_power_law(cls, alpha: float, c: float, z_min: float, z_max: float,
                            cutoff: float) -> "LevyMeasureSpec":
        spec = cls(kind="truncated_power_law", cutoff=float(cutoff), alpha=float(alpha),
                   c=float(c), z_min=float(z_min), z_max=float(z_max))
        validate_measure(spec)
        return spec

    # -- integrals ---------------------------------------------------------

    def band_integral(self, power: int, lo: float, hi: float) -> float:
        """Closed form of int_{lo <= |z| < hi} (|z| ^ 1)^power m(dz)."""
        if self.kind == "finite_atomic":
            tot = 0.0
            for z, lam in self.atoms:
                if lo <= abs(z) < hi:
                    tot += lam * min(abs(z), 1.0) ** power
            return tot
        lo = max(lo, self.z_min)
        hi = min(hi, self.z_max)
        if hi <= lo:
            return 0.0
        tot = 0.0
        # |z| ^ 1 has a kink at 1: r^power below, 1 above
        if lo < 1.0:
            tot += _power_integral(lo, min(hi, 1.0), power - 1.0 - self.alpha)
        if hi > 1.0:
            tot += _power_integral(max(lo, 1.0), hi, -1.0 - self.alpha)
        return 2.0 * self.c * tot

    def mass_above_cutoff(self) -> float:
        return self.band_integral(0, self.cutoff, math.inf)

    def above_cutoff_rule(self, n: int = _QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
        """Nodes z_j and weights w_j with sum_j w_j f(z_j) ~ int_{|z|>=cutoff} f dm.

        Exact for atoms; Gauss-Legendre in log|z| (split at |z|=1) for the
        power law.
        """
        return self._rule(self.cutoff, math.inf, n)

    def below_cutoff_rule(self, n: int = _QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
        return self._rule(0.0, self.cutoff, n)

    def _rule(self, lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "finite_atomic":
            sel = [(z, lam) for z, lam in self.atoms if lo <= abs(z) < hi]
            z = np.array([s[0] for s in sel], dtype=float)
            w = np.array([s[1] for s in sel], dtype=float)
            return z, w
        lo = max(lo, self.z_min)
        hi = min(hi, self.z_max)
        if hi <= lo:
            return np.zeros(0), np.zeros(0)
        edges = [lo] + ([1.0] if lo < 1.0 < hi else []) + [hi]
        x, wx = np.polynomial.legendre.leggauss(n)
        rs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            la, lb = math.log(a), math.log(b)
            s = 0.5 * (lb - la) * x + 0.5 * (lb + la)
            r = np.exp(s)
            # dz = r ds, density c r^(-1-alpha)
            rs.append(r)
            ws.append(0.5 * (lb - la) * wx * self.c * r ** (-self.alpha))
        r = np.concatenate(rs)
        w = np.concatenate(ws)
        return np.concatenate([-r[::-1], r]), np.concatenate([w[::-1], w])

    # -- sampling ----------------------------------------------------------

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(0)
        if self.kind == "finite_atomic":
            above = [(z, lam) for z, lam in self.atoms if abs(z) >= self.cutoff]
            z = np.array([a[0] for a in above])
            p = np.array([a[1] for a in above])
            return z[rng.choice(len(z), size=n, p=p / p.sum())]
        # inverse CDF of |z| on [cutoff, z_max] with density ~ r^(-1-alpha)
        a = self.alpha
        lo, hi = self.cutoff ** (-a), self.z_max ** (-a)
        uniform = rng.uniform(0.0, 1.0, size=n)
        sign = np.where(rng.uniform(0.0, 1.0, size=n) < 0.5, -1.0, 1.0)
        r = (lo - uniform * (lo - hi)) ** (-1.0 / a)
        return sign * r

    def to_dict(self) -> dict:
        if self.kind == "finite_atomic":
            return {"kind": self.kind, "cutoff": self.cutoff,
                    "atoms": [list(a) for a in self.atoms]}
        return {"kind": self.kind, "cutoff": self.cutoff, "alpha": self.alpha,
                "c": self.c, "z_min": self.z_min, "z_max": self.z_max}


def _power_integral(a: float, b: float, q: float) -> float:
    # int_a^b r^q dr
    if abs(q + 1.0) < 1e-14:
        return math.log(b / a)
    return (b ** (q + 1.0) - a ** (q + 1.0)) / (q + 1.0)


def validate_measure(spec: LevyMeasureSpec) -> dict[str, float]:
    """Check admissibility and return cutoff diagnostics.

    Raises InvalidMeasure when a parameter is out of range or the
    integrability condition int (|z|^2 ^ 1) m(dz) < inf cannot hold.
    """
    if not (spec.cutoff > 0.0 and math.isfinite(spec.cutoff)):
        raise InvalidMeasure(f"cutoff must be positive and finite, got {spec.cutoff}")
    if spec.kind == "finite_atomic":
        if not spec.atoms:
            raise InvalidMeasure("finite_atomic measure needs at least one atom")
        for z, lam in spec.atoms:
            if z == 0.0 or not math.isfinite(z):
                raise InvalidMeasure(f"atom location must be finite and nonzero, got {z}")
            if not (lam > 0.0 and math.isfinite(lam)):
                raise InvalidMeasure(f"atom intensity must be positive and finite, got {lam}")
        if not any(abs(z) >= spec.cutoff for z, _ in spec.atoms):
            raise InvalidMeasure("no atom lies above the cutoff")
    elif spec.kind == "truncated_power_law":
        if not (0.0 < spec.alpha < 2.0):
            raise InvalidMeasure(f"power-law exponent must lie in (0, 2), got {spec.alpha}")
        if not (spec.c > 0.0 and math.isfinite(spec.c)):
            raise InvalidMeasure(f"power-law amplitude must be positive, got {spec.c}")
        if not (0.0 < spec.z_min <= spec.cutoff <= spec.z_max < math.inf):
            raise InvalidMeasure(
                "power law needs 0 < z_min <= cutoff <= z_max < inf, got "
                f"z_min={spec.z_min}, cutoff={spec.cutoff}, z_max={spec.z_max}")
    else:
        raise InvalidMeasure(f"unknown measure kind {spec.kind!r}")

    total = spec.band_integral(2, 0.0, math.inf)
    mass = spec.mass_above_cutoff()
    if not (math.isfinite(total) and math.isfinite(mass)):
        raise InvalidMeasure("integrability condition fails")
    return {
        "mass_above_cutoff": mass,
        "second_moment_below_cutoff": spec.band_integral(2, 0.0, spec.cutoff),
        "integrability": total,
    }


def compensator_moments(spec: LevyMeasureSpec,
                        weights: Sequence[str] = ("min1", "min1_sq")) -> dict[str, dict[str, float]]:
    """int w(z) m(dz) for catalog weights, split at the cutoff."""
    out = {}
    for name in weights:
        if name not in _WEIGHT_POWER:
            raise KeyError(f"unknown weight {name!r}; catalog is {sorted(WEIGHTS)}")
        p = _WEIGHT_POWER[name]
        below = spec.band_integral(p, 0.0, spec.cutoff)
        above = spec.band_integral(p, spec.cutoff, math.inf)
        if not (math.isfinite(below) and math.isfinite(above)):
            raise InvalidMeasure(f"moment {name} diverges")
        out[name] = {"below": below, "above": above}
    return out


@dataclass(frozen=True)
class JumpEvent:
    t: float
    z: float


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One realization of the Poisson random measure above the cutoff."""

    times: np.ndarray
    marks: np.ndarray
    horizon: float
    seed: int
    spec: LevyMeasureSpec
    compensator: dict[str, float] = field(default_factory=dict)

    @property
    def events(self) -> tuple[JumpEvent, ...]:
        return tuple(JumpEvent(float(t), float(z)) for t, z in zip(self.times, self.marks))

    def __len__(self) -> int:
        return len(self.times)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.times, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.marks, dtype="<f8").tobytes())
        return h.hexdigest()


def sample_path(spec: LevyMeasureSpec, horizon: float, seed: int) -> NoisePath:
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    rate = spec.mass_above_cutoff()
    n = int(rng.poisson(rate * horizon))
    times = rng.uniform(0.0, horizon, size=n)
    order = np.argsort(times, kind="stable")  # ties keep insertion order
    marks = spec.sample_marks(rng, n)
    times = times[order]
    marks = marks[order]
    times.setflags(write=False)
    marks.setflags(write=False)
    moments = compensator_moments(spec)
    comp = {"rate": rate, **{k: v["above"] for k, v in moments.items()}}
    return NoisePath(times=times, marks=marks, horizon=float(horizon), seed=int(seed),
                     spec=spec, compensator=comp)


def sample_paths(spec: LevyMeasureSpec, horizon: float, seed0: int,
                 indices: Iterable[int]) -> list[NoisePath]:
    """Paths for seeds seed0 + i."""
    return [sample_path(spec, horizon, seed0 + int(i)) for i in indices]


def write_path_csv(path: NoisePath, dest: str | Path) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "z"])
        for t, z in zip(path.times, path.marks):
            w.writerow([repr(float(t)), repr(float(z))])
