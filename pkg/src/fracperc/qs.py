"""Distortion functions and numerical quasisymmetry checks on sampled maps.

A map ``f`` is an eta-quasisymmetry if for all x, y, z with x != z

    rho(f(x), f(y)) / rho(f(x), f(z)) <= eta(d(x, y) / d(x, z)).

Every check here runs on finite samples, so a reported violation certifies
that the map is *not* eta-quasisymmetric, while a clean report only says the
samples are consistent with it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property, partial
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, PreconditionError

MAX_TRIPLES = 200_000


@dataclass(frozen=True)
class DistortionFunction:
    """Homeomorphism eta of [0, inf).

    Forms: ``power`` (``C max(t^beta, t^(1/beta))``), ``snowflake``
    (``t^eps``) and ``tabulated`` (piecewise linear through (0, 0), continued
    linearly past the last knot with the last slope).
    """

    form: str
    beta: float = 1.0
    C: float = 1.0
    eps: float = 1.0
    knots: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.form == "power":
            if not (0 < self.beta <= 1 and self.C > 0):
                raise DomainError("power distortion needs 0 < beta <= 1 and C > 0")
        elif self.form == "snowflake":
            if not 0 < self.eps <= 1:
                raise DomainError("snowflake exponent must lie in (0, 1]")
        elif self.form == "tabulated":
            t, v = np.asarray(self.knots, float), np.asarray(self.values, float)
            if len(t) < 2 or len(t) != len(v) or t[0] != 0 or v[0] != 0:
                raise DomainError("table must start at (0, 0) and have >= 2 knots")
            if np.any(np.diff(t) <= 0) or np.any(np.diff(v) <= 0):
                raise DomainError("table must be strictly increasing")
        else:
            raise DomainError(f"unknown distortion form {self.form!r}")

    @classmethod
    def power(cls, beta: float = 1.0, C: float = 1.0) -> "DistortionFunction":
        return cls("power", beta=beta, C=C)

    @classmethod
    def snowflake(cls, eps: float) -> "DistortionFunction":
        return cls("snowflake", eps=eps)

    @classmethod
    def tabulated(cls, knots: Sequence[float], values: Sequence[float]) -> "DistortionFunction":
        return cls("tabulated", knots=tuple(knots), values=tuple(values))

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.form == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = self.C * np.maximum(t ** self.beta, t ** (1 / self.beta))
        elif self.form == "snowflake":
            out = t ** self.eps
        else:
            k, v = np.asarray(self.knots), np.asarray(self.values)
            slope = (v[-1] - v[-2]) / (k[-1] - k[-2])
            out = np.where(t <= k[-1], np.interp(t, k, v), v[-1] + slope * (t - k[-1]))
        return out if out.ndim else float(out)

    def extrapolates(self, t) -> np.ndarray:
        """Where evaluation used the linear continuation past the table."""
        t = np.asarray(t, float)
        if self.form != "tabulated":
            return np.zeros(t.shape, bool)
        return t > self.knots[-1]


def eta_eval(eta: DistortionFunction, t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("eta is only defined on [0, inf)")
    return eta(t)


# -- metrics and maps ------------------------------------------------------------

def euclidean(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    P = np.asarray(P, float).reshape(len(P), -1)
    Q = np.asarray(Q, float).reshape(len(Q), -1)
    return np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(-1))


def _power_metric(eps: float, P, Q):
    return euclidean(P, Q) ** eps


def snowflake_metric(eps: float) -> Callable:
    return partial(_power_metric, eps)


@dataclass(frozen=True, eq=False)
class SampledMap:
    """A bijection between two finite samples, paired by index."""

    domain: np.ndarray
    image: np.ndarray
    domain_metric: Callable = euclidean
    image_metric: Callable = euclidean
    name: str = "sampled"

    def __post_init__(self):
        if len(self.domain) != len(self.image):
            raise ValueError("domain and image samples must pair up by index")

    def __len__(self):
        return len(self.domain)

    @cached_property
    def D(self) -> np.ndarray:
        return self.domain_metric(self.domain, self.domain)

    @cached_property
    def R(self) -> np.ndarray:
        return self.image_metric(self.image, self.image)

    def check_metrics(self) -> list[str]:
        """Problems with the sampled distance matrices (empty when they are metrics)."""
        out = []
        for tag, M in (("domain", self.D), ("image", self.R)):
            if not np.allclose(M, M.T, rtol=1e-12, atol=0):
                out.append(f"{tag} distances not symmetric")
            if np.any(M < 0):
                out.append(f"{tag} distances negative")
            off = M[~np.eye(len(M), dtype=bool)]
            if np.any(np.diag(M) != 0) or np.any(off <= 0):
                out.append(f"{tag} distance zero iff same index fails")
        return out

    def rescaled(self, domain_factor: float = 1.0, image_factor: float = 1.0) -> "SampledMap":
        dm, im = self.domain_metric, self.image_metric
        return SampledMap(self.domain, self.image,
                          lambda P, Q: domain_factor * dm(P, Q),
                          lambda P, Q: image_factor * im(P, Q), self.name + "-rescaled")


def power_map_constant(a: float) -> float:
    """Distortion constant of x -> x^a on [0, 1] with beta = min(a, 1/a)."""
    return 2 ** a - 1 if a >= 1 else 1 / (2 ** a - 1)


@dataclass(frozen=True)
class PointMap:
    """A map defined on arbitrary points, with an image metric and a nominal eta."""

    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    image_metric: Callable = euclidean
    nominal_eta: DistortionFunction | None = None
    is_identity: bool = False

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(points, float))

    def sample(self, points: np.ndarray) -> SampledMap:
        points = np.asarray(points, float)
        return SampledMap(points, self(points), euclidean, self.image_metric, self.name)


def _same(x):
    return x


def _power(a, x):
    return x ** a


def _affine(A, b, x):
    return x @ A.T + b


def identity_map() -> PointMap:
    return PointMap("identity", _same, euclidean, DistortionFunction.power(1.0, 1.0), True)


def snowflake_map(eps: float) -> PointMap:
    return PointMap(f"snowflake({eps})", _same, snowflake_metric(eps),
                    DistortionFunction.snowflake(eps))


def power_map(a: float) -> PointMap:
    """x -> x^a on [0, 1] (one-dimensional samples)."""
    if a <= 0:
        raise DomainError("exponent must be positive")
    eta = DistortionFunction.power(min(a, 1 / a), power_map_constant(a))
    return PointMap(f"power({a})", partial(_power, a), euclidean, eta)


def affine_map(A, b=None) -> PointMap:
    A = np.atleast_2d(np.asarray(A, float))
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, float)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.min() <= 0:
        raise DomainError("affine map must be invertible")
    return PointMap("affine", partial(_affine, A, b), euclidean,
                    DistortionFunction.power(1.0, sv.max() / sv.min()))


# -- triple checks ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    x: int
    y: int
    z: int
    ratio: float
    bound: float


@dataclass(frozen=True)
class QSReport:
    violations: list[Violation]
    checked: int
    exhaustive: bool
    equalities: int
    max_excess: float  # max of image ratio / eta bound over checked triples
    extrapolated: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations


def _triple_ratios(m: SampledMap, eta, x, y, z):
    D, R = m.D, m.R
    with np.errstate(divide="ignore", invalid="ignore"):
        t = D[x, y] / D[x, z]
        img = R[x, y] / R[x, z]
    bound = eta(t)
    return t, img, np.asarray(bound, float)


def verify_qs(m: SampledMap, eta: DistortionFunction, max_triples: int = MAX_TRIPLES,
              seed: int = 0, rtol: float = 1e-12, eq_tol: float = 1e-9) -> QSReport:
    """Check the three-point inequality on all ordered triples with x != z.

    Above ``max_triples`` triples a seeded uniform sample of that many is
    checked instead.
    """
    n = len(m)
    if n < 3:
        raise PreconditionError("need at least 3 points")
    total = n * n * (n - 1)
    rng = np.random.default_rng(seed)
    chunks = []
    if total <= max_triples:
        for x in range(n):
            yy, zz = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            keep = zz != x
            chunks.append((np.full(keep.sum(), x), yy[keep], zz[keep]))
    else:
        x = rng.integers(0, n, max_triples)
        y = rng.integers(0, n, max_triples)
        z = (x + rng.integers(1, n, max_triples)) % n
        chunks.append((x, y, z))
    viol, eqs, excess, extra, checked = [], 0, 0.0, 0, 0
    for x, y, z in chunks:
        t, img, bound = _triple_ratios(m, eta, x, y, z)
        bad = ~(img <= bound * (1 + rtol))
        for i in np.flatnonzero(bad):
            viol.append(Violation(int(x[i]), int(y[i]), int(z[i]), float(img[i]), float(bound[i])))
        pos = bound > 0
        eqs += int(np.sum(np.abs(img[pos] - bound[pos]) <= eq_tol * bound[pos]))
        if pos.any():
            excess = max(excess, float(np.max(img[pos] / bound[pos])))
        extra += int(eta.extrapolates(t).sum())
        checked += len(x)
    return QSReport(viol, checked, total <= max_triples, eqs, excess, extra)


# -- distortion lemmas -----------------------------------------------------------

LEMMAS = ("subset_diameter_ratio", "relative_distance", "distance_to_larger_set")


@dataclass(frozen=True)
class LemmaResult:
    name: str
    value: float
    lower: float
    upper: float
    chain: float | None = None  # intermediate bound, distance_to_larger_set only

    @property
    def satisfied(self) -> bool:
        return self.lower * (1 - 1e-12) <= self.value <= self.upper * (1 + 1e-12)

    @property
    def slack(self) -> float:
        return min(self.value - self.lower, self.upper - self.value)


@dataclass(frozen=True)
class LemmaReport:
    results: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.satisfied for r in self.results.values())


def _diam(M, idx):
    return float(M[np.ix_(idx, idx)].max()) if len(idx) else 0.0


def _dist(M, a, b):
    return float(M[np.ix_(a, b)].min())


def lemma_bounds_check(m: SampledMap, eta: DistortionFunction, A, B,
                       which: Sequence[str] | None = None) -> LemmaReport:
    """Evaluate the three distortion inequalities for sample subsets A and B.

    * ``subset_diameter_ratio`` (A in B, |A| > 0):
      ``1 / (2 eta(|B|/|A|)) <= |f(A)| / |f(B)| <= eta(2 |A| / |B|)``
    * ``relative_distance``:
      ``dist(fA, fB) / |fA u fB| <= eta(2 dist(A, B) / |A u B|)``
    * ``distance_to_larger_set`` (|B| <= |A|, |A| > 0):
      ``dist(fA, fB) / |fA| <= 1 + eta((|A| + |B| + dist) / |A|) <= 1 + eta(2 + dist / |A|)``

    Diameters and distances are sample maxima/minima.  With ``which=None``
    every inequality whose precondition holds is evaluated; naming one whose
    precondition fails raises :class:`PreconditionError`.
    """
    A = np.unique(np.asarray(A, int))
    B = np.unique(np.asarray(B, int))
    if len(A) == 0 or len(B) == 0:
        raise PreconditionError("A and B must be non-empty")
    D, R = m.D, m.R
    U = np.union1d(A, B)
    dA, dB, dU = _diam(D, A), _diam(D, B), _diam(D, U)
    rA, rB, rU = _diam(R, A), _diam(R, B), _diam(R, U)
    dist, rdist = _dist(D, A, B), _dist(R, A, B)

    pre = {
        "subset_diameter_ratio": (np.isin(A, B).all() and dA > 0,
                                  "needs A contained in B and |A| > 0"),
        "relative_distance": (dU > 0, "needs |A u B| > 0"),
        "distance_to_larger_set": (dB <= dA and dA > 0, "needs |B| <= |A| and |A| > 0"),
    }
    names = LEMMAS if which is None else tuple(which)
    report = LemmaReport()
    for name in names:
        ok, why = pre[name]
        if not ok:
            if which is not None:
                raise PreconditionError(f"{name}: {why}")
            report.skipped[name] = why
            continue
        if name == "subset_diameter_ratio":
            res = LemmaResult(name, rA / rB, 0.5 / eta(dB / dA), eta(2 * dA / dB))
        elif name == "relative_distance":
            res = LemmaResult(name, rdist / rU, -math.inf, eta(2 * dist / dU))
        else:
            res = LemmaResult(name, rdist / rA, -math.inf, 1 + eta(2 + dist / dA),
                              chain=1 + eta((dA + dB + dist) / dA))
        report.results[name] = res
    return report


# -- point clouds ----------------------------------------------------------------

def load_points_csv(path) -> np.ndarray:
    """Read ``index, x1, ..., xd`` rows (header optional), ordered by index."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue
            rows.append((int(row[0]), [float(v) for v in row[1:]]))
    rows.sort()
    return np.array([r[1] for r in rows], float)


def save_points_csv(path, points: np.ndarray) -> None:
    points = np.asarray(points, float).reshape(len(points), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{i + 1}" for i in range(points.shape[1])])
        for i, p in enumerate(points):
            w.writerow([i] + [repr(float(v)) for v in p])
