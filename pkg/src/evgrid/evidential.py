"""Subjective-Logic state algebra.

Connects the three views of a cell's occupancy state: a nonnegative evidence
vector, the belief/unknown masses it induces, and the expectation of the
Dirichlet distribution it parameterizes. Works for any class count K but the
rest of the package only exercises K = 2 (free, occupied).

Also provides the sample reductions used for epistemic (dropout-sampled)
evidence: component-wise mean and nearest-rank percentile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from evgrid.errors import DomainError

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SubjectiveLogicConfig:
    """Class count and base rate of the opinion frame.

    The base rate distributes unknown mass over the classes; uniform by
    default so full ignorance maps to equal probabilities.
    """

    K: int = 2
    a: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.K < 2:
            raise DomainError(f"class count must be >= 2, got {self.K}")
        if not self.a:
            object.__setattr__(self, "a", tuple([1.0 / self.K] * self.K))
        if len(self.a) != self.K:
            raise DomainError("base rate length must equal class count")
        if any(not (0.0 <= ak <= 1.0) for ak in self.a):
            raise DomainError("base rate components must lie in [0,1]")
        if abs(sum(self.a) - 1.0) > _SUM_TOL:
            raise DomainError("base rate must sum to 1")


@dataclass(frozen=True)
class ProbabilisticState:
    """Binary occupancy probabilities (p_f, p_o), summing to 1."""

    p_f: float
    p_o: float

    def __post_init__(self) -> None:
        for v in (self.p_f, self.p_o):
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"probability out of [0,1]: {v}")
        if abs(self.p_f + self.p_o - 1.0) > _SUM_TOL:
            raise DomainError("probabilities must sum to 1")


@dataclass(frozen=True)
class EvidentialState:
    """Belief masses (b_f, b_o) plus unknown mass u, summing to 1."""

    b_f: float
    b_o: float
    u: float

    def __post_init__(self) -> None:
        for v in (self.b_f, self.b_o, self.u):
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"belief mass out of [0,1]: {v}")
        if abs(self.b_f + self.b_o + self.u - 1.0) > _SUM_TOL:
            raise DomainError("belief masses must sum to 1")


@dataclass(frozen=True)
class Evidence:
    """Nonnegative evidence vector, one component per class."""

    e: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "e", tuple(float(v) for v in self.e))
        for v in self.e:
            if not math.isfinite(v) or v < 0.0:
                raise DomainError(f"evidence must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class DirichletParams:
    """Dirichlet shape parameters alpha and total strength S = sum(alpha)."""

    alpha: tuple[float, ...]
    S: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        if any(not math.isfinite(v) or v <= 0.0 for v in self.alpha):
            raise DomainError("alpha components must be finite and > 0")
        object.__setattr__(self, "S", float(sum(self.alpha)))


@dataclass(frozen=True)
class EpistemicSamples:
    """Evidence vectors from N stochastic forward passes of one model."""

    samples: tuple[Evidence, ...]

    def __post_init__(self) -> None:
        if len(self.samples) < 1:
            raise DomainError("need at least one epistemic sample")

    @property
    def n(self) -> int:
        return len(self.samples)


def evidence_to_evidential(e: Evidence, cfg: SubjectiveLogicConfig | None = None) -> EvidentialState:
    """Map evidence to belief masses: b = e/S, u = K/S with S = K + sum(e)."""
    cfg = cfg or SubjectiveLogicConfig(K=len(e.e))
    _check_k(e, cfg)
    s = cfg.K + sum(e.e)
    b = [v / s for v in e.e]
    return EvidentialState(b_f=b[0], b_o=b[1], u=cfg.K / s) if cfg.K == 2 else _general_state(b, cfg.K / s)


def evidence_to_dirichlet(e: Evidence, cfg: SubjectiveLogicConfig | None = None) -> DirichletParams:
    """Map evidence to Dirichlet shape parameters: alpha_k = e_k + K*a_k."""
    cfg = cfg or SubjectiveLogicConfig(K=len(e.e))
    _check_k(e, cfg)
    return DirichletParams(alpha=tuple(v + cfg.K * ak for v, ak in zip(e.e, cfg.a)))


def dirichlet_expectation(d: DirichletParams) -> ProbabilisticState:
    """Expectation of Dir(alpha): p_k = alpha_k / S."""
    p = [a / d.S for a in d.alpha]
    if len(p) != 2:
        raise DomainError("probabilistic state is binary; use raw arrays for K > 2")
    return ProbabilisticState(p_f=p[0], p_o=p[1])


def evidential_to_probability(s: EvidentialState, cfg: SubjectiveLogicConfig | None = None) -> ProbabilisticState:
    """Distribute the unknown mass via the base rate: p = b + u*a."""
    cfg = cfg or SubjectiveLogicConfig(K=2)
    if cfg.K != 2:
        raise DomainError("probabilistic state is binary; use raw arrays for K > 2")
    return ProbabilisticState(
        p_f=s.b_f + s.u * cfg.a[0],
        p_o=s.b_o + s.u * cfg.a[1],
    )


def percentile_reduce(s: EpistemicSamples, n: float) -> Evidence:
    """Component-wise nearest-rank percentile over the sample set.

    For N samples the result component is the ceil(n/100 * N)-th smallest
    value of that component; n = 50 with odd N is the component-wise median.
    """
    if not (0.0 < n <= 100.0):
        raise DomainError(f"percentile must be in (0, 100], got {n}")
    arr = np.asarray([sm.e for sm in s.samples], dtype=np.float64)
    reduced = percentile_reduce_array(arr, n, axis=0)
    return Evidence(e=tuple(reduced.tolist()))


def mean_reduce(s: EpistemicSamples) -> Evidence:
    """Component-wise arithmetic mean over the sample set."""
    arr = np.asarray([sm.e for sm in s.samples], dtype=np.float64)
    return Evidence(e=tuple(arr.mean(axis=0).tolist()))


def percentile_reduce_array(samples: np.ndarray, n: float, axis: int = 0) -> np.ndarray:
    """Nearest-rank percentile along ``axis`` of a raw sample array."""
    if samples.shape[axis] < 1:
        raise DomainError("need at least one epistemic sample")
    if not (0.0 < n <= 100.0):
        raise DomainError(f"percentile must be in (0, 100], got {n}")
    count = samples.shape[axis]
    rank = math.ceil(n / 100.0 * count)  # 1-based
    ordered = np.sort(samples, axis=axis)
    return np.take(ordered, rank - 1, axis=axis)


def evidence_to_belief_array(e: np.ndarray, axis: int = 0, k: int | None = None) -> np.ndarray:
    """Vectorized form of evidence_to_evidential over a raw array.

    ``e`` holds K evidence components along ``axis``; the result holds K + 1
    components along the same axis, the last being the unknown mass.
    """
    e = np.asarray(e, dtype=np.float64)
    kk = k if k is not None else e.shape[axis]
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise DomainError("evidence must be finite and >= 0")
    s = kk + e.sum(axis=axis, keepdims=True)
    b = e / s
    u = kk / s
    return np.concatenate([b, u], axis=axis)


def _check_k(e: Evidence, cfg: SubjectiveLogicConfig) -> None:
    if len(e.e) != cfg.K:
        raise DomainError(f"evidence has {len(e.e)} components, config expects {cfg.K}")


def _general_state(b: list[float], u: float) -> EvidentialState:
    raise DomainError("EvidentialState is binary; use evidence_to_belief_array for K > 2")
