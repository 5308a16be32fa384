"""
Wrappers resolve which estimate is compared with which reference and reduce the
criterion outputs to one loss. Internally everything is "lower is better".
"""
import itertools
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .criteria import Criterion

EXHAUSTIVE_PIT_MAX = 4
MIXIT_BUDGET = 4096


@dataclass(frozen=True)
class Permutation:
    """mapping[i] is the estimate index paired with reference i."""
    mapping: Tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"not a bijection on 0..{len(m) - 1}: {m}")
        object.__setattr__(self, "mapping", m)

    def apply(self, ests: Sequence) -> list:
        return [ests[j] for j in self.mapping]


@dataclass(frozen=True)
class MixingMatrix:
    """Binary N x M matrix; every column has exactly one 1."""
    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.int64)
        if a.ndim != 2 or not np.isin(a, (0, 1)).all() or not (a.sum(axis=0) == 1).all():
            raise ValueError("mixing matrix must be binary with unit column sums")
        object.__setattr__(self, "matrix", a)

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], n_mixtures: int) -> "MixingMatrix":
        a = np.zeros((n_mixtures, len(assignment)), dtype=np.int64)
        a[list(assignment), np.arange(len(assignment))] = 1
        return cls(a)

    def remix(self, ests: np.ndarray) -> np.ndarray:
        return self.matrix @ ests


@dataclass(frozen=True)
class LossReport:
    value: float
    assignment: Union[Permutation, MixingMatrix, None]
    criterion: str = ""
    higher_is_better: bool = False

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite loss for {self.criterion}")

    @property
    def score(self) -> float:
        """The criterion's native convention (dB for ratio criteria)."""
        return -self.value if self.higher_is_better else self.value


def _report(criterion: Criterion, value: float, assignment) -> LossReport:
    return LossReport(float(value), assignment, criterion.name, criterion.higher_is_better)


def pairwise_losses(criterion: Criterion, refs: Sequence, ests: Sequence) -> np.ndarray:
    return np.array([[criterion.loss(r, e) for e in ests] for r in refs])


def _perm_value(losses: np.ndarray, perm: Sequence[int]) -> float:
    return float(np.mean(losses[np.arange(len(perm)), list(perm)]))


def fixed_wrap(criterion: Criterion, refs: Sequence, ests: Sequence) -> LossReport:
    if len(refs) != len(ests) or len(refs) == 0:
        raise ValueError(f"size mismatch: {len(refs)} refs vs {len(ests)} ests")
    value = np.mean([criterion.loss(r, e) for r, e in zip(refs, ests)])
    return _report(criterion, value, Permutation(tuple(range(len(refs)))))


def pit_wrap(criterion: Criterion, refs: Sequence, ests: Sequence, method: str = "auto") -> LossReport:
    """
    Minimum mean loss over all pairings. "exhaustive" walks permutations in
    lexicographic order keeping the first strict minimum; "hungarian" solves the
    assignment on the pairwise loss matrix. "auto" is exhaustive up to 4 sources.
    """
    s = len(refs)
    if s != len(ests) or s == 0:
        raise ValueError(f"size mismatch: {len(refs)} refs vs {len(ests)} ests")
    if method == "auto":
        method = "exhaustive" if s <= EXHAUSTIVE_PIT_MAX else "hungarian"
    losses = pairwise_losses(criterion, refs, ests)

    if method == "exhaustive":
        best, best_perm = np.inf, None
        for perm in itertools.permutations(range(s)):
            v = _perm_value(losses, perm)
            if v < best:
                best, best_perm = v, perm
    elif method == "hungarian":
        _, cols = linear_sum_assignment(losses)
        best_perm = tuple(int(c) for c in cols)
        best = _perm_value(losses, best_perm)
    else:
        raise ValueError(f"unknown PIT method {method!r}")
    return _report(criterion, best, Permutation(best_perm))


def mixit_wrap(criterion: Criterion, mixtures: Sequence, ests: Sequence) -> LossReport:
    """
    Minimum mean loss between each mixture and the sum of the estimates assigned
    to it, over every assignment of M estimates to N mixtures (N**M candidates,
    enumerated in lexicographic order).
    """
    n, m = len(mixtures), len(ests)
    if n == 0 or m < n:
        raise ValueError(f"need M >= N >= 1, got N={n}, M={m}")
    if n ** m > MIXIT_BUDGET:
        raise ValueError(f"N**M = {n ** m} exceeds the exhaustive budget {MIXIT_BUDGET}")

    est_stack = np.stack([np.asarray(e) for e in ests])
    best, best_assign = np.inf, None
    for assign in itertools.product(range(n), repeat=m):
        remix = MixingMatrix.from_assignment(assign, n).remix(est_stack)
        v = float(np.mean([criterion.loss(mix, rm) for mix, rm in zip(mixtures, remix)]))
        if v < best:
            best, best_assign = v, assign
    return _report(criterion, best, MixingMatrix.from_assignment(best_assign, n))


# ---------- class-based wrappers ---------------------------------------------

class Wrapper:
    name = "wrapper"

    def __init__(self, criterion: Criterion):
        self.criterion = criterion

    def __call__(self, refs: Sequence, ests: Sequence) -> LossReport:
        raise NotImplementedError


class FixedOrder(Wrapper):
    name = "fixed"

    def __call__(self, refs, ests) -> LossReport:
        return fixed_wrap(self.criterion, refs, ests)


class PIT(Wrapper):
    name = "pit"

    def __init__(self, criterion: Criterion, method: str = "auto"):
        super().__init__(criterion)
        self.method = method

    def __call__(self, refs, ests) -> LossReport:
        return pit_wrap(self.criterion, refs, ests, self.method)


class MixIT(Wrapper):
    name = "mixit"

    def __call__(self, mixtures, ests) -> LossReport:
        return mixit_wrap(self.criterion, mixtures, ests)


WRAPPERS = {"fixed": FixedOrder, "pit": PIT, "mixit": MixIT}


def build_wrapper(kind: str, criterion: Criterion) -> Wrapper:
    if kind not in WRAPPERS:
        raise ValueError(f"unknown wrapper {kind!r}; expected one of {sorted(WRAPPERS)}")
    return WRAPPERS[kind](criterion)
