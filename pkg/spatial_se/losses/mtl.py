"""
Multi-task objectives: a weighted sum of (wrapper, criterion) pairs evaluated on
one batch. Each entry reads the batch view that matches its criterion's domain.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .criteria import CriterionSpec
from .wrappers import LossReport, build_wrapper


@dataclass(frozen=True)
class MtlEntry:
    wrapper: str
    criterion: CriterionSpec
    weight: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ValueError(f"weight must be finite and >= 0, got {self.weight}")

    @property
    def label(self) -> str:
        return f"{self.wrapper}:{self.criterion.kind}"


@dataclass(frozen=True)
class MtlSpec:
    entries: Tuple[MtlEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("MtlSpec needs at least one entry")
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]]) -> "MtlSpec":
        """Build from config records {wrapper, criterion, params, weight}."""
        entries = []
        for i, rec in enumerate(records):
            unknown = set(rec) - {"wrapper", "criterion", "params", "weight"}
            if unknown:
                raise ValueError(f"loss_eval[{i}]: unknown keys {sorted(unknown)}")
            try:
                entries.append(MtlEntry(
                    wrapper=str(rec["wrapper"]),
                    criterion=CriterionSpec(str(rec["criterion"]), dict(rec.get("params") or {})),
                    weight=float(rec.get("weight", 1.0)),
                ))
            except KeyError as e:
                raise ValueError(f"loss_eval[{i}]: missing key {e}") from e
        return cls(tuple(entries))

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {"wrapper": e.wrapper, "criterion": e.criterion.kind,
             "params": dict(e.criterion.params), "weight": e.weight}
            for e in self.entries
        ]


@dataclass
class LossBatch:
    """
    One example's references and estimates in every view a criterion may need.
    `mixtures` feeds MixIT entries (compared against `ests`).
    """
    refs: Sequence = ()
    ests: Sequence = ()
    ref_specs: Optional[Sequence] = None
    est_specs: Optional[Sequence] = None
    ref_masks: Optional[Sequence] = None
    est_masks: Optional[Sequence] = None
    mixtures: Optional[Sequence] = None

    def views(self, domain: str) -> Tuple[Sequence, Sequence]:
        pairs = {
            "time": (self.refs, self.ests),
            "spectrum": (self.ref_specs, self.est_specs),
            "mask": (self.ref_masks, self.est_masks),
        }
        refs, ests = pairs[domain]
        if refs is None or ests is None or len(refs) == 0:
            raise ValueError(f"batch has no {domain!r} view")
        return refs, ests


@dataclass
class MtlResult:
    total: float
    breakdown: List[Tuple[str, float, LossReport]] = field(default_factory=list)


def mtl_combine(spec: MtlSpec, batch: LossBatch) -> MtlResult:
    total = 0.0
    breakdown = []
    for entry in spec.entries:
        criterion = entry.criterion.build()
        wrapper = build_wrapper(entry.wrapper, criterion)
        refs, ests = batch.views(criterion.domain)
        if entry.wrapper == "mixit":
            if batch.mixtures is None:
                raise ValueError(f"{entry.label}: batch has no mixtures")
            refs = batch.mixtures
        report = wrapper(refs, ests)
        total += entry.weight * report.value
        breakdown.append((entry.label, entry.weight, report))
    return MtlResult(total=total, breakdown=breakdown)
