"""Pure verification decision procedure."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class PairEvidence:
    index: int
    expected: int
    observed: int

    @property
    def match(self) -> bool:
        return self.expected == self.observed


@dataclass(frozen=True)
class VerificationResult:
    verdict: str                    # "intact" | "modified"
    evidence: tuple[PairEvidence, ...]
    queries_used: int = 0

    @property
    def mismatches(self) -> tuple[PairEvidence, ...]:
        return tuple(e for e in self.evidence if not e.match)


def verify(expected_labels, observed_labels,
           queries_used: int | None = None) -> VerificationResult:
    """Modified iff any observed label differs from its expected label."""
    expected = [int(x) for x in expected_labels]
    observed = [int(x) for x in observed_labels]
    if not expected:
        raise ValueError("verification needs at least one pair")
    if len(expected) != len(observed):
        raise ValueError(f"{len(expected)} expected labels "
                         f"but {len(observed)} observed")
    evidence = tuple(PairEvidence(i, e, o)
                     for i, (e, o) in enumerate(zip(expected, observed)))
    verdict = "modified" if any(not e.match for e in evidence) else "intact"
    return VerificationResult(
        verdict=verdict, evidence=evidence,
        queries_used=len(observed) if queries_used is None else queries_used)
