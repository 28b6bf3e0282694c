"""Evaluation metrics: Success, Progress, SPL, PPL, aggregation, analyses.

SPL = s * d / max(p, d) with d the total geodesic chain length; PPL is the
progress-weighted analog using only the legs of goals actually found. Both
are 0 for episodes with no credit (s = 0 resp. l = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DomainError, EmptySet

TERMINATIONS = ("success", "wrong_found", "timeout", "policy_error")


@dataclass
class EpisodeRecord:
    """Outcome of one episode run, sufficient to compute every metric."""

    m: int
    goals_found: int
    path_length: float
    chain: list[float]
    termination: str
    seen: list[bool] = field(default_factory=list)  # per goal, length m
    found_steps: list[int] = field(default_factory=list)  # per found goal
    wrong_found_before: list[int] = field(default_factory=list)  # per found goal
    steps: int = 0
    world_id: str = ""
    episode_index: int = -1

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")
        if not (0 <= self.goals_found <= self.m):
            raise ValueError("goals_found out of range")
        if len(self.chain) != self.m:
            raise ValueError("chain must have one leg per goal")

    @property
    def s(self) -> int:
        return success(self)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "goals_found": self.goals_found,
            "path_length": self.path_length,
            "chain": self.chain,
            "termination": self.termination,
            "seen": self.seen,
            "found_steps": self.found_steps,
            "wrong_found_before": self.wrong_found_before,
            "steps": self.steps,
            "world_id": self.world_id,
            "episode_index": self.episode_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        return cls(**d)


@dataclass
class MetricsSummary:
    success: float
    progress: float
    spl: float
    ppl: float
    count: int


def success(record: EpisodeRecord) -> int:
    """1 iff every goal was found in order and the episode ended successfully."""
    if record.goals_found == record.m and record.termination != "success":
        raise ValueError("record inconsistent: all goals found but termination is "
                         f"{record.termination!r}")
    return 1 if record.goals_found == record.m else 0


def progress(record: EpisodeRecord) -> float:
    """Fraction of goals found, l/m."""
    return record.goals_found / record.m


def spl(s: int, p: float, chain: list[float]) -> float:
    """Success weighted by path length: s * d / max(p, d)."""
    d = sum(chain)
    if d <= 0:
        raise DomainError(f"reference distance must be positive, got {d}")
    if s == 0:
        return 0.0
    return s * d / max(p, d)


def ppl(s_bar: float, p: float, chain: list[float], goals_found: int) -> float:
    """Progress-weighted path length: s_bar * d_bar / max(p, d_bar) with
    d_bar the chain up to the last found goal; 0 when nothing was found."""
    if goals_found == 0:
        return 0.0
    d_bar = sum(chain[:goals_found])
    return s_bar * d_bar / max(p, d_bar)


def record_metrics(record: EpisodeRecord) -> tuple[int, float, float, float]:
    s = success(record)
    prog = progress(record)
    return (
        s,
        prog,
        spl(s, record.path_length, record.chain),
        ppl(prog, record.path_length, record.chain, record.goals_found),
    )


def aggregate(records: list[EpisodeRecord]) -> MetricsSummary:
    """Arithmetic means of the four metrics over a non-empty record list."""
    if not records:
        raise EmptySet("cannot aggregate zero records")
    n = len(records)
    tot = [0.0, 0.0, 0.0, 0.0]
    for rec in records:
        for i, v in enumerate(record_metrics(rec)):
            tot[i] += v
    return MetricsSummary(tot[0] / n, tot[1] / n, tot[2] / n, tot[3] / n, n)


def seen_unseen_analysis(records: list[EpisodeRecord]) -> dict:
    """Success rate of reaching goal k (k = 2, 3) given goal k-1 was reached,
    stratified by whether goal k was seen before goal k-1 was found.

    Empty strata report rate None instead of dividing by zero.
    """
    out = {}
    for k in (2, 3):
        strata = {"seen": [0, 0], "unseen": [0, 0]}  # [successes, count]
        for rec in records:
            if rec.m < k or rec.goals_found < k - 1:
                continue
            if len(rec.seen) != rec.m:
                continue
            key = "seen" if rec.seen[k - 1] else "unseen"
            strata[key][1] += 1
            if rec.goals_found >= k:
                strata[key][0] += 1
        out[k] = {
            key: {
                "successes": s,
                "count": n,
                "rate": (s / n) if n else None,
            }
            for key, (s, n) in strata.items()
        }
    return out


def conditional_success(summaries_by_m: dict[int, MetricsSummary]) -> list[dict]:
    """Observed Success(m) next to the exponential-decay expectation
    Success(1)**m, flagging where observed falls at or below it."""
    if 1 not in summaries_by_m:
        raise ValueError("need an m=1 summary to compute expectations")
    base = summaries_by_m[1].success
    rows = []
    for m in sorted(summaries_by_m):
        observed = summaries_by_m[m].success
        expected = base**m
        rows.append(
            {
                "m": m,
                "observed": observed,
                "expected": expected,
                "at_or_below_expected": observed <= expected,
            }
        )
    return rows
