"""Multiple change-point discovery by binary segmentation over either test.

Kernels (including the Gaussian bandwidth) are recomputed per segment, so
each split is the plain single-change test applied to that segment alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, ParameterError
from .graphs import GraphSequence
from .inference import KAP_PERM, KAPF_ANALYTIC, FastConfig, PermConfig, fast_test, permutation_test
from .scan import ScanConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentationConfig:
    alpha: float = 0.05
    min_separation: int = 6
    min_segment: int | None = None  # defaults to max(2 * min_separation, 20)
    engine: str = KAP_PERM
    n0_frac: float = 0.05
    n1_frac: float = 0.95
    perms: int = 1000
    r1: float = 0.5
    r2: float = 2.0

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must be in (0,1), got {self.alpha}")
        if self.min_separation < 1:
            raise ParameterError("min_separation must be >= 1")
        if self.engine not in (KAP_PERM, KAPF_ANALYTIC):
            raise ParameterError(f"unknown engine {self.engine!r}")

    @property
    def effective_min_segment(self) -> int:
        if self.min_segment is not None:
            return self.min_segment
        return max(2 * self.min_separation, 20)


@dataclass(frozen=True)
class SegmentRecord:
    """One node of the segmentation tree; start/end are 1-based inclusive."""

    start: int
    end: int
    depth: int
    action: str  # "split" | "no-change" | "too-short" | "degenerate"
    p_value: float | None = None
    tau: int | None = None
    s_star: float | None = None


@dataclass(frozen=True)
class SegmentationResult:
    change_points: list  # [(t, p_value)] sorted by t
    trace: list  # [SegmentRecord] in discovery order
    suppressed: list = field(default_factory=list)  # min-separation casualties

    def to_json_list(self) -> list:
        out = []
        for rec in self.trace:
            if rec.action != "split":
                continue
            if any(rec.tau == t for t, _ in self.change_points):
                out.append(
                    {"start": rec.start, "end": rec.end, "tau": rec.tau, "p_value": rec.p_value}
                )
        return out

    def render_trace(self) -> str:
        lines = []
        for rec in self.trace:
            pad = "  " * rec.depth
            if rec.action == "split":
                lines.append(
                    f"{pad}[{rec.start}, {rec.end}] p={rec.p_value:.4g} -> split at {rec.tau}"
                )
            elif rec.action == "no-change":
                lines.append(f"{pad}[{rec.start}, {rec.end}] p={rec.p_value:.4g} -> stop")
            else:
                lines.append(f"{pad}[{rec.start}, {rec.end}] {rec.action}")
        return "\n".join(lines)


def _segment_seed(seed: int, lo: int, hi: int) -> int:
    return int(np.random.SeedSequence([seed & ((1 << 64) - 1), lo, hi]).generate_state(1, np.uint64)[0])


def _test_segment(sub: GraphSequence, kernel_builders, cfg: SegmentationConfig, seed: int):
    k1 = kernel_builders[0](sub)
    k2 = kernel_builders[1](sub)
    scan_cfg = ScanConfig.from_fractions(len(sub), cfg.n0_frac, cfg.n1_frac)
    if cfg.engine == KAP_PERM:
        return permutation_test(k1, k2, scan_cfg, PermConfig(b=cfg.perms, seed=seed))
    return fast_test(k1, k2, FastConfig(r1=cfg.r1, r2=cfg.r2, cfg=scan_cfg))


def _enforce_separation(candidates, min_separation):
    """Drop the weaker (smaller s_star) neighbor of any pair closer than
    min_separation; repeat until stable."""
    kept = sorted(candidates, key=lambda c: c[0])
    suppressed = []
    changed = True
    while changed and len(kept) > 1:
        changed = False
        for i in range(len(kept) - 1):
            if kept[i + 1][0] - kept[i][0] < min_separation:
                weaker = i if kept[i][2] <= kept[i + 1][2] else i + 1
                suppressed.append(kept.pop(weaker))
                changed = True
                break
    return kept, suppressed


def binary_segmentation(
    seq: GraphSequence,
    kernel_builders,
    cfg: SegmentationConfig = SegmentationConfig(),
    seed: int = 0,
) -> SegmentationResult:
    """Test the full sequence; on rejection split at tau-hat and recurse on
    both halves with segment-local kernels. Degenerate segments are skipped
    with a warning; the rest of the tree is still explored."""
    cfg.validate()
    if len(seq) < cfg.effective_min_segment:
        raise ParameterError(
            f"sequence length {len(seq)} below min_segment {cfg.effective_min_segment}"
        )
    trace: list[SegmentRecord] = []
    candidates: list[tuple[int, float, float]] = []

    def recurse(lo: int, hi: int, depth: int) -> None:
        m = hi - lo + 1
        if m < cfg.effective_min_segment:
            trace.append(SegmentRecord(lo, hi, depth, "too-short"))
            return
        sub = seq[lo - 1:hi]
        try:
            outcome = _test_segment(sub, kernel_builders, cfg, _segment_seed(seed, lo, hi))
        except DegeneracyError as exc:
            logger.warning("segment [%d, %d] skipped: %s", lo, hi, exc)
            trace.append(SegmentRecord(lo, hi, depth, "degenerate"))
            return
        if outcome.p_value <= cfg.alpha:
            tau = lo + outcome.tau_hat - 1
            trace.append(SegmentRecord(lo, hi, depth, "split", outcome.p_value, tau, outcome.s_star))
            candidates.append((tau, outcome.p_value, outcome.s_star))
            recurse(lo, tau, depth + 1)
            recurse(tau + 1, hi, depth + 1)
        else:
            trace.append(
                SegmentRecord(lo, hi, depth, "no-change", outcome.p_value, None, outcome.s_star)
            )

    recurse(1, len(seq), 0)
    kept, suppressed = _enforce_separation(candidates, cfg.min_separation)
    return SegmentationResult(
        change_points=[(t, p) for t, p, _ in kept],
        trace=trace,
        suppressed=[(t, p) for t, p, _ in suppressed],
    )
