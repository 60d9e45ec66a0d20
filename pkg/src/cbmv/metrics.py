"""Disparity-map evaluation: bad-pixel rates and error moments.

Pixels without ground truth are never evaluated; an occlusion mask
optionally narrows the count to non-occluded pixels.  Reports render
both as human-readable text and as a ``key=value`` block that parses
back to the same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyEvaluationError, FileFormatError
from .volume import INVALID_DISP

DEFAULT_TOLERANCES = (0.5, 1.0, 2.0)


@dataclass
class EvalReport:
    bad: dict = field(default_factory=dict)
    avg_err: float = 0.0
    rms_err: float = 0.0
    pixel_count: int = 0
    mask_kind: str = "all"

    @property
    def bad_05(self):
        return self.bad[0.5]

    @property
    def bad_1(self):
        return self.bad[1.0]

    @property
    def bad_2(self):
        return self.bad[2.0]

    def to_text(self):
        lines = [f"disparity evaluation ({self.mask_kind}, {self.pixel_count} px)"]
        for tol in sorted(self.bad):
            lines.append(f"  bad-{tol:g}: {100.0 * self.bad[tol]:.3f}%")
        lines.append(f"  avg-err: {self.avg_err:.4f}")
        lines.append(f"  rms-err: {self.rms_err:.4f}")
        return "\n".join(lines)

    def to_block(self):
        lines = ["[eval]", f"mask_kind={self.mask_kind}",
                 f"pixel_count={self.pixel_count}"]
        for tol in sorted(self.bad):
            lines.append(f"bad_{tol:g}={self.bad[tol]!r}")
        lines.append(f"avg_err={self.avg_err!r}")
        lines.append(f"rms_err={self.rms_err!r}")
        return "\n".join(lines)


def parse_report_block(text) -> EvalReport:
    """Inverse of :meth:`EvalReport.to_block`; ignores surrounding text."""
    lines = [ln.strip() for ln in text.splitlines()]
    try:
        start = lines.index("[eval]")
    except ValueError:
        raise FileFormatError("no [eval] block found")
    report = EvalReport()
    for ln in lines[start + 1 :]:
        if not ln or ln.startswith("["):
            break
        if "=" not in ln:
            raise FileFormatError(f"malformed report line {ln!r}")
        key, val = ln.split("=", 1)
        if key == "mask_kind":
            report.mask_kind = val
        elif key == "pixel_count":
            report.pixel_count = int(val)
        elif key.startswith("bad_"):
            report.bad[float(key[4:])] = float(val)
        elif key in ("avg_err", "rms_err"):
            setattr(report, key, float(val))
        else:
            raise FileFormatError(f"unknown report key {key!r}")
    return report


def gt_valid_mask(gt):
    gt = np.asarray(gt, dtype=np.float64)
    return np.isfinite(gt) & (gt >= 0) & (gt != INVALID_DISP)


def evaluate(pred, gt, mask=None, tolerances=DEFAULT_TOLERANCES) -> EvalReport:
    """Error statistics of ``pred`` against ``gt`` over labelled pixels.

    ``mask`` marks occluded pixels with True; passing it switches the
    report to non-occluded mode.  bad-t is the fraction of evaluated
    pixels with |pred - gt| > t.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ConfigError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    use = gt_valid_mask(gt)
    kind = "all"
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape:
            raise ConfigError("occlusion mask dimensions differ from ground truth")
        use &= ~mask
        kind = "nonocc"
    n = int(use.sum())
    if n == 0:
        raise EmptyEvaluationError("no pixels to evaluate")
    err = np.abs(pred[use] - gt[use])
    return EvalReport(
        bad={float(t): float((err > t).mean()) for t in tolerances},
        avg_err=float(err.mean()),
        rms_err=float(np.sqrt((err**2).mean())),
        pixel_count=n,
        mask_kind=kind,
    )
