"""Image quality metrics and the consistency report tables.

PSNR/DSSIM operate on display-clipped values in [0, peak]; MSE is computed
on the clipped values too so the three metrics describe the same pair.
Identical images get PSNR = +inf, reported as a sentinel ("identical") and
excluded from aggregate means with a count annotation rather than being
replaced by a fake large number.

The windowed scale-invariant MSE ("local MSE") fits one multiplicative gain
per 20x20 window (step 10, final windows flushed to the image edge) that
best maps the estimate onto the ground truth, accumulates the residual
energy, and normalizes by the accumulated ground-truth energy. The final
decomposition score averages the reflectance and shading components.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DegenerateInputError, StructuralError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

PSNR_IDENTICAL = math.inf


def _pair(a, b, op: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise StructuralError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b, peak: float = 1.0) -> float:
    a, b = _pair(a, b, "mse")
    a = np.clip(a, 0.0, peak)
    b = np.clip(b, 0.0, peak)
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(err: float, peak: float = 1.0) -> float:
    if err == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(peak * peak / err)


def psnr(a, b, peak: float = 1.0) -> float:
    return psnr_from_mse(mse(a, b, peak), peak)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = len(kernel) // 2
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean structural similarity with a Gaussian window, per channel."""
    a, b = _pair(a, b, "ssim")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise StructuralError(f"ssim: image smaller than the {SSIM_WINDOW}px window")
    a = np.clip(a, 0.0, peak)
    b = np.clip(b, 0.0, peak)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    values = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        var_x = _filter_valid(x * x, kernel) - mu_x * mu_x
        var_y = _filter_valid(y * y, kernel) - mu_y * mu_y
        cov = _filter_valid(x * y, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        values.append(float(np.mean(num / den)))
    return float(np.mean(values))


def dssim(a, b, peak: float = 1.0) -> float:
    return (1.0 - ssim(a, b, peak)) / 2.0


# ---------------------------------------------------------------------------
# windowed scale-invariant MSE


@dataclass(frozen=True)
class LmseConfig:
    window_size: int = 20
    step: int = 10

    def __post_init__(self):
        if self.window_size < 1 or self.step < 1:
            raise StructuralError("LmseConfig: window_size and step must be >= 1")
        if self.step > self.window_size:
            raise StructuralError("LmseConfig: step must be <= window_size")


def _window_starts(n: int, size: int, step: int) -> list[int]:
    if n < size:
        raise StructuralError(f"local mse: image extent {n} smaller than window {size}")
    starts = list(range(0, n - size + 1, step))
    if starts[-1] != n - size:
        starts.append(n - size)
    return starts


def lmse(est, gt, cfg: LmseConfig = LmseConfig()) -> float:
    """Scale-invariant local MSE of `est` against `gt` over sliding windows.

    Per window the estimate is rescaled by the least-squares gain
    a* = <est, gt> / <est, est> (0 when the window estimate is all zero);
    the score is the total residual energy over the total gt energy. Zero by
    construction when est is a positive multiple of gt; 1 when est is zero.
    """
    e, g = _pair(est, gt, "lmse")
    ssq = 0.0
    total = 0.0
    for ys in _window_starts(e.shape[0], cfg.window_size, cfg.step):
        for xs in _window_starts(e.shape[1], cfg.window_size, cfg.step):
            ew = e[ys : ys + cfg.window_size, xs : xs + cfg.window_size]
            gw = g[ys : ys + cfg.window_size, xs : xs + cfg.window_size]
            see = float(np.sum(ew * ew))
            a = float(np.sum(ew * gw)) / see if see > 0.0 else 0.0
            ssq += float(np.sum((a * ew - gw) ** 2))
            total += float(np.sum(gw * gw))
    if total == 0.0:
        raise DegenerateInputError("lmse: ground truth carries no energy")
    return ssq / total


def lmse_decomposition(est_reflectance, est_shading, gt_reflectance, gt_shading,
                       cfg: LmseConfig = LmseConfig()) -> float:
    """Benchmark score for a full decomposition: mean of the two components."""
    return 0.5 * (lmse(est_reflectance, gt_reflectance, cfg) + lmse(est_shading, gt_shading, cfg))


# ---------------------------------------------------------------------------
# consistency reports


@dataclass
class ReportRow:
    label: str
    psnr: float
    mse: float
    dssim: float
    n_identical: int = 0  # sets whose PSNR was the identical sentinel
    n_sets: int = 1

    def psnr_text(self) -> str:
        if math.isinf(self.psnr):
            return "identical"
        s = f"{self.psnr:.2f}"
        if self.n_identical:
            s += f" (*{self.n_identical})"
        return s


@dataclass
class ConsistencyReport:
    title: str
    rows: list[ReportRow]
    reference_label: str | None = None
    n_sets: int = 1
    notes: list[str] = field(default_factory=list)

    def mean_psnr(self) -> float:
        finite = [r.psnr for r in self.rows if not math.isinf(r.psnr)]
        return float(np.mean(finite)) if finite else PSNR_IDENTICAL

    def mean_mse(self) -> float:
        return float(np.mean([r.mse for r in self.rows]))

    def mean_dssim(self) -> float:
        return float(np.mean([r.dssim for r in self.rows]))

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "reference": self.reference_label,
            "n_sets": self.n_sets,
            "rows": [
                {"label": r.label, "psnr": None if math.isinf(r.psnr) else r.psnr,
                 "identical_sets": r.n_identical, "mse": r.mse, "dssim": r.dssim}
                for r in self.rows
            ],
            "notes": self.notes,
        }


def _metric_row(label: str, a, b) -> ReportRow:
    err = mse(a, b)
    return ReportRow(label, psnr_from_mse(err), err, dssim(a, b))


def consistency_report(items: list, labels: list[str], reference: int, title: str) -> ConsistencyReport:
    """Each non-reference item scored against the reference item (1-based index)."""
    if not 1 <= reference <= len(items):
        raise StructuralError(f"consistency_report: reference {reference} out of range")
    ref = items[reference - 1]
    rows = [
        _metric_row(labels[i], items[i], ref)
        for i in range(len(items))
        if i != reference - 1
    ]
    return ConsistencyReport(title, rows, reference_label=labels[reference - 1])


def reconstruction_report(inputs: list, reconstructions: list, labels: list[str],
                          title: str) -> ConsistencyReport:
    if len(inputs) != len(reconstructions):
        raise StructuralError("reconstruction_report: length mismatch")
    rows = [_metric_row(labels[i], inputs[i], reconstructions[i]) for i in range(len(inputs))]
    return ConsistencyReport(title, rows)


def aggregate_reports(reports: list[ConsistencyReport]) -> ConsistencyReport:
    """Arithmetic mean across image sets, row by row.

    PSNR means skip identical-pair sentinels; the per-row annotation counts
    how many sets were excluded that way.
    """
    if not reports:
        raise StructuralError("aggregate_reports: empty input")
    first = reports[0]
    for rep in reports[1:]:
        if [r.label for r in rep.rows] != [r.label for r in first.rows]:
            raise StructuralError("aggregate_reports: reports have different row sets")
    rows = []
    for i, row in enumerate(first.rows):
        psnrs = [rep.rows[i].psnr for rep in reports]
        finite = [p for p in psnrs if not math.isinf(p)]
        rows.append(ReportRow(
            label=row.label,
            psnr=float(np.mean(finite)) if finite else PSNR_IDENTICAL,
            mse=float(np.mean([rep.rows[i].mse for rep in reports])),
            dssim=float(np.mean([rep.rows[i].dssim for rep in reports])),
            n_identical=len(psnrs) - len(finite),
            n_sets=len(reports),
        ))
    agg = ConsistencyReport(first.title, rows, reference_label=first.reference_label,
                            n_sets=len(reports))
    if any(r.n_identical for r in rows):
        agg.notes.append("(*n) marks rows where n identical-image sets were excluded from the PSNR mean")
    return agg


def render_text(report: ConsistencyReport) -> str:
    """Aligned text table: one row per condition, PSNR/MSE/DSSIM columns."""
    header = f"{report.title} (averaged over {report.n_sets} image set{'s' if report.n_sets != 1 else ''})"
    lines = [header]
    if report.reference_label:
        lines.append(f"reference: {report.reference_label}")
    width = max(len(r.label) for r in report.rows)
    lines.append(f"{'condition':<{width}}  {'PSNR [dB]':>12}  {'MSE':>10}  {'DSSIM':>10}")
    for r in report.rows:
        lines.append(f"{r.label:<{width}}  {r.psnr_text():>12}  {r.mse:>10.5f}  {r.dssim:>10.5f}")
    lines.append(f"{'mean':<{width}}  "
                 f"{('identical' if math.isinf(report.mean_psnr()) else f'{report.mean_psnr():.2f}'):>12}  "
                 f"{report.mean_mse():>10.5f}  {report.mean_dssim():>10.5f}")
    lines.extend(report.notes)
    return "\n".join(lines)


def render_csv(report: ConsistencyReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["condition", "psnr_db", "identical_sets", "mse", "dssim"])
    for r in report.rows:
        writer.writerow([r.label, "" if math.isinf(r.psnr) else f"{r.psnr:.6f}",
                         r.n_identical, f"{r.mse:.8f}", f"{r.dssim:.8f}"])
    return buf.getvalue()
