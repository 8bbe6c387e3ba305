"""Shot-sensitivity analysis of train-shot x test-shot accuracy grids.

A grid of accuracies is split additively into a per-test-shot bias (row
means), a per-model bias (column means of the row-centred grid) and the
residual heatmap of shot-sensitive behaviour. The sensitivity score is the
range of that heatmap.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import AxisMismatch, ValidationError

CORNER = "test_shot\\train_shot"


@dataclass(frozen=True)
class AccuracyGrid:
    """Percent accuracies indexed by test shot (rows) and train shot (columns)."""

    values: np.ndarray
    test_shots: tuple[int, ...]
    train_shots: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        ts = tuple(int(x) for x in self.test_shots)
        tr = tuple(int(x) for x in self.train_shots)
        if v.ndim != 2:
            raise ValidationError(f"grid values must be 2-D, got shape {v.shape}")
        if v.shape != (len(ts), len(tr)):
            raise ValidationError(
                f"grid shape {v.shape} does not match axes ({len(ts)}, {len(tr)})"
            )
        if v.shape[0] < 2 or v.shape[1] < 2:
            raise ValidationError("grid needs at least 2 test shots and 2 train shots")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid contains non-finite values")
        if np.any(v < 0) or np.any(v > 100):
            raise ValidationError("accuracies must lie in [0, 100]")
        for name, axis in (("test_shots", ts), ("train_shots", tr)):
            if any(a < 1 for a in axis):
                raise ValidationError(f"{name} must be positive")
            if any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValidationError(f"{name} must be strictly ascending, got {axis}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "test_shots", ts)
        object.__setattr__(self, "train_shots", tr)


@dataclass(frozen=True)
class SensitivityReport:
    row_means: np.ndarray
    offsets: np.ndarray
    model_bias: np.ndarray
    heatmap: np.ndarray
    score: float
    test_shots: tuple[int, ...] = ()
    train_shots: tuple[int, ...] = ()
    label: str = field(default="")


def decompose(grid: AccuracyGrid) -> SensitivityReport:
    """Split a grid into test-shot bias, model bias and the corrected heatmap."""
    v = grid.values
    row_means = v.mean(axis=1)
    offsets = v - row_means[:, None]
    model_bias = offsets.mean(axis=0)
    heatmap = offsets - model_bias[None, :]
    return SensitivityReport(
        row_means=row_means,
        offsets=offsets,
        model_bias=model_bias,
        heatmap=heatmap,
        score=float(heatmap.max() - heatmap.min()),
        test_shots=grid.test_shots,
        train_shots=grid.train_shots,
        label=grid.label,
    )


def sensitivity_score(grid: AccuracyGrid) -> float:
    return decompose(grid).score


def gain_table(euclidean: AccuracyGrid, cosine: AccuracyGrid) -> np.ndarray:
    """Per-test-shot difference of mean accuracy, cosine minus Euclidean."""
    if (
        euclidean.test_shots != cosine.test_shots
        or euclidean.train_shots != cosine.train_shots
    ):
        raise AxisMismatch(
            "grids have different axes: "
            f"{euclidean.test_shots}x{euclidean.train_shots} vs "
            f"{cosine.test_shots}x{cosine.train_shots}"
        )
    return cosine.values.mean(axis=1) - euclidean.values.mean(axis=1)


# ---------------------------------------------------------------------------
# CSV I/O


def _data_rows(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.reader(lines))


def _parse_int(cell, where):
    try:
        return int(cell.strip())
    except ValueError:
        raise ValidationError(f"{where}: expected an integer shot value, got {cell!r}") from None


def _parse_float(cell, where):
    try:
        return float(cell.strip())
    except ValueError:
        raise ValidationError(f"{where}: expected a number, got {cell!r}") from None


def parse_grid_csv(text: str, label: str = "") -> AccuracyGrid:
    """Parse the grid CSV layout.

    The first row is ``test_shot\\train_shot,<train shots...>``; each further
    row is a test shot followed by one accuracy per train shot. Lines starting
    with ``#`` are ignored.
    """
    rows = _data_rows(text)
    if len(rows) < 2:
        raise ValidationError(f"{label or 'grid'}: need a header and at least one data row")
    header = rows[0]
    if header[0].strip() != CORNER:
        raise ValidationError(f"{label or 'grid'}: first header cell must be {CORNER!r}")
    train = [_parse_int(c, "header") for c in header[1:]]
    test, values = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(
                f"{label or 'grid'}: row {i} has {len(row)} cells, expected {len(header)}"
            )
        test.append(_parse_int(row[0], f"row {i}"))
        values.append([_parse_float(c, f"row {i}") for c in row[1:]])
    return AccuracyGrid(np.array(values), tuple(test), tuple(train), label)


def read_grid_csv(path) -> AccuracyGrid:
    path = Path(path)
    return parse_grid_csv(path.read_text(encoding="utf-8"), label=path.stem)


def format_grid_csv(grid: AccuracyGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([CORNER, *grid.train_shots])
    for t, row in zip(grid.test_shots, grid.values):
        w.writerow([t, *(repr(float(x)) for x in row)])
    return buf.getvalue()


def format_report_csv(report: SensitivityReport) -> str:
    """Heatmap with row means as a trailing column and model bias as a trailing row.

    Values are written at full precision (``repr``), so parsing the file back
    reproduces the heatmap exactly.
    """
    buf = io.StringIO()
    buf.write(f"# score = {report.score!r}\n")
    if report.label:
        buf.write(f"# label = {report.label}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([CORNER, *report.train_shots, "mean"])
    for t, row, m in zip(report.test_shots, report.heatmap, report.row_means):
        w.writerow([t, *(repr(float(x)) for x in row), repr(float(m))])
    w.writerow(["offset", *(repr(float(x)) for x in report.model_bias), ""])
    return buf.getvalue()


def parse_report_csv(text: str) -> SensitivityReport:
    label = ""
    score = None
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("# score ="):
            score = _parse_float(s.split("=", 1)[1], "score line")
        elif s.startswith("# label ="):
            label = s.split("=", 1)[1].strip()
    rows = _data_rows(text)
    if len(rows) < 3 or rows[0][0].strip() != CORNER or rows[0][-1].strip() != "mean":
        raise ValidationError("not a sensitivity report CSV")
    train = tuple(_parse_int(c, "header") for c in rows[0][1:-1])
    body, bias_row = rows[1:-1], rows[-1]
    if bias_row[0].strip() != "offset":
        raise ValidationError("report CSV must end with an 'offset' row")
    test = tuple(_parse_int(r[0], "row") for r in body)
    heat = np.array([[_parse_float(c, "row") for c in r[1:-1]] for r in body])
    row_means = np.array([_parse_float(r[-1], "row") for r in body])
    bias = np.array([_parse_float(c, "offset row") for c in bias_row[1 : 1 + len(train)]])
    if heat.shape != (len(test), len(train)):
        raise ValidationError("report CSV rows have inconsistent lengths")
    if score is None:
        score = float(heat.max() - heat.min())
    return SensitivityReport(
        row_means=row_means,
        offsets=heat + bias[None, :],
        model_bias=bias,
        heatmap=heat,
        score=score,
        test_shots=test,
        train_shots=train,
        label=label,
    )


def write_report_csv(report: SensitivityReport, path) -> None:
    Path(path).write_text(format_report_csv(report), encoding="utf-8")


def read_report_csv(path) -> SensitivityReport:
    return parse_report_csv(Path(path).read_text(encoding="utf-8"))


def format_gain_csv(gains, test_shots) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["test_shot", "gain"])
    for t, g in zip(test_shots, gains):
        w.writerow([t, repr(float(g))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# bundled published grids


@dataclass(frozen=True)
class PublishedGrid:
    """A bundled grid plus the summary values printed alongside it."""

    grid: AccuracyGrid
    row_means: np.ndarray
    model_bias: np.ndarray
    score: float


def published_grid_names() -> list[str]:
    root = resources.files("shotmetric") / "data" / "published"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".csv"))


def load_published_grid(name: str) -> PublishedGrid:
    """Load a bundled grid, e.g. ``"inat_conv4__proto"`` (dataset_backbone__model)."""
    res = resources.files("shotmetric") / "data" / "published" / f"{name}.csv"
    if not res.is_file():
        raise KeyError(f"no bundled grid named {name!r}")
    text = res.read_text(encoding="utf-8")
    meta = {}
    for ln in text.splitlines():
        if ln.startswith("# printed ") and ":" in ln:
            key, val = ln[len("# printed ") :].split(":", 1)
            meta[key.strip()] = np.array(val.split(), dtype=np.float64)
    title = text.splitlines()[0].lstrip("# ").strip()
    return PublishedGrid(
        grid=parse_grid_csv(text, label=title),
        row_means=meta["row means"],
        model_bias=meta["model offsets"],
        score=float(meta["score"][0]),
    )
