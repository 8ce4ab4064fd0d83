"""Append-only store of diagnostic-test interval records."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = ("system_id", "cycle", "y", "t_age", "agelt1", "agelt2", "agelt3", "pt1", "pt2", "pt3")


def fmt(x: float) -> str:
    """Fixed 9-significant-digit formatting used by every CSV writer."""
    return format(float(x), ".9g")


@dataclass(frozen=True)
class TestRecord:
    """One diagnostic-test interval.

    ``agelt1..3`` are the subsystem last-test ages at the start of the
    interval; ``t_age`` is the system age when the test ran.
    """

    __test__ = False  # keep pytest from collecting this class

    y: int
    t_age: float
    agelt1: float
    agelt2: float
    agelt3: float
    pt: tuple[int, int, int]
    system_id: int = 0
    cycle: int = 0

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"y must be 0 or 1, got {self.y!r}")
        for a in (self.agelt1, self.agelt2, self.agelt3):
            if not 0 <= a <= self.t_age:
                raise ValueError(f"last-test age {a} outside [0, t_age={self.t_age}]")
        pt = tuple(int(p) for p in self.pt)
        if len(pt) != 3 or any(p not in (0, 1) for p in pt):
            raise ValueError(f"pt must be three 0/1 flags, got {self.pt!r}")
        object.__setattr__(self, "pt", pt)

    @property
    def agelt(self) -> tuple[float, float, float]:
        return (self.agelt1, self.agelt2, self.agelt3)

    def csv_row(self) -> list[str]:
        return [
            str(self.system_id),
            str(self.cycle),
            str(self.y),
            fmt(self.t_age),
            fmt(self.agelt1),
            fmt(self.agelt2),
            fmt(self.agelt3),
            *map(str, self.pt),
        ]


class DatasetView:
    """Read-only columnar snapshot of a dataset, the input to inference."""

    def __init__(self, records: tuple[TestRecord, ...]):
        self.records = records
        n = len(records)
        self.y = np.fromiter((r.y for r in records), dtype=float, count=n)
        self.t_age = np.fromiter((r.t_age for r in records), dtype=float, count=n)
        self.agelt = np.array([r.agelt for r in records], dtype=float).reshape(n, 3)
        self.pt = np.array([r.pt for r in records], dtype=float).reshape(n, 3)
        for arr in (self.y, self.t_age, self.agelt, self.pt):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_csv(self) -> str:
        return records_to_csv(self.records)


class Dataset:
    """The growing labeled set.

    Records for one system must arrive with strictly increasing ``t_age``.
    Nothing is ever removed or modified.
    """

    def __init__(self, records=()):
        self._records: list[TestRecord] = []
        self._last_age: dict[int, float] = {}
        self._view: DatasetView | None = None
        for r in records:
            self.append(r)

    def append(self, record: TestRecord) -> "Dataset":
        last = self._last_age.get(record.system_id)
        if last is not None and not record.t_age > last:
            raise ValueError(
                f"system {record.system_id}: t_age {record.t_age} does not exceed previous {last}"
            )
        self._records.append(record)
        self._last_age[record.system_id] = record.t_age
        self._view = None
        return self

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(tuple(self._records))

    def counts_by_system(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for r in self._records:
            counts[r.system_id] = counts.get(r.system_id, 0) + 1
        return counts

    def snapshot(self) -> DatasetView:
        if self._view is None:
            self._view = DatasetView(tuple(self._records))
        return self._view

    def to_csv(self, path=None) -> str:
        text = records_to_csv(self._records)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, source) -> "Dataset":
        """Load from a path or from CSV text."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            source = Path(source).read_text(encoding="utf-8")
        reader = csv.DictReader(io.StringIO(source))
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected dataset header {reader.fieldnames}")
        records = [
            TestRecord(
                y=int(row["y"]),
                t_age=float(row["t_age"]),
                agelt1=float(row["agelt1"]),
                agelt2=float(row["agelt2"]),
                agelt3=float(row["agelt3"]),
                pt=(int(row["pt1"]), int(row["pt2"]), int(row["pt3"])),
                system_id=int(row["system_id"]),
                cycle=int(row["cycle"]),
            )
            for row in reader
        ]
        return cls(records)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(r.csv_row())
    return buf.getvalue()
