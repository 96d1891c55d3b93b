"""Roll-number keyed enrollment registry with attendance marks and reports.

On-disk layout under the registry root::

    templates/<roll>.txt   enrolled templates (native text format)
    index.csv              roll,enrolled_at,minutiae_count
    attendance.csv         date,roll,time
    .lock                  advisory lock held by mutating operations

Every mutation is written through before the call returns, so reopening a
registry reproduces its state exactly. Timestamps are always passed in by
the caller (UTC).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from filelock import FileLock

from .errors import DuplicateRoll, EmptyRegistry, EmptyTemplate, IoFailure
from .imaging import GrayImage, read_pgm, segment
from .matching import DEFAULT_THRESHOLD, match
from .minutiae import Template, extract_minutiae, read_template, write_template

INDEX_HEADER = ["roll", "enrolled_at", "minutiae_count"]
ATTENDANCE_HEADER = ["date", "roll", "time"]
REPORT_HEADER = "date,roll,status,time"


def _utc(ts: dt.datetime) -> dt.datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=dt.timezone.utc, microsecond=0)
    return ts.astimezone(dt.timezone.utc).replace(microsecond=0)


def format_timestamp(ts: dt.datetime) -> str:
    return _utc(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> dt.datetime:
    return _utc(dt.datetime.fromisoformat(text.replace("Z", "+00:00")))


def check_roll(roll: str) -> None:
    if not roll or any(ch in roll for ch in ",\n\r"):
        raise ValueError(f"invalid roll number {roll!r}")
    if "/" in roll or "\\" in roll or roll.startswith(".") or roll != roll.strip():
        raise ValueError(f"roll number {roll!r} cannot be used as a file name")


@dataclass(frozen=True)
class Enrollment:
    roll: str
    template: Template
    enrolled_at: dt.datetime


@dataclass(frozen=True)
class AttendanceRecord:
    roll: str
    date: dt.date
    time: dt.datetime
    status: str = "present"


class Registry:
    def __init__(self, root: Union[str, os.PathLike]):
        self.root = Path(root)
        self.enrollments: dict[str, Enrollment] = {}
        self.marks: list[AttendanceRecord] = []
        try:
            (self.root / "templates").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._lock = FileLock(str(self.root / ".lock"))
        self._load()

    @property
    def index_path(self) -> Path:
        return self.root / "index.csv"

    @property
    def attendance_path(self) -> Path:
        return self.root / "attendance.csv"

    def template_path(self, roll: str) -> Path:
        return self.root / "templates" / f"{roll}.txt"

    def _load(self) -> None:
        if self.index_path.exists():
            with open(self.index_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    roll = row["roll"]
                    self.enrollments[roll] = Enrollment(
                        roll, read_template(self.template_path(roll)), parse_timestamp(row["enrolled_at"])
                    )
        if self.attendance_path.exists():
            with open(self.attendance_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    day = dt.date.fromisoformat(row["date"])
                    clock = dt.time.fromisoformat(row["time"])
                    when = dt.datetime.combine(day, clock, tzinfo=dt.timezone.utc)
                    self.marks.append(AttendanceRecord(row["roll"], day, when))

    @staticmethod
    def _append_row(path: Path, header: list, row: list) -> None:
        fresh = not path.exists()
        try:
            with open(path, "a", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                if fresh:
                    writer.writerow(header)
                writer.writerow(row)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    def __len__(self):
        return len(self.enrollments)

    def enroll(self, roll: str, template: Template, enrolled_at: dt.datetime) -> Enrollment:
        check_roll(roll)
        if len(template) == 0:
            raise EmptyTemplate(f"refusing to enroll {roll} with an empty template")
        with self._lock:
            if roll in self.enrollments:
                raise DuplicateRoll(f"roll {roll} is already enrolled")
            entry = Enrollment(roll, template, _utc(enrolled_at))
            write_template(template, self.template_path(roll))
            self._append_row(
                self.index_path, INDEX_HEADER, [roll, format_timestamp(entry.enrolled_at), len(template)]
            )
            self.enrollments[roll] = entry
        return entry

    def identify(
        self, query: Template, threshold: float = DEFAULT_THRESHOLD
    ) -> Optional[tuple[str, float]]:
        """Best-scoring roll at or above ``threshold``; ties go to the
        lexicographically smallest roll. ``None`` when nothing qualifies."""
        if not self.enrollments:
            raise EmptyRegistry("no enrollments to identify against")
        if len(query) == 0:
            return None
        scored = [(match(e.template, query).score, roll) for roll, e in self.enrollments.items()]
        score, roll = min(scored, key=lambda sr: (-sr[0], sr[1]))
        if score < threshold:
            return None
        return roll, score

    def marked(self, roll: str, day: dt.date) -> Optional[AttendanceRecord]:
        for rec in self.marks:
            if rec.roll == roll and rec.date == day:
                return rec
        return None

    def mark_attendance(
        self,
        query: Union[GrayImage, Template, str, os.PathLike],
        now: dt.datetime,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> Optional[tuple[str, bool]]:
        """Identify ``query`` and record presence for the UTC date of ``now``.

        Returns ``(roll, already_marked)``, or ``None`` if no enrollment
        matches. Marking the same roll twice on one date changes nothing.
        """
        if not self.enrollments:
            raise EmptyRegistry("no enrollments to identify against")
        template = load_query(query)
        hit = self.identify(template, threshold)
        if hit is None:
            return None
        roll = hit[0]
        now = _utc(now)
        with self._lock:
            if self.marked(roll, now.date()) is not None:
                return roll, True
            rec = AttendanceRecord(roll, now.date(), now)
            self._append_row(
                self.attendance_path,
                ATTENDANCE_HEADER,
                [rec.date.isoformat(), roll, rec.time.strftime("%H:%M:%S")],
            )
            self.marks.append(rec)
        return roll, False

    def report(self, day: dt.date) -> str:
        out = io.StringIO()
        out.write(REPORT_HEADER + "\n")
        for roll in sorted(self.enrollments):
            rec = self.marked(roll, day)
            if rec is None:
                out.write(f"{day.isoformat()},{roll},absent,\n")
            else:
                out.write(f"{day.isoformat()},{roll},present,{rec.time.strftime('%H:%M:%S')}\n")
        return out.getvalue()


def load_query(query) -> Template:
    """Template from a template, an image, or a ``.pgm``/template path."""
    if isinstance(query, Template):
        return query
    if isinstance(query, GrayImage):
        return extract_minutiae(query, segment(query))
    path = Path(query)
    if path.suffix.lower() == ".pgm":
        image = read_pgm(path)
        return extract_minutiae(image, segment(image))
    return read_template(path)
