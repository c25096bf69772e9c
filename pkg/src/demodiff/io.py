"""Reading and writing the plain-text data formats.

All files are UTF-8 CSV with a mandatory header row, except embeddings which
are JSON lines. Reals are written with ``repr`` so a write/read cycle is exact.

=================  ==============================================================
file               columns
=================  ==============================================================
subjects.csv       ``subject_id,race,gender``
scores.csv         ``probe_subject,probe_sample,gallery_subject,gallery_sample,score``
                   (an optional ``mated`` column of 0/1 is checked, never trusted)
quality.csv        ``sample_id,quality``
summaries.csv      ``group,mean,std,m`` with optional ``unit``
embeddings.jsonl   ``{"sample_id": ..., "subject_id": ..., "vec": [...]}``
=================  ==============================================================
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import DemographicGroup, GroupKey, ScoreSet, parse_group
from .errors import DataError
from .openset import EmbeddingStore
from .stats import GroupSummary

SUBJECT_COLUMNS = ("subject_id", "race", "gender")
SCORE_COLUMNS = ("probe_subject", "probe_sample", "gallery_subject", "gallery_sample", "score")
QUALITY_COLUMNS = ("sample_id", "quality")
SUMMARY_COLUMNS = ("group", "mean", "std", "m")


@dataclass(frozen=True)
class FileInfo:
    """What was read from one file: name, content hash and row counts."""

    name: str
    sha256: str
    n_bytes: int
    n_rows: int
    n_rejected: int = 0

    def as_dict(self) -> dict:
        return {"name": self.name, "sha256": self.sha256, "bytes": self.n_bytes,
                "rows": self.n_rows, "rejected": self.n_rejected}


@dataclass
class Rejections:
    """Malformed rows skipped in permissive mode."""

    errors: list[DataError] = field(default_factory=list)

    def __len__(self):
        return len(self.errors)


def _file_info(path: Path, n_rows: int, n_rejected: int = 0) -> FileInfo:
    data = path.read_bytes()
    return FileInfo(path.name, hashlib.sha256(data).hexdigest(), len(data), n_rows, n_rejected)


def _rows(path: Path, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    """Yield ``(line_number, row_dict)`` after checking the header.

    A row with the wrong field count is yielded as a :class:`DataError`.
    """
    path = Path(path)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open: {exc.strerror}", file=path) from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("missing header row", file=path, line=1) from None
        except UnicodeDecodeError:
            raise DataError("not valid UTF-8", file=path, line=1) from None
        header = [h.strip() for h in header]
        if header and header[0].startswith("\ufeff"):
            header[0] = header[0][1:]
        unknown = [h for h in header if h not in required and h not in optional]
        if unknown:
            raise DataError(f"unknown header {unknown[0]!r}; expected {','.join(required)}",
                            file=path, line=1, column=unknown[0])
        missing = [h for h in required if h not in header]
        if missing:
            raise DataError(f"missing column {missing[0]!r}", file=path, line=1, column=missing[0])
        if len(set(header)) != len(header):
            raise DataError("duplicate column in header", file=path, line=1)
        try:
            for row in reader:
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                line = reader.line_num
                if len(row) != len(header):
                    yield line, DataError(f"expected {len(header)} fields, found {len(row)}",
                                          file=path, line=line)
                    continue
                yield line, dict(zip(header, (v.strip() for v in row)))
        except UnicodeDecodeError:
            raise DataError("not valid UTF-8", file=path, line=reader.line_num + 1) from None


def _real(text: str, path, line, column) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"not a real number: {text!r}", file=path, line=line, column=column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r}", file=path, line=line, column=column)
    return value


def _nonempty(row, column, path, line) -> str:
    value = row[column]
    if not value:
        raise DataError("empty field", file=path, line=line, column=column)
    return value


def _collect(path, rows, parse, permissive, rejections):
    """Apply ``parse`` to each row; in permissive mode bad rows are set aside."""
    out = []
    n_rejected = 0
    for line, row in rows:
        try:
            if isinstance(row, DataError):
                raise row
            out.append(parse(line, row))
        except DataError as exc:
            if not permissive:
                raise
            n_rejected += 1
            if rejections is not None:
                rejections.errors.append(exc)
    return out, n_rejected


def read_subjects(path, *, permissive: bool = False, rejections: Rejections | None = None
                  ) -> tuple[dict[str, DemographicGroup], FileInfo]:
    path = Path(path)

    def parse(line, row):
        sid = _nonempty(row, "subject_id", path, line)
        race = _nonempty(row, "race", path, line)
        gender = _nonempty(row, "gender", path, line)
        try:
            return line, sid, DemographicGroup(race, gender)
        except ValueError as exc:
            raise DataError(str(exc), file=path, line=line, column="race") from None

    parsed, n_rej = _collect(path, _rows(path, SUBJECT_COLUMNS), parse, permissive, rejections)
    table: dict[str, DemographicGroup] = {}
    for line, sid, group in parsed:
        if sid in table:
            raise DataError(f"duplicate subject_id {sid!r}", file=path, line=line, column="subject_id")
        table[sid] = group
    return table, _file_info(path, len(parsed) + n_rej, n_rej)


def read_scores(path, subjects: Mapping[str, DemographicGroup], *, permissive: bool = False,
                rejections: Rejections | None = None) -> tuple[ScoreSet, FileInfo]:
    path = Path(path)

    def parse(line, row):
        rec = [_nonempty(row, c, path, line) for c in SCORE_COLUMNS[:4]]
        score = _real(row["score"], path, line, "score")
        for col, sid in (("probe_subject", rec[0]), ("gallery_subject", rec[2])):
            if sid not in subjects:
                raise DataError(f"subject {sid!r} not in subject table", file=path, line=line, column=col)
        if "mated" in row:
            flag = row["mated"]
            if flag not in ("0", "1"):
                raise DataError(f"mated must be 0 or 1, got {flag!r}", file=path, line=line, column="mated")
            if (flag == "1") != (rec[0] == rec[2]):
                raise DataError(
                    f"mated={flag} but probe_subject {rec[0]!r} and gallery_subject {rec[2]!r} "
                    f"are {'the same' if rec[0] == rec[2] else 'different'}",
                    file=path, line=line, column="mated")
        if rec[0] == rec[2] and rec[1] == rec[3]:
            raise DataError(f"self-comparison of sample {rec[1]!r}", file=path, line=line,
                            column="gallery_sample")
        return line, rec, score

    parsed, n_rej = _collect(path, _rows(path, SCORE_COLUMNS, ("mated",)), parse, permissive, rejections)
    seen: dict[tuple[str, str], int] = {}
    cols: list[list] = [[], [], [], [], []]
    for line, rec, score in parsed:
        key = (rec[1], rec[3])
        if key in seen:
            raise DataError(f"duplicate comparison {rec[1]!r} vs {rec[3]!r} (first at line {seen[key]})",
                            file=path, line=line)
        seen[key] = line
        for c, v in zip(cols, rec + [score]):
            c.append(v)
    scores = ScoreSet(subjects, *cols)
    return scores, _file_info(path, len(parsed) + n_rej, n_rej)


def read_quality(path, *, permissive: bool = False, rejections: Rejections | None = None
                 ) -> tuple[dict[str, float], FileInfo]:
    path = Path(path)

    def parse(line, row):
        sample = _nonempty(row, "sample_id", path, line)
        q = _real(row["quality"], path, line, "quality")
        if not 0.0 <= q <= 100.0:
            raise DataError(f"quality {q} outside [0, 100]", file=path, line=line, column="quality")
        return line, sample, q

    parsed, n_rej = _collect(path, _rows(path, QUALITY_COLUMNS), parse, permissive, rejections)
    out: dict[str, float] = {}
    for line, sample, q in parsed:
        if sample in out:
            raise DataError(f"duplicate sample_id {sample!r}", file=path, line=line, column="sample_id")
        out[sample] = q
    return out, _file_info(path, len(parsed) + n_rej, n_rej)


def read_summaries(path) -> tuple[dict[GroupKey, GroupSummary], FileInfo]:
    """Pre-aggregated per-group (mean, std, m) rows, e.g. reference tables."""
    path = Path(path)
    out: dict[GroupKey, GroupSummary] = {}
    n = 0
    for line, row in _rows(path, SUMMARY_COLUMNS, ("unit",)):
        n += 1
        if isinstance(row, DataError):
            raise row
        try:
            group = parse_group(_nonempty(row, "group", path, line))
        except ValueError as exc:
            raise DataError(str(exc), file=path, line=line, column="group") from None
        mean = _real(row["mean"], path, line, "mean")
        std = _real(row["std"], path, line, "std")
        try:
            m = int(row["m"])
        except ValueError:
            raise DataError(f"m must be an integer, got {row['m']!r}", file=path, line=line, column="m") from None
        unit = row.get("unit") or "fraction"
        try:
            summary = GroupSummary(mean, std, m, unit)
        except ValueError as exc:
            raise DataError(str(exc), file=path, line=line) from None
        if group in out:
            raise DataError(f"duplicate group {group.code}", file=path, line=line, column="group")
        out[group] = summary
    return out, _file_info(path, n)


def read_embeddings(path) -> tuple[EmbeddingStore, FileInfo]:
    path = Path(path)
    ids, subjects, vecs = [], [], []
    dim = None
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open: {exc.strerror}", file=path) from None
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", file=path, line=line_no, column=exc.colno) from None
            if not isinstance(rec, dict):
                raise DataError("record must be a JSON object", file=path, line=line_no)
            unknown = set(rec) - {"sample_id", "subject_id", "vec"}
            if unknown:
                key = sorted(unknown)[0]
                raise DataError(f"unknown key {key!r}", file=path, line=line_no, column=key)
            for key in ("sample_id", "subject_id"):
                if not isinstance(rec.get(key), str) or not rec[key]:
                    raise DataError(f"{key} must be a non-empty string", file=path, line=line_no, column=key)
            vec = rec.get("vec")
            if not isinstance(vec, list) or not vec or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec):
                raise DataError("vec must be a non-empty list of numbers", file=path, line=line_no, column="vec")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataError(f"vector length {len(vec)} differs from {dim}", file=path, line=line_no,
                                column="vec")
            if not all(math.isfinite(v) for v in vec):
                raise DataError("non-finite vector entry", file=path, line=line_no, column="vec")
            ids.append(rec["sample_id"])
            subjects.append(rec["subject_id"])
            vecs.append(vec)
    if not ids:
        raise DataError("no embeddings", file=path)
    seen = {}
    for i, s in enumerate(ids):
        if s in seen:
            raise DataError(f"duplicate sample_id {s!r}", file=path, column="sample_id")
        seen[s] = i
    store = EmbeddingStore(ids, subjects, np.array(vecs, dtype=np.float64))
    return store, _file_info(path, len(ids))


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(header))
        writer.writerows(rows)
    return path


def write_subjects(path, subjects: Mapping[str, DemographicGroup]) -> Path:
    return _write_csv(path, SUBJECT_COLUMNS,
                      ([sid, g.race, g.gender] for sid, g in sorted(subjects.items())))


def write_scores(path, scores: ScoreSet) -> Path:
    return _write_csv(path, SCORE_COLUMNS, (
        [scores.probe_subject[i], scores.probe_sample[i], scores.gallery_subject[i],
         scores.gallery_sample[i], _fmt(scores.score[i])] for i in range(len(scores))))


def write_quality(path, quality: Mapping[str, float]) -> Path:
    return _write_csv(path, QUALITY_COLUMNS, ([s, _fmt(q)] for s, q in sorted(quality.items())))


def write_summaries(path, summaries: Mapping[GroupKey, GroupSummary]) -> Path:
    return _write_csv(path, SUMMARY_COLUMNS + ("unit",), (
        [g.code, _fmt(s.mean), _fmt(s.std), s.m, s.unit] for g, s in summaries.items()))


def write_embeddings(path, store: EmbeddingStore) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for sample, subject, vec in zip(store.sample_ids, store.subject_ids, store.vectors):
            rec = {"sample_id": sample, "subject_id": subject, "vec": [float(v) for v in vec]}
            handle.write(json.dumps(rec, separators=(",", ":")) + "\n")
    return path


@dataclass(frozen=True)
class Dataset:
    """Validated inputs for an audit."""

    subjects: dict[str, DemographicGroup]
    scores: ScoreSet | None = None
    quality: dict[str, float] | None = None
    embeddings: EmbeddingStore | None = None
    files: tuple[FileInfo, ...] = ()

    def sample_subjects(self) -> dict[str, str]:
        """Sample to subject map from whatever sources are loaded."""
        out: dict[str, str] = {}
        if self.embeddings is not None:
            out.update(self.embeddings.sample_subjects())
        if self.scores is not None:
            s = self.scores
            out.update(zip(s.probe_sample.tolist(), s.probe_subject.tolist()))
            out.update(zip(s.gallery_sample.tolist(), s.gallery_subject.tolist()))
        return out


def ingest(subjects, scores=None, quality=None, embeddings=None, *, permissive: bool = False,
           rejections: Rejections | None = None) -> Dataset:
    """Read and cross-validate a set of input files.

    Malformed rows abort ingestion unless ``permissive`` is set, in which case
    they are collected in ``rejections`` and counted in the file info.
    """
    table, info = read_subjects(subjects, permissive=permissive, rejections=rejections)
    files = [info]
    score_set = q = store = None
    if scores is not None:
        score_set, info = read_scores(scores, table, permissive=permissive, rejections=rejections)
        files.append(info)
    if quality is not None:
        q, info = read_quality(quality, permissive=permissive, rejections=rejections)
        files.append(info)
    if embeddings is not None:
        store, info = read_embeddings(embeddings)
        files.append(info)
    return Dataset(table, score_set, q, store, tuple(files))
