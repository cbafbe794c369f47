"""File formats: counts CSV, paired-seasons CSV, prediction output, and
the JSON document that stores a fitted prior.

All emitted text is canonical so repeated runs are byte-identical: JSON is
sorted-key with two-space indent and a trailing newline, CSV numbers use
fixed six-decimal formatting, and nothing embeds a timestamp.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

from .core import DiscretePrior


class DataError(ValueError):
    """Malformed or unreadable input data; message carries the offending
    row number where one applies."""


def _open_text(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _is_header(cell: str, names) -> bool:
    return cell.strip().lower() in names


def read_counts_csv(path) -> list:
    """One nonnegative integer per row; an optional leading ``count`` header."""
    counts = []
    with _open_text(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1:
                raise DataError(f"{path}: row {lineno}: expected a single column")
            cell = row[0].strip()
            if lineno == 1 and _is_header(cell, ("count",)):
                continue
            try:
                value = int(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {lineno}: not an integer count: {cell!r}") from None
            if value < 0:
                raise DataError(f"{path}: row {lineno}: negative count {value}")
            counts.append(value)
    if not counts:
        raise DataError(f"{path}: no counts found")
    return counts


def read_values_csv(path) -> list:
    """Real values from the last column of each row; optional header row."""
    values = []
    with _open_text(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[-1].strip():
                continue
            cell = row[-1].strip()
            try:
                values.append(float(cell))
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(
                    f"{path}: row {lineno}: not a number: {cell!r}") from None
    if not values:
        raise DataError(f"{path}: no values found")
    return values


def format_fixed(x: float) -> str:
    # round-half-even at six decimals, for diffable output
    return format(float(x), ".6f")


def write_predictions_csv(path, counts, predictions) -> None:
    counts = list(counts)
    predictions = list(predictions)
    if len(counts) != len(predictions):
        raise DataError("counts and predictions must align")
    with open(path, "w", newline="") as fh:
        fh.write(render_predictions_csv(counts, predictions))


def render_predictions_csv(counts, predictions) -> str:
    lines = ["count,prediction"]
    lines.extend(f"{int(c)},{format_fixed(p)}" for c, p in zip(counts, predictions))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PairedSeasonRow:
    player: str
    past: int
    future: int
    position: str | None = None


@dataclass(frozen=True)
class PairedSeasonsDataset:
    rows: tuple

    def __post_init__(self):
        if not self.rows:
            raise DataError("paired-seasons dataset is empty")

    def past_counts(self):
        return [r.past for r in self.rows]

    def future_counts(self):
        return [r.future for r in self.rows]

    def positions(self):
        return sorted({r.position for r in self.rows if r.position})

    def restrict(self, position: str) -> "PairedSeasonsDataset":
        return PairedSeasonsDataset(
            tuple(r for r in self.rows if r.position == position))


def read_paired_seasons_csv(path) -> PairedSeasonsDataset:
    """Header ``player,past,future`` with an optional ``position`` column."""
    rows = []
    with _open_text(path) as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in reader.fieldnames or []]
        for required in ("player", "past", "future"):
            if required not in fields:
                raise DataError(f"{path}: missing required column {required!r}")
        for lineno, rec in enumerate(reader, start=2):
            rec = {(k or "").strip().lower(): (v or "").strip()
                   for k, v in rec.items()}
            try:
                past = int(rec["past"])
                future = int(rec["future"])
            except ValueError:
                raise DataError(f"{path}: row {lineno}: counts must be integers") from None
            if past < 0 or future < 0:
                raise DataError(f"{path}: row {lineno}: negative count")
            position = rec.get("position") or None
            rows.append(PairedSeasonRow(rec["player"], past, future, position))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return PairedSeasonsDataset(tuple(rows))


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


@dataclass(frozen=True)
class PriorDocument:
    atoms: tuple
    weights: tuple
    dist: str
    objective: float
    certificate: dict
    config: dict
    seed: int
    data_sha256: str

    def to_prior(self) -> DiscretePrior:
        return DiscretePrior(self.atoms, self.weights)

    def to_payload(self) -> dict:
        return {
            "atoms": list(self.atoms),
            "weights": list(self.weights),
            "dist": self.dist,
            "objective": self.objective,
            "certificate": dict(self.certificate),
            "config": self.config,
            "seed": self.seed,
            "data_sha256": self.data_sha256,
        }

    def render(self) -> str:
        return canonical_json(self.to_payload())


def write_prior_document(path, doc: PriorDocument) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(doc.render())


def read_prior_document(path) -> PriorDocument:
    with _open_text(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
    try:
        doc = PriorDocument(
            atoms=tuple(payload["atoms"]),
            weights=tuple(payload["weights"]),
            dist=str(payload["dist"]),
            objective=float(payload["objective"]),
            certificate=dict(payload["certificate"]),
            config=dict(payload["config"]),
            seed=int(payload["seed"]),
            data_sha256=str(payload["data_sha256"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed prior document: {exc}") from None
    try:
        doc.to_prior()
    except ValueError as exc:
        raise DataError(f"{path}: invalid prior in document: {exc}") from None
    return doc
