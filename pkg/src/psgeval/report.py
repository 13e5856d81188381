"""Metric report container and its JSON/CSV serialization."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

METRICS = ("mR", "mNgR", "R")
NO_IMAGES = "no images"


@dataclass
class ProtocolScores:
    protocol: str
    images_evaluated: int
    # metric -> k -> score (None when no image had ground truth)
    scores: dict = field(default_factory=dict)
    # metric -> k -> per-predicate recall list (None for absent predicates)
    per_predicate: dict = field(default_factory=dict)
    mr_inf: float | None = None

    def score(self, metric: str, k: int):
        return self.scores[metric][k]


@dataclass
class MetricReport:
    image_count: int
    ks: list
    aggregation: str
    iou_threshold: float
    merge_threshold: float
    predicates: list
    duplicate_relations: dict = field(default_factory=dict)
    results: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return NO_IMAGES if self.image_count == 0 else "ok"

    def protocol(self, name: str) -> ProtocolScores:
        for r in self.results:
            if r.protocol == name:
                return r
        raise KeyError(name)

    @property
    def mean_duplicates(self) -> float | None:
        if not self.duplicate_relations:
            return None
        return sum(self.duplicate_relations.values()) / len(self.duplicate_relations)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["status"] = self.status
        for r in doc["results"]:
            r["scores"] = {m: {str(k): v for k, v in ks.items()} for m, ks in r["scores"].items()}
            r["per_predicate"] = {m: {str(k): v for k, v in ks.items()} for m, ks in r["per_predicate"].items()}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricReport":
        results = []
        for r in doc.get("results", []):
            results.append(
                ProtocolScores(
                    protocol=r["protocol"],
                    images_evaluated=r["images_evaluated"],
                    scores={m: {int(k): v for k, v in ks.items()} for m, ks in r["scores"].items()},
                    per_predicate={m: {int(k): v for k, v in ks.items()} for m, ks in r["per_predicate"].items()},
                    mr_inf=r.get("mr_inf"),
                )
            )
        return cls(
            image_count=doc["image_count"],
            ks=list(doc["ks"]),
            aggregation=doc["aggregation"],
            iou_threshold=doc["iou_threshold"],
            merge_threshold=doc["merge_threshold"],
            predicates=list(doc["predicates"]),
            duplicate_relations=dict(doc.get("duplicate_relations", {})),
            results=results,
        )

    def rows(self) -> list[tuple]:
        """``(protocol, metric, k, value)`` rows; ``k`` is ``"inf"`` for mR@inf."""
        out = []
        for r in self.results:
            for metric in METRICS:
                for k in self.ks:
                    out.append((r.protocol, metric, str(k), r.scores[metric][k]))
            out.append((r.protocol, "mR", "inf", r.mr_inf))
        return out


def dumps_report(report: MetricReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def loads_report(text: str) -> MetricReport:
    return MetricReport.from_dict(json.loads(text))


def report_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["protocol", "metric", "k", "value"])
    for protocol, metric, k, value in report.rows():
        writer.writerow([protocol, metric, k, "" if value is None else repr(value)])
    return buf.getvalue()


def write_report(report: MetricReport, json_path=None, csv_path=None) -> tuple[str, str]:
    """Serializes ``report`` as JSON and CSV, writing whichever paths are given."""
    text, table = dumps_report(report), report_csv(report)
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(table)
    return text, table


def read_report(path) -> MetricReport:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_report(fh.read())
