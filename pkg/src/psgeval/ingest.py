"""Reading and writing ground-truth and prediction files.

Ground truth is a single JSON document::

    {"predicates": [...], "classes": [...], "width": W, "height": H,
     "images": [{"image_id": "...", "width": W, "height": H,
                 "nodes": [{"class_id": c, "rle": [...]}],
                 "triplets": [[sbj, pred, obj], ...]}]}

Predictions are JSON lines, one record per image::

    {"image_id": "...", "masks": [{"class_id": c, "confidence": s, "rle": [...]}],
     "relations": [{"sbj": i, "obj": j, "scores": [no_rel, p_0, ..., p_{P-1}]}]}

A prediction record may carry its own ``width``/``height``; otherwise the size
of the ground-truth image with the same id (or the header default) is used.
"""
from __future__ import annotations

import json
import os
from typing import Iterable, Mapping

from psgeval.errors import MaskFormatError, ValidationError
from psgeval.graphs import DatasetHeader, GroundTruthGraph, PredictionGraph
from psgeval.masks import RleMask


def _is_path(source) -> bool:
    return isinstance(source, os.PathLike) or (isinstance(source, str) and os.path.exists(source))


def _read_text(source) -> str:
    if _is_path(source):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read()
    if hasattr(source, "read"):
        return source.read()
    return str(source)


def _mask(rle, width, height, where: str) -> RleMask:
    if not isinstance(rle, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in rle):
        raise ValidationError(f"{where}: rle must be a list of integers")
    try:
        return RleMask(width, height, tuple(rle))
    except MaskFormatError as exc:
        raise MaskFormatError(f"{where}: {exc}") from None


def _require(record: Mapping, key: str, where: str):
    try:
        return record[key]
    except (KeyError, TypeError):
        raise ValidationError(f"{where}: missing field {key!r}") from None


def parse_ground_truth(doc: Mapping) -> tuple[DatasetHeader, list[GroundTruthGraph]]:
    header = DatasetHeader(
        predicates=_require(doc, "predicates", "header"),
        classes=doc.get("classes", ()),
        width=int(doc.get("width", 0)),
        height=int(doc.get("height", 0)),
    )
    graphs = []
    seen = set()
    for n, img in enumerate(_require(doc, "images", "header")):
        image_id = str(_require(img, "image_id", f"image #{n}"))
        if image_id in seen:
            raise ValidationError(f"duplicate image id {image_id!r}")
        seen.add(image_id)
        width = int(img.get("width", header.width))
        height = int(img.get("height", header.height))
        if width <= 0 or height <= 0:
            raise ValidationError(f"image {image_id!r}: missing or invalid size")
        nodes = []
        for i, node in enumerate(img.get("nodes", [])):
            where = f"image {image_id!r} mask {i}"
            nodes.append((int(_require(node, "class_id", where)), _mask(_require(node, "rle", where), width, height, where)))
        triplets = []
        for i, t in enumerate(img.get("triplets", [])):
            if not isinstance(t, list) or len(t) != 3:
                raise ValidationError(f"image {image_id!r}: triplet {i} must be [sbj, pred, obj]")
            triplets.append(tuple(int(v) for v in t))
        graph = GroundTruthGraph(image_id, width, height, nodes, triplets)
        graph.validate(header)
        graphs.append(graph)
    return header, graphs


def load_ground_truth(source) -> tuple[DatasetHeader, list[GroundTruthGraph]]:
    """Loads and validates a ground-truth document from a path, file or JSON string."""
    try:
        doc = json.loads(_read_text(source))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"ground truth is not valid JSON ({exc.msg}, line {exc.lineno})") from None
    return parse_ground_truth(doc)


def ground_truth_to_doc(header: DatasetHeader, graphs: Iterable[GroundTruthGraph]) -> dict:
    doc = {"predicates": list(header.predicates), "classes": list(header.classes)}
    if header.width and header.height:
        doc["width"], doc["height"] = header.width, header.height
    doc["images"] = [
        {
            "image_id": g.image_id,
            "width": g.width,
            "height": g.height,
            "nodes": [{"class_id": n.class_id, "rle": list(n.mask.runs)} for n in g.nodes],
            "triplets": [list(t) for t in g.triplets],
        }
        for g in graphs
    ]
    return doc


def dump_ground_truth(header: DatasetHeader, graphs: Iterable[GroundTruthGraph]) -> str:
    return json.dumps(ground_truth_to_doc(header, graphs), separators=(",", ":")) + "\n"


def save_ground_truth(path, header: DatasetHeader, graphs: Iterable[GroundTruthGraph]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_ground_truth(header, graphs))


def parse_prediction_record(record: Mapping, header: DatasetHeader, sizes: Mapping | None = None) -> PredictionGraph:
    image_id = str(_require(record, "image_id", "prediction record"))
    if "width" in record:
        width, height = int(record["width"]), int(record["height"])
    elif sizes and image_id in sizes:
        width, height = sizes[image_id]
    else:
        width, height = header.width, header.height
    if (width <= 0 or height <= 0) and record.get("masks"):
        raise ValidationError(f"image {image_id!r}: cannot determine mask size")
    masks = []
    for i, m in enumerate(record.get("masks", [])):
        where = f"image {image_id!r} mask {i}"
        masks.append(
            (
                int(_require(m, "class_id", where)),
                float(_require(m, "confidence", where)),
                _mask(_require(m, "rle", where), width, height, where),
            )
        )
    relations = []
    for i, r in enumerate(record.get("relations", [])):
        where = f"image {image_id!r} relation {i}"
        scores = _require(r, "scores", where)
        if not isinstance(scores, list):
            raise ValidationError(f"{where}: scores must be a list")
        relations.append((int(_require(r, "sbj", where)), int(_require(r, "obj", where)), scores))
    graph = PredictionGraph(image_id, masks, relations)
    graph.validate(header, width if masks else None, height if masks else None)
    return graph


def load_predictions(source, header: DatasetHeader, ground_truth: Iterable[GroundTruthGraph] = ()) -> list[PredictionGraph]:
    """Loads and validates a JSON-lines prediction file.

    ``ground_truth`` supplies image sizes for records that omit them.
    """
    sizes = {g.image_id: (g.width, g.height) for g in ground_truth}
    graphs = []
    seen = set()
    for lineno, line in enumerate(_read_lines(source), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        graph = parse_prediction_record(record, header, sizes)
        if graph.image_id in seen:
            raise ValidationError(f"duplicate prediction for image {graph.image_id!r}")
        seen.add(graph.image_id)
        graphs.append(graph)
    return graphs


def _read_lines(source):
    return _read_text(source).splitlines()


def prediction_to_record(graph: PredictionGraph) -> dict:
    record = {"image_id": graph.image_id}
    if graph.masks:
        record["width"] = graph.masks[0].mask.width
        record["height"] = graph.masks[0].mask.height
    record["masks"] = [
        {"class_id": m.class_id, "confidence": m.confidence, "rle": list(m.mask.runs)} for m in graph.masks
    ]
    record["relations"] = [{"sbj": r.subject, "obj": r.object, "scores": list(r.scores)} for r in graph.relations]
    return record


def dump_predictions(graphs: Iterable[PredictionGraph]) -> str:
    return "".join(json.dumps(prediction_to_record(g), separators=(",", ":")) + "\n" for g in graphs)


def save_predictions(path, graphs: Iterable[PredictionGraph]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_predictions(graphs))


def align(ground_truth: Iterable[GroundTruthGraph], predictions: Iterable[PredictionGraph]) -> list[tuple]:
    """Pairs each ground-truth image with its prediction, sorted by image id.

    Unknown prediction ids are an error; ground-truth images without a
    prediction get an empty one.
    """
    preds = {p.image_id: p for p in predictions}
    gts = {g.image_id: g for g in ground_truth}
    extra = sorted(set(preds) - set(gts))
    if extra:
        raise ValidationError(f"predictions reference unknown image ids: {extra[:5]}")
    return [(gts[i], preds.get(i, PredictionGraph(i))) for i in sorted(gts)]
