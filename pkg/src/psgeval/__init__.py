"""Panoptic scene graph evaluation under the SingleMPO and MultiMPO protocols."""
from psgeval.errors import MaskFormatError, ProtocolError, PsgEvalError, ValidationError
from psgeval.graphs import (
    DatasetHeader,
    GroundTruthGraph,
    Node,
    PredictedMask,
    PredictionGraph,
    Relation,
    Triplet,
)
from psgeval.ingest import load_ground_truth, load_predictions, save_ground_truth, save_predictions
from psgeval.masks import PatchGrid, RleMask, iou, merge_masks, patch_coverage, rle_decode, rle_encode
from psgeval.matching import MatchTable, match_masks
from psgeval.metrics import (
    evaluate_dataset,
    mean_ng_recall_image,
    mean_recall_image,
    mr_inf,
    recall_image,
)
from psgeval.protocol import (
    MULTI,
    SINGLE,
    aggregate_duplicate_relations,
    convert_to_multi_mpo,
    multi_mpo_view,
    normalize_single_mpo,
)
from psgeval.report import MetricReport, ProtocolScores, write_report

__version__ = "0.1.0"
