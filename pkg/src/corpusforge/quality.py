"""Quality-control stage: annotation ingestion, filter evaluation, and
rank-and-keep filtering at a target token fraction.

Annotation runs against either a file of precomputed labels or a generic
HTTP JSON endpoint that receives the annotator prompt and returns a
completion containing a binary verdict.
"""

import json
import re
import time
from dataclasses import dataclass
from importlib import resources

import requests

from .classifier import LABELS

ANNOTATOR_PROMPT_ASSET = "llm_annotator.txt"
CODE_TO_TEXT_PROMPT_ASSET = "code_to_text.txt"

_VERDICT_RE = re.compile(r"[a-zA-Z]+")


class QualityError(Exception):
    pass


@dataclass(frozen=True)
class LabeledSample:
    doc_id: str
    label: str
    annotator: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise QualityError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass
class FilterMetrics:
    accuracy: float
    f1: float
    precision: float
    recall: float
    confusion: list  # [[tp, fn], [fp, tn]] with agent as the positive class

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.f1,
                "precision": self.precision, "recall": self.recall,
                "confusion": self.confusion}


def load_prompt_asset(name: str = ANNOTATOR_PROMPT_ASSET) -> str:
    ref = resources.files("corpusforge").joinpath("assets", "prompts", name)
    return ref.read_text(encoding="utf-8")


def render_prompt(template: str, text: str) -> str:
    return template.replace("{document}", text)


def parse_verdict(completion: str):
    """First classification word in the response, case-insensitive.

    Returns "agent" or "general", or None when no verdict word appears.
    """
    for word in _VERDICT_RE.findall(completion):
        lowered = word.lower()
        if lowered in LABELS:
            return lowered
    return None


class FileLabelBackend:
    """Lookup of precomputed labels from a JSONL labels file."""

    name = "file"

    def __init__(self, path: str):
        self.labels = {}
        self.annotators = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    doc_id, label = obj["doc_id"], obj["label"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise QualityError(f"{path}:{lineno}: bad label record: {exc}")
                if label not in LABELS:
                    raise QualityError(f"{path}:{lineno}: unknown label {label!r}")
                self.labels[doc_id] = label
                self.annotators[doc_id] = obj.get("annotator", "file")

    def annotate(self, doc, prompt: str):
        label = self.labels.get(doc.id)
        if label is None:
            return None, None
        return label, self.annotators[doc.id]


class HttpAnnotationBackend:
    """POST {"prompt": ...} -> {"completion": ...} against a JSON endpoint."""

    name = "http"

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 2,
                 annotator_name: str = "http"):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.annotator_name = annotator_name

    def annotate(self, doc, prompt: str):
        last_exc = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.url, json={"prompt": prompt},
                                     timeout=self.timeout)
                resp.raise_for_status()
                completion = resp.json().get("completion", "")
                return parse_verdict(completion), self.annotator_name
            except (requests.RequestException, ValueError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(min(0.1 * 2 ** attempt, 2.0))
        raise QualityError(f"annotation request failed: {last_exc}")


def annotate_batch(docs, backend, prompt_template: str | None = None):
    """Annotate documents, returning (samples, errors).

    Per-document failures are recorded and the batch continues; documents
    with no parseable verdict are excluded. Results are ordered by doc_id.
    """
    if prompt_template is None:
        prompt_template = load_prompt_asset()
    samples = []
    errors = []
    for doc in sorted(docs, key=lambda d: d.id):
        prompt = render_prompt(prompt_template, doc.text)
        try:
            label, annotator = backend.annotate(doc, prompt)
        except QualityError as exc:
            errors.append((doc.id, str(exc)))
            continue
        if label is None:
            errors.append((doc.id, "no parseable verdict"))
            continue
        samples.append(LabeledSample(doc.id, label, annotator))
    return samples, errors


def metrics_from_confusion(tp: int, fn: int, fp: int, tn: int) -> FilterMetrics:
    total = tp + fn + fp + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return FilterMetrics(accuracy, f1, precision, recall, [[tp, fn], [fp, tn]])


def evaluate_filter(model, labeled_texts) -> FilterMetrics:
    """Confusion-matrix evaluation of the trained filter.

    labeled_texts yields (text, label) pairs; agent is the positive class
    and the hard-decision threshold is 0.5 (score >= 0.5 predicts agent).
    """
    tp = fn = fp = tn = 0
    count = 0
    for text, label in labeled_texts:
        count += 1
        predicted_agent = model.predict_score(text) >= 0.5
        if label == "agent":
            if predicted_agent:
                tp += 1
            else:
                fn += 1
        elif label == "general":
            if predicted_agent:
                fp += 1
            else:
                tn += 1
        else:
            raise QualityError(f"unknown label {label!r}")
    if count == 0:
        raise QualityError("empty labeled set")
    return metrics_from_confusion(tp, fn, fp, tn)


def filter_by_rank(scored, keep_token_fraction: float) -> list:
    """Keep the top-scoring documents up to a token-budget fraction.

    Documents sort by (score desc, id asc); the kept prefix is the
    shortest whose cumulative token count reaches keep_token_fraction of
    the total. Kept documents carry meta["filter_score"].
    """
    if not 0.0 < keep_token_fraction <= 1.0:
        raise QualityError(
            f"keep_token_fraction must be in (0, 1], got {keep_token_fraction}")
    scored = list(scored)
    for _, score in scored:
        if not 0.0 <= score <= 1.0:
            raise QualityError(f"score out of [0, 1]: {score}")

    total = sum(doc.token_count for doc, _ in scored)
    target = keep_token_fraction * total
    ranked = sorted(scored, key=lambda pair: (-pair[1], pair[0].id))

    kept = []
    cumulative = 0
    for doc, score in ranked:
        if cumulative >= target:
            break
        kept.append(doc.with_meta(filter_score=repr(score)))
        cumulative += doc.token_count
    return kept


def save_labels(samples, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({"doc_id": s.doc_id, "label": s.label,
                                 "annotator": s.annotator}))
            fh.write("\n")
