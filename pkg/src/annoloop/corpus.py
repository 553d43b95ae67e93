"""Data model and JSONL persistence for examples, labels, and split pools.

Canonical wire format (one JSON object per line):

    {"id": str, "tokens": [str], "gold": [...]|null, "re_struct": {...}|null}

Tagging label objects are ``{"start": int, "end": int, "class": str}`` with
token-level, end-exclusive indices.  Relation objects are
``{"subj": {"start", "end"}, "obj": {...}, "relation": str}``.  Annotated
files extend a line with ``silver``, ``provenance`` and ``annotator_meta``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed files or label-structure violations."""


class Task(str, Enum):
    NER = "ner"
    RE = "re"


class Provenance(str, Enum):
    ORACLE_SIM = "oracle_sim"
    LLM = "llm"
    HUMAN = "human"


@dataclass(frozen=True)
class LabelSchema:
    """Label space for one task.

    For relation tasks every class carries a verbalizer template with
    ``{e1}``/``{e2}`` placeholders, and ``na_class`` (if any) must be one of
    ``classes``.
    """

    task: Task
    classes: tuple[str, ...]
    verbalizer_templates: dict[str, str] = field(default_factory=dict)
    na_class: Optional[str] = None

    def __post_init__(self):
        if len(self.classes) == 0:
            raise CorpusError("schema needs at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise CorpusError("schema class names must be unique")
        if self.task == Task.RE:
            missing = [c for c in self.classes if c not in self.verbalizer_templates]
            if missing:
                raise CorpusError(f"missing verbalizer template for classes: {missing}")
        if self.na_class is not None and self.na_class not in self.classes:
            raise CorpusError(f"na_class {self.na_class!r} is not a schema class")

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise CorpusError(f"unknown class {name!r}") from None

    def to_obj(self) -> dict:
        return {
            "task": self.task.value,
            "classes": list(self.classes),
            "verbalizer_templates": dict(self.verbalizer_templates),
            "na_class": self.na_class,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "LabelSchema":
        return cls(
            task=Task(obj["task"]),
            classes=tuple(obj["classes"]),
            verbalizer_templates=dict(obj.get("verbalizer_templates") or {}),
            na_class=obj.get("na_class"),
        )

    @classmethod
    def load(cls, path) -> "LabelSchema":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_obj(json.load(f))


@dataclass(frozen=True, order=True)
class SpanLabel:
    """Token span [start, end) with a class label."""

    start: int
    end: int
    label: str

    def to_obj(self) -> dict:
        return {"start": self.start, "end": self.end, "class": self.label}


@dataclass(frozen=True)
class Span:
    start: int
    end: int

    def to_obj(self) -> dict:
        return {"start": self.start, "end": self.end}


@dataclass(frozen=True)
class RelationInstance:
    """Subject/object spans plus an optional relation class (absent = query)."""

    subj: Span
    obj: Span
    relation: Optional[str] = None

    def to_obj(self) -> dict:
        obj = {"subj": self.subj.to_obj(), "obj": self.obj.to_obj()}
        if self.relation is not None:
            obj["relation"] = self.relation
        return obj


Labels = Union[list, RelationInstance]


@dataclass(frozen=True)
class Example:
    id: str
    tokens: tuple[str, ...]
    gold: Optional[Labels] = None
    re_struct: Optional[RelationInstance] = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def relation_args(self) -> RelationInstance:
        """The subj/obj structure of a relation example (query or gold)."""
        if self.re_struct is not None:
            return self.re_struct
        if isinstance(self.gold, RelationInstance):
            return self.gold
        raise CorpusError(f"example {self.id!r} has no relation structure")


@dataclass(frozen=True)
class AnnotatedExample:
    example: Example
    silver: Labels
    provenance: Provenance
    annotator_meta: dict = field(default_factory=dict)

    @property
    def id(self) -> str:
        return self.example.id


def validate_spans(spans: Sequence[SpanLabel], n_tokens: int, schema: LabelSchema,
                   owner: str) -> None:
    """Check SpanLabel invariants: in-range, known class, non-overlapping."""
    for sp in spans:
        if not (0 <= sp.start < sp.end <= n_tokens):
            raise CorpusError(
                f"example {owner!r}: span [{sp.start},{sp.end}) out of range "
                f"for {n_tokens} tokens"
            )
        if sp.label not in schema.classes:
            raise CorpusError(f"example {owner!r}: unknown class {sp.label!r}")
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise CorpusError(f"example {owner!r}: overlapping spans {a} and {b}")


def _validate_relation(rel: RelationInstance, n_tokens: int, schema: LabelSchema,
                       owner: str, labeled: bool) -> None:
    for name, sp in (("subj", rel.subj), ("obj", rel.obj)):
        if not (0 <= sp.start < sp.end <= n_tokens):
            raise CorpusError(
                f"example {owner!r}: {name} span [{sp.start},{sp.end}) out of "
                f"range for {n_tokens} tokens"
            )
    if labeled:
        if rel.relation is None:
            raise CorpusError(f"example {owner!r}: relation label missing")
        if rel.relation not in schema.classes:
            raise CorpusError(f"example {owner!r}: unknown class {rel.relation!r}")


def validate_labels(labels: Labels, n_tokens: int, schema: LabelSchema, owner: str) -> None:
    """Validate gold/silver labels against the schema for their task."""
    if schema.task == Task.NER:
        if not isinstance(labels, list):
            raise CorpusError(f"example {owner!r}: tagging labels must be a span list")
        validate_spans(labels, n_tokens, schema, owner)
    else:
        if not isinstance(labels, RelationInstance):
            raise CorpusError(f"example {owner!r}: relation labels must be a relation object")
        _validate_relation(labels, n_tokens, schema, owner, labeled=True)


def validate_example(ex: Example, schema: LabelSchema) -> None:
    if not ex.id:
        raise CorpusError("example with empty id")
    if len(ex.tokens) == 0:
        raise CorpusError(f"example {ex.id!r}: tokens must be non-empty")
    if ex.gold is not None:
        validate_labels(ex.gold, len(ex.tokens), schema, ex.id)
    if ex.re_struct is not None:
        _validate_relation(ex.re_struct, len(ex.tokens), schema, ex.id, labeled=False)


# ---------------------------------------------------------------------------
# JSON (de)serialization


def _span_from_obj(obj: dict, owner: str) -> SpanLabel:
    try:
        return SpanLabel(start=int(obj["start"]), end=int(obj["end"]), label=str(obj["class"]))
    except KeyError as e:
        raise CorpusError(f"example {owner!r}: span object missing key {e}") from None


def _relation_from_obj(obj: dict, owner: str) -> RelationInstance:
    try:
        subj = Span(int(obj["subj"]["start"]), int(obj["subj"]["end"]))
        o = Span(int(obj["obj"]["start"]), int(obj["obj"]["end"]))
    except KeyError as e:
        raise CorpusError(f"example {owner!r}: relation object missing key {e}") from None
    rel = obj.get("relation")
    return RelationInstance(subj=subj, obj=o, relation=None if rel is None else str(rel))


def labels_from_obj(obj, schema: LabelSchema, owner: str) -> Labels:
    if schema.task == Task.NER:
        if not isinstance(obj, list):
            raise CorpusError(f"example {owner!r}: expected a list of span objects")
        return [_span_from_obj(o, owner) for o in obj]
    return _relation_from_obj(obj, owner)


def labels_to_obj(labels: Labels):
    if isinstance(labels, RelationInstance):
        return labels.to_obj()
    return [sp.to_obj() for sp in labels]


def example_from_obj(obj: dict, schema: LabelSchema) -> Example:
    ex_id = str(obj.get("id", ""))
    tokens = obj.get("tokens")
    if not isinstance(tokens, list):
        raise CorpusError(f"example {ex_id!r}: tokens must be a list")
    gold = obj.get("gold")
    re_struct = obj.get("re_struct")
    ex = Example(
        id=ex_id,
        tokens=tuple(str(t) for t in tokens),
        gold=None if gold is None else labels_from_obj(gold, schema, ex_id),
        re_struct=None if re_struct is None else _relation_from_obj(re_struct, ex_id),
    )
    validate_example(ex, schema)
    return ex


def example_to_obj(ex: Example) -> dict:
    return {
        "id": ex.id,
        "tokens": list(ex.tokens),
        "gold": None if ex.gold is None else labels_to_obj(ex.gold),
        "re_struct": None if ex.re_struct is None else ex.re_struct.to_obj(),
    }


def annotated_to_obj(ann: AnnotatedExample) -> dict:
    obj = example_to_obj(ann.example)
    obj["silver"] = labels_to_obj(ann.silver)
    obj["provenance"] = ann.provenance.value
    obj["annotator_meta"] = ann.annotator_meta
    return obj


def annotated_from_obj(obj: dict, schema: LabelSchema) -> AnnotatedExample:
    ex = example_from_obj(obj, schema)
    if "silver" not in obj or "provenance" not in obj:
        raise CorpusError(f"example {ex.id!r}: missing silver/provenance fields")
    silver = labels_from_obj(obj["silver"], schema, ex.id)
    validate_labels(silver, len(ex.tokens), schema, ex.id)
    return AnnotatedExample(
        example=ex,
        silver=silver,
        provenance=Provenance(obj["provenance"]),
        annotator_meta=dict(obj.get("annotator_meta") or {}),
    )


def _iter_jsonl(path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            yield lineno, obj


def _check_unique_ids(examples: Sequence[Example], path) -> None:
    seen = set()
    for ex in examples:
        if ex.id in seen:
            raise CorpusError(f"{path}: duplicate example id {ex.id!r}")
        seen.add(ex.id)


def load_jsonl(path, schema: LabelSchema) -> list[Example]:
    """Load and validate examples; order preserved, duplicate ids rejected."""
    examples = []
    for lineno, obj in _iter_jsonl(path):
        try:
            examples.append(example_from_obj(obj, schema))
        except CorpusError as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from None
    _check_unique_ids(examples, path)
    return examples


def load_annotated_jsonl(path, schema: LabelSchema) -> list[AnnotatedExample]:
    annotated = []
    for lineno, obj in _iter_jsonl(path):
        try:
            annotated.append(annotated_from_obj(obj, schema))
        except CorpusError as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from None
    _check_unique_ids([a.example for a in annotated], path)
    return annotated


def save_jsonl(examples: Iterable[Union[Example, AnnotatedExample]], path) -> None:
    """Write one JSON object per line; round-trips losslessly via load."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            for ex in examples:
                obj = annotated_to_obj(ex) if isinstance(ex, AnnotatedExample) else example_to_obj(ex)
                f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    except OSError as e:
        raise CorpusError(f"cannot write {path}: {e}") from None


# ---------------------------------------------------------------------------
# Splits


@dataclass
class DatasetSplits:
    """The four pools of the active loop, backed by a single example store.

    ``pool`` and ``labeled`` stay disjoint; ``demo`` and ``val`` reference
    gold-labeled examples (the same ids unless split separately).  Silver
    annotations for labeled ids live in ``annotations``.
    """

    store: dict[str, Example]
    pool: list[str]
    labeled: list[str]
    demo: list[str]
    val: list[str]
    annotations: dict[str, AnnotatedExample] = field(default_factory=dict)

    def __getitem__(self, ex_id: str) -> Example:
        return self.store[ex_id]

    def examples(self, ids: Sequence[str]) -> list[Example]:
        return [self.store[i] for i in ids]

    def pool_examples(self) -> list[Example]:
        return self.examples(self.pool)

    def demo_examples(self) -> list[Example]:
        return self.examples(self.demo)

    def val_examples(self) -> list[Example]:
        return self.examples(self.val)

    def labeled_annotated(self) -> list[AnnotatedExample]:
        """Annotated labeled examples, in labeled-list order."""
        return [self.annotations[i] for i in self.labeled if i in self.annotations]

    def unannotated_labeled(self) -> list[str]:
        return [i for i in self.labeled if i not in self.annotations]

    def merge_annotations(self, annotated: Sequence[AnnotatedExample]) -> None:
        """Register silver labels; moves pool ids into labeled as needed."""
        pool_set = set(self.pool)
        for ann in annotated:
            if ann.id not in self.store:
                raise CorpusError(f"annotation for unknown example {ann.id!r}")
            if ann.id in pool_set:
                pool_set.remove(ann.id)
                self.labeled.append(ann.id)
            elif ann.id not in self.labeled:
                raise CorpusError(f"annotation for id outside pool/labeled: {ann.id!r}")
            self.annotations[ann.id] = ann
        self.pool = [i for i in self.pool if i in pool_set]

    def return_to_pool(self, ids: Sequence[str]) -> None:
        """Move failed labeled ids (never annotated) back to the pool."""
        drop = set(ids)
        for i in ids:
            if i in self.annotations:
                raise CorpusError(f"cannot return annotated id {i!r} to pool")
        self.labeled = [i for i in self.labeled if i not in drop]
        self.pool.extend(i for i in ids if i in self.store)

    def check_partition(self, initial_pool_ids: set[str]) -> None:
        """pool and labeled partition the initial pool: nothing lost or duplicated."""
        pool_set, labeled_set = set(self.pool), set(self.labeled)
        if pool_set & labeled_set:
            raise CorpusError(f"pool/labeled overlap: {sorted(pool_set & labeled_set)[:5]}")
        if pool_set | labeled_set != initial_pool_ids:
            raise CorpusError("pool ∪ labeled no longer matches the initial pool")


def init_splits(examples: Sequence[Example], gold_subset_size: int,
                seed_labeled_size: int, rng_seed: int,
                separate_demo_val: bool = False) -> DatasetSplits:
    """Carve demo/val gold subsets and a seed labeled set out of the examples.

    By default demo and val alias the same gold subset; with
    ``separate_demo_val`` two disjoint gold subsets are drawn.  The seed
    labeled set is sampled uniformly without replacement from the remaining
    pool (its examples still need annotation).  Deterministic under
    ``rng_seed``.
    """
    _check_unique_ids(examples, "<init_splits>")
    rng = np.random.default_rng(rng_seed)

    gold_ids = [ex.id for ex in examples if ex.gold is not None]
    n_gold_needed = gold_subset_size * (2 if separate_demo_val else 1)
    if n_gold_needed > len(gold_ids):
        raise CorpusError(
            f"need {n_gold_needed} gold examples for demo/val, have {len(gold_ids)}"
        )
    picked = rng.choice(len(gold_ids), size=n_gold_needed, replace=False)
    picked_ids = [gold_ids[i] for i in picked]
    if separate_demo_val:
        demo = picked_ids[:gold_subset_size]
        val = picked_ids[gold_subset_size:]
    else:
        demo = list(picked_ids)
        val = list(picked_ids)

    reserved = set(picked_ids)
    pool = [ex.id for ex in examples if ex.id not in reserved]
    if seed_labeled_size > len(pool):
        raise CorpusError(f"seed labeled size {seed_labeled_size} exceeds pool of {len(pool)}")
    seed_pick = rng.choice(len(pool), size=seed_labeled_size, replace=False)
    seed_set = {pool[i] for i in seed_pick}
    labeled = [i for i in pool if i in seed_set]
    pool = [i for i in pool if i not in seed_set]

    if 2 * len(val) > len(pool):
        warnings.warn(
            f"validation set ({len(val)}) is not small relative to the pool ({len(pool)})",
            stacklevel=2,
        )
    return DatasetSplits(
        store={ex.id: ex for ex in examples},
        pool=pool,
        labeled=labeled,
        demo=demo,
        val=val,
    )
