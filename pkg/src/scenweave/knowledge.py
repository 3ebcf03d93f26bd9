"""Knowledge base loading and lexical retrieval.

Three corpora ground scenario synthesis: traffic regulations, license-test
question/answer pairs, and pre-crash typologies. Retrieval is cosine
similarity over TF-IDF vectors built here (raw term counts, smoothed idf)
so scores are reproducible to the bit across runs and platforms.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional

import numpy as np

SOURCES = ("precrash", "regulations", "license")
# Tie-break priority when scores are equal: crash typologies first, then
# regulations, then license-test items.
_SOURCE_RANK = {name: i for i, name in enumerate(SOURCES)}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


# Slot groups a typology record must define so the template backend can
# sample every field of the semantic tuple from it.
SLOT_GROUPS = ("classes", "placements", "behaviors", "road_types", "lights")


@dataclass(frozen=True)
class KnowledgeEntry:
    """One retrievable document: keyword tags plus, for typologies, a slot-set."""

    id: str
    source: str
    text: str
    tags: tuple = ()
    slots: dict = field(default_factory=dict)

    def tag(self, key: str) -> tuple[str, ...]:
        return tuple(self.slots.get(key, ()))


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _parse_slots(raw: str, where: str) -> dict:
    slots: dict[str, tuple] = {}
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"malformed slot group {part!r} in {where}")
        slots[key.strip()] = tuple(v.strip() for v in value.split(",") if v.strip())
    return slots


def parse_kb(text: str, source: str) -> list[KnowledgeEntry]:
    """Parse one record per line: ``source|id|tags|text[|slots]``.

    Blank lines and ``#`` comments are skipped. The slots field holds
    ``;``-separated ``group=a,b`` pairs and is required on typology records,
    which must define every group in SLOT_GROUPS.
    """
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) not in (4, 5):
            raise ValueError(f"knowledge record needs 4 or 5 fields, got {len(parts)} "
                             f"(line {lineno} of source {source!r})")
        rec_source, rec_id, raw_tags, body = parts[:4]
        if rec_source != source:
            raise ValueError(f"record source {rec_source!r} does not match file source "
                             f"{source!r} (line {lineno})")
        if not rec_id or not body:
            raise ValueError(f"knowledge record missing id/text (line {lineno} of {source!r})")
        tags = tuple(t.strip() for t in raw_tags.split(",") if t.strip())
        slots = _parse_slots(parts[4], f"{source}:{rec_id}") if len(parts) == 5 else {}
        if source == "precrash":
            missing = [g for g in SLOT_GROUPS if not slots.get(g)]
            if missing:
                raise ValueError(f"typology {rec_id!r} missing slot groups: {missing}")
        entries.append(KnowledgeEntry(id=rec_id, source=source, text=body,
                                      tags=tags, slots=slots))
    return entries


def _read_data(name: str) -> str:
    return resources.files("scenweave.data").joinpath(name).read_text(encoding="utf-8")


def load_knowledge_base() -> list[KnowledgeEntry]:
    """Load the three bundled corpora in deterministic order."""
    entries = []
    entries += parse_kb(_read_data("precrash.kb"), "precrash")
    entries += parse_kb(_read_data("regulations.kb"), "regulations")
    entries += parse_kb(_read_data("license_test.kb"), "license")
    return entries


class TfidfIndex:
    """TF-IDF index: raw tf, idf = ln((1 + n) / (1 + df)) + 1, l2 rows."""

    def __init__(self, entries: Iterable[KnowledgeEntry]):
        self.entries = list(entries)
        if not self.entries:
            raise ValueError("cannot index an empty knowledge base")
        docs = [tokenize(e.text) for e in self.entries]
        vocab = sorted({tok for doc in docs for tok in doc})
        self.vocab = {tok: j for j, tok in enumerate(vocab)}
        n = len(docs)
        df = np.zeros(len(vocab))
        for doc in docs:
            for tok in set(doc):
                df[self.vocab[tok]] += 1
        self.idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
        rows = np.zeros((n, len(vocab)))
        for i, doc in enumerate(docs):
            for tok in doc:
                rows[i, self.vocab[tok]] += 1.0
        rows *= self.idf
        norms = np.linalg.norm(rows, axis=1)
        norms[norms == 0] = 1.0
        self.matrix = rows / norms[:, None]

    def vectorize(self, text: str) -> np.ndarray:
        vec = np.zeros(len(self.vocab))
        for tok in tokenize(text):
            j = self.vocab.get(tok)
            if j is not None:
                vec[j] += 1.0
        vec *= self.idf
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def scores(self, query: str) -> np.ndarray:
        return self.matrix @ self.vectorize(query)

    def retrieve(self, query: str, k: int = 5,
                 source: Optional[str] = None) -> list[tuple[KnowledgeEntry, float]]:
        """Top-k entries by cosine; ties broken by source priority then id."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        scores = self.scores(query)
        order = sorted(range(len(self.entries)),
                       key=lambda i: (-scores[i],
                                      _SOURCE_RANK.get(self.entries[i].source, len(SOURCES)),
                                      self.entries[i].id))
        picked = []
        for i in order:
            entry = self.entries[i]
            if source is not None and entry.source != source:
                continue
            picked.append((entry, float(scores[i])))
            if len(picked) == k:
                break
        return picked


def retrieve(entries: list[KnowledgeEntry], query: str, k: int = 5,
             source: Optional[str] = None) -> list[tuple[KnowledgeEntry, float]]:
    return TfidfIndex(entries).retrieve(query, k=k, source=source)
