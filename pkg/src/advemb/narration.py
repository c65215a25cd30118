"""Extraction of (action, adverb, weak timestamp) records from tagged narrations.

The input is already POS- and dependency-tagged (one token per line:
sentence index, token index, text, POS tag, dependency label, head index,
timestamp).  An extraction is one adverb token whose ``advmod`` arc points
at a verb: past-tense (VBD) and third-person-singular (VBZ) verbs are
excluded, the adverb must be allowlisted, and the verb's cluster must not
be blocklisted.  The record's weak timestamp is the mean of the verb and
adverb token timestamps.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import AnnotationRecord, save_annotations
from .errors import ConfigError, DocumentError
from .vocab import build_adverb_vocabulary

log = logging.getLogger(__name__)

DEFAULT_ADVERB_PAIRS = [("quickly", "slowly"), ("finely", "coarsely"),
                        ("partially", "completely")]
DEFAULT_EXCLUDED_TAGS = frozenset({"VBD", "VBZ"})


@dataclass(frozen=True)
class TaggedToken:
    text: str
    pos_tag: str
    dep_label: str
    head_index: int  # within the sentence; self-index for the root
    timestamp: float


@dataclass
class ExtractionRules:
    excluded_verb_tags: frozenset[str] = DEFAULT_EXCLUDED_TAGS
    verb_cluster_map: dict[str, str] = field(default_factory=dict)
    action_blocklist: frozenset[str] = frozenset()
    adverb_allowlist: frozenset[str] = frozenset(
        a for pair in DEFAULT_ADVERB_PAIRS for a in pair)
    antonym_pairs: list[tuple[str, str]] = field(
        default_factory=lambda: list(DEFAULT_ADVERB_PAIRS))

    def __post_init__(self):
        # fails if the pairs are not a fixed-point-free involution
        build_adverb_vocabulary(self.antonym_pairs)
        unpaired = self.adverb_allowlist - {a for p in self.antonym_pairs for a in p}
        if unpaired:
            raise ConfigError(
                f"allowlisted adverbs without an antonym pair: {', '.join(sorted(unpaired))}")


@dataclass(frozen=True)
class PairExtraction:
    video_id: str
    verb: TaggedToken
    adverb: TaggedToken
    action: str
    adverb_name: str
    weak_timestamp: float


def cluster_verb(surface: str, rules: ExtractionRules) -> str:
    """Cluster name for a surface verb; unmapped verbs fall through lowercased."""
    folded = surface.lower()
    return rules.verb_cluster_map.get(folded, folded)


def load_rules(path) -> ExtractionRules:
    """Rules from an INI file with [clusters], [adverbs], [actions], [antonyms]."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read rules file {path}")
    known = {"clusters", "adverbs", "actions", "antonyms", "tags"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"{path}: unknown rules sections: {', '.join(sorted(unknown))}")

    cluster_map: dict[str, str] = {}
    if cp.has_section("clusters"):
        for cluster, surfaces in cp.items("clusters"):
            for surface in surfaces.split():
                cluster_map[surface.lower()] = cluster.lower()

    pairs = list(DEFAULT_ADVERB_PAIRS)
    if cp.has_section("antonyms"):
        pairs = [(a.lower(), b.strip().lower()) for a, b in cp.items("antonyms")]

    allow = frozenset(a for p in pairs for a in p)
    if cp.has_option("adverbs", "allow"):
        allow = frozenset(w.lower() for w in cp.get("adverbs", "allow").split())

    block = frozenset()
    if cp.has_option("actions", "block"):
        block = frozenset(w.lower() for w in cp.get("actions", "block").split())

    excluded = DEFAULT_EXCLUDED_TAGS
    if cp.has_option("tags", "excluded_verb_tags"):
        excluded = frozenset(cp.get("tags", "excluded_verb_tags").split())

    return ExtractionRules(excluded_verb_tags=excluded, verb_cluster_map=cluster_map,
                           action_blocklist=block, adverb_allowlist=allow,
                           antonym_pairs=pairs)


def parse_tagged_file(path) -> list[tuple[str, list[list[TaggedToken]]]]:
    """Documents from one tagged-token file.

    The file's stem is the video id; blank lines separate documents (all
    belonging to that video); `#` lines are comments.  Within a document,
    tokens are grouped into sentences by their sentence index.
    """
    path = Path(path)
    video_id = path.stem
    docs: list[list[list[TaggedToken]]] = []
    current: dict[int, dict[int, TaggedToken]] = {}

    def flush():
        if current:
            doc = [
                [sent[t] for t in sorted(sent)]
                for _, sent in sorted(current.items())
            ]
            docs.append(doc)
            current.clear()

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                flush()
                continue
            if line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 7:
                raise DocumentError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            try:
                sent_i, tok_i = int(parts[0]), int(parts[1])
                head = int(parts[5])
                ts = float(parts[6])
            except ValueError as exc:
                raise DocumentError(f"{path}:{lineno}: {exc}") from None
            current.setdefault(sent_i, {})
            if tok_i in current[sent_i]:
                raise DocumentError(f"{path}:{lineno}: duplicate token index {tok_i} "
                                    f"in sentence {sent_i}")
            current[sent_i][tok_i] = TaggedToken(parts[2], parts[3], parts[4], head, ts)
    flush()

    for doc in docs:
        last_ts = -float("inf")
        for si, sent in enumerate(doc):
            for tok in sent:
                if not 0 <= tok.head_index < len(sent):
                    raise DocumentError(
                        f"{path}: sentence {si}: head index {tok.head_index} out of "
                        f"range (length {len(sent)})")
                if tok.timestamp < last_ts:
                    raise DocumentError(
                        f"{path}: sentence {si}: timestamps decrease within the document")
                last_ts = tok.timestamp
    return [(video_id, doc) for doc in docs]


def extract_pairs(video_id: str, doc: list[list[TaggedToken]],
                  rules: ExtractionRules) -> list[PairExtraction]:
    """Apply the extraction rules to one document."""
    out = []
    for sent in doc:
        for tok in sent:
            if tok.dep_label != "advmod":
                continue
            head = sent[tok.head_index]
            if head is tok:
                continue
            if not head.pos_tag.startswith("VB"):
                continue
            if head.pos_tag in rules.excluded_verb_tags:
                continue
            adverb = tok.text.lower()
            if adverb not in rules.adverb_allowlist:
                continue
            action = cluster_verb(head.text, rules)
            if action in rules.action_blocklist:
                continue
            out.append(PairExtraction(
                video_id, head, tok, action, adverb,
                (head.timestamp + tok.timestamp) / 2.0))
    return out


def extract_directory(in_dir, rules: ExtractionRules) -> list[PairExtraction]:
    """Extractions from every .tok file in a directory, in sorted file order."""
    in_dir = Path(in_dir)
    files = sorted(in_dir.glob("*.tok"))
    if not files:
        raise DocumentError(f"no .tok files in {in_dir}")
    out: list[PairExtraction] = []
    for f in files:
        for video_id, doc in parse_tagged_file(f):
            out.extend(extract_pairs(video_id, doc, rules))
    return out


def emit_annotations(extractions: list[PairExtraction], out_path,
                     header_lines: list[str] | None = None) -> tuple[int, int]:
    """Write the annotation file; returns (written, duplicates dropped).

    Records are deduplicated on (video, timestamp, action, adverb) and
    ordered by (video id, timestamp, action, adverb).
    """
    seen = set()
    records = []
    dups = 0
    for e in extractions:
        key = (e.video_id, e.weak_timestamp, e.action, e.adverb_name)
        if key in seen:
            dups += 1
            continue
        seen.add(key)
        records.append(AnnotationRecord(e.video_id, e.action, e.adverb_name,
                                        e.weak_timestamp))
    records.sort(key=lambda r: (r.video_id, r.timestamp, r.action, r.adverb))
    save_annotations(out_path, records, header_lines)
    if dups:
        log.info("dropped %d duplicate extractions", dups)
    return len(records), dups
