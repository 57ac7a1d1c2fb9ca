"""Corpus ingestion and sentence-level instance generation.

Parses the three-file TSV corpus layout (abstracts, gold entity mentions,
gold relations), splits documents into sentences with a rule-based
boundary detector, and expands every co-sentence (chemical, gene) pair
into a labeled classification instance under one of two entity tagging
schemes:

* ``anonymize`` -- the target chemical/gene surface forms are replaced by
  the tokens ``DRUG`` / ``PROTEIN``; non-target chemicals and genes become
  ``DRUG_O`` / ``PROTEIN_O``.
* ``markers`` -- the target spans are wrapped in ``<DRUG-B>``/``<DRUG-E>``
  and ``<PROTEIN-B>``/``<PROTEIN-E>`` tags, surface text preserved.

Document text is ``title + "\\t" + abstract``; all character offsets refer
to that concatenation.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

# Positive relation labels in their stable order; integer codes are
# 1..13 in this order, NONE is 0.
POSITIVE_RELATION_LABELS = (
    "ACTIVATOR",
    "AGONIST",
    "AGONIST-ACTIVATOR",
    "AGONIST-INHIBITOR",
    "ANTAGONIST",
    "DIRECT-REGULATOR",
    "INDIRECT-DOWNREGULATOR",
    "INDIRECT-UPREGULATOR",
    "INHIBITOR",
    "PART-OF",
    "PRODUCT-OF",
    "SUBSTRATE",
    "SUBSTRATE_PRODUCT-OF",
)

N_CLASSES = 1 + len(POSITIVE_RELATION_LABELS)


class RelationType(enum.IntEnum):
    """14-way label space: 13 positive relation types plus NONE = 0."""

    NONE = 0
    ACTIVATOR = 1
    AGONIST = 2
    AGONIST_ACTIVATOR = 3
    AGONIST_INHIBITOR = 4
    ANTAGONIST = 5
    DIRECT_REGULATOR = 6
    INDIRECT_DOWNREGULATOR = 7
    INDIRECT_UPREGULATOR = 8
    INHIBITOR = 9
    PART_OF = 10
    PRODUCT_OF = 11
    SUBSTRATE = 12
    SUBSTRATE_PRODUCT_OF = 13

    @property
    def label(self) -> str:
        """External (file-format) spelling of the type."""
        if self is RelationType.NONE:
            return "NONE"
        return POSITIVE_RELATION_LABELS[self.value - 1]

    @classmethod
    def from_label(cls, label: str) -> "RelationType":
        try:
            return _LABEL_TO_TYPE[label]
        except KeyError:
            raise DataError(f"unknown relation type {label!r}") from None


_LABEL_TO_TYPE = {"NONE": RelationType.NONE}
_LABEL_TO_TYPE.update(
    {lab: RelationType(i + 1) for i, lab in enumerate(POSITIVE_RELATION_LABELS)}
)

POSITIVE_TYPES = tuple(RelationType(i) for i in range(1, N_CLASSES))


class EntityType(str, enum.Enum):
    CHEMICAL = "CHEMICAL"
    GENE = "GENE"


class SchemeKind(str, enum.Enum):
    """Entity tagging scheme applied to an instance's sentence."""

    ANONYMIZE = "anonymize"
    MARKERS = "markers"


@dataclass(frozen=True)
class Document:
    pmid: str
    title: str
    abstract: str

    @property
    def full_text(self) -> str:
        """Title and abstract joined by a single tab; offsets index this."""
        return self.title + "\t" + self.abstract


@dataclass(frozen=True)
class EntityMention:
    pmid: str
    eid: str
    etype: EntityType
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class RelationGold:
    pmid: str
    rtype: RelationType
    arg1: str  # chemical eid
    arg2: str  # gene eid


@dataclass(frozen=True)
class Sentence:
    pmid: str
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class SentenceInstance:
    """One (chemical, gene) candidate pair inside one sentence."""

    pmid: str
    sentence_idx: int
    chem: EntityMention
    gene: EntityMention
    label: RelationType
    tagged_text: str
    scheme: SchemeKind

    @property
    def pair_key(self) -> tuple[str, str, str]:
        return (self.pmid, self.chem.eid, self.gene.eid)


@dataclass
class CorpusBundle:
    """Parsed corpus: documents plus their gold mentions and relations."""

    documents: dict[str, Document]
    mentions: dict[str, list[EntityMention]]
    relations: list[RelationGold]

    def validate(self) -> None:
        """Assert offset fidelity for every mention in the bundle."""
        for pmid, mentions in self.mentions.items():
            doc = self.documents[pmid]
            text = doc.full_text
            for m in mentions:
                if not (0 <= m.start < m.end <= len(text)):
                    raise DataError(
                        f"{pmid}/{m.eid}: span [{m.start},{m.end}) outside document"
                    )
                if text[m.start : m.end] != m.surface:
                    raise DataError(
                        f"{pmid}/{m.eid}: span text {text[m.start:m.end]!r} "
                        f"!= surface {m.surface!r}"
                    )


# ---------------------------------------------------------------------------
# TSV parsing
# ---------------------------------------------------------------------------

def _read_tsv_lines(path: Path) -> Iterable[tuple[int, list[str]]]:
    """Yield (1-based line number, fields) for each non-empty line.

    Lines are '\\n'-terminated; a single trailing '\\r' is stripped so CRLF
    files are not silently misparsed into field content.
    """
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.endswith("\r"):
                line = line[:-1]
            if not line:
                continue
            yield lineno, line.split("\t")


_RAW_ENTITY_TYPES = {
    "CHEMICAL": EntityType.CHEMICAL,
    "GENE": EntityType.GENE,
    # Normalized/unnormalizable gene annotations collapse to GENE.
    "GENE-Y": EntityType.GENE,
    "GENE-N": EntityType.GENE,
}


def load_corpus(
    abstracts_path: str | Path,
    entities_path: str | Path,
    relations_path: str | Path | None = None,
) -> CorpusBundle:
    """Parse the abstracts/entities/relations TSV triple into a bundle.

    Every mention is validated against the document text (span equals the
    stored surface); relations with unresolvable or type-mismatched
    arguments raise. ``relations_path=None`` yields an unlabeled bundle.

    Raises:
        DataError: malformed line, span/text mismatch, or dangling
            relation argument, always naming file and line number.
    """
    abstracts_path = Path(abstracts_path)
    entities_path = Path(entities_path)

    documents: dict[str, Document] = {}
    for lineno, fields in _read_tsv_lines(abstracts_path):
        if len(fields) != 3:
            raise DataError(
                f"{abstracts_path}:{lineno}: expected 3 tab-separated fields, "
                f"got {len(fields)}"
            )
        pmid, title, abstract = fields
        if not pmid:
            raise DataError(f"{abstracts_path}:{lineno}: empty pmid")
        if pmid in documents:
            raise DataError(f"{abstracts_path}:{lineno}: duplicate pmid {pmid}")
        documents[pmid] = Document(pmid=pmid, title=title, abstract=abstract)

    mentions: dict[str, list[EntityMention]] = {pmid: [] for pmid in documents}
    seen_eids: set[tuple[str, str]] = set()
    for lineno, fields in _read_tsv_lines(entities_path):
        if len(fields) != 6:
            raise DataError(
                f"{entities_path}:{lineno}: expected 6 tab-separated fields, "
                f"got {len(fields)}"
            )
        pmid, eid, raw_type, start_s, end_s, surface = fields
        if pmid not in documents:
            raise DataError(f"{entities_path}:{lineno}: unknown pmid {pmid}")
        if raw_type not in _RAW_ENTITY_TYPES:
            raise DataError(
                f"{entities_path}:{lineno}: unknown entity type {raw_type!r}"
            )
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise DataError(
                f"{entities_path}:{lineno}: non-integer offsets "
                f"{start_s!r}/{end_s!r}"
            ) from None
        if (pmid, eid) in seen_eids:
            raise DataError(f"{entities_path}:{lineno}: duplicate id {pmid}/{eid}")
        seen_eids.add((pmid, eid))
        text = documents[pmid].full_text
        if not (0 <= start < end <= len(text)):
            raise DataError(
                f"{entities_path}:{lineno}: span [{start},{end}) outside "
                f"document {pmid} (length {len(text)})"
            )
        if text[start:end] != surface:
            raise DataError(
                f"{entities_path}:{lineno}: span text {text[start:end]!r} does "
                f"not match surface {surface!r}"
            )
        mentions[pmid].append(
            EntityMention(
                pmid=pmid,
                eid=eid,
                etype=_RAW_ENTITY_TYPES[raw_type],
                start=start,
                end=end,
                surface=surface,
            )
        )

    by_id = {(m.pmid, m.eid): m for ms in mentions.values() for m in ms}

    relations: list[RelationGold] = []
    if relations_path is not None:
        relations_path = Path(relations_path)
        for lineno, fields in _read_tsv_lines(relations_path):
            if len(fields) != 4:
                raise DataError(
                    f"{relations_path}:{lineno}: expected 4 tab-separated "
                    f"fields, got {len(fields)}"
                )
            pmid, rlabel, arg1_s, arg2_s = fields
            if pmid not in documents:
                raise DataError(f"{relations_path}:{lineno}: unknown pmid {pmid}")
            rtype = RelationType.from_label(rlabel)
            if rtype is RelationType.NONE:
                raise DataError(
                    f"{relations_path}:{lineno}: NONE is not a gold relation"
                )
            if not arg1_s.startswith("Arg1:") or not arg2_s.startswith("Arg2:"):
                raise DataError(
                    f"{relations_path}:{lineno}: arguments must be "
                    f"'Arg1:Tn' / 'Arg2:Tn', got {arg1_s!r} {arg2_s!r}"
                )
            arg1, arg2 = arg1_s[5:], arg2_s[5:]
            for eid, want in ((arg1, EntityType.CHEMICAL), (arg2, EntityType.GENE)):
                m = by_id.get((pmid, eid))
                if m is None:
                    raise DataError(
                        f"{relations_path}:{lineno}: dangling argument "
                        f"{pmid}/{eid}"
                    )
                if m.etype is not want:
                    raise DataError(
                        f"{relations_path}:{lineno}: argument {pmid}/{eid} is "
                        f"{m.etype.value}, expected {want.value}"
                    )
            relations.append(RelationGold(pmid=pmid, rtype=rtype, arg1=arg1, arg2=arg2))

    bundle = CorpusBundle(documents=documents, mentions=mentions, relations=relations)
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# Sentence splitting
# ---------------------------------------------------------------------------

SPLITTER_VERSION = "1"

# Tokens ending in '.' after which no boundary is placed.  Matched
# case-insensitively against the word immediately preceding the period.
ABBREVIATIONS = frozenset(
    {
        "approx.",
        "ca.",
        "cf.",
        "e.g.",
        "i.e.",
        "etc.",
        "et al.",
        "al.",
        "fig.",
        "figs.",
        "ref.",
        "refs.",
        "no.",
        "vs.",
        "resp.",
        "inc.",
        "dr.",
        "prof.",
        "st.",
        "spp.",
        "sp.",
        "subsp.",
        "min.",
        "max.",
    }
)

_TERMINALS = frozenset(".!?")


def _preceding_word(text: str, dot_pos: int) -> str:
    """Word (including the terminal char) ending at ``dot_pos`` inclusive."""
    i = dot_pos
    while i > 0 and not text[i - 1].isspace():
        i -= 1
    return text[i : dot_pos + 1]


def _boundary_positions(text: str) -> list[int]:
    """End-exclusive split offsets using the versioned rule set.

    Rules (v1): split after a terminal {.,!,?} that is followed by
    whitespace and then an uppercase letter or digit, unless the terminal
    sits inside an open parenthesis or the preceding word (plus the two
    preceding words, for 'et al.') is a known abbreviation.  The tab that
    separates title from abstract is always a boundary.
    """
    bounds: list[int] = []
    depth = 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
            continue
        if ch == ")":
            depth = max(0, depth - 1)
            continue
        if ch == "\t":
            bounds.append(i + 1)
            continue
        if ch not in _TERMINALS:
            continue
        if depth > 0:
            continue
        # Must be followed by whitespace then an uppercase letter or digit.
        j = i + 1
        if j >= n or not text[j].isspace():
            continue
        while j < n and text[j].isspace():
            j += 1
        if j >= n or not (text[j].isupper() or text[j].isdigit()):
            continue
        if ch == ".":
            word = _preceding_word(text, i).lower()
            if word in ABBREVIATIONS:
                continue
            # Two-word abbreviations ("et al.").
            prev_end = i - len(word)
            if prev_end > 0:
                prev = _preceding_word(text, prev_end - 1).lower()
                if (prev + " " + word) in ABBREVIATIONS:
                    continue
        bounds.append(i + 1)
    return bounds


def _trim_segment(text: str, start: int, end: int) -> tuple[int, int] | None:
    """Shrink [start, end) to its non-whitespace extent; None if blank."""
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    if start >= end:
        return None
    return start, end


def split_sentences(
    doc: Document, mentions: Sequence[EntityMention] = ()
) -> list[Sentence]:
    """Split a document into sentences; never bisect a gold mention.

    Boundaries come from the rule set in :func:`_boundary_positions`; any
    boundary that would cut through a mention span is removed, merging the
    adjacent sentences. The result is ordered, non-overlapping, and covers
    every non-whitespace character of ``doc.full_text``.
    """
    text = doc.full_text
    bounds = _boundary_positions(text)

    # A boundary at b splits spans [., b) / [b, .); drop it if some mention
    # starts before it and ends after it.
    kept = [
        b
        for b in bounds
        if not any(m.start < b < m.end for m in mentions)
    ]

    sentences: list[Sentence] = []
    prev = 0
    for b in kept + [len(text)]:
        trimmed = _trim_segment(text, prev, b)
        if trimmed is not None:
            s, e = trimmed
            sentences.append(Sentence(pmid=doc.pmid, start=s, end=e, text=text[s:e]))
        prev = b
    return sentences


# ---------------------------------------------------------------------------
# Tagging schemes
# ---------------------------------------------------------------------------

class TargetSpanOverlap(DataError):
    """The chemical and gene target spans of a pair overlap."""


def _check_within(sentence: Sentence, mention: EntityMention) -> None:
    if not (sentence.start <= mention.start and mention.end <= sentence.end):
        raise DataError(
            f"{mention.pmid}/{mention.eid}: span [{mention.start},{mention.end}) "
            f"outside sentence [{sentence.start},{sentence.end})"
        )


def _spans_overlap(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start < b_end and b_start < a_end


def tag_scheme1(
    sentence: Sentence,
    chem: EntityMention,
    gene: EntityMention,
    others: Sequence[EntityMention] = (),
) -> str:
    """Anonymizing scheme: targets become DRUG/PROTEIN, others DRUG_O/PROTEIN_O.

    Replacements are applied right-to-left so earlier character offsets
    stay valid. A non-target mention whose span overlaps a target span (or
    an already-replaced other mention) is left unreplaced; the target pair
    always wins. Overlapping *target* spans raise
    :class:`TargetSpanOverlap` -- such pairs are untaggable.
    """
    _check_within(sentence, chem)
    _check_within(sentence, gene)
    if _spans_overlap(chem.start, chem.end, gene.start, gene.end):
        raise TargetSpanOverlap(
            f"{sentence.pmid}: target spans {chem.eid}/{gene.eid} overlap"
        )

    replacements = [(chem.start, chem.end, "DRUG"), (gene.start, gene.end, "PROTEIN")]
    target_spans = [(chem.start, chem.end), (gene.start, gene.end)]
    others_sorted = sorted(others, key=lambda m: (m.start, m.end, m.eid))
    applied_spans = list(target_spans)
    for m in others_sorted:
        if m.eid in (chem.eid, gene.eid):
            continue
        if not (sentence.start <= m.start and m.end <= sentence.end):
            continue
        if any(_spans_overlap(m.start, m.end, s, e) for s, e in applied_spans):
            continue
        tag = "DRUG_O" if m.etype is EntityType.CHEMICAL else "PROTEIN_O"
        replacements.append((m.start, m.end, tag))
        applied_spans.append((m.start, m.end))

    out = sentence.text
    base = sentence.start
    for start, end, tag in sorted(replacements, key=lambda r: r[0], reverse=True):
        out = out[: start - base] + tag + out[end - base :]
    return out


def tag_scheme2(sentence: Sentence, chem: EntityMention, gene: EntityMention) -> str:
    """Marker scheme: wrap targets in begin/end tags, keep all surface text.

    The chemical span becomes ``<DRUG-B> span <DRUG-E>``, the gene span
    ``<PROTEIN-B> span <PROTEIN-E>``. Non-target mentions are untouched.
    Overlapping target spans raise :class:`TargetSpanOverlap`.
    """
    _check_within(sentence, chem)
    _check_within(sentence, gene)
    if _spans_overlap(chem.start, chem.end, gene.start, gene.end):
        raise TargetSpanOverlap(
            f"{sentence.pmid}: target spans {chem.eid}/{gene.eid} overlap"
        )

    insertions = [
        (chem.start, "<DRUG-B> "),
        (chem.end, " <DRUG-E>"),
        (gene.start, "<PROTEIN-B> "),
        (gene.end, " <PROTEIN-E>"),
    ]
    out = sentence.text
    base = sentence.start
    # Right-to-left so earlier offsets stay valid; at equal offsets the
    # end-marker of the left entity must land before the begin-marker of
    # the right one, which reverse position-sort already guarantees for
    # non-overlapping spans.
    for pos, marker in sorted(insertions, key=lambda it: it[0], reverse=True):
        cut = pos - base
        out = out[:cut] + marker + out[cut:]
    return out


# ---------------------------------------------------------------------------
# Instance generation
# ---------------------------------------------------------------------------

_EID_RE = re.compile(r"^([A-Za-z]*)(\d+)$")


def eid_sort_key(eid: str) -> tuple[str, int] | tuple[str, int, str]:
    """Natural ordering for local entity ids: T2 before T10."""
    m = _EID_RE.match(eid)
    if m:
        return (m.group(1), int(m.group(2)))
    return ("", -1, eid)


@dataclass
class InstanceStats:
    n_documents: int = 0
    n_sentences: int = 0
    n_instances: int = 0
    n_positive: int = 0
    n_cross_sentence_dropped: int = 0
    n_overlap_skipped: int = 0
    n_multilabel_pairs: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass
class InstanceGenerationResult:
    instances: list[SentenceInstance]
    stats: InstanceStats

    def __iter__(self):
        return iter(self.instances)

    def __len__(self) -> int:
        return len(self.instances)


def generate_instances(
    bundle: CorpusBundle, scheme: SchemeKind
) -> InstanceGenerationResult:
    """Expand every co-sentence (chemical, gene) pair into an instance.

    A pair's label comes from the gold relation set if one links it,
    otherwise NONE; a pair with several gold labels yields one instance
    per label (duplicated inputs). Gold relations whose arguments never
    share a sentence are dropped and counted, as are pairs whose target
    spans overlap (untaggable). Output order is deterministic: sorted by
    (pmid, sentence index, chem eid, gene eid).
    """
    gold: dict[tuple[str, str, str], list[RelationType]] = {}
    for rel in bundle.relations:
        gold.setdefault((rel.pmid, rel.arg1, rel.arg2), []).append(rel.rtype)
    for labels in gold.values():
        labels.sort()

    stats = InstanceStats(n_documents=len(bundle.documents))
    instances: list[SentenceInstance] = []
    matched_pairs: set[tuple[str, str, str]] = set()

    for pmid in sorted(bundle.documents):
        doc = bundle.documents[pmid]
        doc_mentions = bundle.mentions.get(pmid, [])
        sentences = split_sentences(doc, doc_mentions)
        stats.n_sentences += len(sentences)

        for sent_idx, sent in enumerate(sentences):
            within = [
                m
                for m in doc_mentions
                if sent.start <= m.start and m.end <= sent.end
            ]
            chems = sorted(
                (m for m in within if m.etype is EntityType.CHEMICAL),
                key=lambda m: eid_sort_key(m.eid),
            )
            genes = sorted(
                (m for m in within if m.etype is EntityType.GENE),
                key=lambda m: eid_sort_key(m.eid),
            )
            for chem in chems:
                for gene in genes:
                    key = (pmid, chem.eid, gene.eid)
                    try:
                        if scheme is SchemeKind.ANONYMIZE:
                            others = [
                                m
                                for m in within
                                if m.eid not in (chem.eid, gene.eid)
                            ]
                            tagged = tag_scheme1(sent, chem, gene, others)
                        else:
                            tagged = tag_scheme2(sent, chem, gene)
                    except TargetSpanOverlap:
                        stats.n_overlap_skipped += 1
                        logger.warning(
                            "skipping pair %s/%s-%s: overlapping target spans",
                            pmid,
                            chem.eid,
                            gene.eid,
                        )
                        continue
                    labels = gold.get(key, [RelationType.NONE])
                    if key in gold:
                        matched_pairs.add(key)
                        if len(labels) > 1:
                            stats.n_multilabel_pairs += 1
                    for label in labels:
                        instances.append(
                            SentenceInstance(
                                pmid=pmid,
                                sentence_idx=sent_idx,
                                chem=chem,
                                gene=gene,
                                label=label,
                                tagged_text=tagged,
                                scheme=scheme,
                            )
                        )
                        if label is not RelationType.NONE:
                            stats.n_positive += 1

    dropped = set(gold) - matched_pairs
    stats.n_cross_sentence_dropped = sum(len(gold[k]) for k in dropped)
    if stats.n_cross_sentence_dropped:
        logger.warning(
            "dropped %d gold relation(s) whose arguments never share a sentence",
            stats.n_cross_sentence_dropped,
        )
    stats.n_instances = len(instances)
    return InstanceGenerationResult(instances=instances, stats=stats)
