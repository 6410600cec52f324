"""Corpus service: corpus and lexicon files, sentence splitting, and document timelines."""
import json
import logging
import os
import re
from datetime import date
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from config import BUILTIN_LEXICONS, LEXICON_DIR
from models.corpus import (
    DRUG_PLACEHOLDER,
    OTHER_DRUG_PLACEHOLDER,
    CondensedDocument,
    DateStamp,
    DocumentTimeline,
    DrugLexiconEntry,
    Lexicon,
    PatientDrugExample,
    RawDocument,
    RegimenLabel,
)
from models.prediction import DocLabel

logger = logging.getLogger(__name__)

# Tokens ending in "." that do not end a sentence
ABBREVIATIONS = frozenset({
    "dr", "mr", "mrs", "ms", "mg", "mcg", "ml", "vs", "approx", "no", "pt", "pts",
    "e.g", "i.e", "etc", "st", "jr", "sr", "prof", "inc", "fig", "wk", "wks", "yr", "yrs",
})

_SENTENCE_BOUNDARY = re.compile(r"[.!?](?=\s+[A-Z0-9])")
_TRAILING_WORD = re.compile(r"([A-Za-z][A-Za-z.]*)$")
# "DRUG-related" is a mention, the tail of "OTHER-DRUG" is not
_DRUG_TOKEN = re.compile(r"(?<!\w)(?<!OTHER-)" + DRUG_PLACEHOLDER + r"(?!\w)")
_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class CorpusFormatError(ValueError):
    """A corpus line that cannot be parsed or violates an invariant."""

    def __init__(self, line_number: int, field: str, message: str):
        self.line_number = line_number
        self.field = field
        super().__init__(f"line {line_number}: field '{field}': {message}")


# --- lexicons ---------------------------------------------------------------

def _entry_from_dict(data: Dict) -> DrugLexiconEntry:
    return DrugLexiconEntry(canonical_name=data["canonical_name"], synonyms=tuple(data["synonyms"]))


def _entry_to_dict(entry: DrugLexiconEntry) -> Dict:
    return {"canonical_name": entry.canonical_name, "synonyms": list(entry.synonyms)}


def load_lexicon(name_or_path: str) -> Lexicon:
    """Load a built-in lexicon ('rcc', 'nsclc') or a lexicon JSON file."""
    if name_or_path.lower() in BUILTIN_LEXICONS:
        path = os.path.join(LEXICON_DIR, f"{name_or_path.lower()}.json")
    else:
        path = name_or_path
    if not os.path.exists(path):
        raise FileNotFoundError(f"Lexicon file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    try:
        lexicon = Lexicon(
            name=data.get("name", os.path.splitext(os.path.basename(path))[0]),
            drugs=tuple(_entry_from_dict(d) for d in data["drugs"]),
            common_drugs=tuple(_entry_from_dict(d) for d in data.get("common_drugs", [])),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"Malformed lexicon file {path}: {e}")
    if not lexicon.drugs:
        raise ValueError(f"Lexicon {path} has no drugs")
    logger.debug(f"Loaded lexicon '{lexicon.name}' with {len(lexicon.drugs)} drugs from {path}")
    return lexicon


# --- corpus file I/O --------------------------------------------------------

def _parse_date(value, line_number: int, field: str) -> DateStamp:
    if not isinstance(value, str) or not _ISO_DATE.match(value):
        raise CorpusFormatError(line_number, field, f"expected a YYYY-MM-DD date, got {value!r}")
    try:
        return date.fromisoformat(value)
    except ValueError as e:
        raise CorpusFormatError(line_number, field, f"invalid date {value!r}: {e}")


def _optional_date(value, line_number: int, field: str) -> Optional[DateStamp]:
    return None if value is None else _parse_date(value, line_number, field)


def mentions_drug(text: str, drug: DrugLexiconEntry) -> bool:
    return _surface_pattern(tuple(s.casefold() for s in drug.synonyms)).search(text) is not None


def example_from_record(record: Dict, line_number: int = 0) -> PatientDrugExample:
    """Build a validated example from a decoded corpus record."""
    if not isinstance(record, dict):
        raise CorpusFormatError(line_number, "<record>", "expected an object")
    for field in ("patient_id", "drug", "documents"):
        if field not in record:
            raise CorpusFormatError(line_number, field, "missing")

    patient_id = record["patient_id"]
    if not isinstance(patient_id, str) or not patient_id:
        raise CorpusFormatError(line_number, "patient_id", "expected a non-empty string")

    drug_data = record["drug"]
    try:
        drug = _entry_from_dict(drug_data)
    except (KeyError, TypeError) as e:
        raise CorpusFormatError(line_number, "drug", f"malformed entry ({e})")
    except ValueError as e:
        raise CorpusFormatError(line_number, "drug", str(e))

    if not isinstance(record["documents"], list):
        raise CorpusFormatError(line_number, "documents", "expected a list")
    documents = []
    for i, doc in enumerate(record["documents"]):
        if not isinstance(doc, dict) or "timestamp" not in doc or "text" not in doc:
            raise CorpusFormatError(line_number, f"documents[{i}]", "expected {timestamp, text}")
        timestamp = _parse_date(doc["timestamp"], line_number, f"documents[{i}].timestamp")
        if not isinstance(doc["text"], str):
            raise CorpusFormatError(line_number, f"documents[{i}].text", "expected a string")
        try:
            documents.append(RawDocument(timestamp=timestamp, text=doc["text"]))
        except ValueError as e:
            raise CorpusFormatError(line_number, f"documents[{i}].text", str(e))

    gold = None
    if record.get("gold") is not None:
        gold_data = record["gold"]
        if not isinstance(gold_data, dict) or not isinstance(gold_data.get("taken"), bool):
            raise CorpusFormatError(line_number, "gold.taken", "expected a boolean")
        try:
            gold = RegimenLabel(
                taken=gold_data["taken"],
                start=_optional_date(gold_data.get("start"), line_number, "gold.start"),
                end=_optional_date(gold_data.get("end"), line_number, "gold.end"),
            )
        except CorpusFormatError:
            raise
        except ValueError as e:
            raise CorpusFormatError(line_number, "gold", str(e))

    if not any(mentions_drug(doc.text, drug) for doc in documents):
        raise CorpusFormatError(line_number, "documents", f"no document mentions {drug.canonical_name}")

    return PatientDrugExample(patient_id=patient_id, drug=drug, documents=tuple(documents), gold=gold)


def example_to_record(example: PatientDrugExample) -> Dict:
    record = {
        "patient_id": example.patient_id,
        "drug": _entry_to_dict(example.drug),
        "documents": [{"timestamp": d.timestamp.isoformat(), "text": d.text} for d in example.documents],
    }
    if example.gold is not None:
        record["gold"] = {
            "taken": example.gold.taken,
            "start": example.gold.start.isoformat() if example.gold.start else None,
            "end": example.gold.end.isoformat() if example.gold.end else None,
        }
    return record


def load_corpus(path: str) -> List[PatientDrugExample]:
    """Read a corpus file: one JSON record per line, UTF-8."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Corpus file not found: {path}")
    examples = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                logger.warning(f"Rejected corpus line {line_number}: {e}")
                raise CorpusFormatError(line_number, "<record>", f"invalid JSON ({e.msg})")
            try:
                examples.append(example_from_record(record, line_number))
            except CorpusFormatError as e:
                logger.warning(f"Rejected corpus line {line_number}: {e}")
                raise
    logger.info(f"Loaded {len(examples)} examples from {path}")
    return examples


def save_corpus(examples: Iterable[PatientDrugExample], path: str) -> int:
    """Write examples in the corpus format; returns the number of records."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for example in examples:
            handle.write(json.dumps(example_to_record(example), ensure_ascii=False) + "\n")
            count += 1
    logger.info(f"Wrote {count} examples to {path}")
    return count


# --- preprocessing ----------------------------------------------------------

def _ends_with_abbreviation(prefix: str) -> bool:
    match = _TRAILING_WORD.search(prefix)
    return match is not None and match.group(1).lower() in ABBREVIATIONS


def split_sentences(text: str) -> List[str]:
    """Split on newlines and on . ! ? followed by whitespace and an uppercase letter or digit."""
    sentences = []
    for line in text.splitlines():
        start = 0
        for match in _SENTENCE_BOUNDARY.finditer(line):
            if match.group() == "." and _ends_with_abbreviation(line[start:match.start()]):
                continue
            piece = line[start:match.end()].strip()
            if piece:
                sentences.append(piece)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


@lru_cache(maxsize=4096)
def _surface_pattern(surfaces: Tuple[str, ...]) -> "re.Pattern":
    # Longest surfaces first so multi-word brand names win over their prefixes
    ordered = sorted(set(surfaces), key=lambda s: (-len(s), s))
    return re.compile(r"(?<!\w)(?:" + "|".join(re.escape(s) for s in ordered) + r")(?!\w)", re.IGNORECASE)


class _Substituter:
    """Replaces target synonyms with DRUG and other-drug synonyms with OTHER-DRUG in one pass."""

    def __init__(self, drug: DrugLexiconEntry, other_drugs: Sequence[DrugLexiconEntry]):
        self.replacements: Dict[str, str] = {}
        for entry in other_drugs:
            for surface in entry.synonyms:
                self.replacements[surface.casefold()] = OTHER_DRUG_PLACEHOLDER
        # the target wins when a surface is shared
        for surface in drug.synonyms:
            self.replacements[surface.casefold()] = DRUG_PLACEHOLDER
        self.pattern = _surface_pattern(tuple(sorted(self.replacements)))

    def __call__(self, sentence: str) -> str:
        return self.pattern.sub(lambda m: self.replacements[m.group(0).casefold()], sentence)


def has_drug_placeholder(sentence: str) -> bool:
    return _DRUG_TOKEN.search(sentence) is not None


def build_timeline(example: PatientDrugExample, other_drugs: Sequence[DrugLexiconEntry] = ()) -> DocumentTimeline:
    """Condense an example's documents into its document timeline.

    Sentences are placeholder-substituted before the global duplicate check so
    copy-forwarded text matches across documents.
    """
    substitute = _Substituter(example.drug, other_drugs)
    seen = set()
    docs = []
    for index, document in enumerate(example.documents):
        kept = []
        for sentence in split_sentences(document.text):
            condensed = substitute(sentence)
            if not has_drug_placeholder(condensed) or condensed in seen:
                continue
            seen.add(condensed)
            kept.append(condensed)
        if kept:
            docs.append(CondensedDocument(timestamp=document.timestamp, sentences=tuple(kept), origin=index))
    return DocumentTimeline(docs=tuple(docs))


def label_documents(timeline: DocumentTimeline, gold: RegimenLabel) -> List[DocLabel]:
    """PRE before start, MID in [start, end), POST at or after end; all PRE when not taken."""
    labels = []
    for doc in timeline.docs:
        if not gold.taken or gold.start is None or doc.timestamp < gold.start:
            labels.append(DocLabel.PRE)
        elif gold.end is not None and doc.timestamp >= gold.end:
            labels.append(DocLabel.POST)
        else:
            labels.append(DocLabel.MID)
    return labels
