"""Corpus models: drugs, documents, gold regimens and document timelines."""
from dataclasses import dataclass, field
from datetime import date
from typing import List, Optional, Tuple, Union

# Calendar date of a note or regimen endpoint; ordering and day differences
# come from datetime.date.
DateStamp = date

DRUG_PLACEHOLDER = "DRUG"
OTHER_DRUG_PLACEHOLDER = "OTHER-DRUG"


@dataclass(frozen=True)
class DrugLexiconEntry:
    """A drug with its generic and brand surface forms."""
    canonical_name: str
    synonyms: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "synonyms", tuple(self.synonyms))
        if not self.synonyms:
            raise ValueError(f"Drug '{self.canonical_name}' has no synonyms")
        if any(not s.strip() for s in self.synonyms):
            raise ValueError(f"Drug '{self.canonical_name}' has a blank synonym")


@dataclass(frozen=True)
class RawDocument:
    """A timestamped clinic note."""
    timestamp: DateStamp
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"Document dated {self.timestamp} has empty text")


@dataclass(frozen=True)
class RegimenLabel:
    """Gold (or predicted) regimen: taken flag plus start/end dates.

    An absent end with taken=True means the regimen is ongoing.
    """
    taken: bool
    start: Optional[DateStamp] = None
    end: Optional[DateStamp] = None

    def __post_init__(self):
        if not self.taken and (self.start is not None or self.end is not None):
            raise ValueError("Regimen with taken=false must not carry start or end dates")
        if self.start is not None and self.end is not None and self.start > self.end:
            raise ValueError(f"Regimen start {self.start} is after end {self.end}")

    @property
    def ongoing(self) -> bool:
        return self.taken and self.end is None


@dataclass(frozen=True)
class PatientDrugExample:
    """One patient-drug pair: the unit of observation."""
    patient_id: str
    drug: DrugLexiconEntry
    documents: Tuple[RawDocument, ...]
    gold: Optional[RegimenLabel] = None

    def __post_init__(self):
        # sorted() is stable, so equal timestamps keep their input order
        object.__setattr__(
            self, "documents", tuple(sorted(self.documents, key=lambda d: d.timestamp))
        )
        if not self.patient_id:
            raise ValueError("patient_id must not be empty")

    @property
    def key(self) -> Tuple[str, str]:
        return self.patient_id, self.drug.canonical_name


@dataclass(frozen=True)
class CondensedDocument:
    """A document reduced to its deduplicated, placeholder-substituted drug sentences.

    origin is the index of the source document for real documents and the
    expression id for pseudo-documents.
    """
    timestamp: DateStamp
    sentences: Tuple[str, ...]
    is_pseudo: bool = False
    origin: Union[int, str] = 0

    @property
    def text(self) -> str:
        # one sentence per line so split_sentences recovers them unchanged
        return "\n".join(self.sentences)


@dataclass(frozen=True)
class DocumentTimeline:
    """Condensed documents in timestamp order (pseudo after real on ties)."""
    docs: Tuple[CondensedDocument, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(
            self,
            "docs",
            tuple(sorted(self.docs, key=lambda d: (d.timestamp, d.is_pseudo))),
        )

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    @property
    def timestamps(self) -> List[DateStamp]:
        return [doc.timestamp for doc in self.docs]

    @property
    def is_empty(self) -> bool:
        return not self.docs


@dataclass(frozen=True)
class Lexicon:
    """A disease drug list plus commonly co-prescribed drugs."""
    name: str
    drugs: Tuple[DrugLexiconEntry, ...]
    common_drugs: Tuple[DrugLexiconEntry, ...] = ()

    def find(self, canonical_name: str) -> Optional[DrugLexiconEntry]:
        for entry in self.drugs + self.common_drugs:
            if entry.canonical_name == canonical_name:
                return entry
        return None

    def other_drugs(self, target: DrugLexiconEntry) -> List[DrugLexiconEntry]:
        """Every entry except the target, for OTHER-DRUG substitution."""
        return [entry for entry in self.drugs + self.common_drugs if entry.canonical_name != target.canonical_name]
