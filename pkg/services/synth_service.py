"""Synthetic corpus service: seeded patient-drug examples with gold regimens, built from template pools."""
import json
import logging
import os
import random
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Dict, List, Optional, Sequence, Tuple

from config import TEMPLATES_PATH
from models.corpus import DateStamp, DrugLexiconEntry, Lexicon, PatientDrugExample, RawDocument, RegimenLabel
from models.settings import GenConfig
from models.temporal import TimeBucket
from services.corpus_service import load_lexicon
from services.temporal_service import SPELLED_NUMBERS, tag_sentence

logger = logging.getLogger(__name__)

MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)
WEEKDAY_NAMES = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
DATE_FORMATS = ("m/d/yy", "m/d/yyyy", "iso", "month d, yyyy", "mon d, yyyy", "m/d")
_NUMBER_WORDS = {value: word for word, value in SPELLED_NUMBERS.items() if word not in ("a", "an")}

FIRST_VISIT_RANGE = (DateStamp(2014, 1, 1), DateStamp(2019, 12, 31))
ONGOING_PROB = 0.25
SECOND_DRUG_PROB = 0.25
DISTRACTOR_PROB = 0.3
# distractor dates keep this distance from both gold endpoints
DISTRACTOR_MARGIN_DAYS = 7
TEMPLATE_POOLS = (
    "filler", "other_drug", "pre", "mid", "post", "not_taken", "start_cues", "end_cues",
    "approximate_end_cues", "distractor_past", "distractor_future", "reasons", "side_effects", "doses", "profiles",
)


@dataclass(frozen=True)
class StyleProfile:
    """How one synthetic practice writes notes."""
    name: str
    date_format: str
    visit_gap: Tuple[int, int]
    mention_prob: float
    spelled_numbers: bool
    start_buckets: Dict[str, int]

    def __post_init__(self):
        if self.date_format not in DATE_FORMATS:
            raise ValueError(f"Profile {self.name}: unknown date format '{self.date_format}'")
        low, high = self.visit_gap
        if not 2 <= low <= high:
            raise ValueError(f"Profile {self.name}: visit_gap must satisfy 2 <= low <= high, got {self.visit_gap}")


@dataclass(frozen=True)
class GenerationTrace:
    """What the generator decided for one example; used to check corpus statistics."""
    patient_id: str
    drug: str
    profile: str
    start_on_visit: Optional[bool] = None
    end_on_visit: Optional[bool] = None
    start_cue: Optional[TimeBucket] = None
    end_cue: Optional[TimeBucket] = None
    end_cue_exact: Optional[bool] = None


@dataclass
class _Sentence:
    text: str
    mentions_drug: bool = True
    relative: bool = False


@dataclass
class _Note:
    timestamp: DateStamp
    period: str
    sentences: List[_Sentence] = field(default_factory=list)


def load_templates(path: str = TEMPLATES_PATH) -> Dict:
    """Load and check a template pool file."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Template file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        templates = json.load(handle)
    missing = [pool for pool in TEMPLATE_POOLS if not templates.get(pool)]
    if missing:
        raise ValueError(f"Template file {path} lacks pools: {', '.join(missing)}")
    return templates


def format_date(value: DateStamp, style: str) -> str:
    if style == "m/d/yy":
        return f"{value.month}/{value.day}/{value.year % 100:02d}"
    if style == "m/d/yyyy":
        return f"{value.month}/{value.day}/{value.year}"
    if style == "iso":
        return value.isoformat()
    if style == "month d, yyyy":
        return f"{MONTH_NAMES[value.month - 1]} {value.day}, {value.year}"
    if style == "mon d, yyyy":
        return f"{MONTH_NAMES[value.month - 1][:3]} {value.day}, {value.year}"
    if style == "m/d":
        return f"{value.month}/{value.day}"
    raise ValueError(f"Unknown date format '{style}'")


def _capitalize(text: str) -> str:
    return text[:1].upper() + text[1:]


class CorpusGenerator:
    """Seeded generator; one instance produces one corpus."""

    def __init__(self, config: GenConfig, lexicon: Optional[Lexicon] = None, templates: Optional[Dict] = None):
        self.config = config
        self.lexicon = lexicon or load_lexicon(config.lexicon)
        self.templates = templates or load_templates()
        self.profiles = [
            StyleProfile(
                name=p["name"],
                date_format=p["date_format"],
                visit_gap=tuple(p["visit_gap"]),
                mention_prob=float(p["mention_prob"]),
                spelled_numbers=bool(p["spelled_numbers"]),
                start_buckets={k: int(v) for k, v in p["start_buckets"].items()},
            )
            for p in self.templates["profiles"]
        ]
        self.rng = random.Random(config.seed)

    # --- text helpers -------------------------------------------------------

    def _count_text(self, n: int, unit: str, profile: StyleProfile) -> str:
        if n == 1 and profile.spelled_numbers and self.rng.random() < 0.5:
            return f"a {unit}"
        if profile.spelled_numbers and n in _NUMBER_WORDS and self.rng.random() < 0.5:
            number = _NUMBER_WORDS[n]
        else:
            number = str(n)
        return f"{number} {unit}" + ("" if n == 1 else "s")

    def _span_text(self, days: int, profile: StyleProfile) -> str:
        """'<count> weeks' when days is a whole number of weeks, otherwise '<count> days'."""
        if days % 7 == 0 and days // 7 <= 12:
            return self._count_text(days // 7, "week", profile)
        return self._count_text(days, "day", profile)

    def _values(self, drug: DrugLexiconEntry, profile: StyleProfile, **extra) -> Dict[str, str]:
        others = self.lexicon.other_drugs(drug)
        values = {
            "drug": self.rng.choice(drug.synonyms),
            "other": self.rng.choice(self.rng.choice(others).synonyms) if others else "aspirin",
            "dose": self.rng.choice(self.templates["doses"]),
            "reason": self.rng.choice(self.templates["reasons"]),
            "side_effect": self.rng.choice(self.templates["side_effects"]),
            "cycle": str(self.rng.randint(1, 12)),
        }
        values.update(extra)
        return values

    def _render(self, template: str, drug: DrugLexiconEntry, profile: StyleProfile, **extra) -> str:
        return _capitalize(template.format(**self._values(drug, profile, **extra)))

    def _implicit(self, pool: str, drug: DrugLexiconEntry, profile: StyleProfile, cycle: Optional[int] = None) -> _Sentence:
        extra = {"cycle": str(cycle)} if cycle is not None else {}
        return _Sentence(self._render(self.rng.choice(self.templates[pool]), drug, profile, **extra))

    def _exact_cue(
        self,
        pool: Dict[str, List[str]],
        bucket: TimeBucket,
        target: DateStamp,
        anchor: DateStamp,
        drug: DrugLexiconEntry,
        profile: StyleProfile,
    ) -> Optional[_Sentence]:
        """A cue sentence whose single expression maps exactly to target, or None when the bucket cannot."""
        diff = (anchor - target).days
        extra = {}
        if bucket == TimeBucket.EXPLICIT_DATE:
            style = profile.date_format
            if style == "m/d" and diff >= 300:
                style = "m/d/yyyy"
            extra["date"] = format_date(target, style)
        elif bucket == TimeBucket.RELATIVE_DAY:
            if diff == 0:
                extra["when"] = "today"
            elif diff == 1:
                extra["when"] = "yesterday"
            elif 1 < diff <= 7:
                extra["when"] = f"last {WEEKDAY_NAMES[target.weekday()]}"
            else:
                return None
        elif bucket == TimeBucket.DURATION_AGO:
            if diff < 1:
                return None
            extra["ago"] = f"{self._span_text(diff, profile)} ago"
        elif bucket == TimeBucket.DURATION_FOR:
            if diff < 1:
                return None
            extra["duration"] = self._span_text(diff, profile)
        elif bucket == TimeBucket.MONTH_YEAR:
            extra["month_year"] = f"{MONTH_NAMES[target.month - 1]} {target.year}"
        text = self._render(self.rng.choice(pool[bucket.value]), drug, profile, **extra)
        expressions = tag_sentence(text, anchor)
        if len(expressions) != 1:
            return None
        if bucket != TimeBucket.MONTH_YEAR and expressions[0].mapped_date != target:
            return None
        relative = bucket in (TimeBucket.RELATIVE_DAY, TimeBucket.DURATION_AGO, TimeBucket.DURATION_FOR)
        return _Sentence(text, relative=relative)

    def _distractor(
        self,
        anchor: DateStamp,
        future: bool,
        drug: DrugLexiconEntry,
        profile: StyleProfile,
        gold: RegimenLabel,
    ) -> Optional[_Sentence]:
        """A dated mention of the drug that names neither endpoint."""
        offset = self.rng.randint(14, 42) if future else -self.rng.randint(7, 60)
        when = anchor + timedelta(days=offset)
        style = profile.date_format
        if future and style == "m/d":
            style = "m/d/yy"
        pool = "distractor_future" if future else "distractor_past"
        text = self._render(
            self.rng.choice(self.templates[pool]), drug, profile,
            date=format_date(when, style), ago=f"{self._span_text(-offset, profile)} ago" if not future else "",
        )
        expressions = tag_sentence(text, anchor)
        if not expressions:
            return None
        for expression in expressions:
            for endpoint in (gold.start, gold.end):
                if endpoint is not None and abs((expression.mapped_date - endpoint).days) <= DISTRACTOR_MARGIN_DAYS:
                    return None
        return _Sentence(text, relative=not future)

    # --- example ------------------------------------------------------------

    def _visit_grid(self, profile: StyleProfile) -> List[DateStamp]:
        low, high = self.config.visits_per_example
        n_visits = self.rng.randint(low, high)
        span = (FIRST_VISIT_RANGE[1] - FIRST_VISIT_RANGE[0]).days
        visit = FIRST_VISIT_RANGE[0] + timedelta(days=self.rng.randint(0, span))
        visits = [visit]
        for _ in range(n_visits - 1):
            visit = visit + timedelta(days=self.rng.randint(*profile.visit_gap))
            visits.append(visit)
        return visits

    def _regimen(self, visits: List[DateStamp]) -> Tuple[RegimenLabel, int, Optional[int], bool, Optional[bool]]:
        """Gold regimen with the index of the first MID visit and of the first POST visit."""
        n = len(visits)
        s = self.rng.randint(1, n - 2)
        start_on_visit = self.rng.random() < self.config.start_on_visit_prob
        if start_on_visit:
            start = visits[s]
        else:
            gap = (visits[s] - visits[s - 1]).days
            start = visits[s - 1] + timedelta(days=self.rng.randint(1, gap - 1))
        if self.rng.random() < ONGOING_PROB:
            return RegimenLabel(taken=True, start=start), s, None, start_on_visit, None
        e = self.rng.randint(s + 1, n - 1)
        end_on_visit = self.rng.random() < self.config.end_on_visit_prob
        if end_on_visit:
            end = visits[e]
        else:
            gap = (visits[e] - visits[e - 1]).days
            end = visits[e - 1] + timedelta(days=self.rng.randint(1, gap - 1))
        return RegimenLabel(taken=True, start=start, end=end), s, e, start_on_visit, end_on_visit

    def _start_cue(
        self, notes: List[_Note], s: int, e: Optional[int], gold: RegimenLabel, drug, profile,
    ) -> Optional[TimeBucket]:
        anchor_index = s
        mid_after = s + 1 < len(notes) and (e is None or s + 1 < e)
        if mid_after and self.rng.random() < 0.5:
            anchor_index = s + 1
        anchor = notes[anchor_index].timestamp
        weights = {TimeBucket(name): weight for name, weight in profile.start_buckets.items() if weight > 0}
        buckets = list(weights)
        for _ in range(4):
            bucket = self.rng.choices(buckets, weights=[weights[b] for b in buckets])[0]
            sentence = self._exact_cue(self.templates["start_cues"], bucket, gold.start, anchor, drug, profile)
            if sentence is not None:
                notes[anchor_index].sentences.append(sentence)
                return bucket
        template = self.templates["start_cues"][TimeBucket.EXPLICIT_DATE.value][0]
        text = self._render(template, drug, profile, date=gold.start.isoformat())
        notes[anchor_index].sentences.append(_Sentence(text))
        return TimeBucket.EXPLICIT_DATE

    def _end_cue(
        self, notes: List[_Note], e: int, end_on_visit: bool, gold: RegimenLabel, drug, profile,
    ) -> Tuple[Optional[TimeBucket], bool]:
        """Exact cue for visit-aligned ends, an approximate one otherwise."""
        if end_on_visit:
            anchor_index = e + 1 if e + 1 < len(notes) and self.rng.random() < 0.5 else e
            anchor = notes[anchor_index].timestamp
            buckets = [TimeBucket.EXPLICIT_DATE, TimeBucket.RELATIVE_DAY, TimeBucket.DURATION_AGO]
            self.rng.shuffle(buckets)
            for bucket in buckets:
                sentence = self._exact_cue(self.templates["end_cues"], bucket, gold.end, anchor, drug, profile)
                if sentence is not None:
                    notes[anchor_index].sentences.append(sentence)
                    return bucket, True
            return None, True

        anchor = notes[e].timestamp
        diff = (anchor - gold.end).days
        pool = self.templates["approximate_end_cues"]
        if gold.end.day != 1:
            bucket = TimeBucket.MONTH_YEAR
            extra = {"month_year": f"{MONTH_NAMES[gold.end.month - 1]} {gold.end.year}"}
        else:
            # whole weeks past the true end, so the mapped date never equals it
            bucket = TimeBucket.DURATION_AGO
            extra = {"ago": f"{self._count_text(diff // 7 + 1, 'week', profile)} ago"}
        text = self._render(self.rng.choice(pool[bucket.value]), drug, profile, **extra)
        expressions = tag_sentence(text, anchor)
        if len(expressions) != 1 or expressions[0].mapped_date == gold.end:
            return None, False
        notes[e].sentences.append(_Sentence(text, relative=bucket == TimeBucket.DURATION_AGO))
        return bucket, False

    def _copy_forward(self, notes: List[_Note]) -> None:
        """Repeat an earlier drug sentence in the next note of the same period."""
        for previous, note in zip(notes, notes[1:]):
            if note.period != previous.period or self.rng.random() >= self.config.copy_forward_prob:
                continue
            candidates = [s for s in previous.sentences if s.mentions_drug and not s.relative]
            if candidates:
                copied = self.rng.choice(candidates)
                note.sentences.append(_Sentence(copied.text, relative=False))

    def _example(self, patient_id: str, drug: DrugLexiconEntry, profile: StyleProfile) -> Tuple[PatientDrugExample, GenerationTrace]:
        visits = self._visit_grid(profile)
        taken = self.rng.random() < self.config.taken_fraction
        trace = {"patient_id": patient_id, "drug": drug.canonical_name, "profile": profile.name}

        if taken:
            gold, s, e, start_on_visit, end_on_visit = self._regimen(visits)
            trace.update(start_on_visit=start_on_visit, end_on_visit=end_on_visit)
            periods = ["PRE" if i < s else ("POST" if e is not None and i >= e else "MID") for i in range(len(visits))]
        else:
            gold, s, e = RegimenLabel(taken=False), None, None
            periods = ["NONE"] * len(visits)
        notes = [_Note(timestamp=visit, period=period) for visit, period in zip(visits, periods)]

        forced_mention = self.rng.randrange(len(notes)) if not taken else None
        cycle = 0
        for i, note in enumerate(notes):
            mention = self.rng.random() < profile.mention_prob
            if note.period == "PRE" and mention:
                note.sentences.append(self._implicit("pre", drug, profile))
            elif note.period == "MID" and (mention or i == s):
                cycle += 1
                note.sentences.append(self._implicit("mid", drug, profile, cycle=cycle))
            elif note.period == "POST" and (mention or i == e):
                note.sentences.append(self._implicit("post", drug, profile))
            elif note.period == "NONE" and (mention or i == forced_mention):
                note.sentences.append(self._implicit("not_taken", drug, profile))
            if self.rng.random() < DISTRACTOR_PROB and note.period != "POST":
                future = note.period == "MID" or (note.period == "NONE" and self.rng.random() < 0.5)
                distractor = self._distractor(note.timestamp, future, drug, profile, gold)
                if distractor is not None:
                    note.sentences.append(distractor)

        if taken and self.rng.random() < self.config.explicit_start_prob:
            trace["start_cue"] = self._start_cue(notes, s, e, gold, drug, profile)
        if taken and e is not None and self.rng.random() < self.config.explicit_end_prob:
            bucket, exact = self._end_cue(notes, e, trace["end_on_visit"], gold, drug, profile)
            if bucket is not None:
                trace.update(end_cue=bucket, end_cue_exact=exact)

        self._copy_forward(notes)
        documents = []
        for note in notes:
            body = list(note.sentences)
            for _ in range(self.rng.randint(0, 1)):
                body.append(_Sentence(self._render(self.rng.choice(self.templates["other_drug"]), drug, profile), False))
            self.rng.shuffle(body)
            fillers = self.rng.sample(self.templates["filler"], self.rng.randint(1, 2))
            text = " ".join(fillers + [sentence.text for sentence in body])
            documents.append(RawDocument(timestamp=note.timestamp, text=text))

        example = PatientDrugExample(patient_id=patient_id, drug=drug, documents=tuple(documents), gold=gold)
        return example, GenerationTrace(**trace)

    def generate(self) -> Tuple[List[PatientDrugExample], List[GenerationTrace]]:
        examples: List[PatientDrugExample] = []
        traces: List[GenerationTrace] = []
        n_profiles = self.config.style_profiles
        patient = 0
        while len(examples) < self.config.n_examples:
            profile_index = self.rng.randrange(n_profiles)
            profile = self.profiles[profile_index % len(self.profiles)]
            patient_id = f"P{profile_index}-{patient:06d}"
            remaining = self.config.n_examples - len(examples)
            n_drugs = 2 if remaining >= 2 and self.rng.random() < SECOND_DRUG_PROB else 1
            for drug in self.rng.sample(list(self.lexicon.drugs), min(n_drugs, len(self.lexicon.drugs))):
                example, trace = self._example(patient_id, drug, profile)
                examples.append(example)
                traces.append(trace)
            patient += 1
        taken = sum(1 for example in examples if example.gold.taken)
        logger.info(
            f"Generated {len(examples)} examples for {patient} patients "
            f"({taken} taken, lexicon {self.lexicon.name}, seed {self.config.seed})"
        )
        return examples, traces


def generate_with_traces(
    config: GenConfig,
    lexicon: Optional[Lexicon] = None,
    templates: Optional[Dict] = None,
) -> Tuple[List[PatientDrugExample], List[GenerationTrace]]:
    return CorpusGenerator(config, lexicon, templates).generate()


def generate_corpus(config: GenConfig, lexicon: Optional[Lexicon] = None) -> List[PatientDrugExample]:
    """Generate a labeled synthetic corpus; identical configs give identical corpora."""
    examples, _ = generate_with_traces(config, lexicon)
    return examples


def start_cue_fraction(traces: Sequence[GenerationTrace], examples: Sequence[PatientDrugExample]) -> float:
    """Share of taken examples whose notes carry a start-anchored time expression."""
    taken = [trace for trace, example in zip(traces, examples) if example.gold.taken]
    if not taken:
        return 0.0
    return sum(1 for trace in taken if trace.start_cue is not None) / len(taken)
