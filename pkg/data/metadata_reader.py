"""
Metadata Reader
===============
UTF-8 JSON array with one entry per clip:

    id, video_id, video_filename, duration, question_id, question,
    video_quality, user_no, <12 score keys>, transcript
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

SCORE_KEYS = (
    "Openness (O)",
    "Conscientiousness (C)",
    "Extraversion (E)",
    "Agreeableness (A)",
    "Neuroticism (N)",
    "overall_personality",
    "interview_score",
    "answer_score",
    "speaking_skills",
    "confidence_score",
    "facial_expression",
    "overall_performance",
)

INFO_KEYS = ("id", "video_id", "video_filename", "duration", "question_id", "question",
             "video_quality", "user_no", "transcript")


@dataclass
class ClipRecord:
    id: str
    user_no: str
    scores: Dict[str, float]
    video_id: str = ""
    video_filename: str = ""
    duration: str = ""
    question_id: str = ""
    question: str = ""
    video_quality: str = ""
    transcript: str = ""

    @property
    def clip_id(self) -> str:
        return self.id

    def score_vector(self) -> np.ndarray:
        return np.array([self.scores[k] for k in SCORE_KEYS], dtype=np.float64)

    def to_entry(self) -> dict:
        entry = {k: getattr(self, k) for k in INFO_KEYS if k != "transcript"}
        entry.update({k: float(self.scores[k]) for k in SCORE_KEYS})
        entry["transcript"] = self.transcript
        return entry


def parse_entry(entry: dict) -> ClipRecord:
    entry_id = str(entry.get("id", "?"))
    unknown = sorted(set(entry) - set(SCORE_KEYS) - set(INFO_KEYS))
    if unknown:
        raise ValueError(f"Entry {entry_id}: unexpected key {unknown[0]!r}")
    for key in SCORE_KEYS:
        if key not in entry:
            raise ValueError(f"Entry {entry_id}: missing score key {key!r}")
        value = entry[key]
        if not isinstance(value, (int, float)) or not np.isfinite(value):
            raise ValueError(f"Entry {entry_id}: score {key!r} is not a finite number ({value!r})")
    if "id" not in entry:
        raise ValueError("Entry without an 'id' field")
    user = str(entry.get("user_no", "")).strip()
    if not user:
        raise ValueError(f"Entry {entry_id}: empty user_no")
    info = {k: str(entry[k]) for k in INFO_KEYS if k in entry and k not in ("id", "user_no")}
    return ClipRecord(id=entry_id, user_no=user,
                      scores={k: float(entry[k]) for k in SCORE_KEYS}, **info)


def load_metadata(path) -> List[ClipRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Metadata file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise ValueError(f"{path}: expected a JSON array of entries")
    return [parse_entry(e) for e in entries]


def write_metadata(path, records: Sequence[ClipRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_entry() for r in records], fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def records_to_frame(records: Sequence[ClipRecord]) -> pd.DataFrame:
    rows = [{"id": r.id, "user_no": r.user_no, **r.scores} for r in records]
    return pd.DataFrame(rows, columns=["id", "user_no", *SCORE_KEYS])


class MetadataStore:
    """Singleton store for clip metadata, keyed by clip id"""
    _records: Optional[Dict[str, ClipRecord]] = None
    _loaded_path: Optional[str] = None

    @classmethod
    def load(cls, path):
        """Load metadata if not already loaded"""
        if cls._records is None or cls._loaded_path != str(path):
            cls._records = {r.id: r for r in load_metadata(path)}
            cls._loaded_path = str(path)

    @classmethod
    def get_clip(cls, clip_id: str) -> ClipRecord:
        if cls._records is None:
            raise RuntimeError("MetadataStore not loaded. Call load() first.")
        try:
            return cls._records[clip_id]
        except KeyError:
            raise ValueError(f"No metadata for clip {clip_id}") from None

    @classmethod
    def get_all_ids(cls) -> List[str]:
        if cls._records is None:
            raise RuntimeError("MetadataStore not loaded. Call load() first.")
        return list(cls._records)

    @classmethod
    def records(cls) -> List[ClipRecord]:
        if cls._records is None:
            raise RuntimeError("MetadataStore not loaded. Call load() first.")
        return list(cls._records.values())

    @classmethod
    def clear(cls):
        cls._records = None
        cls._loaded_path = None
