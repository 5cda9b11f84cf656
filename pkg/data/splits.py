"""
User-grouped train/val/test splits.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass
class SplitSpec:
    train: List[str]
    val: List[str]
    test: List[str]
    fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS
    seed: int = 0

    def ids(self, split: str) -> List[str]:
        if split not in SPLIT_NAMES:
            raise ValueError(f"Unknown split {split!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, split)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d


def _clip_and_user(record) -> Tuple[str, str]:
    clip = getattr(record, "clip_id", None) or getattr(record, "id")
    return str(clip), str(record.user_no)


def grouped_split(records: Sequence, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                  seed: int = 0) -> SplitSpec:
    """
    Assign whole users to splits so clip counts approach `fractions`.

    Users are shuffled under `seed`; the first three seed one split each, then
    every remaining user goes to the split furthest below its target count.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"Split fractions must be three non-negative values summing to 1, "
                         f"got {fractions}")
    clips_by_user: Dict[str, List[str]] = {}
    for r in records:
        clip, user = _clip_and_user(r)
        clips_by_user.setdefault(user, []).append(clip)
    users = sorted(clips_by_user)
    if len(users) < 3:
        raise ValueError(f"grouped_split: need at least 3 users, got {len(users)}")

    rng = np.random.default_rng(seed)
    order = [users[i] for i in rng.permutation(len(users))]
    total = sum(len(v) for v in clips_by_user.values())
    targets = np.array(fractions) * total
    counts = np.zeros(3)
    assigned: List[List[str]] = [[], [], []]

    for k, user in enumerate(order):
        split = k if k < 3 else int(np.argmax(targets - counts))
        assigned[split].extend(clips_by_user[user])
        counts[split] += len(clips_by_user[user])

    return SplitSpec(*assigned, fractions=fractions, seed=seed)


def check_no_leakage(spec: SplitSpec, user_of: Dict[str, str]):
    """Raise if any user appears in two splits."""
    user_sets = [{user_of[c] for c in spec.ids(s)} for s in SPLIT_NAMES]
    for i in range(3):
        for j in range(i + 1, 3):
            shared = user_sets[i] & user_sets[j]
            if shared:
                raise ValueError(f"Users {sorted(shared)[:5]} appear in both "
                                 f"{SPLIT_NAMES[i]} and {SPLIT_NAMES[j]}")


def save_split(path, spec: SplitSpec):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(path) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    return SplitSpec(train=list(d["train"]), val=list(d["val"]), test=list(d["test"]),
                     fractions=tuple(d.get("fractions", DEFAULT_FRACTIONS)),
                     seed=int(d.get("seed", 0)))
