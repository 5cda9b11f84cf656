"""
Comparison Reader
=================
Pairwise judgments as tab-separated lines:

    item_a <TAB> item_b <TAB> target_index <TAB> outcome     (outcome in A | B | T)

Blank lines and lines starting with '#' are skipped; malformed lines are
collected as issues and skipped.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

WIN_A = "A"
WIN_B = "B"
TIE = "T"
OUTCOMES = (WIN_A, WIN_B, TIE)


@dataclass(frozen=True)
class ComparisonRecord:
    item_a: int
    item_b: int
    target: int
    outcome: str

    def __post_init__(self):
        if self.item_a == self.item_b:
            raise ValueError(f"Comparison of item {self.item_a} with itself")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"Unknown outcome {self.outcome!r}; expected one of {OUTCOMES}")
        if self.target < 0:
            raise ValueError(f"Negative target index {self.target}")


def read_comparisons(path) -> Tuple[List[ComparisonRecord], List[str], List[Dict]]:
    """
    Parse a comparison TSV.

    Items that are all non-negative integers are used as indices directly;
    otherwise each distinct label gets an index in order of first appearance.

    Returns:
        (records, item labels indexed by item number, issues)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Comparison file not found: {path}")

    rows, issues = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                issues.append({"LINE": line_no, "TYPE": "WARNING",
                               "MESSAGE": f"expected 4 tab-separated fields, got {len(parts)}"})
                continue
            a, b, t, outcome = (p.strip() for p in parts)
            try:
                target = int(t)
            except ValueError:
                issues.append({"LINE": line_no, "TYPE": "WARNING",
                               "MESSAGE": f"target index {t!r} is not an integer"})
                continue
            if outcome.upper() not in OUTCOMES:
                issues.append({"LINE": line_no, "TYPE": "WARNING",
                               "MESSAGE": f"unknown outcome {outcome!r}"})
                continue
            if a == b:
                issues.append({"LINE": line_no, "TYPE": "WARNING",
                               "MESSAGE": f"item {a!r} compared with itself"})
                continue
            if target < 0:
                issues.append({"LINE": line_no, "TYPE": "WARNING",
                               "MESSAGE": f"negative target index {target}"})
                continue
            rows.append((a, b, target, outcome.upper()))

    labels = [x for row in rows for x in row[:2]]
    if labels and all(x.isdigit() for x in labels):
        n_items = max(int(x) for x in labels) + 1
        item_ids = [str(i) for i in range(n_items)]
        index = {x: int(x) for x in labels}
    else:
        item_ids, index = [], {}
        for x in labels:
            if x not in index:
                index[x] = len(item_ids)
                item_ids.append(x)

    records = [ComparisonRecord(index[a], index[b], t, o) for a, b, t, o in rows]
    return records, item_ids, issues


def write_comparisons(path, records: Sequence[ComparisonRecord],
                      item_ids: Sequence[str] = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# item_a\titem_b\ttarget\toutcome\n")
        for r in records:
            a = item_ids[r.item_a] if item_ids else r.item_a
            b = item_ids[r.item_b] if item_ids else r.item_b
            fh.write(f"{a}\t{b}\t{r.target}\t{r.outcome}\n")
