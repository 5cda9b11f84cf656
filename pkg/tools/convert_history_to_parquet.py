import sys
from pathlib import Path

import pandas as pd

# File paths
HISTORY_DIR = Path(__file__).resolve().parent.parent / "output" / "history"


def convert(csv_path: Path) -> Path:
    df = pd.read_csv(csv_path)

    # history CSVs appended across runs may carry padded headers
    df.columns = df.columns.str.strip()

    if {"Epoch", "Step"}.issubset(df.columns):
        df.sort_values(["Epoch", "Step"], inplace=True)
    elif "Epoch" in df.columns:
        df.sort_values("Epoch", inplace=True)

    parquet_path = csv_path.with_suffix(".parquet")
    df.to_parquet(
        parquet_path,
        engine="pyarrow",
        compression="zstd",
        index=False
    )
    return parquet_path


def main(history_dir: Path = HISTORY_DIR) -> list:
    files = sorted(p for p in Path(history_dir).glob("*.csv") if not p.stem.endswith("_issues"))
    if not files:
        print(f"❌ No history CSVs in {history_dir}")
        return []
    saved = []
    for i, f in enumerate(files, start=1):
        saved.append(convert(f))
        print(f"[{i}/{len(files)}] Saved: {saved[-1]}")
    return saved


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else HISTORY_DIR)
