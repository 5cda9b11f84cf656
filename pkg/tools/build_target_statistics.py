import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from data.metadata_reader import SCORE_KEYS, load_metadata  # noqa: E402
from data.splits import load_split  # noqa: E402
from losses.winsorize import describe_targets  # noqa: E402

# =================================================
# CONFIG
# =================================================
TOOLS_DIR = Path(__file__).resolve().parent
ENGINE_DIR = TOOLS_DIR.parent

METADATA_FILE = ENGINE_DIR / "output" / "metadata.json"
SPLIT_FILE = ENGINE_DIR / "output" / "split.json"   # train rows only when present

OUTPUT_FILE = ENGINE_DIR / "output" / "target_statistics.csv"


def main(metadata_file: Path = METADATA_FILE, split_file: Path = SPLIT_FILE,
         output_file: Path = OUTPUT_FILE) -> Path:
    # =================================================
    # LOAD DATA
    # =================================================
    records = load_metadata(metadata_file)
    if split_file is not None and Path(split_file).exists():
        train = set(load_split(split_file).train)
        records = [r for r in records if r.id in train]
        print(f"Using {len(records)} training clips from {split_file}")
    if not records:
        raise ValueError(f"No clips to describe in {metadata_file}")

    # =================================================
    # STATISTICS
    # =================================================
    Y = np.stack([r.score_vector() for r in records])
    table = describe_targets(Y, SCORE_KEYS)

    # =================================================
    # OUTPUT
    # =================================================
    output_file.parent.mkdir(parents=True, exist_ok=True)
    table.round(6).to_csv(output_file, index=False)
    print(f"✅ Target statistics saved at: {output_file}")
    return output_file


if __name__ == "__main__":
    main()
