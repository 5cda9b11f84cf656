import json
import sys
from pathlib import Path
from typing import List

import pandas as pd

from analytics.metrics import METRICS

# -------------------------------------------------
# PATHS
# -------------------------------------------------
ROOT = Path(__file__).resolve().parent

REPORTS_DIR = ROOT / "output/reports"
OUTPUT_FILE = ROOT / "output/ablation_summary.csv"
REFERENCE_VARIANT = "all | learned | attention | adapter | adaptive"


def variant_name(config: dict) -> str:
    """Architecture + loss variant of an evaluated checkpoint."""
    model = config.get("evaluated_model") or config.get("checkpoint_config", {}).get("model", {})
    loss = config.get("checkpoint_config", {}).get("loss", {})
    return " | ".join([model.get("geometry", "?"), model.get("routing", "?"),
                       model.get("pooling", "?"), model.get("head", "?"),
                       loss.get("mode", "?")])


def calculate_comparison(reports: List[dict]) -> pd.DataFrame:
    """
    One row per report with macro metrics and the Spearman gap to the full model.

    Args:
        reports: payloads written by analytics.report.save_report

    Returns:
        DataFrame sorted by split, then macro Spearman (descending)
    """
    rows = []
    for payload in reports:
        config = payload.get("config", {})
        macro = payload["report"]["macro"]
        rows.append({
            "Variant": variant_name(config),
            "Split": config.get("split", "?"),
            "Checkpoint": config.get("checkpoint", "?"),
            "Samples": payload["report"]["n_samples"],
            **{m: macro[m] for m in METRICS},
            "Flags": len(payload["report"].get("issues", [])),
        })
    df = pd.DataFrame(rows, columns=["Variant", "Split", "Checkpoint", "Samples", *METRICS, "Flags"])
    if df.empty:
        return df

    reference = df[df["Variant"] == REFERENCE_VARIANT].groupby("Split")["spearman"].max()
    df["DeltaSpearman"] = df.apply(
        lambda r: r["spearman"] - reference[r["Split"]] if r["Split"] in reference else float("nan"),
        axis=1)
    return df.sort_values(["Split", "spearman"], ascending=[True, False]).reset_index(drop=True)


def main(reports_dir: Path = REPORTS_DIR, output_file: Path = OUTPUT_FILE) -> int:
    print("\n" + "=" * 60)
    print("ABLATION ANALYTICS")
    print("=" * 60 + "\n")

    # -------------------------------------------------
    # LOAD REPORTS
    # -------------------------------------------------
    print(f"📊 Loading reports from: {reports_dir}")
    files = sorted(Path(reports_dir).glob("*.json"))
    if not files:
        print(f"❌ No reports found in {reports_dir}")
        print("   Please run `run_crmf.py eval` first\n")
        return 1

    reports = []
    for f in files:
        with open(f, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if "report" not in payload:
            print(f"   ⚠️  Skipping {f.name} (not a metric report)")
            continue
        reports.append(payload)
    print(f"   ✅ Loaded {len(reports)} reports\n")

    # -------------------------------------------------
    # COMPARE
    # -------------------------------------------------
    df = calculate_comparison(reports)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    df.round(6).to_csv(output_file, index=False)
    print(f"   ✅ Comparison saved to: {output_file}\n")

    print("=" * 60)
    print("SUMMARY (macro Spearman)")
    print("=" * 60)
    for _, r in df.iterrows():
        delta = "" if pd.isna(r.get("DeltaSpearman")) else f"  Δ {r['DeltaSpearman']:+.4f}"
        print(f"   [{r['Split']}] {r['Variant']:<48} ρ={r['spearman']:.4f}{delta}")
    print("\n" + "=" * 60)
    print("✅ ANALYTICS COMPLETED")
    print("=" * 60 + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
