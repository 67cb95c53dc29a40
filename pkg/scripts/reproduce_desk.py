#!/usr/bin/env python3
"""
Desk-scale reproduction
Generates the synthetic cohorts and runs every experiment into runs/desk/
"""

import json
import subprocess
import sys
from pathlib import Path

SCRIPTS_DIR = Path(__file__).parent
ROOT_DIR = SCRIPTS_DIR.parent
CLI = ROOT_DIR / "bin" / "defusion_cli.py"
RUNS_DIR = ROOT_DIR / "runs" / "desk"


def run_step(description: str, *args: str) -> bool:
    """Run one CLI command and return success status."""
    print(f"\n{'='*60}")
    print(f"Running: {description}")
    print('='*60)
    try:
        result = subprocess.run([sys.executable, str(CLI), *args], cwd=str(ROOT_DIR))
        return result.returncode == 0
    except Exception as e:
        print(f"Error running {description}: {e}")
        return False


def correlation_gap(pcc_path: Path) -> float:
    pcc = json.loads(pcc_path.read_text())
    index = {kind: i for i, kind in enumerate(pcc["kinds"])}
    matrix = pcc["matrix"]
    related = matrix[index["img_related"]][index["tab_related"]]
    unrelated = matrix[index["img_unrelated"]][index["tab_unrelated"]]
    return related - unrelated


def main():
    print("=" * 60)
    print("DeFusion - Desk-scale Reproduction")
    print("=" * 60)

    RUNS_DIR.mkdir(parents=True, exist_ok=True)
    data = RUNS_DIR / "data"
    data_unshared = RUNS_DIR / "data-unshared"

    steps = [
        ("Gradient checks", ["gradcheck"]),
        ("Synthetic cohort (2000 cases)", ["gen-data", "--n", "2000", "--seed", "42", "--out", str(data)]),
        (
            "Synthetic cohort without shared signal",
            ["gen-data", "--n", "2000", "--seed", "42", "--shared-signal", "0", "--out", str(data_unshared)],
        ),
        ("5-fold cross-validation", ["cross-validate", "--data", str(data), "--out", str(RUNS_DIR / "cv")]),
        (
            "Comparison and ablation grids",
            ["ablate", "--data", str(data), "--grid", "baselines", "pe", "stpe", "days", "--out", str(RUNS_DIR / "ablate")],
        ),
        ("Train (holdout fold 0)", ["train", "--data", str(data), "--out", str(RUNS_DIR / "train")]),
        (
            "Decoupling diagnostic",
            ["diagnose", "--checkpoint", str(RUNS_DIR / "train" / "model.safetensors")],
        ),
        ("Train without shared signal", ["train", "--data", str(data_unshared), "--out", str(RUNS_DIR / "train-unshared")]),
        (
            "Decoupling diagnostic without shared signal",
            ["diagnose", "--checkpoint", str(RUNS_DIR / "train-unshared" / "model.safetensors")],
        ),
    ]

    results = []
    for description, args in steps:
        success = run_step(description, *args)
        results.append((description, success))

    # Final summary
    print("\n" + "=" * 60)
    print("FINAL SUMMARY")
    print("=" * 60)

    for description, success in results:
        status = "PASS" if success else "FAIL"
        print(f"  [{status}] {description}")

    for name in ("train", "train-unshared"):
        pcc_path = RUNS_DIR / name / "pcc.json"
        if pcc_path.exists():
            print(f"  related - unrelated correlation ({name}): {correlation_gap(pcc_path):+.3f}")

    print(f"\nGenerated artifacts in {RUNS_DIR}")
    return 0 if all(success for _, success in results) else 1


if __name__ == "__main__":
    sys.exit(main())
