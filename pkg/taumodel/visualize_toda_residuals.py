#!/usr/bin/env python3
"""
Visualize a toda report: the tau stencil and the residuals at h and h/2.

Usage:
    python -m taumodel.visualize_toda_residuals reports/toda.json --output toda.png
    # If no --output is provided, the chart opens in a window.
"""

import argparse
import json
from pathlib import Path
from typing import Any, Dict, Optional

import matplotlib.pyplot as plt
import numpy as np


def load_toda_report(path: Path) -> Dict[str, Any]:
    """Load the result section of a toda report; floats are stored as decimal strings."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if data.get("command") != "toda":
        raise ValueError(f"{path} holds a {data.get('command')!r} report, not a toda report")
    result = data["result"]
    if "stencil" not in result:
        raise ValueError(f"{path} has no stencil (the check failed: {result.get('message', 'unknown error')})")
    return result


def stencil_grid(result: Dict[str, Any]) -> np.ndarray:
    """log|tau| on the 3x3 stencil, rows indexed by the component-1 shift."""
    grid = np.zeros((3, 3))
    for point in result["stencil"]:
        grid[int(point["i"]) + 1, int(point["j"]) + 1] = np.log(abs(float(point["tau"])))
    return grid


def plot_toda(result: Dict[str, Any], output: Optional[Path] = None) -> None:
    """Render the stencil heatmap next to the residual bars."""
    grid = stencil_grid(result)
    h = float(result["h"])
    epsilon = int(result["epsilon"])

    fig, (ax_grid, ax_res) = plt.subplots(1, 2, figsize=(10, 4.4))

    image = ax_grid.imshow(grid, cmap="viridis", origin="lower")
    ax_grid.set_xticks(range(3))
    ax_grid.set_yticks(range(3))
    ax_grid.set_xticklabels([f"{k:+d}h" for k in (-1, 0, 1)])
    ax_grid.set_yticklabels([f"{k:+d}h" for k in (-1, 0, 1)])
    ax_grid.set_xlabel("shift of t(p)_1")
    ax_grid.set_ylabel("shift of t(1)_1")
    ax_grid.set_title(f"log|tau_{result['N']}| on the stencil")
    fig.colorbar(image, ax=ax_grid)

    labels = [f"eps=+1 (h={h:g})", f"eps=-1 (h={h:g})"]
    values = [float(result["residuals"]["1"]), float(result["residuals"]["-1"])]
    half = result.get("half_step")
    if half:
        labels.append(f"eps={epsilon:+d} (h={float(half['h']):g})")
        values.append(float(half["residual"]))

    ax_res.bar(range(len(values)), values)
    ax_res.set_yscale("log")
    ax_res.set_xticks(range(len(values)))
    ax_res.set_xticklabels(labels, rotation=15, fontsize=8)
    ax_res.set_ylabel("relative residual")
    ax_res.set_title("Toda residuals")
    ax_res.grid(True, axis="y", alpha=0.25)

    fig.tight_layout()

    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(output, dpi=150)
        print(f"Saved chart to {output}")
    else:
        plt.show()


def main():
    parser = argparse.ArgumentParser(
        description="Visualize the stencil and residuals of a toda report."
    )
    parser.add_argument(
        "input",
        help="Path to a report written by `python -m taumodel toda`"
    )
    parser.add_argument(
        "--output",
        help="Optional path to save the chart image (e.g., toda.png). If omitted, the chart is shown."
    )

    args = parser.parse_args()
    input_path = Path(args.input)

    if not input_path.exists():
        raise FileNotFoundError(f"toda report not found: {input_path}")

    plot_toda(load_toda_report(input_path), Path(args.output) if args.output else None)


if __name__ == "__main__":
    main()
