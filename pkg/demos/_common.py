"""Shared bits for the demo scripts: an output folder and a section printer."""

from pathlib import Path

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)


def section(title: str) -> None:
    print(f"\n== {title} " + "=" * max(0, 60 - len(title)))
