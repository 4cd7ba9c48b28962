#!/usr/bin/env python3
"""Regenerates the bundled sample corpus under data/.

All output is original text composed from the templates below; nothing is
copied from external sources. Deterministic: running it twice produces
identical files.
"""
import random
import textwrap
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data"

PLACES = ["the north field", "the harbor", "the old mill", "the orchard",
          "the ridge trail", "the river bend", "the east garden", "the workshop",
          "the village square", "the lighthouse", "the meadow", "the boathouse"]
WEATHER = ["a light rain", "a steady wind", "thin fog", "bright sun",
           "low clouds", "an early frost", "a warm breeze", "heavy dew"]
TASKS = ["mending the fence", "sorting the apples", "patching the roof",
         "clearing the path", "stacking firewood", "checking the traps",
         "turning the compost", "oiling the hinges", "counting the hives",
         "raking the leaves", "sharpening the tools", "drying the herbs"]
NOTES = ["Everything took longer than planned.",
         "The work went quickly once we started.",
         "We stopped early and had tea.",
         "By evening the sky had cleared.",
         "Nobody remembered where the ladder was.",
         "It was quiet except for the gulls.",
         "The dog supervised from the porch.",
         "We will finish the rest tomorrow.",
         "The results were better than last season.",
         "A neighbor stopped by to help for an hour."]
OPENERS = ["This morning", "Just after noon", "Late in the day",
           "Before breakfast", "After the market closed", "Around midday"]

FUNCS = ["scale", "clamp", "window", "median", "smooth", "digest",
         "tally", "merge", "rank", "bucket", "pivot", "sample"]

def text_doc(rng: random.Random) -> str:
    n = rng.randint(4, 8)
    lines = []
    for _ in range(n):
        kind = rng.randrange(3)
        if kind == 0:
            lines.append(f"{rng.choice(OPENERS)} there was {rng.choice(WEATHER)} over {rng.choice(PLACES)}.")
        elif kind == 1:
            lines.append(f"We spent the afternoon {rng.choice(TASKS)} near {rng.choice(PLACES)}.")
        else:
            lines.append(rng.choice(NOTES))
    return textwrap.fill(" ".join(lines), width=72) + "\n"

def code_doc(rng: random.Random, idx: int) -> str:
    name = FUNCS[idx % len(FUNCS)]
    lo, hi = rng.randint(0, 4), rng.randint(8, 24)
    default = rng.randint(1, 9)
    return (
        f"def {name}_values(values, limit={hi}):\n"
        f"    \"\"\"Return the {name}d values, capped at limit.\"\"\"\n"
        f"    result = []\n"
        f"    for value in values:\n"
        f"        if value < {lo}:\n"
        f"            value = {lo}\n"
        f"        if value > limit:\n"
        f"            value = limit\n"
        f"        result.append(value)\n"
        f"    return result\n"
        f"\n"
        f"def {name}_total(values, start={default}):\n"
        f"    total = start\n"
        f"    for value in {name}_values(values):\n"
        f"        total += value\n"
        f"    return total\n"
    )

def main() -> None:
    rng = random.Random(20240817)
    text_dir = ROOT / "text"
    code_dir = ROOT / "code"
    text_dir.mkdir(parents=True, exist_ok=True)
    code_dir.mkdir(parents=True, exist_ok=True)
    for i in range(150):
        (text_dir / f"note_{i:03}.txt").write_text(text_doc(rng))
    for i in range(60):
        (code_dir / f"snippet_{i:03}.py").write_text(code_doc(rng, i))
    print(f"wrote {len(list(text_dir.iterdir()))} text docs, {len(list(code_dir.iterdir()))} code docs")

if __name__ == "__main__":
    main()
