"""The command-line workflow end to end in a temporary directory.

Equivalent shell session:

    lumina synth --count 4 --seed 0 --size 40 --out pairs
    lumina train --data pairs --out run --epochs 2 --crop 32
    lumina enhance --model run/model.lumn --input pairs/pair0000 --output enhanced
    lumina evaluate --enhanced enhanced --reference pairs/pair0000 --report report
    lumina train --config run/manifest.txt --out replay   # identical checkpoint
"""

import os
import tempfile
from pathlib import Path

from lumina.cli import main

os.environ["LUMINA_THREADS"] = "1"
with tempfile.TemporaryDirectory() as tmp:
    t = Path(tmp)
    steps = [
        ["synth", "--count", "4", "--seed", "0", "--size", "40", "--out", str(t / "pairs")],
        ["train", "--data", str(t / "pairs"), "--out", str(t / "run"), "--epochs", "2", "--crop", "32"],
        ["enhance", "--model", str(t / "run" / "model.lumn"), "--input", str(t / "pairs" / "pair0000"),
         "--output", str(t / "enhanced"), "--dump-intermediates"],
        ["evaluate", "--enhanced", str(t / "enhanced"), "--reference", str(t / "pairs" / "pair0000"),
         "--report", str(t / "report")],
        ["train", "--config", str(t / "run" / "manifest.txt"), "--out", str(t / "replay")],
    ]
    for argv in steps:
        print("$ lumina", " ".join(a.replace(tmp, ".") for a in argv))
        print("  exit code", main(argv))
    print((t / "run" / "manifest.txt").read_text())
    same = (t / "run" / "model.lumn").read_bytes() == (t / "replay" / "model.lumn").read_bytes()
    print("replayed checkpoint identical:", same)
