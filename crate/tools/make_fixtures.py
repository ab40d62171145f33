"""Regenerate the MIDI fixtures from the music21 corpus.

    pip install music21
    python tools/make_fixtures.py

All pieces are public-domain piano works. Repeats are expanded so the
files reflect the played form.
"""
import os

from music21 import corpus

ROOT = os.path.join(os.path.dirname(__file__), "..", "fixtures", "midi")

TRAIN = [
    "chopin/mazurka06-2.krn",
    "schumann_clara/polonaise_op1n1.mxl",
    "schumann_clara/polonaise_op1n2.mxl",
    "schumann_clara/polonaise_op1n3.mxl",
    "schumann_clara/polonaise_op1n4.mxl",
    "mozart/k545/movement1_exposition.mxl",
    "bach/bwv846.mxl",
    "cpebach/h186.mxl",
    "schoenberg/opus19/movement2.mxl",
]
HELDOUT = ["joplin/maple_leaf_rag.mxl"]


def export(name, subdir):
    score = corpus.parse(name)
    try:
        score = score.expandRepeats()
    except Exception:
        pass
    out = name.replace("/", "_").rsplit(".", 1)[0] + ".mid"
    path = os.path.join(ROOT, subdir, out)
    score.write("midi", fp=path)
    print(f"{path}: {score.highestTime / 4:.1f} bars")


if __name__ == "__main__":
    for n in TRAIN:
        export(n, "train")
    for n in HELDOUT:
        export(n, "heldout")
