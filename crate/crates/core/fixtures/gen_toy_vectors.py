"""Regenerate toy_vectors.txt: 50 words in 8 dimensions, planted in semantic blobs."""
import random

BLOBS = [
    ["deadly", "deadliest", "horrific", "tragic", "heinous", "senseless", "horrifying"],
    ["young", "teenage", "old", "little", "elementary", "aged", "older"],
    ["shoot", "kill", "open", "buy", "leave", "die", "trap", "identify", "accuse", "act"],
    ["gunman", "gunmen", "shooter", "shooters", "suspect", "assailant", "attacker", "man", "ramos", "salvador"],
    ["victim", "victims", "child", "children", "student", "students", "teacher", "teachers"],
    ["shooting", "shootings", "attack", "massacre"],
    ["school", "police", "rifle", "scene"],
]

rng = random.Random(20220524)
rows = []
for axis, words in enumerate(BLOBS):
    for w in words:
        v = [rng.gauss(0.0, 0.05) for _ in range(8)]
        v[axis] += 1.0
        if axis == 6:
            v[7] += 0.5
        rows.append((w, v))
assert len(rows) == 50

with open("toy_vectors.txt", "w") as f:
    f.write("50 8\n")
    for w, v in rows:
        f.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")
