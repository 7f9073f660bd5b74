"""What the synthetic phantoms look like, one axial slice at a time.

Three ellipsoids nest with random per-axis shrinkage and center offsets:
edema (label 1) contains core (label 2) contains enhancing (label 3).
The four modalities all see the same anatomy through different contrast
tables, which is the whole point: no single modality separates every
class, so a segmentation model needs to fuse whatever subset it gets.
"""

import numpy as np

from divseg.phantom import CONTRAST, generate_phantom

GLYPHS = " .:-=+*#%@"


def ascii_slice(plane, lo, hi):
    rows = []
    for line in plane:
        idx = np.clip((line - lo) / (hi - lo + 1e-12) * (len(GLYPHS) - 1), 0, len(GLYPHS) - 1)
        rows.append("".join(GLYPHS[int(i)] for i in idx))
    return rows


def main():
    sample = generate_phantom(seed=7)
    labels = sample.labels.data.astype(int)
    z = int(np.argmax((labels == 3).sum(axis=(1, 2))))  # slice with most enhancing

    print(f"sample {sample.id}, slice z = {z}")
    print("\nlabels (0 background, 1 edema, 2 core, 3 enhancing):")
    for line in labels[z]:
        print("  " + "".join(" 123"[v] for v in line))

    for m in range(1, 5):
        vol = sample.volumes[m].data[0]
        plane = vol[z]
        print(f"\nmodality {m}, contrast per class {CONTRAST[m]}:")
        for line in ascii_slice(plane, vol.min(), vol.max()):
            print("  " + line)

    counts = {c: int((labels == c).sum()) for c in range(4)}
    print(f"\nvoxel counts: {counts}")


if __name__ == "__main__":
    main()
