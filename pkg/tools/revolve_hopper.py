"""Regenerate the bundled hopper funnel mesh.

Revolves a 30-point rim/cone/chute profile around the z axis in 32
azimuth segments, giving 29 * 32 quads = 1,856 triangles. The throat
radius (2.0) clears the largest grains the hopper scenario spawns
(radius 1.0, surface noise up to 1.3x).

Usage: python3 tools/revolve_hopper.py > src/ltsdem/data/hopper.obj
"""

import numpy as np

SEGMENTS = 32


def profile() -> np.ndarray:
    """(r, z) pairs from the rim down through the chute, 30 points."""
    rim = [(16.0, 18.0), (16.0, 16.0)]
    cone = [
        (16.0 + (2.0 - 16.0) * k / 24.0, 14.0 + (0.0 - 14.0) * k / 24.0)
        for k in range(25)
    ]
    chute = [(2.0, -1.4), (2.0, -2.7), (2.0, -4.0)]
    return np.array(rim + cone + chute)


def main() -> None:
    prof = profile()
    theta = 2.0 * np.pi * np.arange(SEGMENTS) / SEGMENTS
    print("# hopper funnel: 30-point profile revolved in 32 segments")
    for r, z in prof:
        for t in theta:
            print(f"v {r * np.cos(t):.6f} {r * np.sin(t):.6f} {z:.6f}")
    for s in range(len(prof) - 1):
        for i in range(SEGMENTS):
            j = (i + 1) % SEGMENTS
            a = s * SEGMENTS + i + 1
            b = s * SEGMENTS + j + 1
            c = (s + 1) * SEGMENTS + j + 1
            d = (s + 1) * SEGMENTS + i + 1
            print(f"f {a} {b} {c}")
            print(f"f {a} {c} {d}")


if __name__ == "__main__":
    main()
