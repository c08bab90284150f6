"""Measure how much image structure each projection mode preserves.

A sparse scan rasterized hard produces a mostly-empty image: low coverage,
and the few occupied pixels carry near-duplicate values, so entropy is low
too. The splatted version keeps both numbers up. CMIT (coverage times mean
per-channel entropy) condenses the comparison into one scalar per mode.
"""

from splatlab import SplatConfig, compare_strategies, front_camera, gen_lidar, normalize_unit


def main():
    cam = front_camera((128, 128))
    for n in (512, 2048, 8192):
        cloud = normalize_unit(gen_lidar(n, 8, seed=42))
        comp = compare_strategies(cloud, cam, SplatConfig())
        print(f"{n} points:")
        print(f"  coverage   hard {comp.hard.coverage:.4f}   soft {comp.soft.coverage:.4f}"
              f"   ratio {comp.coverage_ratio:.2f}")
        print(f"  entropy    hard {comp.hard.entropy.total_bits:.3f} bits"
              f"  soft {comp.soft.entropy.total_bits:.3f} bits")
        print(f"  cmit       hard {comp.hard.cmit:.3f}  soft {comp.soft.cmit:.3f}"
              f"   ratio {comp.cmit_ratio:.2f}")
    print("denser scans close the coverage gap; the soft lead narrows but persists")


if __name__ == "__main__":
    main()
