"""Regenerate the bundled validation-template portraits.

Run from the repo root: python scripts/make_assets.py
The outputs are committed; regenerate only when the fiducial format changes.
"""

from pathlib import Path

from portraitforge.fiducial import make_portrait
from portraitforge.geometry import BBox
from portraitforge.pngio import save_png

SPECS = [
    ("template-01.png", 384, 320, BBox(96, 80, 224, 240), 0.14),
    ("template-02.png", 384, 320, BBox(60, 110, 160, 236), 0.22),
    ("template-03.png", 320, 320, BBox(104, 70, 216, 210), 0.10),
]


def main() -> None:
    out_dir = Path(__file__).resolve().parents[1] / "src" / "portraitforge" / "assets" / "templates"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, h, w, bbox, bg in SPECS:
        img, _ = make_portrait(h, w, bbox, background=bg)
        save_png(img, out_dir / name)
        print(f"wrote {out_dir / name}")


if __name__ == "__main__":
    main()
