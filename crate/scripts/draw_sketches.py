"""Draws the schematic crash sketches used by the knowledge base and the fixture cases.

Run from the repository root: python3 scripts/draw_sketches.py
Output is deterministic, so rerunning leaves the checked-in PNGs unchanged.
"""

import math
from pathlib import Path

from PIL import Image, ImageDraw

SIZE = 400
LANE = 18
ROAD = (150, 150, 150)
MARK = (255, 255, 255)
COLORS = [(31, 119, 180), (214, 39, 40)]


def canvas():
    img = Image.new("RGB", (SIZE, SIZE), (235, 240, 225))
    return img, ImageDraw.Draw(img)


def hroad(d, lanes, y=SIZE / 2, x0=0, x1=SIZE):
    half = lanes * LANE / 2
    d.rectangle([x0, y - half, x1, y + half], fill=ROAD)
    d.line([x0, y, x1, y], fill=(240, 200, 0), width=2)


def vroad(d, lanes, x=SIZE / 2, y0=0, y1=SIZE):
    half = lanes * LANE / 2
    d.rectangle([x - half, y0, x + half, y1], fill=ROAD)
    d.line([x, y0, x, y1], fill=(240, 200, 0), width=2)


def car(d, x, y, heading_deg, label, color):
    """Box with an arrow pointing along the heading (0 = east, 90 = north)."""
    h = math.radians(heading_deg)
    u = (math.cos(h), -math.sin(h))
    v = (-u[1], u[0])
    hl, hw = 14, 7
    pts = [
        (x + u[0] * sx * hl + v[0] * sy * hw, y + u[1] * sx * hl + v[1] * sy * hw)
        for sx, sy in [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    ]
    d.polygon(pts, fill=color)
    tip = (x + u[0] * 40, y + u[1] * 40)
    d.line([(x, y), tip], fill=color, width=3)
    d.text((x + v[0] * 16 - 6, y + v[1] * 16 - 6), label, fill=(0, 0, 0))


def north(d):
    d.line([(370, 60), (370, 25)], fill=(0, 0, 0), width=2)
    d.polygon([(364, 32), (376, 32), (370, 20)], fill=(0, 0, 0))
    d.text((366, 64), "N", fill=(0, 0, 0))


def save(img, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG", optimize=False)


def intersection(lanes_ns, lanes_ew, cars):
    img, d = canvas()
    hroad(d, lanes_ew)
    vroad(d, lanes_ns)
    for c in cars:
        car(d, *c)
    north(d)
    return img


def t_junction(lanes, stem, cars):
    img, d = canvas()
    c = SIZE / 2
    if stem in ("North", "South"):
        hroad(d, lanes)
        vroad(d, 2, y0=0 if stem == "North" else c, y1=c if stem == "North" else SIZE)
    else:
        vroad(d, lanes)
        hroad(d, 2, x0=0 if stem == "West" else c, x1=c if stem == "West" else SIZE)
    for k in cars:
        car(d, *k)
    north(d)
    return img


def straight(lanes, cars):
    img, d = canvas()
    hroad(d, lanes)
    for c in cars:
        car(d, *c)
    north(d)
    return img


def curve(cars):
    img, d = canvas()
    box = [60, 120, 460, 520]
    d.arc(box, 180, 270, fill=ROAD, width=2 * LANE)
    d.arc(box, 180, 270, fill=(240, 200, 0), width=2)
    d.rectangle([0, 320 - LANE, 60 + 1, 320 + LANE], fill=ROAD)
    for c in cars:
        car(d, *c)
    north(d)
    return img


def merging(cars):
    img, d = canvas()
    hroad(d, 3, y=170)
    d.line([(0, 170), (SIZE, 170)], fill=MARK, width=1)
    d.line([(40, 380), (220, 197)], fill=ROAD, width=LANE)
    for c in cars:
        car(d, *c)
    north(d)
    return img


def main():
    root = Path(__file__).resolve().parent.parent
    kb = root / "data" / "kb"
    cases = root / "fixtures" / "cases"
    blue, red = COLORS
    c = SIZE / 2
    save(straight(4, [(150, c + 9, 0, "V1", blue), (120, c + 27, 0, "V2", red)]), kb / "straight" / "example_sketch.png")
    save(curve([(30, c + 129, 0, "V1", blue), (200, 140, 200, "V2", red)]), kb / "curve" / "example_sketch.png")
    save(
        intersection(2, 2, [(c + 9, 300, 90, "V1", blue), (100, c + 9, 0, "V2", red)]),
        kb / "intersection" / "example_sketch.png",
    )
    save(
        intersection(4, 4, [(c + 18, 300, 90, "V1", blue), (c - 18, 100, 270, "V2", red)]),
        kb / "intersection-left-turn" / "example_sketch.png",
    )
    save(
        t_junction(2, "North", [(c - 9, 120, 270, "V1", blue), (300, c - 9, 180, "V2", red)]),
        kb / "t-intersection" / "example_sketch.png",
    )
    save(merging([(150, 188, 0, "V1", blue), (120, 300, 45, "V2", red)]), kb / "merging" / "example_sketch.png")

    save(
        intersection(3, 2, [(c + 9, 300, 90, "V1", blue), (300, c - 9, 180, "V2", red)]),
        cases / "case_117021" / "sketch.png",
    )
    save(
        t_junction(2, "South", [(c + 9, 300, 90, "V1", blue), (100, c + 9, 0, "V2", red)]),
        cases / "case_119489" / "sketch.png",
    )
    save(
        intersection(4, 4, [(100, c + 18, 0, "V1", blue), (c - 18, 100, 270, "V2", red)]),
        cases / "case_121251" / "sketch.png",
    )


if __name__ == "__main__":
    main()
