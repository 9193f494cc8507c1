"""Layer listings transcribed row by row: (layer, height, width, channels, weights).

The VGG first-pool row is printed as 50x50x32, but the next row's arithmetic
(3*3*16)*32 only works with 16 channels, so the channel count here is 16.
"""

LATE = [
    ("RGB CONV25-32", 100, 100, 32, 60_000),
    ("RGB POOL", 25, 25, 32, 0),
    ("RGB CONV5-32", 25, 25, 32, 25_600),
    ("RGB POOL", 13, 13, 32, 0),
    ("RGB CONV3-32", 13, 13, 32, 9_216),
    ("RGB POOL", 7, 7, 32, 0),
    ("H CONV25-16", 100, 100, 16, 10_000),
    ("H POOL", 25, 25, 16, 0),
    ("H CONV5-16", 25, 25, 16, 6_400),
    ("H POOL", 13, 13, 16, 0),
    ("H CONV3-16", 13, 13, 16, 2_304),
    ("H POOL", 7, 7, 16, 0),
    ("L CONV25-16", 100, 100, 16, 10_000),
    ("L POOL", 25, 25, 16, 0),
    ("L CONV5-16", 25, 25, 16, 6_400),
    ("L POOL", 13, 13, 16, 0),
    ("L CONV3-16", 13, 13, 16, 2_304),
    ("L POOL", 7, 7, 16, 0),
    ("CONCAT", 7, 7, 64, 0),
    ("FC", 1, 1, 512, 1_605_632),
    ("FC", 1, 1, 512, 262_144),
    ("FC", 1, 1, 6, 3_072),
]

EARLY = [
    ("CONV25-64", 100, 100, 64, 200_000),
    ("POOL", 25, 25, 64, 0),
    ("CONV5-64", 25, 25, 64, 102_400),
    ("POOL", 13, 13, 64, 0),
    ("CONV3-64", 13, 13, 64, 36_864),
    ("POOL", 7, 7, 64, 0),
    ("FC", 1, 1, 512, 1_605_632),
    ("FC", 1, 1, 512, 262_144),
    ("FC", 1, 1, 6, 3_072),
]

VGG = [
    ("CONV3-16", 100, 100, 16, 720),
    ("CONV3-16", 100, 100, 16, 2_304),
    ("POOL", 50, 50, 16, 0),
    ("CONV3-32", 50, 50, 32, 4_608),
    ("CONV3-32", 50, 50, 32, 9_216),
    ("POOL", 25, 25, 32, 0),
    ("CONV3-64", 25, 25, 64, 18_432),
    ("CONV3-64", 25, 25, 64, 36_864),
    ("POOL", 13, 13, 64, 0),
    ("CONV3-128", 13, 13, 128, 73_728),
    ("CONV3-128", 13, 13, 128, 147_456),
    ("POOL", 7, 7, 128, 0),
    ("FC", 1, 1, 512, 3_211_264),
    ("FC", 1, 1, 512, 262_144),
    ("FC", 1, 1, 6, 3_072),
]

TABLES = {"late": LATE, "early": EARLY, "vgg": VGG}

TOTALS = {"late": 2_003_072, "early": 2_210_112, "vgg": 3_769_808, "basic-rgb": 2_130_112}


def table_shapes(rows):
    return [(c,) if h == w == 1 and name == "FC" else (c, h, w) for name, h, w, c, _ in rows]


def traced_shapes(spec):
    """Activation shapes of the rows a layer listing shows: conv, pool, concat, FC."""
    keep = ("Conv", "MaxPool", "FC")
    multi = len(spec.streams) > 1
    out = []
    for label, shape in spec.activation_shapes():
        kind = label.rsplit(".", 1)[-1]
        if kind in keep or (label == "concat" and multi):
            out.append(shape)
    return out
