"""Smoke test for the `capdis` extension module.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, or
`cargo build -p capdis-py --release --features extension-module` and copy
`target/release/libcapdis.so` to `capdis.so` next to this script.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import capdis  # noqa: E402


def check(name, cond):
    print(f"{'ok ' if cond else 'FAIL'} {name}")
    if not cond:
        sys.exit(1)


def main():
    check("semi-elasticity", abs(capdis.semi_elasticity(-0.0204) - 100 * (math.exp(-0.0204) - 1)) < 1e-12)

    # y = 2 x + unit effect, exact fit
    units = [i // 4 for i in range(40)]
    x = [float((i * 7) % 5) for i in range(40)]
    y = [2.0 * xi + 0.3 * u for xi, u in zip(x, units)]
    r = capdis.estimate_fe(y, {"x": x}, [units], units)
    check("fe estimate", r["names"] == ["x"] and abs(r["coef"][0] - 2.0) < 1e-8)

    star = [("HUB", s) for s in ("A", "B", "C", "D")]
    c = dict(capdis.betweenness(star))
    check("betweenness star", abs(c["HUB"] - 1.0) < 1e-12 and c["A"] == 0.0)
    check("hubs", capdis.hubs(star) == ["HUB"])

    check("atd", abs(capdis.average_time_difference([0.0, 720.0]) - 2 * math.sqrt(720)) < 1e-9)
    check("crowding", abs(capdis.normalized_crowding([100.0, 820.0]) - 1.0) < 1e-12)
    check("route all", capdis.route_indicator([1.0, 0.0], "all") == 0.0)
    check("weighted", capdis.passenger_weighted([1.0, 0.0, 1.0], [25.0, 25.0, 50.0]) == 0.75)
    check(
        "phrase flag",
        capdis.flags_capacity_discipline("<<SPEAKER:management>>We keep capacity discipline."),
    )
    try:
        capdis.average_time_difference([5.0])
        check("numerical error raised", False)
    except capdis.NumericalError:
        check("numerical error raised", True)

    sentences = [["capacity", "demand", "gdp", "fleet"], ["demand", "gdp", "fare"]] * 50
    emb = capdis.Embedding.train(sentences, dims=16, epochs=2, seed=3)
    check("embedding", "demand" in emb and emb.dims == 16 and -1.0 <= emb.similarity("demand", "gdp") <= 1.0)

    with tempfile.TemporaryDirectory() as d:
        files = capdis.simulate(d, seed=7)
        check("simulate", "capdis.conf" in files)
        conf = os.path.join(d, "capdis.conf")
        capdis.run("code-transcripts", conf)
        capdis.run("build-panel", conf)
        text = capdis.run("estimate", conf, {"treatment": "main"})
        check("pipeline estimate", "Capacity Discipline" in text)
        try:
            capdis.run("estimate", conf, {"treatment": "bogus"})
            check("config error raised", False)
        except capdis.ConfigError:
            check("config error raised", True)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
