"""Smoke test for the pyoscdamp extension module."""

import math

import pyoscdamp as od


def main():
    p = od.OscillatorParams(0.0, 1.0, 2.0)
    assert od.eigenvalue(2, 1, p) == complex(-2.5, 0.0)

    thermal = od.thermal_populations(2.0, 72)
    assert abs(sum(n * w for n, w in enumerate(thermal)) - 2.0) < 1e-9

    model = od.DetectionModel(p, od.KickPair.parity(72), od.DetectionConfig(0.1, 0.15, 10.0))
    down, up = model.apriori()
    assert abs(down - 0.06) < 1e-12 and abs(up - 0.06) < 1e-12
    g = model.correlation("down", "down", [0.0, 1.0])
    assert abs(g[0] - 5.0 / 3.0) < 1e-9 and g[1] < g[0]
    w = model.counting_distribution("down", 2.0, 30)
    assert abs(sum(w) - 1.0) < 1e-6
    q = model.fano("down", [500.0])[0]
    assert abs(q / (math.log(5.0) / 15.0) - 1.0) < 1e-3

    assert abs(od.kicked_mean_number(od.OscillatorParams(0.0, 1.0, 0.0), 0.7, 0.4, 40) - 1.75) < 1e-6
    assert od.duality_deviation(4, 2, 1.0) < 1e-8

    run = od.simulate(p, od.KickPair.parity(72), od.DetectionConfig(0.1, 0.15, 10.0),
                      ["bob", "doris"], 2.0, 0.5, seed=3)
    assert set(run["series"]) == {"omniscient", "bob", "doris"}
    assert run == od.simulate(p, od.KickPair.parity(72), od.DetectionConfig(0.1, 0.15, 10.0),
                              ["bob", "doris"], 2.0, 0.5, seed=3)

    try:
        od.DetectionConfig(1.5, 0.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid efficiency accepted")
    print("pyoscdamp smoke test passed")


if __name__ == "__main__":
    main()
