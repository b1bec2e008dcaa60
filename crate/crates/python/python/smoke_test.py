"""Smoke test of the homolab extension module."""

import json
import math
import tempfile

import homolab


def main():
    f = homolab.CoefficientField(7, dim=2, period=9)
    lam, big = f.ellipticity()
    a = f([0.3, 1.7])
    assert a[0][1] == a[1][0]
    assert lam <= min(a[0][0], a[1][1]) and max(a[0][0], a[1][1]) <= big

    g = homolab.CoefficientField.from_bytes(f.to_bytes())
    assert g.hash() == f.hash()

    m = homolab.invariant_measure(f, h=0.5)
    assert abs(m.mean() - 1.0) < 1e-9
    assert min(m.values) > 0.0
    assert m.relative_residual < 1e-8

    one = homolab.CoefficientField.constant([[1.0, 0.0], [0.0, 1.0]])
    masses = homolab.green_mass(one, [0.0, 0.0], [1.0, 2.0], h=0.5)
    assert all(abs(x - 1.0) < 1e-12 for x in masses)

    delta = homolab.estimate_abar(f, h=0.5, method="delta", ladder=[0.5, 0.25])
    measure = homolab.estimate_abar(f, h=0.5, method="measure")
    assert abs(delta[0][0] - measure[0][0]) < 0.05 * measure[0][0]

    exponent, _, r2 = homolab.fit_rate([(1, 1), (2, 0.5), (4, 0.25)])
    assert math.isclose(exponent, 1.0) and math.isclose(r2, 1.0)

    with tempfile.TemporaryDirectory() as d:
        cfg = {
            "kind": "green",
            "field": {"kind": "constant", "matrix": {"dim": 1, "a11": 1.0, "a12": 0.0, "a22": 0.0}},
            "numerics": {"h": 0.25, "times": [1.0, 2.0]},
            "output_dir": d,
        }
        manifest = json.loads(homolab.run_experiment(json.dumps(cfg)))
        assert any(e["path"].endswith("green_mass_0.csv") for e in manifest["files"])

    try:
        homolab.estimate_abar(f, h=0.3)
    except ValueError:
        pass
    else:
        raise AssertionError("non-integer 1/h accepted")

    print("homolab", homolab.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
