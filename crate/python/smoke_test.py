"""Quick check of the fredjost extension module."""

import math

import fredjost


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    p = fredjost.Potential("kdv:2:1:1")
    assert close(p.jost(-8), 0.1, 1e-6)
    assert close(p.jost(-8, method="integral"), 0.1, 1e-6)
    assert close(p.fredholm_det(-5), p.jost(-5), 1e-6)

    ev = p.eigenvalues(-6.0, 0.5)
    assert len(ev) == 2 and close(ev[0], -3.0, 1e-6) and abs(ev[1]) < 1e-6, ev

    fp = p.fprime()
    for key in ("quadrature", "product", "cauchy"):
        assert close(fp[key], 1 / 12, 1e-4), (key, fp[key])

    # even potential: Psi_-(z, -x) = Psi_+(z, x)
    plus = p.simon(-8, 1.0)
    minus = p.simon(-8, -1.0, minus=True)
    assert abs(plus - minus) <= 1e-6 * abs(plus), (plus, minus)

    rep = p.stability_index()
    assert rep["verdict"] == "unstable" and rep["order_k"] == 1

    rep = fredjost.stability_index("kdv:3:1:1")
    assert rep["verdict"] == "unstable" and close(rep["dkf0"], 1 / 240, 1e-5)

    cyl = fredjost.Cylinder("planar:kdv:2:1:1", d=2)
    eq = cyl.equivalence(0, -5)
    assert eq["residual"] < 1e-3
    assert close(cyl.theta(0, 0).real, 6.0, 1e-9)
    a = cyl.f2j(1, -2 + 1j)
    b = cyl.f2j(1, -2 - 1j)
    assert abs(a - b.conjugate()) < 1e-10 * max(1, abs(a))

    d, d2 = fredjost.det_pair([[0.5, 0.1j], [0.2, -0.3]])
    a_tr = 0.5 - 0.3
    assert close(d2, d * math.exp(a_tr), 1e-12)

    e = fredjost.expand([[[1, 1], [0, 0.2]], [[0, 0], [1, 0]]])
    assert e["case"] == "singular" and e["order"] == 1 and close(e["leading_coefficient"], -1, 1e-10)

    try:
        p.jost(5)
    except ValueError:
        pass
    else:
        raise AssertionError("branch cut not rejected")

    print("fredjost", fredjost.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
