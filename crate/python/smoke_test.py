"""Quick end-to-end check of the pygeovar extension module."""

import json
import math
import os
import tempfile

import pygeovar as gv


def main():
    c = gv.Curve.circle([32.0, 32.0], 10.0, 64)
    assert abs(c.length() - 2 * math.pi * 10) < 0.1
    assert all(abs(k - 0.1) < 1e-3 for k in c.curvature())

    # flat image: geometric flow shrinks a circle at speed 1/R
    flat = [[1.0] * 64 for _ in range(64)]
    g = gv.edge_indicator(flat)
    v = gv.gac_velocity(g, c)
    speeds = [math.hypot(*p) for p in v]
    assert max(abs(s - 0.1) for s in speeds) < 1e-3
    shrunk, trace = gv.evolve_gac(g, c, dt=0.5, steps=40, resample_every=0)
    assert shrunk.signed_area() < c.signed_area()
    assert all(b["energy"] <= a["energy"] for a, b in zip(trace, trace[1:]))

    # planes are fixed points of the Beltrami operator
    plane = [[0.3 * x - 0.7 * y for x in range(16)] for y in range(16)]
    op = gv.beltrami_operator([plane], 1.0)
    assert max(abs(op[j][i]) for j in range(2, 14) for i in range(2, 14)) < 1e-10
    noisy = gv.noisy_disk(24, 6.0, 0.2, 3)
    _, btrace = gv.evolve_beltrami([noisy], 1.0, dt=0.2, steps=10)
    assert btrace[-1]["energy"] < btrace[0]["energy"]

    # two-region segmentation of a clean disk
    img = gv.noisy_disk(48, 10.0, 0.0, 0)
    phi = [[14.0 - math.hypot(x - 23.5, y - 23.5) for x in range(48)] for y in range(48)]
    out = gv.evolve_chanvese(img, phi, mode="geometric", max_steps=400)
    truth = [[v > 0.5 for v in row] for row in img]
    hits = sum(a == b for ra, rb in zip(out["mask"], truth) for a, b in zip(ra, rb))
    assert hits / (48 * 48) > 0.99, hits
    assert abs(out["c1"] - 1.0) < 0.03 and abs(out["c2"]) < 0.03

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "img.pgm")
        gv.write_image(img, path)
        assert gv.read_image(path)[0] == img
        metrics = json.loads(
            gv.run("gradcheck", None, [f"output_dir={json.dumps(os.path.join(d, 'g'))}", "fixture.size=48"])
        )
        assert metrics["passed"] and metrics["max_rel_error"] <= 1e-4

    try:
        gv.Curve([[0.0, 0.0], [1.0, 1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("two-node curve accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
