"""Smoke test for the gafpy extension.

Build first, e.g. `maturin develop --release -m crates/python/Cargo.toml`.
"""

import math
import os

import gafpy

HERE = os.path.dirname(os.path.abspath(__file__))
SEGMENT = os.path.join(HERE, "..", "crates", "core", "tests", "data", "segment.scale")


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * (1.0 + abs(b))


def check_losses():
    p = gafpy.softmax([1.0, 2.0, 3.0])
    assert close(sum(p), 1.0)
    assert close(gafpy.log_sum_exp([0.0, 0.0]), math.log(2.0))
    z = gafpy.sigma_plus(p)
    assert all(close(a, b) for a, b in zip(gafpy.softmax(z), p))
    # zero parameter: loss is log K
    assert close(gafpy.logistic_value([0.3, 0.4], 3, 1, [0.0] * 6), math.log(3.0))
    g = gafpy.logistic_grad([0.3, 0.4], 3, 1, [0.0] * 6)
    assert len(g) == 6
    params = gafpy.params_for("logistic", 1.0, 1.0, 2, 3)
    assert close(params["lambda"], 32.0 * 2 * 3)
    assert gafpy.theorem_bound("logistic", 1.0, 1.0, 2, 3, 100, 1.0) > 0.0


def check_learners():
    gaf = gafpy.Gaf(2, 3, lambda_=1.0, beta=0.5, mu=0.01, samples=200, seed=7)
    total = 0.0
    for t in range(50):
        x = [math.cos(t), math.sin(t)]
        y = 0 if x[0] > 0.3 else (1 if x[1] > 0 else 2)
        p = gaf.predict(x)
        assert close(sum(p), 1.0) and min(p) > 0.0
        total -= math.log(p[y])
        gaf.update(x, y)
    assert gaf.steps == 50
    assert len(gaf.theta) == 6 and len(gaf.a_matrix()) == 6
    assert total < 50 * math.log(3.0)

    vaw = gafpy.VawRidge(2, lambda_=1.0)
    for t in range(20):
        x = [1.0, t / 20.0]
        vaw.predict(x)
        vaw.update(x, 0.5 * x[1])
    assert abs(vaw.predict([1.0, 0.5]) - 0.25) < 0.1

    for learner in (gafpy.Ogd(2, 3), gafpy.Ons(2, 3, eta=0.1)):
        p = learner.predict([0.5, 0.5])
        learner.update([0.5, 0.5], 2)
        assert learner.predict([0.5, 0.5])[2] > p[2]

    try:
        gaf.update([1.0, 0.0], 5)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range label accepted")


def check_data_and_runs():
    rows, labels, classes = gafpy.parse_libsvm(SEGMENT)
    assert len(rows) == 2310 and len(rows[0]) == 18 and classes == 7
    assert set(labels) == set(range(7))
    reps = gafpy.run_experiment("ogd", SEGMENT, b=10.0, seeds=[0, 1])
    assert [r["seed"] for r in reps] == [0, 1]
    assert len(reps[0]["avg_loss"]) == 2310
    assert reps[0]["avg_loss"][-1] < math.log(7.0)


def check_verify():
    rows = gafpy.verify("gradients", 3)
    assert rows and all(r["pass"] for r in rows), rows


def main():
    check_losses()
    check_learners()
    check_data_and_runs()
    check_verify()
    print("gafpy smoke test: OK")


if __name__ == "__main__":
    main()
