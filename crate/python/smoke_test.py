"""Smoke test for the Python bindings.

Build and install first:  pip install ./crates/python
Then run:                 python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import modelbelief as mb


def main():
    p = mb.softmax([2.0, 1.0, 0.0])
    assert abs(sum(p) - 1.0) < 1e-12 and p[0] > p[1] > p[2]
    assert mb.softmax([0.0, 3.0], 0.0) == [0.0, 1.0]
    assert mb.chebyshev_run_count(0.0046, 0.0096, 0.05) == 999
    assert mb.chebyshev_run_count(0.1109, 0.0471, 0.05) == 1000

    choice, belief = mb.extract(
        ["I", " choose", " **", "P"],
        [[("I", -0.1)], [(" choose", -0.1)], [(" **", -0.1)],
         [("P", math.log(0.6)), ("H", math.log(0.3)), ("neither", math.log(0.1))]],
    )
    assert choice == "Pampers"
    assert all(abs(b - e) < 1e-12 for b, e in zip(belief, [0.6, 0.3, 0.1]))

    body = json.loads(mb.build_request(31))
    assert body["top_logprobs"] == 20 and body["logprobs"] is True
    assert body["max_completion_tokens"] == 200 and body["temperature"] == 1.0

    oracle = mb.Oracle.calibrated()
    assert oracle.alternatives == ["Pampers", "Huggies", "neither"]
    assert len(oracle.scenarios) == 16
    pool = oracle.sample(200, seed=1)
    assert len(pool) == 3200
    truth = oracle.choice_distribution("p31")
    for measure in ("choice", "belief"):
        share = pool.share("p31", measure)
        assert abs(sum(share) - 1.0) < 1e-9
        assert abs(share[0] - truth[0]) < 0.1
    assert pool.variance("p31", 0, "belief") < pool.variance("p31", 0, "choice")
    assert pool.loewner_gap("p31") > -1e-3

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "pool.jsonl")
        assert pool.save(path) == 3200
        assert mb.Pool.load(path) == pool

    fit = pool.fit("belief")
    beta, se = fit["beta"]
    assert abs(beta + 0.463) < 0.05 and se > 0

    boot = pool.bootstrap(1, draws=100, seed=3)
    assert boot["belief.beta_sd"] < boot["choice.beta_sd"]
    assert boot["rmse_diff_p"] < 0.01

    try:
        pool.share("p31", "votes")
    except ValueError:
        pass
    else:
        raise AssertionError("bad measure accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
