"""Smoke test for the glu_shears extension module.

Build and install first:  maturin develop  (from crates/python)
Then run:                 python python/smoke_test.py
"""

import math
import tempfile

import glu_shears as gs


def silu(v):
    return v / (1.0 + math.exp(-v))


def check_glu():
    x = [[0.5, -1.0]]
    gate = [[1.0, 0.0], [0.0, 0.0], [2.0, 1.0]]
    up = [[1.0, 1.0], [3.0, -2.0], [0.5, 0.0]]
    down = [[1.0, 2.0, 3.0], [0.0, -1.0, 1.0]]
    got = gs.glu_forward(x, gate, up, down)
    act = []
    for g, u in zip(gate, up):
        gv = sum(a * b for a, b in zip(x[0], g))
        uv = sum(a * b for a, b in zip(x[0], u))
        act.append(uv * silu(gv))
    want = [sum(d * a for d, a in zip(row, act)) for row in down]
    assert all(abs(a - b) < 1e-6 for a, b in zip(got[0], want)), (got, want)


def check_model_workflow():
    model = gs.Model(seed=42)
    assert model.expansion_ratio() == 4.0
    scores = model.scores("maw")
    assert len(scores) == 2 and len(scores[0]) == 256

    gate, up, _ = model.mlp(0)
    by_hand = [max(g) + abs(min(g)) + max(u) + abs(min(u)) for g, u in zip(gate, up)]
    assert all(abs(a - b) < 1e-6 for a, b in zip(scores[0], by_hand))

    plan = model.plan_fraction(0.5, "maw")
    assert plan.retained_d_ff == 128
    assert plan.removed[0] == gs.select_prune_set(scores[0], 128)
    pruned = model.prune(plan)
    passed, checks, violation = pruned.verify()
    assert passed and checks > 0 and violation is None

    with tempfile.TemporaryDirectory() as d:
        pruned.save(d)
        back = gs.Model.load(d)
        assert back.config.intermediate_size == 128
        assert back.logits([256, 72, 105]) == pruned.logits([256, 72, 105])
        plan.save(d + "/plan.json")
        assert gs.Plan.load(d + "/plan.json").removed == plan.removed

    ppl = model.perplexity(["hello world", "the quick brown fox"])
    assert ppl.perplexity >= 1.0 and ppl.token_count == 32

    ids = model.generate([[256, 65, 66], [256, 67]], 4)
    assert [len(i) for i in ids] == [4, 4]

    try:
        model.plan_fraction(1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("fraction 1.5 accepted")
    try:
        gs.Model.load("/nonexistent/model")
    except OSError:
        pass
    else:
        raise AssertionError("missing directory accepted")


def check_analytics():
    assert [gs.retained_dim(8192, p / 10) for p in range(1, 7)] == [7373, 6554, 5735, 4916, 4096, 3277]
    corr = {label: (n, r, p) for label, n, r, p in gs.fixture_correlations()}
    assert abs(corr["1B"][1] + 0.676) < 0.002 and abs(corr["1B"][2] - 0.096) < 0.003
    assert abs(corr["3B"][1] + 0.864) < 0.002 and abs(corr["3B"][2] - 0.012) < 0.002
    assert corr["combined"][0] == 14 and abs(corr["combined"][1] + 0.627) < 0.002
    heads = dict(gs.fixture_headlines())
    assert abs(heads["1B IFEval % of baseline @2.8x"] - 175.0) < 0.1
    assert gs.normalize_to_baseline([2.0, 1.0], lower_is_better=True) == [100.0, 200.0]
    assert abs(gs.pearson_r([1, 2, 3, 4], [2, 4, 6, 8.5]) - 0.9986) < 1e-3
    assert gs.t_pvalue(0.0, 10) == 1.0
    assert gs.f32_to_bf16(1.0) == 0x3F80 and gs.bf16_to_f32(0x3F80) == 1.0


if __name__ == "__main__":
    check_glu()
    check_model_workflow()
    check_analytics()
    print("glu_shears", gs.__version__, "smoke test passed")
