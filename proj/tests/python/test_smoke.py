"""Smoke tests for the _core extension module.

Runnable under pytest or directly: `python3 test_smoke.py <module-dir>`.
Without an argument the module is looked up on the normal import path.
"""

import json
import os
import sys
import tempfile

if len(sys.argv) > 1 and os.path.isdir(sys.argv[1]):
    sys.path.insert(0, sys.argv[1])
elif os.environ.get("FLEETOPT_MODULE_DIR"):
    sys.path.insert(0, os.environ["FLEETOPT_MODULE_DIR"])

try:
    import _core
except ImportError:  # installed-package layout
    from fleetopt import _core


def small_fleet(n):
    models = []
    for i in range(n):
        models.append(
            {
                "id": "m%02d" % i,
                "ranking_stage": "ranking",
                "hardware": "gpu",
                "optimization_event": "event_%d" % (i % 2),
                "product_surface": "feed",
                "data_constraint": "full",
                "flops": 1.0,
                "baseline_performance": 0.5,
                "weight": 1.0,
            }
        )
    return models


def run_config(seed):
    space = {
        "dims": [
            {"name": "rate", "type": "continuous", "lo": 0.0, "hi": 1.0},
            {"name": "amount", "type": "continuous", "lo": 0.0, "hi": 1.0},
        ]
    }
    return {
        "seed": seed,
        "techniques": [{"id": "quant", "space": space}],
        "optimization": {
            "iterations_per_technique": 10,
            "mc_samples": 64,
            "candidate_pool": 64,
            "initial_design_size": 5,
        },
        "representatives": {"fixed_k": 3},
        "holdout_fraction": 0.5,
        "evaluator": {
            "backend": "synthetic",
            "spec": {
                "model_count": 8,
                "techniques": {
                    "quant": {
                        "global_center": [0.4, 0.6],
                        "peak_delta_range": [0.01, 0.03],
                    }
                },
            },
        },
    }


def test_aggregate_gate():
    deltas = [0.01, -0.02, 0.005]
    weights = _core.normalize_weights([1.0, 1.0, 2.0])
    loose = _core.aggregate(deltas, weights, alpha=0.0005, epsilon=0.5)
    want = sum(d * w for d, w in zip(deltas, weights))
    assert abs(loose["weighted_mean"] - want) < 1e-15
    assert loose["feasible"]
    assert loose["aggregate"] == loose["weighted_mean"]

    tight = _core.aggregate(deltas, weights, alpha=0.0005, epsilon=0.1)
    assert not tight["feasible"]
    assert tight["aggregate"] is None
    assert _core.regression_rate(deltas, 0.0005) == 1.0 / 3.0


def test_select_representatives():
    reps = json.loads(
        _core.select_representatives(json.dumps(small_fleet(6)), 2, 2, 7)
    )
    assert reps["k"] == 2
    assert len(reps["chosen_ids"]) == 2


def test_monte_carlo_ei_hinge():
    assert _core.monte_carlo_ei(0.3, 0.0, 0.1, 128, 1) == 0.3 - 0.1
    assert _core.monte_carlo_ei(0.0, 0.0, 0.1, 128, 1) == 0.0


def test_pipeline_and_render():
    config = json.dumps(run_config(11))
    with tempfile.TemporaryDirectory() as tmp:
        a = os.path.join(tmp, "a")
        b = os.path.join(tmp, "b")
        first = _core.run(config, a)
        assert first["exit_code"] == 0, first
        assert first["status"] == "ok"
        second = _core.run(config, b)
        with open(os.path.join(a, "trials.jsonl"), "rb") as fh:
            log_a = fh.read()
        with open(os.path.join(b, "trials.jsonl"), "rb") as fh:
            log_b = fh.read()
        assert log_a == log_b

        text = _core.render(a)
        assert "status: ok" in text
        assert "%" in text

        report = json.load(open(os.path.join(a, "report.json")))
        assert report["status"] == "ok"

        space = run_config(11)["techniques"][0]["space"]
        sens = json.loads(
            _core.classify_parameters(json.dumps(space), log_a.decode())
        )
        assert len(sens["entries"]) == 2


def test_error_translation():
    try:
        _core.render(os.path.join(tempfile.gettempdir(), "no-such-run-dir"))
    except _core.Error as e:
        assert "report.json" in str(e)
    else:
        raise AssertionError("missing report should raise")


if __name__ == "__main__":
    names = [n for n in sorted(dir()) if n.startswith("test_")]
    for name in names:
        globals()[name]()
        print("ok:", name)
    print("python smoke: %d checks passed" % len(names))
