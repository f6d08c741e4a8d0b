"""Quick end-to-end check of the mars_sched extension module."""

import json
import math

import mars_sched as ms


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


def main():
    assert close(ms.bounded_slowdown(30.0, 5.0, 10.0), 3.5)
    assert close(ms.slowdown(0.0, 7.0), 1.0)
    assert ms.pp_slowdown(30.0, 5.0, 4, 10.0) <= ms.bounded_slowdown(30.0, 5.0, 10.0)

    trace = ms.Trace.synthetic(200, seed=3)
    assert len(trace) == 200
    again = ms.Trace.from_swf(trace.to_swf())
    assert [j[:5] for j in again.jobs()] == [j[:5] for j in trace.jobs()]

    reports = {p: ms.simulate(trace, p) for p in ms.heuristics()}
    for name, r in reports.items():
        assert r.jobs == 200 and r.mean_bounded_slowdown >= 1.0, (name, r)
    print("heuristics:", {k: round(v.mean_bounded_slowdown, 3) for k, v in reports.items()})

    assert ms.route(100) == "sjf"
    assert ms.route(300) == "unicef"
    assert ms.route(1000) == "rl"
    assert ms.route(30000) == "split"
    assert ms.route(300, next_len=300) == "combine"

    report, plan = ms.run_mars(trace)
    assert report.jobs == 200
    assert json.loads(plan)
    assert close(report.mean_bounded_slowdown, reports["sjf"].mean_bounded_slowdown)

    small = trace.slice(0, 64)
    model = ms.Model.train(small, {"epochs": 20, "seed": 1, "slots": 8, "hidden": [16]})
    assert model.epochs_trained == 20
    restored = ms.Model.from_json(model.to_json(), {"slots": 8, "hidden": [16]})
    a = model.evaluate(small).mean_bounded_slowdown
    b = ms.simulate(small, "rl", model=restored).mean_bounded_slowdown
    assert a == b
    print("rl greedy:", round(a, 3), "random:", round(ms.random_baseline(small, 5, slots=8), 3))

    try:
        ms.simulate(trace, "nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown policy accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
