import json
import os

import numpy as np
import pytest

from deva import __version__
from deva.errors import InvalidConfig, IoError, NumericalBreakdown
from deva.harness import (CSV_HEADER, compare_suite, csv_text, emit, load_config, parse_config, run_experiment,
                          run_single, sweep)


def base(**over):
    cfg = {
        "problem": {"kind": "trace_quadratic_het", "dim": 9},
        "optimizer": {"kind": "deva_sinf", "lr": 0.01, "beta1": 0.0, "beta2": 0.99},
        "steps": 40,
        "seeds": [0, 1, 2],
        "batch_size": 1,
        "schedule": {"kind": "warmup_linear", "warmup_frac": 0.5},
        "log_every": 10,
        "diagnostics": True,
    }
    cfg.update(over)
    return cfg


def scalar_gd(steps=10, seeds=(0,)):
    return parse_config({
        "problem": {"kind": "vector_quadratic", "dim": 1, "spectrum": [1.0], "gradient": "full"},
        "optimizer": {"kind": "gd", "lr": 0.1}, "steps": steps, "seeds": list(seeds), "log_every": 1,
    })


# -- config ---------------------------------------------------------------------


def test_parse_full_config():
    cfg = parse_config(base(seeds={"start": 5, "count": 3}))
    assert cfg.seeds == (5, 6, 7)
    assert cfg.hp().beta1 == 0.0 and cfg.hp().beta3 == 0.95
    assert cfg.schedule.warmup_frac == 0.5 and cfg.diagnostics


@pytest.mark.parametrize("patch", [
    dict(steps=0),
    dict(seeds=[]),
    dict(seeds={"start": 0, "count": 0}),
    dict(seeds=[-1]),
    dict(schedule={"kind": "warmup_linear", "warmup_frac": 1.5}),
    dict(schedule={"kind": "cosine"}),
    dict(problem={"kind": "rosenbrock"}),
    dict(problem={"kind": "trace_quadratic_het", "dim": 6}),
    dict(optimizer={"kind": "lion"}),
    dict(optimizer={"kind": "adam", "lr": -1.0}),
    dict(optimizer={"kind": "adam", "momentum": 0.9}),
    dict(batch_size=0),
    dict(log_every=0),
    dict(diagnostics="maybe"),
])
def test_invalid_configs_rejected(patch):
    with pytest.raises(InvalidConfig):
        parse_config(base(**patch))


def test_matrix_optimizer_on_vector_problem_rejected():
    with pytest.raises(InvalidConfig):
        parse_config(base(problem={"kind": "vector_quadratic", "dim": 3}))


def test_missing_key_rejected():
    raw = base()
    del raw["steps"]
    with pytest.raises(InvalidConfig):
        parse_config(raw)


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidConfig):
        load_config(bad)
    with pytest.raises(IoError):
        load_config(tmp_path / "missing.json")


def test_digest_tracks_content():
    a, b = parse_config(base()), parse_config(base())
    assert a.digest() == b.digest()
    assert a.digest() != a.with_lr(0.02).digest()


# -- runs ------------------------------------------------------------------------------


def test_scalar_gd_closed_form():
    recs = run_single(scalar_gd(), 0)
    assert [r.step for r in recs] == list(range(1, 11))
    assert recs[-1].loss == pytest.approx(0.5 * 0.9 ** 20, rel=1e-12)


def test_run_single_deterministic_and_logging_schedule():
    cfg = parse_config(base(steps=35))
    a, b = run_single(cfg, 4), run_single(cfg, 4)
    assert a == b
    assert [r.step for r in a] == [1, 10, 20, 30, 35]
    assert all(r.h_weighted is not None and r.grad_nuclear is not None for r in a)
    assert a[-1].lr == 0.0


def test_different_seeds_differ():
    cfg = parse_config(base())
    assert run_single(cfg, 0)[-1].loss != run_single(cfg, 1)[-1].loss


def test_deterministic_seeds_collapse_quantiles():
    s = run_experiment(scalar_gd(seeds=(0, 1, 2)))
    np.testing.assert_array_equal(s.loss_q[0], s.loss_q[1])
    np.testing.assert_array_equal(s.loss_q[1], s.loss_q[2])


def test_quantiles_ordered():
    s = run_experiment(parse_config(base(seeds={"start": 0, "count": 6})))
    assert np.all(s.loss_q[0] <= s.loss_q[1]) and np.all(s.loss_q[1] <= s.loss_q[2])
    assert np.all(s.hnorm_q[0] <= s.hnorm_q[1]) and np.all(s.hnorm_q[1] <= s.hnorm_q[2])
    assert s.wall_clock_per_step > 0


def test_breakdown_is_reported_per_seed():
    cfg = parse_config(base(optimizer={"kind": "gd", "lr": 1.0}, steps=200, diagnostics=False))
    with pytest.raises(NumericalBreakdown) as info:
        run_single(cfg, 0)
    assert 1 <= info.value.step <= 200
    s = run_experiment(cfg)
    assert set(s.failed) == {0, 1, 2} and s.final_losses == {}


def test_parallel_matches_serial():
    cfg = parse_config(base(diagnostics=False))
    a, b = run_experiment(cfg, workers=1), run_experiment(cfg, workers=2)
    assert csv_text(a) == csv_text(b)


def test_sweep_picks_lowest_median():
    cfg = parse_config(base(diagnostics=False, steps=100))
    best, results = sweep(cfg, [1e-3, 1e-2])
    assert best.median_final == min(s.median_final for s in results.values())
    with pytest.raises(InvalidConfig):
        sweep(cfg, [])


# -- comparison -------------------------------------------------------------------------


def gd_full(kind):
    return parse_config({
        "problem": {"kind": kind, "dim": 9, "gradient": "full"},
        "optimizer": {"kind": "gd", "lr": 1e-4}, "steps": 300, "seeds": {"start": 0, "count": 5}, "log_every": 10,
    })


def test_gd_hom_het_curves_match():
    cmp = compare_suite([gd_full("trace_quadratic_hom"), gd_full("trace_quadratic_het")])
    hom, het = cmp.summaries
    np.testing.assert_allclose(hom.loss_q, het.loss_q, rtol=1e-6)


def test_compare_ordering_and_single_row():
    cfgs = [parse_config(base(optimizer={"kind": k, "lr": 0.01, "beta1": 0.0, "beta2": 0.99},
                              steps=300, seeds={"start": 0, "count": 5}, diagnostics=False))
            for k in ("muon", "deva_sinf")]
    cmp = compare_suite(cfgs)
    assert cmp.ordering == ["deva_sinf_trace_quadratic_het", "muon_trace_quadratic_het"]
    single = compare_suite(cfgs[:1])
    assert len(single.table()) == 1 and single.ordering == ["muon_trace_quadratic_het"]


def test_compare_rejects_mismatched_runs():
    a = parse_config(base())
    with pytest.raises(InvalidConfig):
        compare_suite([a, parse_config(base(steps=41))])
    vec = parse_config({"problem": {"kind": "vector_quadratic", "dim": 9}, "optimizer": {"kind": "adam"},
                        "steps": 40, "seeds": [0]})
    with pytest.raises(InvalidConfig):
        compare_suite([a, vec])
    with pytest.raises(InvalidConfig):
        compare_suite([])


# -- output -----------------------------------------------------------------------------


def test_emit_contract_and_byte_stability(tmp_path):
    s = run_experiment(parse_config(base()))
    first = emit(s, tmp_path / "a")
    again = emit(s, tmp_path / "b")
    for p, q in zip(first, again):
        assert open(p, "rb").read() == open(q, "rb").read()
    csv_path = tmp_path / "a" / "trace_deva_sinf_trace_quadratic_het.csv"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "step,median_loss,q25_loss,q75_loss,median_hnorm,q25_hnorm,q75_hnorm"
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert [int(line.split(",")[0]) for line in lines[1:]] == [1, 10, 20, 30, 40]
    doc = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert doc["schema_version"] == "1" and doc["library_version"] == __version__
    assert doc["runs"][0]["config_hash"] == s.config.digest()


def test_emit_leaves_hnorm_empty_without_diagnostics():
    s = run_experiment(parse_config(base(diagnostics=False)))
    row = csv_text(s).splitlines()[1].split(",")
    assert row[4:] == ["", "", ""] and float(row[1]) > 0


def test_emit_io_error(tmp_path):
    s = run_experiment(scalar_gd())
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        emit(s, os.path.join(blocker, "sub"))
