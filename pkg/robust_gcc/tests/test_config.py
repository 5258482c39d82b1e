import logging

import pytest

from robust_gcc.config import GccSettings
from robust_gcc.exceptions import ProblemFileError
from robust_gcc.logging import init_logging
from robust_gcc.monitoring.metrics import MetricsCollector


def test_defaults():
    settings = GccSettings()
    assert settings.solver.strict_margin == 1e-7
    assert settings.synth.objective == "trace"
    assert settings.sim.runs == 5000
    assert settings.sim.horizon == 200
    assert set(settings.to_dict()) == {'solver', 'synth', 'sim'}


def test_overrides_are_coerced():
    settings = GccSettings().apply_overrides([
        'sim.runs=250',
        'sim.record_trajectories=yes',
        'solver.strict_margin=1e-6',
        'synth.dilation=printed',
        'sim.x0=1,2,3',
    ])
    assert settings.sim.runs == 250
    assert settings.sim.record_trajectories is True
    assert settings.solver.strict_margin == 1e-6
    assert settings.synth.dilation == "printed"
    assert settings.sim.x0 == (1.0, 2.0, 3.0)


def test_later_overrides_win():
    settings = GccSettings().apply_overrides(['sim.seed=1', 'sim.seed=2'])
    assert settings.sim.seed == 2


def test_unknown_section_and_key():
    with pytest.raises(ProblemFileError) as info:
        GccSettings().apply_overrides(['plot.dpi=300'])
    assert info.value.field == "plot"
    with pytest.raises(ProblemFileError) as info:
        GccSettings().apply_overrides(['sim.steps=3'])
    assert info.value.field == "sim.steps"


def test_bad_values():
    with pytest.raises(ProblemFileError):
        GccSettings().apply_overrides(['sim.runs=many'])
    with pytest.raises(ProblemFileError):
        GccSettings().apply_overrides(['sim.runs=0'])
    with pytest.raises(ProblemFileError):
        GccSettings().apply_overrides(['sim.record_trajectories=maybe'])
    with pytest.raises(ProblemFileError):
        GccSettings().apply_overrides(['synth.objective=det'])


def test_malformed_override():
    with pytest.raises(ProblemFileError) as info:
        GccSettings().apply_overrides(['sim.runs'])
    assert info.value.location == "--opt"


def test_apply_mapping():
    settings = GccSettings().apply_mapping({
        'sim': {'runs': 100, 'seed': 3},
        'solver': {'max_outer': 80},
    })
    assert settings.sim.runs == 100 and settings.sim.seed == 3
    assert settings.solver.max_outer == 80


def test_apply_mapping_rejects_non_integral_runs():
    with pytest.raises(ProblemFileError) as info:
        GccSettings().apply_mapping({'sim': {'runs': 2.5}})
    assert info.value.location == "config.sim"


def test_init_logging():
    logger = init_logging("DEBUG")
    assert logger.name == "robust_gcc"
    assert isinstance(logger, logging.Logger)


def test_metrics_collector_records_runs():
    metrics = MetricsCollector()
    with metrics.measure("work") as timing:
        sum(range(1000))
    assert timing['elapsed'] >= 0.0
    assert len(metrics.records) == 1
    summary = metrics.summary()[0]
    assert summary['label'] == "work"
    assert summary['rss_mb'] > 0
