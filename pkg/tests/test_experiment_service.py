import math

import numpy as np
import pytest

from services.bounds_service import arbitrary_bound, independent_curve
from services.experiment_service import (
    CSV_COLUMNS, ExperimentConfig, ExperimentService, experiment_config_from_file, format_csv, load_teacher,
    parse_marginal, run_experiment, write_csv,
)
from services.network_service import write_btn
from utils.errors import ShapeError


@pytest.fixture
def teacher_file(tmp_path, threshold_teacher):
    path = tmp_path / 'teacher.btn'
    write_btn(threshold_teacher, path)
    return str(path)


def test_config_validation():
    with pytest.raises(ShapeError):
        ExperimentConfig(learner='bogus')
    with pytest.raises(ShapeError):
        ExperimentConfig(eps_grid=[0.7])
    with pytest.raises(ShapeError):
        ExperimentConfig(n_grid=[])
    with pytest.raises(ShapeError):
        ExperimentConfig(trials=0)
    with pytest.raises(ShapeError):
        ExperimentConfig(d0=4, teacher_dims=[4, 1])
    ExperimentConfig(learner='minsize', d0=4, teacher_dims=[4, 1])


def test_config_from_file(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text('# tiny run\nlearner = minsize\neps_grid = 0.1, 0.25\nn_grid = 4,8\n'
                    'trials = 7\nseed = 3\nteacher_dims = 3, 2, 1\n')
    config = experiment_config_from_file(path)
    assert config.learner == 'minsize' and config.trials == 7 and config.seed == 3
    assert config.eps_grid == [0.1, 0.25] and config.n_grid == [4, 8]
    assert config.teacher_dims == [3, 2, 1] and config.student_dims == [3, 3, 2, 1]
    path.write_text('unknown_key = 1\n')
    with pytest.raises(ShapeError):
        experiment_config_from_file(path)
    with pytest.raises(ShapeError):
        experiment_config_from_file(tmp_path / 'missing.cfg')


def test_marginal_and_teacher_loading(teacher_file, threshold_teacher):
    assert parse_marginal('uniform', 3) is None
    assert parse_marginal('0.25, 0.75', 1).tolist() == [0.25, 0.75]
    with pytest.raises(ShapeError):
        parse_marginal('0.5,0.5', 2)
    with pytest.raises(ShapeError):
        parse_marginal('a,b', 1)
    teacher = load_teacher(ExperimentConfig(teacher_file=teacher_file))
    assert teacher.dims == threshold_teacher.dims
    with pytest.raises(ShapeError):
        load_teacher(ExperimentConfig(learner='minsize', teacher_file=teacher_file, d0=4, teacher_dims=[4, 1]))


def test_constant_learner_at_full_noise():
    config = ExperimentConfig(learner='constant', eps_grid=[0.5], n_grid=[5], trials=6, seed=2)
    rows = run_experiment(config)
    assert len(rows) == 1
    row = rows[0]
    assert row.trials == 6 and row.failures == 0
    assert row.mean_risk == pytest.approx(0.5)
    assert row.trivial == 0.5 and row.bayes == 0.5


def test_minsize_rows_and_reference_columns(teacher_file):
    config = ExperimentConfig(learner='minsize', teacher_file=teacher_file, eps_grid=[0.0, 0.2],
                              n_grid=[4, 6], trials=5, seed=11, max_workers=2)
    rows = run_experiment(config)
    assert [(r.eps_star, r.n) for r in rows] == [(0.0, 4), (0.0, 6), (0.2, 4), (0.2, 6)]
    for row in rows:
        assert row.trials + row.failures == 5
        assert row.eps_tr <= row.eps_star + 1e-12
        assert row.independent_curve == pytest.approx(independent_curve(row.eps_star))
        assert row.arbitrary_bound == pytest.approx(arbitrary_bound(row.eps_star))
        assert 0.0 <= row.inconsistent_frac < 1.0
        assert row.mean_risk >= row.eps_star - 1e-12
    assert rows[0].inconsistent_frac == 0.0 and rows[0].eps_tr == 0.0


def test_rerun_is_byte_identical(tmp_path, teacher_file):
    config = ExperimentConfig(learner='minsize', teacher_file=teacher_file, eps_grid=[0.1, 0.3],
                              n_grid=[5, 8], trials=8, seed=42, max_workers=4)
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    write_csv(run_experiment(config), first)
    write_csv(run_experiment(config), second)
    assert first.read_bytes() == second.read_bytes()
    header = first.read_text().splitlines()[0]
    assert header == ','.join(CSV_COLUMNS)


def test_posterior_with_small_student(teacher_file):
    config = ExperimentConfig(teacher_file=teacher_file, eps_grid=[0.2], n_grid=[6], trials=10,
                              student_dims=[3, 2, 1], seed=5)
    service = ExperimentService(config)
    assert service.histogram is not None
    row = service.run()[0]
    assert row.failures == 0
    assert 0.2 - 1e-12 <= row.mean_risk <= 0.8
    assert row.stderr >= 0


def test_posterior_falls_back_to_sampling(teacher_file):
    config = ExperimentConfig(teacher_file=teacher_file, eps_grid=[0.1], n_grid=[4], trials=3,
                              student_dims=[3, 2, 1], enumeration_cap=10, seed=8)
    service = ExperimentService(config)
    assert service.histogram is None
    row = service.run()[0]
    assert row.trials + row.failures == 3
    if row.trials:
        assert math.isfinite(row.mean_risk)


def test_format_csv_renders_integers_and_floats():
    config = ExperimentConfig(learner='constant', eps_grid=[0.25], n_grid=[3], trials=2, seed=1)
    text = format_csv(run_experiment(config))
    lines = text.splitlines()
    assert len(lines) == 2 and text.endswith('\n')
    values = lines[1].split(',')
    assert values[1] == '3' and values[2] == '2'
    assert float(values[0]) == 0.25


@pytest.mark.slow
def test_tempered_posterior_curve(teacher_file):
    config = ExperimentConfig(teacher_file=teacher_file, d0=3, eps_grid=[0.1, 0.2, 0.3, 0.4], n_grid=[10],
                              trials=200, student_dims=[3, 3, 2, 1], enumeration_cap=1e13, seed=0)
    rows = run_experiment(config)
    for row in rows:
        assert row.failures == 0
        eps_hat = row.eps_tr
        assert abs(row.mean_risk - independent_curve(eps_hat)) <= 0.10
        assert eps_hat - 1e-12 <= row.mean_risk <= arbitrary_bound(eps_hat) + 0.05
    risks = np.array([row.mean_risk for row in rows])
    assert np.all(np.diff(risks) > 0)
