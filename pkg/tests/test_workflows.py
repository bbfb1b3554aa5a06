import json
import math
import re

import numpy as np
import pytest

from simflock.designs import FullFactorial, LatinHypercube
from simflock.errors import (
    InvalidSigmaError,
    InvalidSpecError,
    LifecycleError,
    MissingOutputError,
)
from simflock.executor import LocalProcess, TrialStatus
from simflock.params import GridValues, ParamSpace, Uniform
from simflock.scheduling import Asha
from simflock.search import GpBayesOpt, GridSearch, RandomSearch
from simflock.workflows import (
    GaussianMLE,
    LeastSquares,
    StudyHandle,
    StudySpec,
    build_and_run,
    format_log,
    run_doe,
    run_opt,
    run_param_est,
    run_study,
    score_gaussian_mle,
    score_least_squares,
    validate_spec,
    write_log,
)


# -- estimation rules ------------------------------------------------------------


def test_least_squares_exact_match():
    rule = LeastSquares(targets={"a": 1.0, "b": 2.0})
    assert score_least_squares(rule, {"a": 1.0, "b": 2.0}) == (0.0, 0.0)


def test_least_squares_hand_arithmetic():
    rule = LeastSquares(targets={"a": 1.0, "b": 2.0})
    j, rmse = score_least_squares(rule, {"a": 4.0, "b": 6.0})
    assert j == 25.0
    assert rmse == pytest.approx(math.sqrt(12.5))


def test_least_squares_missing_output():
    rule = LeastSquares(targets={"a": 1.0, "b": 2.0})
    with pytest.raises(MissingOutputError):
        score_least_squares(rule, {"a": 4.0})


def test_least_squares_weights_disable_rmse():
    rule = LeastSquares(targets={"a": 0.0}, weights={"a": 2.0})
    j, rmse = score_least_squares(rule, {"a": 3.0})
    assert j == 18.0
    assert rmse is None


def test_gaussian_mle_exact_match():
    rule = GaussianMLE(targets={"a": 1.0, "b": 2.0}, sigmas={"a": 1.0, "b": 1.0})
    nll = score_gaussian_mle(rule, {"a": 1.0, "b": 2.0})
    assert nll == pytest.approx(2 * math.log(math.sqrt(2 * math.pi)))


def test_gaussian_mle_zero_sigma():
    rule = GaussianMLE(targets={"a": 1.0}, sigmas={"a": 0.0})
    with pytest.raises(InvalidSigmaError):
        score_gaussian_mle(rule, {"a": 1.0})


def test_equal_sigma_argmin_matches_least_squares():
    targets = {"a": 1.0, "b": -2.0}
    ls = LeastSquares(targets=targets)
    mle = GaussianMLE(targets=targets, sigmas={"a": 0.7, "b": 0.7})
    rng = np.random.default_rng(2)
    trials = [{"a": float(rng.normal()), "b": float(rng.normal())} for _ in range(40)]
    ls_scores = [score_least_squares(ls, t)[0] for t in trials]
    mle_scores = [score_gaussian_mle(mle, t) for t in trials]
    assert int(np.argmin(ls_scores)) == int(np.argmin(mle_scores))


# -- spec validation -----------------------------------------------------------


def unit_space():
    return ParamSpace({"value": Uniform(0.0, 10.0)})


def test_validate_spec_collects_all_reasons():
    spec = StudySpec(workflow="param_est", space=ParamSpace({}), budget=0,
                     max_concurrent=0)
    reasons = validate_spec(spec)
    assert len(reasons) >= 3


def test_validate_spec_bayes_opt_search_is_fixed():
    spec = StudySpec(workflow="bayes_opt", space=unit_space(), budget=4,
                     objective_metric="m", search=RandomSearch(seed=0))
    assert any("fixed to gp_bo" in r for r in validate_spec(spec))
    spec.search = GpBayesOpt(seed=0)
    assert validate_spec(spec) == []


def test_validate_spec_unknown_workflow():
    spec = StudySpec(workflow="mystery", space=unit_space())
    assert validate_spec(spec)


# -- study drivers ----------------------------------------------------------------


def echo_pool(sims):
    return [LocalProcess((sims["echo_value"],))]


def test_run_opt_grid_visits_every_point_once(sims):
    space = ParamSpace({"value": GridValues((3.0, 1.0, 2.0))})
    spec = StudySpec(workflow="opt", space=space, budget=10, seed=1,
                     objective_metric="m", search=GridSearch())
    report = run_opt(spec, echo_pool(sims))
    assert len(report.records) == 3  # budget clamped to the grid size
    values = sorted(r.config["value"] for r in report.records)
    assert values == [1.0, 2.0, 3.0]
    assert report.best_trial.config["value"] == 1.0
    assert report.best_objective == 1.0


def test_concurrent_random_study_has_distinct_configs(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=8, seed=5,
                     max_concurrent=4, objective_metric="m")
    report = run_opt(spec, echo_pool(sims))
    values = [r.config["value"] for r in report.records]
    assert len(set(values)) == 8


def test_run_opt_random_reproducible(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=6, seed=42,
                     objective_metric="m", search=RandomSearch(seed=42))
    first = run_opt(spec, echo_pool(sims))
    second = run_opt(spec, echo_pool(sims))
    assert first.best_trial.trial_id == second.best_trial.trial_id
    assert first.best_trial.metrics == second.best_trial.metrics


def branin_grid_minimum():
    # brute-force 1000x1000 grid reference for the Branin minimum
    x1 = np.linspace(-5.0, 10.0, 1000)
    x2 = np.linspace(0.0, 15.0, 1000)
    g1, g2 = np.meshgrid(x1, x2)
    b = 5.1 / (4 * np.pi**2)
    c = 5 / np.pi
    t = 1 / (8 * np.pi)
    f = (g2 - b * g1**2 + c * g1 - 6.0) ** 2 + 10 * (1 - t) * np.cos(g1) + 10
    return float(f.min())


def test_branin_reference_minimum():
    assert branin_grid_minimum() == pytest.approx(0.397887, abs=1e-3)


def test_bayes_opt_equals_opt_with_gp_search(sims):
    from simflock.workflows import run_bayes_opt

    space = ParamSpace({"x1": Uniform(-5.0, 10.0), "x2": Uniform(0.0, 15.0)})
    pool = [LocalProcess((sims["branin"],))]
    bo_spec = StudySpec(workflow="bayes_opt", space=space, budget=10, seed=3,
                        objective_metric="branin")
    opt_spec = StudySpec(workflow="opt", space=space, budget=10, seed=3,
                         objective_metric="branin", search=GpBayesOpt(seed=3))
    bo = run_bayes_opt(bo_spec, pool)
    opt = run_opt(opt_spec, pool)
    assert bo.best_trial.trial_id == opt.best_trial.trial_id
    assert [r.config for r in bo.records] == [r.config for r in opt.records]


def test_mode_max_on_negated_metric_mirrors_min(sims):
    space = ParamSpace({"x1": Uniform(-5.0, 10.0), "x2": Uniform(0.0, 15.0)})
    pool = [LocalProcess((sims["branin"],))]
    min_spec = StudySpec(workflow="opt", space=space, budget=12, seed=6,
                         mode="min", objective_metric="branin",
                         search=GpBayesOpt(seed=6))
    max_spec = StudySpec(workflow="opt", space=space, budget=12, seed=6,
                         mode="max", objective_metric="neg_branin",
                         search=GpBayesOpt(seed=6))
    r_min = run_opt(min_spec, pool)
    r_max = run_opt(max_spec, pool)
    assert r_min.best_trial.config == r_max.best_trial.config
    assert r_min.best_objective == pytest.approx(-r_max.best_objective)


def test_budget_below_n_initial_keeps_sobol_proposals(sims):
    from simflock.designs import gen_sobol

    spec = StudySpec(workflow="bayes_opt", space=unit_space(), budget=4, seed=0,
                     objective_metric="m")
    report = run_study(spec, echo_pool(sims))
    expected = gen_sobol(1, 4).points[:, 0]
    got = [r.config["value"] for r in report.records]
    assert got == pytest.approx(10.0 * expected)


def test_gp_bo_study_reruns_identically_when_serial(sims):
    spec = StudySpec(workflow="bayes_opt", space=unit_space(), budget=12, seed=9,
                     objective_metric="m", max_concurrent=1)
    from simflock.workflows import run_bayes_opt

    first = run_bayes_opt(spec, echo_pool(sims))
    second = run_bayes_opt(spec, echo_pool(sims))
    assert first.best_trial.trial_id == second.best_trial.trial_id
    assert [r.config for r in first.records] == [r.config for r in second.records]


def test_run_opt_mode_max(sims):
    space = ParamSpace({"value": GridValues((3.0, 1.0, 2.0))})
    spec = StudySpec(workflow="opt", space=space, budget=3, mode="max",
                     objective_metric="m", search=GridSearch())
    report = run_opt(spec, echo_pool(sims))
    assert report.best_objective == 3.0
    # max-mode best-so-far is nondecreasing
    curve = [v for v in report.best_so_far if v is not None]
    assert all(a <= b for a, b in zip(curve, curve[1:]))


def test_best_so_far_monotone_and_ties_break_low(sims):
    space = ParamSpace({"value": GridValues((2.0, 1.0, 1.0 + 0.0, 5.0))})
    # duplicate values are not allowed in GridValues; use distinct grid and a
    # tie through repeated random draws instead
    space = ParamSpace({"value": GridValues((2.0, 1.0, 5.0))})
    spec = StudySpec(workflow="opt", space=space, budget=3,
                     objective_metric="m", search=GridSearch())
    report = run_opt(spec, echo_pool(sims))
    curve = [v for v in report.best_so_far if v is not None]
    assert all(a >= b for a, b in zip(curve, curve[1:]))


def test_run_param_est_recovers_grid_point(sims):
    # the echo simulator returns m = value; the target selects one grid point
    space = ParamSpace({"value": GridValues((0.0, 2.5, 7.0))})
    spec = StudySpec(workflow="param_est", space=space, budget=3,
                     rule=LeastSquares(targets={"m": 2.5}), search=GridSearch())
    report = run_param_est(spec, echo_pool(sims))
    assert report.best_trial.config["value"] == 2.5
    assert report.best_objective == 0.0
    assert report.best_rmse == 0.0
    assert report.mode == "min"


def test_run_param_est_budget_one(sims):
    spec = StudySpec(workflow="param_est", space=unit_space(), budget=1, seed=3,
                     rule=LeastSquares(targets={"m": 5.0}))
    report = run_param_est(spec, echo_pool(sims))
    assert report.best_trial.trial_id == 0


def test_run_param_est_all_rejected_warns(sims):
    space = ParamSpace({"r": GridValues((0.9,))})
    spec = StudySpec(workflow="param_est", space=space, budget=1,
                     rule=LeastSquares(targets={"m": 1.0}), search=GridSearch())
    report = run_param_est(spec, [LocalProcess((sims["rejecty"],))])
    assert report.records[0].status is TrialStatus.REJECTED
    assert report.best_trial is None
    assert report.warnings


def test_missing_target_metric_marks_trial_failed(sims):
    spec = StudySpec(workflow="param_est", space=unit_space(), budget=2, seed=0,
                     rule=LeastSquares(targets={"nope": 1.0}))
    report = run_param_est(spec, echo_pool(sims))
    assert all(r.status is TrialStatus.FAILED for r in report.records)
    assert all("nope" in r.error for r in report.records)
    assert report.best_trial is None


def test_run_doe_full_factorial(sims):
    space = ParamSpace({"value": GridValues((1.0, 2.0))})
    spec = StudySpec(workflow="doe", space=space, design=FullFactorial())
    report = run_doe(spec, echo_pool(sims))
    assert len(report.records) == 2
    assert report.best_trial is None
    assert report.objectives is None


def test_run_doe_lhs_count_and_concurrency(sims):
    space = ParamSpace({"value": Uniform(0.0, 1.0), "other": Uniform(0.0, 1.0)})
    spec = StudySpec(workflow="doe", space=space, design=LatinHypercube(n=12),
                     max_concurrent=3, seed=5)
    report = run_doe(spec, [LocalProcess((sims["sleepy"],))],
                     on_event=None)
    assert len(report.records) == 12
    assert report.peak_concurrent <= 3


def test_run_doe_rejections_preserved(sims):
    space = ParamSpace({"r": GridValues((0.1, 0.9))})
    spec = StudySpec(workflow="doe", space=space, design=FullFactorial())
    report = run_doe(spec, [LocalProcess((sims["rejecty"],))])
    statuses = {r.config["r"]: r.status for r in report.records}
    assert statuses[0.1] is TrialStatus.COMPLETED
    assert statuses[0.9] is TrialStatus.REJECTED


def test_scheduler_prunes_through_workflow(sims):
    # grid search proposes values 0..5 in order (pruned proposals stay in the
    # pending set, so nothing is re-proposed); the reporter echoes its value
    # at every checkpoint, so ASHA keeps only the first, best trial
    space = ParamSpace({"value": GridValues((0.0, 1.0, 2.0, 3.0, 4.0, 5.0))})
    spec = StudySpec(
        workflow="opt", space=space, budget=6, objective_metric="m",
        search=GridSearch(),
        scheduler=Asha(metric="m", mode="min", grace=1, max_t=4, reduction=2),
    )
    report = run_opt(spec, [LocalProcess((sims["reporter"],))])
    assert [r.config["value"] for r in report.records] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    statuses = [r.status for r in report.records]
    assert statuses[0] is TrialStatus.COMPLETED
    assert all(s is TrialStatus.PRUNED for s in statuses[1:])
    # pruned trials never enter the best ranking or the objective list
    assert report.best_trial.trial_id == 0
    for record, objective in zip(report.records, report.objectives):
        if record.status is TrialStatus.PRUNED:
            assert objective is None


# -- lifecycle -------------------------------------------------------------------


def test_auto_run_returns_report(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=2, seed=0,
                     objective_metric="m")
    result = build_and_run(spec, echo_pool(sims))
    assert hasattr(result, "records")


def test_manual_mode_setters_then_build_then_run(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=2, seed=0,
                     objective_metric="m", auto_run=False)
    handle = build_and_run(spec, echo_pool(sims))
    assert isinstance(handle, StudyHandle)
    handle.set_max_concurrent(2)
    handle.set_retries(1)
    handle.build()
    report = handle.run()
    assert len(report.records) == 2
    assert handle.spec.max_concurrent == 2


def test_manual_run_before_build_is_lifecycle_error(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=1, seed=0,
                     objective_metric="m", auto_run=False)
    handle = build_and_run(spec, echo_pool(sims))
    with pytest.raises(LifecycleError):
        handle.run()


def test_manual_mutate_after_build_is_lifecycle_error(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=1, seed=0,
                     objective_metric="m", auto_run=False)
    handle = build_and_run(spec, echo_pool(sims))
    handle.build()
    with pytest.raises(LifecycleError):
        handle.set_max_concurrent(4)
    with pytest.raises(LifecycleError):
        handle.build()


def test_build_and_run_validates_first(sims):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=0,
                     objective_metric="m")
    with pytest.raises(InvalidSpecError):
        build_and_run(spec, echo_pool(sims))


# -- logging and files ---------------------------------------------------------


def quick_report(sims, **kwargs):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=2, seed=0,
                     objective_metric="m", **kwargs)
    return run_opt(spec, echo_pool(sims))


LOG_PATTERN = re.compile(r"simflock_log_\d{8}_\d{6}(_\d+)?\.txt")


def test_write_log_file_name_and_content(sims, tmp_path):
    report = quick_report(sims)
    path = write_log(report, to_file=True, directory=tmp_path)
    assert LOG_PATTERN.fullmatch(path.name)
    text = path.read_text()
    assert "best trial" in text
    assert "trial" in text


def test_write_log_collision_suffix(sims, tmp_path):
    report = quick_report(sims)
    first = write_log(report, to_file=True, directory=tmp_path)
    second = write_log(report, to_file=True, directory=tmp_path)
    third = write_log(report, to_file=True, directory=tmp_path)
    names = {first.name, second.name, third.name}
    assert len(names) == 3
    assert any(re.search(r"_\d+\.txt$", n) for n in (second.name, third.name))


def test_write_log_console_mode(sims, tmp_path, capsys):
    report = quick_report(sims)
    path = write_log(report, to_file=False, directory=tmp_path)
    assert path is None
    assert list(tmp_path.iterdir()) == []
    assert "best trial" in capsys.readouterr().out


def test_run_study_writes_report_files(sims, tmp_path):
    spec = StudySpec(workflow="opt", space=unit_space(), budget=3, seed=1,
                     objective_metric="m", log_to_file=True)
    report = run_study(spec, echo_pool(sims), out_dir=tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["summary"]["n_trials"] == 3
    assert len(data["trials"]) == 3
    assert data["summary"]["best_trial_id"] == report.best_trial.trial_id
    csv_lines = (tmp_path / "best_so_far.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "trial_id,objective,best"
    assert len(csv_lines) == 4
    assert report.log_path is not None and report.log_path.parent == tmp_path
    assert data["summary"]["log_path"] == str(report.log_path)


def test_format_log_mentions_every_trial(sims):
    report = quick_report(sims)
    text = format_log(report)
    for record in report.records:
        assert f"\n{record.trial_id:>5}  " in text or text.startswith(f"{record.trial_id:>5}  ")
