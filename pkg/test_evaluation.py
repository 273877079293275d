#!/usr/bin/env python3
"""
Тесты оценочных экспериментов: матрица успехов, траектории, шум действий
и экспорт отчетов.
"""

import sys
import os

import numpy as np
import pandas as pd
import pytest

# Добавляем src в путь Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.envs.registry import make_env
from src.envs.scripted import ConstantPolicy, ScriptedClawGait, ScriptedRewardEnv, scripted_env_spec
from src.models.environment import load_env_spec
from src.models.fault import DamageCase
from src.models.report import AngleTrace, NoiseResult, SuccessMatrix
from src.services.evaluation_service import EvaluationService, case_seed, matrix_cases
from src.utils.report_exporter import MATRIX_COLUMNS, ReportExporter

# Одиночные повреждения всегда допустимы, пары с суммой весов > 10 проваливают задачу
WEIGHTS = [1, 9, 2, 7, 3, 8, 4, 6, 5]
BASE_REWARD = 10.0


@pytest.fixture
def scripted_service():
    spec = scripted_env_spec(n_joints=9, horizon=5, base_reward=BASE_REWARD, weights=WEIGHTS)
    return EvaluationService(lambda: make_env('scripted', spec), spec), ConstantPolicy(np.zeros(9), "const")


class TestSuccessMatrix:
    """Тесты матрицы успехов"""

    def test_cases(self):
        cases = matrix_cases(9)
        assert len(cases) == 45
        assert cases[:9] == [(i,) for i in range(9)]
        assert (0, 1) in cases and (1, 0) not in cases

    def test_closed_form_cells(self, scripted_service):
        """Тест: клетка успешна тогда и только тогда, когда base - w_i - w_j >= 0"""
        service, policy = scripted_service
        matrix = service.success_matrix(policy, trials=3, policy_id="const")
        for i, j, successes in matrix.cells():
            penalty = WEIGHTS[i] if i == j else WEIGHTS[i] + WEIGHTS[j]
            assert successes == (3 if BASE_REWARD - penalty >= 0 else 0)
        assert np.array_equal(matrix.successes, matrix.successes.T)
        assert matrix.min_diagonal_rate == 1.0
        assert matrix.policy_id == "const"

    def test_episode_count(self, scripted_service, monkeypatch):
        """Тест: 9 одиночных и 36 парных сценариев по 12 эпизодов дают 540 эпизодов"""
        service, policy = scripted_service
        resets = []
        original = ScriptedRewardEnv.reset

        def counting_reset(self, *args, **kwargs):
            resets.append(1)
            return original(self, *args, **kwargs)

        monkeypatch.setattr(ScriptedRewardEnv, "reset", counting_reset)
        matrix = service.success_matrix(policy, trials=12)
        assert len(resets) == 540
        assert matrix.trials_per_cell == 12

    def test_parallel_equals_serial(self):
        spec = scripted_env_spec(n_joints=9, horizon=5, base_reward=BASE_REWARD, weights=WEIGHTS)
        policy = ConstantPolicy(np.zeros(9))
        serial = EvaluationService(lambda: make_env('scripted', spec), spec, max_workers=1)
        parallel = EvaluationService(lambda: make_env('scripted', spec), spec, max_workers=4)
        a = serial.success_matrix(policy, trials=2)
        b = parallel.success_matrix(policy, trials=2)
        assert np.array_equal(a.successes, b.successes)

    def test_invalid_trials(self, scripted_service):
        service, policy = scripted_service
        with pytest.raises(ValueError, match="trials"):
            service.success_matrix(policy, trials=0)

    def test_matrix_validation(self):
        with pytest.raises(ValueError, match="square"):
            SuccessMatrix("claw_valve", "p", 10, np.zeros((2, 3), dtype=int))
        with pytest.raises(ValueError, match="trials_per_cell"):
            SuccessMatrix("claw_valve", "p", 10, np.full((2, 2), 11))

    def test_case_seed_depends_on_label(self):
        assert case_seed('claw_valve', [1, 2]) == case_seed('claw_valve', (2, 1))
        assert case_seed('claw_valve', [1, 2]) != case_seed('kitty_walk', [1, 2])
        assert case_seed('claw_valve', [1]) != case_seed('claw_valve', [1], salt="trace")


class TestTracesAndNoise:
    """Тесты траекторий и эксперимента с шумом"""

    def test_traces_reference_first(self, scripted_service):
        service, policy = scripted_service
        traces = service.angle_traces(policy, [DamageCase.parse("1,3"), DamageCase.parse("4")])
        assert [t.label for t in traces] == ["undamaged", "1,3", "4"]
        assert traces[0].reference and not traces[1].reference
        assert all(len(t) == 5 for t in traces)
        assert not traces[1].success and traces[2].success

    def test_zero_noise_equals_plain_evaluation(self):
        """Тест: sigma = 0 повторяет обычную детерминированную оценку"""
        spec = load_env_spec('claw_valve')
        service = EvaluationService(lambda: make_env('claw_valve', spec), spec)
        gait = ScriptedClawGait(spec)
        noise = service.noise_experiment(gait, sigma=0.0, episodes=3, damaged_set=[4], seed_base=7)
        report = service.evaluate_cases(gait, [DamageCase.parse("4")], episodes=3, seed_base=7)[0]
        assert noise.success_rate == pytest.approx(report.success_rate)

    def test_noise_is_reproducible(self):
        spec = load_env_spec('claw_valve')
        service = EvaluationService(lambda: make_env('claw_valve', spec), spec)
        gait = ScriptedClawGait(spec)
        a = service.noise_experiment(gait, sigma=0.5, episodes=2, seed_base=3)
        b = service.noise_experiment(gait, sigma=0.5, episodes=2, seed_base=3)
        assert a == b

    def test_negative_sigma(self, scripted_service):
        service, policy = scripted_service
        with pytest.raises(ValueError, match="sigma"):
            service.noise_experiment(policy, sigma=-0.1)
        with pytest.raises(ValueError, match="at least one episode"):
            NoiseResult("scripted", "p", 0.1, 0, 0)


class TestReportExporter:
    """Тесты экспорта отчетов"""

    @pytest.fixture
    def matrix(self):
        successes = np.array([[10, 3, 0], [3, 9, 5], [0, 5, 10]])
        return SuccessMatrix("claw_valve", "rsac", 10, successes)

    def test_csv_layout(self, matrix, tmp_path):
        """Тест: заголовок, одна строка на клетку, окончания строк LF"""
        path = ReportExporter.export_success_matrix_csv(matrix, tmp_path / "matrix.csv")
        raw = path.read_bytes()
        assert b"\r\n" not in raw
        assert raw.decode('utf-8').splitlines()[0] == ",".join(MATRIX_COLUMNS)
        frame = pd.read_csv(path)
        assert len(frame) == 9
        cell = frame[(frame.joint_i == 1) & (frame.joint_j == 2)].iloc[0]
        assert cell.successes == 5 and cell.rate == pytest.approx(0.5)

    def test_full_matrix_rows(self, scripted_service, tmp_path):
        service, policy = scripted_service
        matrix = service.success_matrix(policy, trials=1)
        frame = pd.read_csv(ReportExporter.export_success_matrix_csv(matrix, tmp_path / "m.csv"))
        assert len(frame) == 81

    def test_xlsx_sheets(self, matrix, tmp_path):
        path = ReportExporter.export_success_matrix_xlsx(matrix, tmp_path / "matrix.xlsx")
        sheets = pd.read_excel(path, sheet_name=None, engine='openpyxl')
        assert set(sheets) == {'cells', 'rates'}
        assert list(sheets['cells'].columns) == MATRIX_COLUMNS

    def test_svg_outputs(self, matrix, tmp_path):
        heatmap = ReportExporter.export_success_matrix_svg(matrix, tmp_path / "matrix.svg")
        assert heatmap.read_text(encoding='utf-8').lstrip().startswith("<?xml")
        traces = [AngleTrace((), (0.1, 0.2, 0.3), False, reference=True), AngleTrace((1,), (0.1, 0.4, 3.0), True)]
        plot = ReportExporter.export_traces_svg(traces, tmp_path / "traces.svg", "valve angle, rad", dt=0.05,
                                                target=17 * np.pi / 18)
        assert "<svg" in plot.read_text(encoding='utf-8')
        frame = pd.read_csv(ReportExporter.export_traces_csv(traces, tmp_path / "traces.csv"))
        assert list(frame.columns) == ['case', 'step', 'value']
        assert list(frame['case'].unique()) == ["undamaged", "1"]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
