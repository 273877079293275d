#!/usr/bin/env python3
"""
Оценочные эксперименты на настоящих средах: базовое качество SAC, устойчивость
RSAC к повреждениям и шуму, роль флагов q во входе политики.

Каждый запуск обучения занимает часы, поэтому весь модуль выполняется только
при RSAC_RUN_SLOW=1. Сравнения берутся по медиане трех зерен.
"""

import sys
import os
from pathlib import Path

import numpy as np
import pytest

# Добавляем src в путь Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.models.fault import DamageCase
from src.robust_rl_app import RobustRLApp
from src.utils.config_loader import load_run_config

CONFIG_FILES = {
    'claw_valve': Path(__file__).parent / "configs" / "claw.json",
    'kitty_walk': Path(__file__).parent / "configs" / "kitty.json",
}
SEEDS = (0, 1, 2)
MATRIX_TRIALS = 10

# Пороги в долях: (минимум диагонали, среднее по матрице)
ROBUSTNESS_MARGINS = {
    'claw_valve': (0.30, 0.20),
    'kitty_walk': (0.20, 0.10),
}

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(os.environ.get("RSAC_RUN_SLOW") != "1", reason="долгий эксперимент, RSAC_RUN_SLOW=1"),
]


class ReferenceRuns:
    """Обученные политики, общие для всех экспериментов модуля"""

    def __init__(self, root: Path):
        self.root = root
        self.results = {}
        self.matrix_cache = {}

    def train(self, env_id, mode, seed, hide_q_flags=False, n_iter=None):
        key = (env_id, mode, seed, hide_q_flags, n_iter)
        if key not in self.results:
            config = load_run_config(str(CONFIG_FILES[env_id]), flag_overrides={
                'trainer.mode': mode,
                'trainer.seed': seed,
                'trainer.n_iter': n_iter,
                'env.hide_q_flags': hide_q_flags,
                'output.root': str(self.root),
                'runtime.progress': False,
                'runtime.log_level': 'WARNING',
            }, environ={})
            app = RobustRLApp(config)
            name = f"{env_id}_{mode}_seed{seed}" + ("_noq" if hide_q_flags else "") + (f"_it{n_iter}" if n_iter else "")
            result = app.train(run_dir=str(self.root / name))
            self.results[key] = (app, result)
        return self.results[key]

    def matrices(self, env_id, mode, hide_q_flags=False):
        key = (env_id, mode, hide_q_flags)
        if key in self.matrix_cache:
            return self.matrix_cache[key]
        matrices = []
        for seed in SEEDS:
            app, result = self.train(env_id, mode, seed, hide_q_flags)
            matrix, _ = app.heatmap(result.snapshot, MATRIX_TRIALS, str(self.root / "reports"),
                                    policy_id=f"{mode}{'_noq' if hide_q_flags else ''}_seed{seed}")
            matrices.append(matrix)
        self.matrix_cache[key] = matrices
        return matrices


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return ReferenceRuns(tmp_path_factory.mktemp("reference_runs"))


def median(values):
    return float(np.median(list(values)))


class TestBaseLearner:
    """Тесты качества SAC без повреждений"""

    def test_claw_baseline_solves_undamaged(self, runs):
        """Тест: SAC достигает 80% успехов на ClawValve за 200k шагов (10 итераций x 100 эпизодов x 200)"""
        rates = []
        for seed in SEEDS:
            app, result = runs.train('claw_valve', 'sac_baseline', seed, n_iter=10)
            assert result.ledger.records[-1].env_steps <= 200_000
            reports, _ = app.evaluate(result.snapshot, [DamageCase.of([])], episodes=10,
                                      output_dir=str(runs.root / "reports"))
            rates.append(reports[0].success_rate)
        assert median(rates) >= 0.8


class TestRobustness:
    """Тесты устойчивости RSAC в сравнении с базовой линией"""

    @pytest.mark.parametrize("env_id", ["claw_valve", "kitty_walk"])
    def test_success_matrix_margins(self, runs, env_id):
        """Тест: RSAC превосходит SAC по минимуму диагонали и по среднему матрицы"""
        diagonal_margin, mean_margin = ROBUSTNESS_MARGINS[env_id]
        rsac = runs.matrices(env_id, 'rsac')
        baseline = runs.matrices(env_id, 'sac_baseline')
        assert median(m.min_diagonal_rate for m in rsac) >= median(m.min_diagonal_rate for m in baseline) + diagonal_margin
        assert median(m.mean_rate for m in rsac) >= median(m.mean_rate for m in baseline) + mean_margin

    def test_hidden_q_flags_lower_matrix_mean(self, runs):
        """Тест: без флагов q во входе политика справляется с повреждениями хуже"""
        full = runs.matrices('claw_valve', 'rsac')
        ablation = runs.matrices('claw_valve', 'rsac', hide_q_flags=True)
        assert median(m.mean_rate for m in ablation) < median(m.mean_rate for m in full)

    def test_noise_resistance(self, runs):
        """Тест: при sigma = 1.0 доля успехов RSAC выше базовой линии на 20 пунктов"""
        rates = {}
        for mode in ('rsac', 'sac_baseline'):
            values = []
            for seed in SEEDS:
                app, result = runs.train('claw_valve', mode, seed)
                noise, _ = app.noise(result.snapshot, sigma=1.0, episodes=30,
                                     output_dir=str(runs.root / "reports"), policy_id=f"{mode}_seed{seed}")
                values.append(noise.success_rate)
            rates[mode] = median(values)
        assert rates['rsac'] >= rates['sac_baseline'] + 0.20

    def test_adversary_choice_changes_over_run(self, runs):
        """Тест: выбранный противником сценарий меняется по ходу обучения на ClawValve"""
        _, result = runs.train('claw_valve', 'rsac', SEEDS[0])
        chosen = {record.next_damage_label for record in result.ledger.records}
        assert len(chosen) > 1


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
