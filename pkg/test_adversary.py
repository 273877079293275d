#!/usr/bin/env python3
"""
Тесты поиска сложного сценария: жадный поиск против полного перебора,
правила равенства, бюджеты и оценка политики в скриптовой среде.
"""

import sys
import os
from itertools import combinations

import numpy as np
import pytest

# Добавляем src в путь Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.envs.registry import make_env
from src.envs.scripted import ConstantPolicy, scripted_env_spec
from src.models.config import AdversaryConfig, SearchMethod, TieBreak
from src.models.errors import CombinatorialBudgetError, SearchBlockedError
from src.models.training import EvaluationReport
from src.services.adversary_service import AdversaryService, exhaustive_search, greedy_search

WEIGHTS = [1, 9, 2, 7, 3, 8, 4, 6, 5]


class CountingEvaluator:
    """Скриптовый оценщик p(U) с подсчетом вызовов"""

    def __init__(self, value_fn):
        self.value_fn = value_fn
        self.calls = 0

    def __call__(self, damaged_set):
        self.calls += 1
        joints = tuple(sorted(damaged_set))
        return EvaluationReport(damaged_set=joints, mean_return=float(self.value_fn(frozenset(joints))),
                                success_rate=1.0, episodes=1)


def additive(weights, base=100.0):
    return CountingEvaluator(lambda s: base - sum(weights[i] for i in s))


class TestGreedySearch:
    """Тесты жадного поиска"""

    def test_additive_weights(self):
        """Тест: p(U) = 100 - сумма весов, M = 2 дает {1,5}"""
        evaluator = additive(WEIGHTS)
        outcome = greedy_search(evaluator, 9, AdversaryConfig(max_damaged=2))
        assert outcome.case.label == "1,5"
        assert outcome.report.mean_return == 100 - 17
        assert outcome.method is SearchMethod.GREEDY

    def test_evaluation_count(self):
        """Тест: число оценок равно сумме (N - m + 1) по этапам"""
        for max_damaged in (1, 2, 3):
            evaluator = additive(WEIGHTS)
            outcome = greedy_search(evaluator, 9, AdversaryConfig(max_damaged=max_damaged))
            expected = sum(9 - m + 1 for m in range(1, max_damaged + 1))
            assert outcome.evaluations == evaluator.calls == expected

    def test_matches_exhaustive_on_random_additive(self):
        """Тест: на 100 случайных аддитивных оценщиках жадный поиск совпадает с полным перебором"""
        rng = np.random.default_rng(0)
        for _ in range(100):
            weights = rng.uniform(0.0, 10.0, size=9).tolist()
            max_damaged = int(rng.integers(1, 3))
            greedy = greedy_search(additive(weights), 9, AdversaryConfig(max_damaged=max_damaged))
            exhaustive = exhaustive_search(additive(weights), 9, max_damaged)
            assert greedy.case == exhaustive.case

    def test_greedy_trap(self):
        """Тест: неаддитивный оценщик, на котором жадный поиск не находит худшее множество"""
        def value(s):
            if len(s) == 1:
                return 50.0 if 0 in s else 90.0
            if s == frozenset({1, 2}):
                return 0.0
            return 45.0 if 0 in s else 80.0

        greedy = greedy_search(CountingEvaluator(value), 9, AdversaryConfig(max_damaged=2))
        exhaustive = exhaustive_search(CountingEvaluator(value), 9, 2)
        assert greedy.case.label.startswith("0,")
        assert exhaustive.case.label == "1,2"
        assert greedy.report.mean_return > exhaustive.report.mean_return

    def test_tie_lowest_index(self):
        """Тест: при равенстве суставов 2 и 6 выбирается 2"""
        evaluator = CountingEvaluator(lambda s: 0.0 if s & {2, 6} else 10.0)
        outcome = greedy_search(evaluator, 9, AdversaryConfig(max_damaged=1))
        assert outcome.case.label == "2"

    def test_tie_random_seeded(self):
        """Тест: случайный выбор при равенстве воспроизводим по seed_base"""
        def run(seed):
            evaluator = CountingEvaluator(lambda s: 0.0 if s & {2, 6} else 10.0)
            config = AdversaryConfig(max_damaged=1, tie_break=TieBreak.RANDOM_SEEDED, seed_base=seed)
            return greedy_search(evaluator, 9, config).case.label

        labels = {run(seed) for seed in range(20)}
        assert labels <= {"2", "6"}
        assert run(7) == run(7)
        assert labels == {"2", "6"}

    def test_zero_damage(self):
        """Тест: M = 0 оценивает только пустое множество"""
        evaluator = additive(WEIGHTS)
        outcome = greedy_search(evaluator, 9, AdversaryConfig(max_damaged=0))
        assert outcome.case.label == ""
        assert outcome.evaluations == evaluator.calls == 1
        assert outcome.report.mean_return == 100.0

    def test_monotone_never_above_undamaged(self):
        """Тест: для монотонного оценщика найденное множество не лучше пустого"""
        rng = np.random.default_rng(11)
        for _ in range(20):
            weights = rng.uniform(0.0, 5.0, size=9)

            def value(s, weights=weights):
                return 100.0 - float(sum(weights[i] for i in s)) ** 1.5

            undamaged = value(frozenset())
            for max_damaged in (1, 2, 3):
                outcome = greedy_search(CountingEvaluator(value), 9, AdversaryConfig(max_damaged=max_damaged))
                assert outcome.report.mean_return <= undamaged

    def test_early_stop(self):
        """Тест: ранняя остановка, если повреждение больше не снижает доходность"""
        evaluator = CountingEvaluator(lambda s: {0: 10.0, 1: 5.0}.get(len(s), 7.0))
        outcome = greedy_search(evaluator, 4, AdversaryConfig(max_damaged=3, early_stop=True))
        assert outcome.case.label == "0"
        assert outcome.stages[-1].chosen is None
        assert len(outcome.stages) == 2

    def test_stage_records(self):
        outcome = greedy_search(additive(WEIGHTS), 9, AdversaryConfig(max_damaged=2))
        first, second = outcome.stages
        assert first.base_set == () and len(first.candidates) == 9 and first.chosen == 1
        assert second.base_set == (1,) and len(second.candidates) == 8 and second.chosen == 5
        records = outcome.trace_records()
        assert records[-1]['result'] == "1,5"
        assert records[0]['candidates'][0]['set'] == "0"

    def test_blocked_search(self):
        with pytest.raises(SearchBlockedError):
            greedy_search(additive(WEIGHTS), 9, AdversaryConfig(max_damaged=2),
                          is_feasible=lambda joints: len(set(joints)) < 2)


class TestExhaustiveSearch:
    """Тесты полного перебора"""

    def test_global_minimum(self):
        rng = np.random.default_rng(3)
        table = {frozenset(c): float(rng.normal()) for c in combinations(range(6), 2)}
        outcome = exhaustive_search(CountingEvaluator(lambda s: table[s]), 6, 2, exact_size=True)
        best = min(table, key=table.get)
        assert outcome.case.damaged_set == best
        assert outcome.evaluations == 15

    def test_default_scans_all_sizes(self):
        """Тест: по умолчанию перебираются множества размера 0..M"""
        evaluator = CountingEvaluator(lambda s: -1.0 if not s else 1.0)
        outcome = exhaustive_search(evaluator, 5, 2)
        assert outcome.case.label == ""
        assert outcome.evaluations == evaluator.calls == 1 + 5 + 10

    def test_non_monotone_smaller_set_wins(self):
        """Тест: одиночное повреждение хуже любой пары - результат {4}"""
        evaluator = CountingEvaluator(lambda s: {0: 100.0, 1: 0.0 if s == {4} else 60.0}.get(len(s), 52.0))
        outcome = exhaustive_search(evaluator, 9, 2)
        assert outcome.case.damaged_set == frozenset({4})
        assert outcome.report.mean_return == 0.0
        exact = exhaustive_search(evaluator, 9, 2, exact_size=True)
        assert len(exact.case.damaged_set) == 2
        assert exact.report.mean_return == 52.0

    def test_lexicographic_tie(self):
        """Тест: при равенстве выбирается первое множество по размеру, затем лексикографически"""
        assert exhaustive_search(CountingEvaluator(lambda s: 0.0), 5, 2).case.label == ""
        assert exhaustive_search(CountingEvaluator(lambda s: 0.0), 5, 2, exact_size=True).case.label == "0,1"

    def test_budget(self):
        """Тест: превышение бюджета оценок"""
        with pytest.raises(CombinatorialBudgetError):
            exhaustive_search(additive(WEIGHTS), 9, 2, max_evaluations=45)
        outcome = exhaustive_search(additive(WEIGHTS), 9, 2, max_evaluations=46)
        assert outcome.evaluations == 46

    def test_zero_damage(self):
        evaluator = additive(WEIGHTS)
        outcome = exhaustive_search(evaluator, 9, 0)
        assert outcome.case.label == "" and outcome.evaluations == evaluator.calls == 1
        assert outcome.report.mean_return == 100.0


class TestAdversaryService:
    """Тесты поиска по развертываниям в скриптовой среде"""

    @pytest.fixture
    def scripted(self):
        spec = scripted_env_spec(n_joints=9, horizon=10, base_reward=float(sum(WEIGHTS)), weights=WEIGHTS)
        policy = ConstantPolicy(np.zeros(9), policy_id="scripted")
        return spec, policy

    def test_greedy_over_rollouts(self, scripted):
        spec, policy = scripted
        service = AdversaryService(lambda: make_env('scripted', spec), spec)
        outcome = service.greedy_search(policy, AdversaryConfig(max_damaged=2, episodes=2))
        assert outcome.case.label == "1,5"
        assert outcome.report.mean_return == pytest.approx(10 * (45 - 17))
        assert outcome.report.success_rate == 1.0

    def test_parallel_equals_serial(self, scripted):
        """Тест: параллельная оценка кандидатов дает тот же результат"""
        spec, policy = scripted
        serial = AdversaryService(lambda: make_env('scripted', spec), spec, max_workers=1)
        parallel = AdversaryService(lambda: make_env('scripted', spec), spec, max_workers=4)
        config = AdversaryConfig(max_damaged=2, episodes=1)
        a, b = serial.greedy_search(policy, config), parallel.greedy_search(policy, config)
        assert a.trace_records() == b.trace_records()

    def test_search_dispatch(self, scripted):
        spec, policy = scripted
        service = AdversaryService(lambda: make_env('scripted', spec), spec)
        outcome = service.search(policy, AdversaryConfig(max_damaged=2, episodes=1,
                                                         method=SearchMethod.EXHAUSTIVE))
        assert outcome.method is SearchMethod.EXHAUSTIVE
        assert outcome.case.label == "1,5"
        assert outcome.evaluations == 1 + 9 + 36

    def test_run_episodes_seeds(self, scripted):
        spec, policy = scripted
        service = AdversaryService(lambda: make_env('scripted', spec), spec)
        first = service.run_episodes(policy, [3], 3, seed_base=100)
        second = service.run_episodes(policy, [3], 3, seed_base=100)
        assert [t.rewards for t in first] == [t.rewards for t in second]
        with pytest.raises(ValueError, match="at least one episode"):
            service.run_episodes(policy, [3], 0, seed_base=100)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
