"""
Поиск сложного сценария повреждений для текущей политики.

Жадный поиск добавляет по одному суставу на этап, выбирая кандидата с
минимальной средней доходностью; полный перебор служит эталоном для
проверки и как необязательный режим обучения. Кандидаты одного этапа
оцениваются параллельно по неизменяемому снимку политики, результаты
сводятся в стабильном порядке.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..envs.base import FaultAwareEnv
from ..models.config import AdversaryConfig, SearchMethod, TieBreak
from ..models.environment import EnvSpec
from ..models.errors import CombinatorialBudgetError, SearchBlockedError
from ..models.fault import DamageCase, DamageMode, format_damage_label, make_q
from ..models.policy import Policy
from ..models.training import EvaluationReport, Trajectory
from .sac_service import rollout
from ..utils.debug_logger import get_logger

logger = get_logger(__name__)

Evaluator = Callable[[FrozenSet[int]], EvaluationReport]
Feasibility = Callable[[Iterable[int]], bool]

# Идентификаторы независимых потоков случайных чисел для оценки
ANGLE_STREAM = 1
TIE_STREAM = 2
NOISE_STREAM = 3


@dataclass(frozen=True)
class CandidateResult:
    joint: Optional[int]
    damaged_set: Tuple[int, ...]
    mean_return: float
    success_rate: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'joint': self.joint,
            'set': format_damage_label(self.damaged_set),
            'mean_return': self.mean_return,
            'success_rate': self.success_rate,
        }


@dataclass(frozen=True)
class StageRecord:
    """Этап поиска: все кандидаты и выбранный сустав"""
    stage: int
    base_set: Tuple[int, ...]
    candidates: Tuple[CandidateResult, ...]
    chosen: Optional[int]
    chosen_value: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stage': self.stage,
            'base': format_damage_label(self.base_set),
            'candidates': [candidate.to_dict() for candidate in self.candidates],
            'chosen': self.chosen,
            'chosen_value': self.chosen_value,
        }


@dataclass(frozen=True)
class SearchOutcome:
    """Результат поиска сложного сценария"""
    case: DamageCase
    report: Optional[EvaluationReport]
    evaluations: int
    method: SearchMethod
    stages: Tuple[StageRecord, ...] = field(default=())

    def trace_records(self) -> List[Dict[str, Any]]:
        records = [stage.to_dict() for stage in self.stages]
        records.append({
            'method': self.method.value,
            'result': self.case.label,
            'evaluations': self.evaluations,
            'mean_return': self.report.mean_return if self.report else None,
        })
        return records


def _evaluate_all(evaluator: Evaluator, sets: Sequence[FrozenSet[int]], max_workers: int) -> List[EvaluationReport]:
    if max_workers <= 1 or len(sets) <= 1:
        return [evaluator(s) for s in sets]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(evaluator, sets))


def _undamaged_outcome(evaluator: Evaluator, method: SearchMethod) -> SearchOutcome:
    report = evaluator(frozenset())
    return SearchOutcome(case=DamageCase.of([]), report=report, evaluations=1, method=method)


def greedy_search(evaluator: Evaluator,
                  n_joints: int,
                  config: AdversaryConfig,
                  is_feasible: Optional[Feasibility] = None,
                  max_workers: int = 1) -> SearchOutcome:
    """
    Жадный поиск: на этапе m оценить U + {n} для каждого n вне U и добавить argmin

    Число оценок ровно sum_{m=1..M} (N - m + 1) при M >= 1, если все кандидаты
    допустимы и ранняя остановка выключена. При M = 0 оценивается только
    пустое множество.
    """
    if config.max_damaged == 0:
        return _undamaged_outcome(evaluator, SearchMethod.GREEDY)

    damaged: List[int] = []
    stages: List[StageRecord] = []
    evaluations = 0
    final_report: Optional[EvaluationReport] = None
    tie_rng = np.random.default_rng([config.seed_base, TIE_STREAM])
    current_value: Optional[float] = None

    if config.early_stop and config.max_damaged > 0:
        current_value = evaluator(frozenset()).mean_return
        evaluations += 1

    for stage in range(1, config.max_damaged + 1):
        candidates = [n for n in range(n_joints) if n not in damaged
                      and (is_feasible is None or is_feasible([*damaged, n]))]
        if not candidates:
            raise SearchBlockedError(stage, format_damage_label(damaged))

        sets = [frozenset([*damaged, n]) for n in candidates]
        reports = _evaluate_all(evaluator, sets, max_workers)
        evaluations += len(reports)

        best_value = min(report.mean_return for report in reports)
        ties = [i for i, report in enumerate(reports) if report.mean_return == best_value]
        pick = ties[0] if config.tie_break is TieBreak.LOWEST_INDEX else ties[int(tie_rng.integers(len(ties)))]

        stop = config.early_stop and current_value is not None and best_value >= current_value
        chosen = None if stop else candidates[pick]
        stages.append(StageRecord(
            stage=stage,
            base_set=tuple(sorted(damaged)),
            candidates=tuple(CandidateResult(n, tuple(sorted(s)), r.mean_return, r.success_rate)
                             for n, s, r in zip(candidates, sets, reports)),
            chosen=chosen,
            chosen_value=None if stop else best_value,
        ))
        logger.debug(f"Greedy stage {stage}: base {{{format_damage_label(damaged)}}}, "
                     f"chosen {chosen}, value {best_value:.4f}")
        if stop:
            logger.info(f"Greedy search stopped early at stage {stage}: damage no longer reduces return")
            break
        damaged.append(candidates[pick])
        final_report = reports[pick]
        current_value = best_value

    return SearchOutcome(case=DamageCase.of(damaged), report=final_report, evaluations=evaluations,
                         method=SearchMethod.GREEDY, stages=tuple(stages))


def exhaustive_search(evaluator: Evaluator,
                      n_joints: int,
                      max_damaged: int,
                      max_evaluations: int = 10_000,
                      exact_size: bool = False,
                      is_feasible: Optional[Feasibility] = None,
                      max_workers: int = 1) -> SearchOutcome:
    """
    Полный перебор всех допустимых множеств размера от 0 до M (при exact_size
    только размера M), результат - глобальный минимум средней доходности

    Множества упорядочены по размеру, внутри размера лексикографически; при
    равенстве значений выбирается первое множество в лексикографическом порядке.
    """
    if max_damaged == 0:
        return _undamaged_outcome(evaluator, SearchMethod.EXHAUSTIVE)

    sizes = [max_damaged] if exact_size else range(0, max_damaged + 1)
    required = sum(comb(n_joints, m) for m in sizes)
    if required > max_evaluations:
        raise CombinatorialBudgetError(required, max_evaluations)

    sets = [frozenset(c) for m in sizes for c in combinations(range(n_joints), m)
            if is_feasible is None or is_feasible(c)]
    if not sets:
        raise SearchBlockedError(max_damaged, "")
    reports = _evaluate_all(evaluator, sets, max_workers)
    best = min(range(len(reports)), key=lambda i: (reports[i].mean_return, i))
    candidates = tuple(CandidateResult(None, tuple(sorted(s)), r.mean_return, r.success_rate)
                       for s, r in zip(sets, reports))
    stage = StageRecord(stage=1, base_set=(), candidates=candidates, chosen=None,
                        chosen_value=reports[best].mean_return)
    return SearchOutcome(case=DamageCase.of(sets[best]), report=reports[best], evaluations=len(sets),
                         method=SearchMethod.EXHAUSTIVE, stages=(stage,))


class AdversaryService:
    """Оценка политики на сценариях повреждений и поиск сложного сценария"""

    def __init__(self,
                 env_factory: Callable[[], FaultAwareEnv],
                 env_spec: EnvSpec,
                 damage_mode: DamageMode = DamageMode.FROZEN,
                 max_workers: int = 1):
        self.env_factory = env_factory
        self.env_spec = env_spec
        self.damage_mode = damage_mode
        self.max_workers = max(1, int(max_workers))

    def run_episodes(self, policy: Policy, damaged_set: Iterable[int], episodes: int, seed_base: int,
                     action_noise_sigma: float = 0.0) -> List[Trajectory]:
        """
        E детерминированных эпизодов со свежими углами заклинивания

        Эпизод e использует зерно seed_base + e; углы берутся из отдельного
        потока, производного от этого зерна.
        """
        if episodes < 1:
            raise ValueError(f"evaluation needs at least one episode, got {episodes}")
        joints = sorted(set(damaged_set))
        env = self.env_factory()
        trajectories = []
        for e in range(episodes):
            seed = seed_base + e
            angle_rng = np.random.default_rng([seed, ANGLE_STREAM])
            q = make_q(joints, angle_rng, self.env_spec, mode=self.damage_mode)
            noise = None
            if action_noise_sigma > 0.0:
                noise = _gaussian_command_noise(self.env_spec, action_noise_sigma, np.random.default_rng([seed, NOISE_STREAM]))
            trajectories.append(rollout(policy, env, q, stochastic=False, seed=seed,
                                        action_noise=noise, keep_transitions=False))
        return trajectories

    def evaluate_policy(self, policy: Policy, damaged_set: Iterable[int], episodes: int,
                        seed_base: int) -> EvaluationReport:
        """Средняя недисконтированная доходность и доля успехов по E эпизодам"""
        joints = tuple(sorted(set(damaged_set)))
        trajectories = self.run_episodes(policy, joints, episodes, seed_base)
        returns = tuple(t.episode_return for t in trajectories)
        successes = sum(1 for t in trajectories if t.success)
        return EvaluationReport(damaged_set=joints, mean_return=float(np.mean(returns)),
                                success_rate=successes / episodes, episodes=episodes, returns=returns)

    def make_evaluator(self, policy: Policy, episodes: int, seed_base: int) -> Evaluator:
        return lambda damaged_set: self.evaluate_policy(policy, damaged_set, episodes, seed_base)

    def greedy_search(self, policy: Policy, config: AdversaryConfig) -> SearchOutcome:
        evaluator = self.make_evaluator(policy, config.episodes, config.seed_base)
        return greedy_search(evaluator, self.env_spec.n_joints, config,
                             is_feasible=self.env_spec.is_feasible_set, max_workers=self.max_workers)

    def exhaustive_search(self, policy: Policy, max_damaged: int, episodes: int, seed_base: int,
                          max_evaluations: int = 10_000, exact_size: bool = False) -> SearchOutcome:
        evaluator = self.make_evaluator(policy, episodes, seed_base)
        return exhaustive_search(evaluator, self.env_spec.n_joints, max_damaged, max_evaluations,
                                 exact_size, is_feasible=self.env_spec.is_feasible_set,
                                 max_workers=self.max_workers)

    def search(self, policy: Policy, config: AdversaryConfig) -> SearchOutcome:
        """Поиск методом из конфигурации"""
        if config.method is SearchMethod.EXHAUSTIVE:
            return self.exhaustive_search(policy, config.max_damaged, config.episodes, config.seed_base,
                                          config.max_evaluations, config.exact_size)
        return self.greedy_search(policy, config)


def _gaussian_command_noise(spec: EnvSpec, sigma: float, rng: np.random.Generator):
    """delta ~ N(0, 1) * sigma в нормированных единицах действия"""
    half_range = 0.5 * (spec.action_high_array - spec.action_low_array)

    def perturb(action: np.ndarray) -> np.ndarray:
        return action + sigma * half_range * rng.standard_normal(action.shape)

    return perturb
