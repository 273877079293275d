"""
Оценочные эксперименты над обученной политикой: матрица успехов по одиночным
и парным повреждениям, траектории величины задачи и устойчивость к шуму.

Зерна каждой клетки матрицы выводятся из метки сценария, а не из порядка
обхода, поэтому параллельный и последовательный расчет совпадают.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor, as_completed
from itertools import combinations
from typing import Callable, Dict, Iterable, List, Sequence, Tuple
import zlib

import numpy as np

from ..envs.base import FaultAwareEnv
from ..models.environment import EnvSpec
from ..models.fault import DamageCase, DamageMode, format_damage_label
from ..models.policy import Policy
from ..models.report import AngleTrace, NoiseResult, SuccessMatrix
from ..models.training import EvaluationReport
from .adversary_service import AdversaryService
from ..utils.debug_logger import get_logger

logger = get_logger(__name__)

DEFAULT_EVAL_SEED = 100_000


def case_seed(env_id: str, damaged_set: Iterable[int], salt: str = "cell") -> int:
    """Зерно сценария из его метки (crc32)"""
    label = format_damage_label(damaged_set)
    return zlib.crc32(f"{env_id}|{salt}|{label}".encode('utf-8'))


def matrix_cases(n_joints: int) -> List[Tuple[int, ...]]:
    """Все одиночные и неупорядоченные парные сценарии"""
    singles = [(i,) for i in range(n_joints)]
    pairs = [tuple(pair) for pair in combinations(range(n_joints), 2)]
    return singles + pairs


class EvaluationService:
    """Эксперименты оценки политики"""

    def __init__(self,
                 env_factory: Callable[[], FaultAwareEnv],
                 env_spec: EnvSpec,
                 damage_mode: DamageMode = DamageMode.FROZEN,
                 max_workers: int = 1):
        self.env_spec = env_spec
        self.max_workers = max(1, int(max_workers))
        self.runner = AdversaryService(env_factory, env_spec, damage_mode, max_workers=1)

    def _count_successes(self, policy: Policy, damaged_set: Tuple[int, ...], trials: int) -> int:
        seed = case_seed(self.env_spec.env_id, damaged_set)
        trajectories = self.runner.run_episodes(policy, damaged_set, trials, seed)
        return sum(1 for t in trajectories if t.success)

    def success_matrix(self, policy: Policy, trials: int = 10, policy_id: str = "") -> SuccessMatrix:
        """
        Матрица успехов: для каждого сустава и каждой пары суставов
        trials детерминированных эпизодов со свежими углами заклинивания
        """
        if trials < 1:
            raise ValueError(f"trials must be >= 1, got {trials}")
        n = self.env_spec.n_joints
        cases = matrix_cases(n)
        counts: Dict[Tuple[int, ...], int] = {}

        if self.max_workers <= 1:
            for case in cases:
                counts[case] = self._count_successes(policy, case, trials)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_to_case = {executor.submit(self._count_successes, policy, case, trials): case
                                  for case in cases}
                for future in as_completed(future_to_case):
                    counts[future_to_case[future]] = future.result()

        successes = np.zeros((n, n), dtype=np.int64)
        for case, count in counts.items():
            i, j = (case[0], case[0]) if len(case) == 1 else case
            successes[i, j] = count
            successes[j, i] = count
        logger.info(f"Success matrix for {policy_id or getattr(policy, 'policy_id', '')}: "
                    f"{len(cases)} cases x {trials} trials")
        return SuccessMatrix(env_id=self.env_spec.env_id,
                             policy_id=policy_id or getattr(policy, 'policy_id', ''),
                             trials_per_cell=trials,
                             successes=successes)

    def angle_traces(self, policy: Policy, cases: Sequence[DamageCase]) -> List[AngleTrace]:
        """Один детерминированный эпизод на сценарий; первой идет траектория без повреждений"""
        requested = [((), True)] + [(case.sorted_joints(), False) for case in cases]
        traces = []
        for joints, reference in requested:
            seed = case_seed(self.env_spec.env_id, joints, salt="trace")
            trajectory = self.runner.run_episodes(policy, joints, 1, seed)[0]
            traces.append(AngleTrace(damaged_set=joints, values=trajectory.task_trace,
                                     success=trajectory.success, reference=reference))
        return traces

    def noise_experiment(self, policy: Policy, sigma: float, episodes: int = 30,
                         damaged_set: Iterable[int] = (), seed_base: int = DEFAULT_EVAL_SEED,
                         policy_id: str = "") -> NoiseResult:
        """
        Доля успехов при a' = a + delta, delta ~ N(0, 1) * sigma (в нормированных
        единицах действия), шум добавляется до обрезки и маскирования
        """
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        joints = tuple(sorted(set(damaged_set)))
        trajectories = self.runner.run_episodes(policy, joints, episodes, seed_base, action_noise_sigma=sigma)
        successes = sum(1 for t in trajectories if t.success)
        return NoiseResult(env_id=self.env_spec.env_id, policy_id=policy_id or getattr(policy, 'policy_id', ''),
                           sigma=float(sigma), episodes=episodes, successes=successes, damaged_set=joints)

    def evaluate_cases(self, policy: Policy, cases: Sequence[DamageCase], episodes: int,
                       seed_base: int = DEFAULT_EVAL_SEED) -> List[EvaluationReport]:
        """Оценка политики на заданном списке сценариев"""
        return [self.runner.evaluate_policy(policy, case.sorted_joints(), episodes, seed_base) for case in cases]
