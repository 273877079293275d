#!/usr/bin/env python3
"""
Приложение состязательного обучения политик, устойчивых к повреждениям суставов.
Основной интерфейс: обучение, поиск сложного сценария и оценочные эксперименты.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import dataclasses
import json

from .envs.base import FaultAwareEnv
from .envs.claw_valve import SUCCESS_ANGLE
from .envs.registry import make_env
from .envs.scripted import ScriptedClawGait
from .models.config import RunConfig
from .models.environment import EnvSpec
from .models.errors import ConfigError, DimensionMismatchError
from .models.fault import DamageCase
from .models.policy import Policy
from .models.report import AngleTrace, NoiseResult, SuccessMatrix
from .models.training import EvaluationReport
from .services.adversary_service import AdversaryService, SearchOutcome
from .services.evaluation_service import DEFAULT_EVAL_SEED, EvaluationService
from .services.trainer_service import (TrainerService, TrainingResult, estimate_objective_with_error,
                                       resolve_env_spec, uniform_single_damage_sampler)
from .utils.checkpoint_io import load_checkpoint
from .utils.debug_logger import get_debug_logger, get_logger
from .utils.json_formatter import write_jsonl
from .utils.performance import performance_timer
from .utils.report_exporter import ReportExporter

logger = get_logger(__name__)

SCRIPTED_GAIT = "scripted_gait"


class RobustRLApp:
    """Главный класс приложения"""

    def __init__(self, config: Optional[RunConfig] = None, env_spec: Optional[EnvSpec] = None):
        self.config = config or RunConfig()
        self.env_spec = env_spec if env_spec is not None else resolve_env_spec(self.config)
        self.run_logger = get_debug_logger(self.config.runtime.log_level)
        logger.info(f"RobustRL application initialized for {self.env_spec.env_id}")

    def make_env(self) -> FaultAwareEnv:
        return make_env(self.env_spec.env_id, self.env_spec, hide_q_flags=self.config.env.hide_q_flags)

    def _evaluation_service(self) -> EvaluationService:
        return EvaluationService(self.make_env, self.env_spec, self.config.env.damage_mode,
                                 max_workers=self.config.runtime.jobs)

    def reports_dir(self, output_dir: Optional[str]) -> Path:
        path = Path(output_dir) if output_dir else Path(self.config.output.root) / "reports"
        path.mkdir(parents=True, exist_ok=True)
        return path

    # ---- политика ----

    def load_policy(self, checkpoint: Optional[str] = None, policy_name: Optional[str] = None) -> Policy:
        """
        Политика из контрольной точки или встроенная скриптовая

        Args:
            checkpoint: Каталог контрольной точки
            policy_name: 'scripted_gait' - скриптовая походка для ClawValve
        """
        if policy_name == SCRIPTED_GAIT:
            if self.env_spec.env_id != 'claw_valve':
                raise ConfigError("the scripted gait is defined only for claw_valve", field_path="--policy")
            return ScriptedClawGait(self.env_spec)
        if policy_name:
            raise ConfigError(f"unknown built-in policy {policy_name!r}", field_path="--policy")
        if not checkpoint:
            raise ConfigError("either --checkpoint or --policy is required", field_path="--checkpoint")

        snapshot = load_checkpoint(Path(checkpoint), expected_env_id=self.env_spec.env_id)
        if snapshot.obs_dim != self.env_spec.obs_dim:
            raise DimensionMismatchError("checkpoint observation", self.env_spec.obs_dim, snapshot.obs_dim)
        return snapshot

    # ---- обучение и поиск ----

    def train(self, run_dir: Optional[str] = None, resume: bool = False) -> TrainingResult:
        trainer = TrainerService(self.config, run_dir=Path(run_dir) if run_dir else None, env_spec=self.env_spec)
        with performance_timer("training") as timer:
            result = trainer.train(resume=resume)
        self.run_logger.log_performance_metrics("обучение", timer.elapsed_seconds, env_steps=trainer.env_steps,
                                                updates=trainer.learner.update_count)
        return result

    def search(self, policy: Policy, max_damaged: Optional[int] = None, episodes: Optional[int] = None,
               exhaustive: bool = False, output_dir: Optional[str] = None,
               exact_size: Optional[bool] = None) -> Tuple[SearchOutcome, Path]:
        """Поиск сложного сценария для политики; трасса этапов пишется в search_trace.jsonl"""
        adversary_config = self.config.trainer.adversary
        max_damaged = adversary_config.max_damaged if max_damaged is None else max_damaged
        episodes = adversary_config.episodes if episodes is None else episodes
        exact_size = adversary_config.exact_size if exact_size is None else exact_size
        if max_damaged > self.env_spec.max_damaged:
            raise ConfigError(f"M={max_damaged} exceeds the solvability bound {self.env_spec.max_damaged} "
                              f"of {self.env_spec.env_id}", field_path="--max-damaged")

        service = AdversaryService(self.make_env, self.env_spec, self.config.env.damage_mode,
                                   max_workers=self.config.runtime.jobs)
        with performance_timer("search") as timer:
            if exhaustive:
                outcome = service.exhaustive_search(policy, max_damaged, episodes, adversary_config.seed_base,
                                                    adversary_config.max_evaluations,
                                                    exact_size)
            else:
                config = dataclasses.replace(adversary_config, max_damaged=max_damaged, episodes=episodes)
                outcome = service.greedy_search(policy, config)
        records = outcome.trace_records()
        trace_path = write_jsonl(self.reports_dir(output_dir) / "search_trace.jsonl", records)
        self.run_logger.log_search_stages(records[:-1])
        self.run_logger.log_search_result(outcome.method.value, outcome.case.label, outcome.evaluations,
                                          outcome.report.mean_return if outcome.report else None)
        self.run_logger.log_performance_metrics("поиск", timer.elapsed_seconds, evaluations=outcome.evaluations)
        return outcome, trace_path

    # ---- оценка ----

    def heatmap(self, policy: Policy, trials: int = 10, output_dir: Optional[str] = None,
                policy_id: str = "") -> Tuple[SuccessMatrix, Dict[str, Path]]:
        with performance_timer("heatmap") as timer:
            matrix = self._evaluation_service().success_matrix(policy, trials, policy_id=policy_id)
        out = self.reports_dir(output_dir)
        stem = f"success_matrix_{matrix.env_id}_{matrix.policy_id}"
        paths = {
            'csv': ReportExporter.export_success_matrix_csv(matrix, out / f"{stem}.csv"),
            'svg': ReportExporter.export_success_matrix_svg(matrix, out / f"{stem}.svg"),
            'xlsx': ReportExporter.export_success_matrix_xlsx(matrix, out / f"{stem}.xlsx"),
        }
        n_cases = matrix.n * (matrix.n + 1) // 2
        self.run_logger.log_performance_metrics("матрица успехов", timer.elapsed_seconds, episodes=n_cases * trials)
        return matrix, paths

    def traces(self, policy: Policy, cases: Sequence[DamageCase],
               output_dir: Optional[str] = None) -> Tuple[List[AngleTrace], Dict[str, Path]]:
        traces = self._evaluation_service().angle_traces(policy, cases)
        out = self.reports_dir(output_dir)
        if self.env_spec.env_id == 'claw_valve':
            value_label, target = "valve angle, rad", SUCCESS_ANGLE
        else:
            value_label, target = "task value", None
        paths = {
            'csv': ReportExporter.export_traces_csv(traces, out / f"traces_{self.env_spec.env_id}.csv"),
            'svg': ReportExporter.export_traces_svg(traces, out / f"traces_{self.env_spec.env_id}.svg",
                                                    value_label, self.env_spec.dt, target),
        }
        return traces, paths

    def noise(self, policy: Policy, sigma: float, episodes: int = 30, damaged: Sequence[int] = (),
              output_dir: Optional[str] = None, policy_id: str = "") -> Tuple[NoiseResult, Path]:
        result = self._evaluation_service().noise_experiment(policy, sigma, episodes, damaged,
                                                             DEFAULT_EVAL_SEED, policy_id)
        path = self.reports_dir(output_dir) / f"noise_{result.env_id}_{result.policy_id}_sigma{sigma:g}.json"
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(result.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        return result, path

    def evaluate(self, policy: Policy, cases: Sequence[DamageCase], episodes: int = 5,
                 seed_base: int = DEFAULT_EVAL_SEED, output_dir: Optional[str] = None) -> Tuple[List[EvaluationReport], Path]:
        reports = self._evaluation_service().evaluate_cases(policy, cases, episodes, seed_base)
        for report in reports:
            self.run_logger.log_evaluation(report.label, report.mean_return, report.success_rate, report.episodes)
        path = write_jsonl(self.reports_dir(output_dir) / "evaluation.jsonl", [r.to_dict() for r in reports])
        return reports, path

    def objective(self, policy: Policy, episodes_per_q: int = 5, num_q_samples: int = 30,
                  seed: int = DEFAULT_EVAL_SEED) -> Tuple[float, float]:
        """Оценка ожидаемой дисконтированной доходности при равновероятном одиночном повреждении"""
        sampler = uniform_single_damage_sampler(self.env_spec, self.config.env.damage_mode)
        return estimate_objective_with_error(policy, self.make_env, sampler, episodes_per_q, num_q_samples,
                                             self.config.trainer.sac.gamma, seed)
