"""
Внешний состязательный цикл обучения.

На каждой итерации политика обучается K эпизодов при текущем множестве
поврежденных суставов, затем противник подбирает новое, наиболее сложное
для текущей политики множество. Буфер воспроизведения создается один раз
и сохраняется между итерациями.

Потоки случайных чисел разделены: инициализация сетей, действия политики,
углы заклинивания, зерна эпизодов и обновления обучения получают
независимые генераторы из одного SeedSequence. Оценка противника
использует собственные зерна и не расходует потоки обучения.
"""

from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple
import sys

import numpy as np
from tqdm import tqdm

from ..envs.base import FaultAwareEnv
from ..envs.registry import make_env
from ..models.config import InitialQPolicy, RunConfig, TrainerMode
from ..models.environment import EnvSpec, load_env_spec
from ..models.errors import NonFiniteLossError
from ..models.fault import DamageMode, JointWorkingState, format_damage_label, make_q
from ..models.policy import Policy, PolicySnapshot
from ..models.training import IterationRecord, RunLedger
from ..utils.checkpoint_io import load_resume_state, save_checkpoint, save_resume_state
from ..utils.config_loader import save_run_config
from ..utils.debug_logger import get_debug_logger
from ..utils.json_formatter import append_jsonl, read_jsonl, truncate_jsonl, write_jsonl
from ..utils.performance import performance_timer
from .adversary_service import AdversaryService
from .replay_buffer import ReplayBuffer
from .sac_service import SacLearner, rollout
from ..utils.debug_logger import get_logger

logger = get_logger(__name__)

SEED_STREAMS = ('init', 'policy', 'angles', 'episodes', 'updates')
LEDGER_FILE = "ledger.jsonl"
TIMINGS_FILE = "timings.jsonl"
CONFIG_FILE = "config.json"
RESUME_DIR = Path("checkpoints") / "resume"

QSampler = Callable[[np.random.Generator], JointWorkingState]


def make_seed_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Независимые генераторы для каждой случайной составляющей обучения"""
    children = np.random.SeedSequence(seed).spawn(len(SEED_STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(SEED_STREAMS, children)}


def resolve_env_spec(config: RunConfig) -> EnvSpec:
    spec = load_env_spec(config.env.id, config.env.spec_path)
    if config.env.dynamics_overrides:
        spec = spec.with_dynamics(**config.env.dynamics_overrides)
    return spec


def default_run_dir(config: RunConfig) -> Path:
    name = config.output.run_name or f"{config.env.id}_{config.trainer.mode.value}_seed{config.trainer.seed}"
    return Path(config.output.root) / name


class UniformRandomPolicy:
    """Равномерно случайные действия в границах среды (разогрев буфера)"""

    def __init__(self, action_low: np.ndarray, action_high: np.ndarray):
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        self.policy_id = "uniform_random"

    def begin_episode(self) -> UniformRandomPolicy:
        return self

    def act(self, observation, deterministic: bool = True,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return rng.uniform(self.action_low, self.action_high)


@dataclass(frozen=True)
class TrainingResult:
    snapshot: PolicySnapshot
    ledger: RunLedger
    run_dir: Path


class TrainerService:
    """
    Состязательное обучение (режим RSAC) или обучение без повреждений (SAC_BASELINE)

    Args:
        config: Конфигурация запуска
        run_dir: Каталог запуска; по умолчанию output.root/<имя запуска>
        env_spec: Готовая спецификация среды (по умолчанию из env.id/env.spec_path)
    """

    def __init__(self, config: RunConfig, run_dir: Optional[Path] = None, env_spec: Optional[EnvSpec] = None):
        self.config = config
        self.trainer_config = config.trainer
        self.run_dir = Path(run_dir) if run_dir is not None else default_run_dir(config)
        self.env_spec = env_spec if env_spec is not None else resolve_env_spec(config)
        self.damage_mode = config.env.damage_mode
        self.run_logger = get_debug_logger(config.runtime.log_level)

        self.streams = make_seed_streams(self.trainer_config.seed)
        self.learner = SacLearner(
            obs_dim=self.env_spec.obs_dim,
            action_low=self.env_spec.action_low_array,
            action_high=self.env_spec.action_high_array,
            config=self.trainer_config.sac,
            rng=self.streams['init'],
            env_id=self.env_spec.env_id,
            policy_id=self.trainer_config.mode.value,
        )
        self.buffer = ReplayBuffer(self.trainer_config.sac.buffer_capacity, self.env_spec.obs_dim,
                                   self.env_spec.action_dim, q_slice=self.env_spec.q_slice)
        self.adversary = AdversaryService(self.make_env, self.env_spec, self.damage_mode,
                                          max_workers=config.runtime.jobs)
        self.warmup_policy = UniformRandomPolicy(self.env_spec.action_low_array, self.env_spec.action_high_array)

        self.ledger = RunLedger()
        self.damaged_set: Tuple[int, ...] = ()
        self.env_steps = 0
        self.next_iteration = 0
        self._train_env: Optional[FaultAwareEnv] = None

    # ---- среды ----

    def make_env(self, trajectory_sink=None) -> FaultAwareEnv:
        return make_env(self.env_spec.env_id, self.env_spec, hide_q_flags=self.config.env.hide_q_flags,
                        trajectory_sink=trajectory_sink)

    def _training_env(self) -> FaultAwareEnv:
        if self._train_env is None:
            sink = None
            if self.config.runtime.dump_trajectories:
                path = self.run_dir / "traces" / "trajectories.jsonl"
                sink = lambda record: append_jsonl(path, record)
            self._train_env = self.make_env(trajectory_sink=sink)
        return self._train_env

    # ---- начальное состояние ----

    def initial_damaged_set(self) -> Tuple[int, ...]:
        if self.trainer_config.mode is TrainerMode.SAC_BASELINE:
            return ()
        if self.trainer_config.initial_q_policy is InitialQPolicy.UNDAMAGED:
            return ()
        if self.trainer_config.adversary.max_damaged == 0:
            return ()
        return (int(self.streams['angles'].integers(self.env_spec.n_joints)),)

    def prepare_run_dir(self) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        save_run_config(self.config, self.run_dir / CONFIG_FILE)
        write_jsonl(self.run_dir / LEDGER_FILE, [])
        write_jsonl(self.run_dir / TIMINGS_FILE, [])

    # ---- одна итерация ----

    def _episode_set(self) -> Tuple[int, ...]:
        ratio = self.trainer_config.undamaged_mix_ratio
        if ratio > 0.0 and self.damaged_set and self.streams['angles'].random() < ratio:
            return ()
        return self.damaged_set

    def _update_after_episode(self, episode_steps: int) -> int:
        """Одно обновление на steps_per_update шагов эпизода после разогрева"""
        sac = self.trainer_config.sac
        updates = 0
        for step in range(self.env_steps - episode_steps + 1, self.env_steps + 1):
            if step < sac.warmup_steps or step % sac.steps_per_update != 0:
                continue
            if len(self.buffer) < sac.batch_size:
                continue
            batch = self.buffer.sample(sac.batch_size, self.streams['updates'])
            self.learner.update(batch, self.streams['updates'])
            updates += 1
        return updates

    def train_iteration(self, iteration: int) -> Tuple[List[float], int, int]:
        """K эпизодов сбора опыта и обновлений при текущем q"""
        env = self._training_env()
        episodes = self.trainer_config.episodes_per_iter
        returns: List[float] = []
        successes = 0
        updates = 0
        progress = tqdm(range(episodes), desc=f"iter {iteration + 1}", leave=False,
                        disable=not (self.config.runtime.progress and sys.stdout.isatty()))
        for _ in progress:
            q = make_q(self._episode_set(), self.streams['angles'], self.env_spec, mode=self.damage_mode)
            seed = int(self.streams['episodes'].integers(0, 2**31 - 1))
            if self.env_steps < self.trainer_config.sac.warmup_steps:
                policy: Policy = self.warmup_policy
            else:
                policy = self.learner.snapshot()
            trajectory = rollout(policy, env, q, stochastic=True, seed=seed, rng=self.streams['policy'])
            for transition in trajectory.transitions:
                self.buffer.add(transition)
            self.env_steps += len(trajectory)
            updates += self._update_after_episode(len(trajectory))
            returns.append(trajectory.episode_return)
            successes += int(trajectory.success)
            progress.set_postfix(ret=f"{trajectory.episode_return:.2f}")
        return returns, successes, updates

    def search_next_set(self, iteration: int, snapshot: PolicySnapshot) -> Tuple[Tuple[int, ...], Optional[str]]:
        """Поиск сложного сценария для следующей итерации; трасса пишется в traces/"""
        if self.trainer_config.mode is TrainerMode.SAC_BASELINE:
            return (), None
        outcome = self.adversary.search(snapshot, self.trainer_config.adversary)
        trace_path = Path("traces") / f"search_iter_{iteration:03d}.jsonl"
        records = outcome.trace_records()
        write_jsonl(self.run_dir / trace_path, records)
        self.run_logger.log_search_stages(records[:-1])
        self.run_logger.log_search_result(outcome.method.value, outcome.case.label, outcome.evaluations,
                                          outcome.report.mean_return if outcome.report else None)
        return outcome.case.sorted_joints(), trace_path.as_posix()

    def rng_states(self) -> Dict[str, Any]:
        return {name: rng.bit_generator.state for name, rng in self.streams.items()}

    def _save_iteration_checkpoint(self, iteration: int, snapshot: PolicySnapshot) -> Optional[str]:
        is_last = iteration == self.trainer_config.n_iter - 1
        if not is_last and (iteration + 1) % self.trainer_config.checkpoint_every != 0:
            return None
        relative = Path("checkpoints") / f"iter_{iteration:03d}"
        save_checkpoint(snapshot, self.run_dir / relative)
        return relative.as_posix()

    def _save_resume(self, snapshot: PolicySnapshot) -> None:
        save_resume_state(
            self.run_dir / RESUME_DIR,
            snapshot,
            learner_state=self.learner.state_dict(),
            buffer_state=self.buffer.state_dict(),
            rng_states=self.rng_states(),
            trainer_state={
                'next_iteration': self.next_iteration,
                'damaged_set': list(self.damaged_set),
                'env_steps': self.env_steps,
                'ledger_records': len(self.ledger),
            },
        )

    def restore(self) -> None:
        """Продолжение прерванного запуска с последней завершенной итерации"""
        state = load_resume_state(self.run_dir / RESUME_DIR)
        self.learner.load_snapshot(state['snapshot'])
        self.learner.load_state_dict(state['learner'])
        self.buffer.load_state_dict(state['buffer'])
        for name, rng_state in state['rng_states'].items():
            self.streams[name].bit_generator.state = rng_state
        trainer_state = state['trainer']
        self.next_iteration = int(trainer_state['next_iteration'])
        self.damaged_set = tuple(int(j) for j in trainer_state['damaged_set'])
        self.env_steps = int(trainer_state['env_steps'])

        kept = int(trainer_state['ledger_records'])
        truncate_jsonl(self.run_dir / LEDGER_FILE, kept)
        truncate_jsonl(self.run_dir / TIMINGS_FILE, kept)
        self.ledger = RunLedger()
        for record in read_jsonl(self.run_dir / LEDGER_FILE):
            self.ledger.append(IterationRecord.from_dict(record))
        logger.info(f"Resuming {self.run_dir} at iteration {self.next_iteration} with q={{{format_damage_label(self.damaged_set)}}}")

    # ---- внешний цикл ----

    def train(self, resume: bool = False) -> TrainingResult:
        """Полный запуск: N_iter итераций обучения и поиска сложного сценария"""
        config = self.trainer_config
        if resume:
            self.restore()
        else:
            self.prepare_run_dir()
            self.damaged_set = self.initial_damaged_set()
        logger.info(f"Training {config.mode.value} on {self.env_spec.env_id}: "
                    f"{config.n_iter} iterations x {config.episodes_per_iter} episodes, seed {config.seed}")

        for iteration in range(self.next_iteration, config.n_iter):
            steps_before = self.env_steps
            try:
                with performance_timer("train") as train_timer:
                    returns, successes, updates = self.train_iteration(iteration)
                snapshot = self.learner.snapshot(metadata={'iteration': iteration}, rng_state=self.rng_states())
                with performance_timer("search") as search_timer:
                    next_set, trace_path = self.search_next_set(iteration, snapshot)
            except NonFiniteLossError as e:
                self.run_logger.log_error(type(e).__name__, str(e), iteration=iteration,
                                          damage_label=format_damage_label(self.damaged_set), context={
                                              'loss': e.loss_name,
                                              'batch': e.batch_stats,
                                              'env_steps': self.env_steps,
                                              'completed_iterations': len(self.ledger),
                                          })
                raise

            checkpoint = self._save_iteration_checkpoint(iteration, snapshot)
            record = IterationRecord(
                iteration=iteration,
                damage_label=format_damage_label(self.damaged_set),
                training_returns=tuple(returns),
                training_success_rate=successes / len(returns),
                buffer_size=len(self.buffer),
                updates=self.learner.update_count,
                env_steps=self.env_steps,
                policy_fingerprint=snapshot.fingerprint(),
                next_damage_label=None if trace_path is None else format_damage_label(next_set),
                search_trace=trace_path,
                checkpoint=checkpoint,
            )
            self.ledger.append(record)
            append_jsonl(self.run_dir / LEDGER_FILE, record.to_dict())
            append_jsonl(self.run_dir / TIMINGS_FILE, {
                'iteration': iteration,
                'train_seconds': train_timer.elapsed_seconds,
                'search_seconds': search_timer.elapsed_seconds,
                'iteration_updates': updates,
            })
            self.run_logger.log_iteration(iteration, config.n_iter, record.damage_label,
                                          record.mean_training_return, record.training_success_rate,
                                          record.buffer_size)
            self.run_logger.log_performance_metrics(f"итерация {iteration + 1}",
                                                    train_timer.elapsed_seconds + search_timer.elapsed_seconds,
                                                    env_steps=self.env_steps - steps_before, updates=updates)

            if next_set != self.damaged_set and config.sac.clear_buffer_on_switch:
                self.buffer.clear()
            self.damaged_set = next_set
            self.next_iteration = iteration + 1
            self._save_resume(snapshot)

        final = self.learner.snapshot(metadata={'iteration': config.n_iter - 1, 'final': True},
                                      rng_state=self.rng_states())
        save_checkpoint(final, self.run_dir / "checkpoints" / "final")
        return TrainingResult(snapshot=final, ledger=self.ledger, run_dir=self.run_dir)


def train(config: RunConfig, run_dir: Optional[Path] = None, resume: bool = False) -> Tuple[PolicySnapshot, RunLedger]:
    """Обучение по конфигурации; возвращает итоговую политику и журнал"""
    result = TrainerService(config, run_dir=run_dir).train(resume=resume)
    return result.snapshot, result.ledger


# ---- оценка целевого функционала ----

def fixed_q_sampler(q: JointWorkingState) -> QSampler:
    return lambda rng: q


def uniform_single_damage_sampler(spec: EnvSpec, mode: DamageMode = DamageMode.FROZEN) -> QSampler:
    """Равновероятно один из N суставов, угол заклинивания из допустимого диапазона"""
    def sample(rng: np.random.Generator) -> JointWorkingState:
        joint = int(rng.integers(spec.n_joints))
        return make_q([joint], rng, spec, mode=mode)
    return sample


def estimate_objective_with_error(policy: Policy,
                                  env_factory: Callable[[], FaultAwareEnv],
                                  q_sampler: QSampler,
                                  episodes_per_q: int,
                                  num_q_samples: int,
                                  gamma: float,
                                  seed: int = 0) -> Tuple[float, float]:
    """
    Монте-Карло оценка ожидаемой дисконтированной доходности по распределению q

    Внешнее среднее - по выборкам q, внутреннее - по эпизодам детерминированной
    политики при каждом q. Возвращает (оценка, стандартная ошибка по выборкам q).
    """
    if num_q_samples < 1 or episodes_per_q < 1:
        raise ValueError(f"need at least one q sample and one episode, got {num_q_samples} and {episodes_per_q}")
    rng = np.random.default_rng([seed, 4])
    env = env_factory()
    per_q: List[float] = []
    for s in range(num_q_samples):
        q = q_sampler(rng)
        values = []
        for e in range(episodes_per_q):
            trajectory = rollout(policy, env, q, stochastic=False, seed=seed + s * episodes_per_q + e,
                                 keep_transitions=False)
            values.append(trajectory.discounted_return(gamma))
        per_q.append(float(np.mean(values)))
    estimate = float(np.mean(per_q))
    stderr = float(np.std(per_q, ddof=1) / np.sqrt(len(per_q))) if len(per_q) > 1 else 0.0
    return estimate, stderr


def estimate_objective(policy: Policy,
                       env_factory: Callable[[], FaultAwareEnv],
                       q_sampler: QSampler,
                       episodes_per_q: int,
                       num_q_samples: int,
                       gamma: float,
                       seed: int = 0) -> float:
    return estimate_objective_with_error(policy, env_factory, q_sampler, episodes_per_q,
                                         num_q_samples, gamma, seed)[0]
