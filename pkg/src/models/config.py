"""
Конфигурация обучения, поиска сложных сценариев и запуска.

Все секции - неизменяемые dataclass-ы с валидацией pydantic:
неизвестные ключи отклоняются, диапазоны значений проверяются.
"""

from __future__ import annotations
from enum import Enum
from typing import Annotated, Dict, Optional, Tuple

from pydantic import ConfigDict, Field
from pydantic.dataclasses import dataclass

from .fault import DamageMode

STRICT = ConfigDict(extra="forbid")


class TieBreak(Enum):
    """Правило выбора при равных оценках кандидатов"""
    LOWEST_INDEX = "lowest_index"
    RANDOM_SEEDED = "random_seeded"


class SearchMethod(Enum):
    """Способ поиска сложного сценария"""
    GREEDY = "greedy"
    EXHAUSTIVE = "exhaustive"


class TrainerMode(Enum):
    """RSAC - состязательное обучение, SAC_BASELINE - обучение без повреждений"""
    RSAC = "rsac"
    SAC_BASELINE = "sac_baseline"


class InitialQPolicy(Enum):
    """Начальное q: случайный одиночный сустав или без повреждений"""
    RANDOM_SET = "random_set"
    UNDAMAGED = "undamaged"


class Activation(Enum):
    RELU = "relu"
    TANH = "tanh"


@dataclass(frozen=True, config=STRICT)
class SacConfig:
    """Гиперпараметры SAC (стандартные значения)"""
    gamma: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.99
    tau: Annotated[float, Field(gt=0.0, le=1.0)] = 0.005
    batch_size: Annotated[int, Field(ge=1)] = 256
    buffer_capacity: Annotated[int, Field(ge=1)] = 1_000_000
    steps_per_update: Annotated[int, Field(ge=1)] = 1
    warmup_steps: Annotated[int, Field(ge=0)] = 5000
    initial_temperature: Annotated[float, Field(ge=0.0)] = 1.0
    learn_temperature: bool = True
    target_entropy: Optional[float] = None   # None -> -размерность действия
    actor_lr: Annotated[float, Field(gt=0.0)] = 3e-4
    critic_lr: Annotated[float, Field(gt=0.0)] = 3e-4
    temperature_lr: Annotated[float, Field(gt=0.0)] = 3e-4
    hidden_sizes: Tuple[int, ...] = (256, 256)
    activation: Activation = Activation.RELU
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    clear_buffer_on_switch: bool = False

    def __post_init__(self) -> None:
        if any(width < 1 for width in self.hidden_sizes):
            raise ValueError("hidden_sizes entries must be >= 1")
        if self.log_std_min >= self.log_std_max:
            raise ValueError("log_std_min must be < log_std_max")
        if self.learn_temperature and self.initial_temperature <= 0.0:
            raise ValueError("initial_temperature must be > 0 when the temperature is learned")

    def resolved_target_entropy(self, action_dim: int) -> float:
        return float(-action_dim) if self.target_entropy is None else float(self.target_entropy)


@dataclass(frozen=True, config=STRICT)
class AdversaryConfig:
    """Параметры поиска сложного сценария повреждений"""
    max_damaged: Annotated[int, Field(ge=0)] = 2
    episodes: Annotated[int, Field(ge=1)] = 5
    tie_break: TieBreak = TieBreak.LOWEST_INDEX
    seed_base: Annotated[int, Field(ge=0)] = 100_000
    early_stop: bool = False
    method: SearchMethod = SearchMethod.GREEDY
    max_evaluations: Annotated[int, Field(ge=1)] = 10_000
    exact_size: bool = False   # True - только множества ровно из M суставов


@dataclass(frozen=True, config=STRICT)
class TrainerConfig:
    """Параметры внешнего состязательного цикла"""
    n_iter: Annotated[int, Field(ge=1)] = 20
    episodes_per_iter: Annotated[int, Field(ge=1)] = 100
    mode: TrainerMode = TrainerMode.RSAC
    initial_q_policy: InitialQPolicy = InitialQPolicy.RANDOM_SET
    seed: Annotated[int, Field(ge=0)] = 0
    undamaged_mix_ratio: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0
    checkpoint_every: Annotated[int, Field(ge=1)] = 1
    adversary: AdversaryConfig = AdversaryConfig()
    sac: SacConfig = SacConfig()


@dataclass(frozen=True, config=STRICT)
class EnvConfig:
    """Выбор среды и параметры повреждений"""
    id: str = "claw_valve"
    spec_path: Optional[str] = None
    damage_mode: DamageMode = DamageMode.FROZEN
    hide_q_flags: bool = False
    dynamics_overrides: Dict[str, float] = Field(default_factory=dict)


@dataclass(frozen=True, config=STRICT)
class OutputConfig:
    root: str = "runs"
    run_name: Optional[str] = None


@dataclass(frozen=True, config=STRICT)
class RuntimeConfig:
    jobs: Annotated[int, Field(ge=1)] = 4
    log_level: str = "INFO"
    progress: bool = True
    dump_trajectories: bool = False


@dataclass(frozen=True, config=STRICT)
class RunConfig:
    """Полная конфигурация запуска (содержимое JSON-файла конфигурации)"""
    env: EnvConfig = EnvConfig()
    trainer: TrainerConfig = TrainerConfig()
    output: OutputConfig = OutputConfig()
    runtime: RuntimeConfig = RuntimeConfig()
