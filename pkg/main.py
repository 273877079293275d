#!/usr/bin/env python3
"""
Главный файл для запуска состязательного обучения политик,
устойчивых к повреждениям суставов, и оценочных экспериментов
"""

import sys
import os
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional

# Добавляем src в путь Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.envs.scripted import ConstantPolicy, scripted_env_spec
from src.models.config import RunConfig
from src.models.fault import DamageCase
from src.robust_rl_app import RobustRLApp, SCRIPTED_GAIT
from src.services.trainer_service import default_run_dir
from src.utils.config_loader import load_run_config
from src.utils.debug_logger import init_debug_logging

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Аргументы конфигурации, общие для всех команд"""
    parser.add_argument('--config', type=str, default=None,
                        help='Путь к JSON-файлу конфигурации (по умолчанию: значения по умолчанию)')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Переопределение поля конфигурации (значение в формате JSON), можно повторять')
    parser.add_argument('--env', type=str, default=None, choices=['claw_valve', 'kitty_walk'],
                        help='Среда (env.id)')
    parser.add_argument('--seed', type=int, default=None, help='Зерно обучения (trainer.seed)')
    parser.add_argument('--jobs', type=int, default=None, help='Число параллельных оценок (runtime.jobs)')
    parser.add_argument('--damage-mode', type=str, default=None, choices=['frozen', 'random_action'],
                        help='Режим неисправности суставов (env.damage_mode)')
    parser.add_argument('--valve-damping', type=float, default=None,
                        help='Демпфирование вентиля ClawValve (env.dynamics_overrides.damping)')
    parser.add_argument('--output-root', type=str, default=None,
                        help='Корневой каталог результатов (output.root, переменная RSAC_OUTPUT_ROOT)')
    parser.add_argument('--log-level', type=str, default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Уровень логирования (runtime.log_level)')


def add_policy_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--checkpoint', type=str, default=None, help='Каталог контрольной точки политики')
    parser.add_argument('--policy', type=str, default=None, choices=[SCRIPTED_GAIT],
                        help='Встроенная скриптовая политика вместо контрольной точки')
    parser.add_argument('--out', type=str, default=None,
                        help='Каталог отчетов (по умолчанию: <output.root>/reports)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Fault-aware adversarial training of damage-robust policies",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Примеры использования:

  # Состязательное обучение на ClawValve
  python main.py train --config configs/claw.json --seed 7

  # Базовая линия SAC без повреждений
  python main.py train --config configs/claw.json --mode sac-baseline

  # Поиск сложного сценария для контрольной точки (жадный или полный перебор)
  python main.py search --checkpoint runs/claw_valve_rsac_seed0/checkpoints/final --max-damaged 2
  python main.py search --checkpoint runs/claw_valve_rsac_seed0/checkpoints/final --exhaustive
  python main.py search --checkpoint runs/claw_valve_rsac_seed0/checkpoints/final --exhaustive --exact-size

  # Матрица успехов, траектории угла вентиля, устойчивость к шуму
  python main.py heatmap --checkpoint runs/claw_valve_rsac_seed0/checkpoints/final --trials 10
  python main.py traces --policy scripted_gait --cases "0;1;2;3;4;5;6;7;8"
  python main.py noise --checkpoint runs/claw_valve_rsac_seed0/checkpoints/final --sigma 1.0 --episodes 30
        """
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    train = subparsers.add_parser('train', help='Обучение политики (RSAC или базовая линия SAC)')
    add_common_arguments(train)
    train.add_argument('--mode', type=str, default=None, choices=['rsac', 'sac-baseline'],
                       help='Режим обучения (trainer.mode)')
    train.add_argument('--n-iter', type=int, default=None, help='Число внешних итераций (trainer.n_iter)')
    train.add_argument('--episodes', type=int, default=None, help='Эпизодов на итерацию (trainer.episodes_per_iter)')
    train.add_argument('--run-dir', type=str, default=None, help='Каталог запуска (по умолчанию из output.*)')
    train.add_argument('--resume', action='store_true', help='Продолжить прерванный запуск в --run-dir')

    search = subparsers.add_parser('search', help='Поиск сложного сценария повреждений')
    add_common_arguments(search)
    add_policy_arguments(search)
    search.add_argument('--max-damaged', '-M', type=int, default=None, help='Число поврежденных суставов M')
    search.add_argument('--episodes', '-E', type=int, default=None, help='Эпизодов оценки на кандидата E')
    search.add_argument('--exhaustive', action='store_true', help='Полный перебор вместо жадного поиска')
    search.add_argument('--exact-size', action='store_true',
                        help='Полный перебор только множеств ровно из M суставов (по умолчанию все размеры до M)')
    search.add_argument('--scripted-weights', type=str, default=None,
                        help='Проверочный режим: аддитивная скриптовая среда с весами "w0,w1,..."')

    heatmap = subparsers.add_parser('heatmap', help='Матрица успехов по одиночным и парным повреждениям')
    add_common_arguments(heatmap)
    add_policy_arguments(heatmap)
    heatmap.add_argument('--trials', type=int, default=10, help='Эпизодов на клетку (по умолчанию: 10)')

    traces = subparsers.add_parser('traces', help='Траектории величины задачи для сценариев повреждений')
    add_common_arguments(traces)
    add_policy_arguments(traces)
    traces.add_argument('--cases', type=str, default='',
                        help='Сценарии через ";", суставы через "," (например "0;1;2,7")')

    noise = subparsers.add_parser('noise', help='Доля успехов при гауссовском шуме на командах')
    add_common_arguments(noise)
    add_policy_arguments(noise)
    noise.add_argument('--sigma', type=float, required=True, help='Масштаб шума в нормированных единицах действия')
    noise.add_argument('--episodes', type=int, default=30, help='Число эпизодов (по умолчанию: 30)')
    noise.add_argument('--damaged', type=str, default='', help='Поврежденные суставы "i,j" (по умолчанию: нет)')

    evaluate = subparsers.add_parser('evaluate', help='Оценка политики на заданных сценариях повреждений')
    add_common_arguments(evaluate)
    add_policy_arguments(evaluate)
    evaluate.add_argument('--cases', type=str, default='', help='Сценарии через ";" (пустая строка - без повреждений)')
    evaluate.add_argument('--episodes', type=int, default=5, help='Эпизодов на сценарий (по умолчанию: 5)')

    objective = subparsers.add_parser('objective', help='Оценка ожидаемой доходности при случайном повреждении')
    add_common_arguments(objective)
    add_policy_arguments(objective)
    objective.add_argument('--episodes', type=int, default=5, help='Эпизодов на выборку q (по умолчанию: 5)')
    objective.add_argument('--samples', type=int, default=30, help='Число выборок q (по умолчанию: 30)')

    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Конфигурация: файл -> --set -> RSAC_OUTPUT_ROOT -> отдельные флаги"""
    flags: Dict[str, Any] = {
        'env.id': args.env,
        'trainer.seed': args.seed,
        'runtime.jobs': args.jobs,
        'env.damage_mode': args.damage_mode,
        'env.dynamics_overrides.damping': args.valve_damping,
        'output.root': args.output_root,
        'runtime.log_level': args.log_level,
    }
    if args.command == 'train':
        flags['trainer.mode'] = args.mode.replace('-', '_') if args.mode else None
        flags['trainer.n_iter'] = args.n_iter
        flags['trainer.episodes_per_iter'] = args.episodes
    return load_run_config(args.config, args.overrides, flags)


def parse_cases(text: str, n_joints: int, max_damaged: int) -> List[DamageCase]:
    return [DamageCase.parse(part, n_joints, max_damaged) for part in text.split(';') if part.strip()]


def cmd_train(app: RobustRLApp, args: argparse.Namespace) -> int:
    config = app.config
    print(f"Обучение {config.trainer.mode.value} на {config.env.id}: "
          f"{config.trainer.n_iter} итераций x {config.trainer.episodes_per_iter} эпизодов")
    result = app.train(run_dir=args.run_dir, resume=args.resume)
    print(f"[OK] Обучение завершено, итераций в журнале: {len(result.ledger)}")
    print(f"[OK] Каталог запуска: {result.run_dir}")
    for record in result.ledger.records:
        print(f"  {record.iteration:3d}. q={{{record.damage_label}}} "
              f"доходность {record.mean_training_return:.2f} -> следующее q={{{record.next_damage_label or ''}}}")
    return EXIT_OK


def cmd_search(app: RobustRLApp, args: argparse.Namespace) -> int:
    if args.scripted_weights:
        policy = ConstantPolicy(action=[0.0] * app.env_spec.action_dim, policy_id="scripted")
    else:
        policy = app.load_policy(args.checkpoint, args.policy)
    outcome, trace_path = app.search(policy, args.max_damaged, args.episodes, args.exhaustive, args.out,
                                     exact_size=True if args.exact_size else None)
    print(f"[OK] Сложный сценарий ({outcome.method.value}, {outcome.evaluations} оценок): {{{outcome.case.label}}}")
    print(f"[OK] Трасса поиска: {trace_path}")
    print(outcome.case.label)
    return EXIT_OK


def cmd_heatmap(app: RobustRLApp, args: argparse.Namespace) -> int:
    policy = app.load_policy(args.checkpoint, args.policy)
    matrix, paths = app.heatmap(policy, args.trials, args.out)
    print(f"[OK] Матрица успехов {matrix.n}x{matrix.n}: среднее {matrix.mean_rate * 100:.1f}%, "
          f"минимум диагонали {matrix.min_diagonal_rate * 100:.1f}%")
    for kind, path in paths.items():
        print(f"[OK] {kind.upper()}: {path}")
    return EXIT_OK


def cmd_traces(app: RobustRLApp, args: argparse.Namespace) -> int:
    policy = app.load_policy(args.checkpoint, args.policy)
    cases = parse_cases(args.cases, app.env_spec.n_joints, app.env_spec.max_damaged)
    traces, paths = app.traces(policy, cases, args.out)
    for trace in traces:
        final = trace.values[-1] if trace.values else float('nan')
        print(f"  {{{trace.label}}}: {len(trace)} шагов, итог {final:.3f}, успех {'да' if trace.success else 'нет'}")
    for kind, path in paths.items():
        print(f"[OK] {kind.upper()}: {path}")
    return EXIT_OK


def cmd_noise(app: RobustRLApp, args: argparse.Namespace) -> int:
    policy = app.load_policy(args.checkpoint, args.policy)
    damaged = DamageCase.parse(args.damaged, app.env_spec.n_joints, app.env_spec.max_damaged)
    result, path = app.noise(policy, args.sigma, args.episodes, damaged.sorted_joints(), args.out)
    print(f"[OK] sigma={result.sigma:g}: успехи {result.successes}/{result.episodes} "
          f"({result.success_rate * 100:.2f}%)")
    print(f"[OK] Результат: {path}")
    return EXIT_OK


def cmd_evaluate(app: RobustRLApp, args: argparse.Namespace) -> int:
    policy = app.load_policy(args.checkpoint, args.policy)
    cases = parse_cases(args.cases, app.env_spec.n_joints, app.env_spec.max_damaged) or [DamageCase.of([])]
    reports, path = app.evaluate(policy, cases, args.episodes, output_dir=args.out)
    for report in reports:
        print(f"  {{{report.label}}}: доходность {report.mean_return:.3f}, успехи {report.success_rate * 100:.1f}%")
    print(f"[OK] Результат: {path}")
    return EXIT_OK


def cmd_objective(app: RobustRLApp, args: argparse.Namespace) -> int:
    policy = app.load_policy(args.checkpoint, args.policy)
    estimate, stderr = app.objective(policy, args.episodes, args.samples)
    print(f"[OK] Ожидаемая дисконтированная доходность: {estimate:.4f} ± {stderr:.4f}")
    return EXIT_OK


COMMANDS = {
    'train': cmd_train,
    'search': cmd_search,
    'heatmap': cmd_heatmap,
    'traces': cmd_traces,
    'noise': cmd_noise,
    'evaluate': cmd_evaluate,
    'objective': cmd_objective,
}


def make_app(args: argparse.Namespace, config: RunConfig) -> RobustRLApp:
    if getattr(args, 'scripted_weights', None):
        weights = [float(w) for w in args.scripted_weights.split(',')]
        spec = scripted_env_spec(n_joints=len(weights), weights=weights, base_reward=sum(weights),
                                 max_damaged=max(config.trainer.adversary.max_damaged, args.max_damaged or 0))
        return RobustRLApp(config, env_spec=spec)
    return RobustRLApp(config)


def main(argv: Optional[List[str]] = None) -> int:
    """Главная функция: разбор команды, загрузка конфигурации, запуск"""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = build_config(args)
        log_dir = None
        if args.command == 'train':
            log_dir = (Path(args.run_dir) if args.run_dir else default_run_dir(config)) / "logs"
        init_debug_logging(config.runtime.log_level, log_dir=log_dir, log_to_console=True,
                           log_to_file=log_dir is not None)
        app = make_app(args, config)
        return COMMANDS[args.command](app, args)
    except FileNotFoundError as e:
        print(f"[ERROR] Файл не найден: {e}")
        return EXIT_USAGE
    except ValueError as e:
        print(f"[ERROR] {e}")
        return EXIT_USAGE
    except RuntimeError as e:
        print(f"[ERROR] Выполнение прервано: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n[INFO] Операция прервана пользователем")
        sys.exit(1)
