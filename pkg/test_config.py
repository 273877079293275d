#!/usr/bin/env python3
"""
Тесты конфигурации запуска, журналов JSONL и логгера запуска.
"""

import sys
import os
import json
import logging

import pytest

# Добавляем src в путь Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.models.config import RunConfig, SearchMethod, TrainerMode
from src.models.errors import ConfigError
from src.utils.config_loader import (OUTPUT_ROOT_ENV, canonical_json, config_to_dict, load_run_config,
                                     parse_override, save_run_config, validate_run_config)
from src.utils.debug_logger import PACKAGE_LOGGER, RunLogger, get_logger
from src.utils.json_formatter import append_jsonl, read_jsonl, truncate_jsonl, write_jsonl
from src.utils.performance import performance_timer

CONFIG_DIR = os.path.join(os.path.dirname(__file__), 'configs')


class TestRunConfig:
    """Тесты загрузки и проверки конфигурации"""

    def test_defaults(self):
        config = validate_run_config({})
        assert config == RunConfig()
        assert config.trainer.mode is TrainerMode.RSAC
        assert config.trainer.adversary.method is SearchMethod.GREEDY
        assert config.trainer.sac.gamma == 0.99

    def test_shipped_configs_load(self):
        """Тест: конфигурации из configs/ проходят проверку"""
        claw = load_run_config(os.path.join(CONFIG_DIR, 'claw.json'), environ={})
        kitty = load_run_config(os.path.join(CONFIG_DIR, 'kitty.json'), environ={})
        assert claw.env.id == 'claw_valve'
        assert kitty.env.id == 'kitty_walk'

    def test_unknown_key_rejected(self):
        """Тест: неизвестный ключ отклоняется с путем к полю"""
        with pytest.raises(ConfigError, match="trainer"):
            validate_run_config({'trainer': {'n_iterations': 5}})
        with pytest.raises(ConfigError):
            validate_run_config({'extra_section': {}})

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            validate_run_config({'trainer': {'sac': {'gamma': 1.0}}})
        with pytest.raises(ConfigError):
            validate_run_config({'trainer': {'adversary': {'max_damaged': -1}}})
        with pytest.raises(ConfigError, match="log_std_min"):
            validate_run_config({'trainer': {'sac': {'log_std_min': 3.0}}})
        with pytest.raises(ConfigError, match="mode"):
            validate_run_config({'trainer': {'mode': 'ppo'}})

    def test_canonical_roundtrip(self, tmp_path):
        """Тест: канонический JSON загружается обратно в ту же конфигурацию"""
        config = validate_run_config({'trainer': {'seed': 3, 'sac': {'hidden_sizes': [32, 32]}}})
        path = tmp_path / "config.json"
        save_run_config(config, path)
        text = path.read_text(encoding='utf-8')
        assert text == canonical_json(config)
        assert text.endswith("\n") and "\r" not in text
        assert load_run_config(str(path), environ={}) == config
        assert list(json.loads(text)) == sorted(config_to_dict(config))

    def test_override_precedence(self, tmp_path):
        """Тест: файл -> --set -> переменная окружения -> отдельные флаги"""
        path = tmp_path / "c.json"
        path.write_text(json.dumps({'trainer': {'seed': 1}, 'output': {'root': 'from_file'}}), encoding='utf-8')

        config = load_run_config(str(path), overrides=['trainer.seed=2'], environ={})
        assert config.trainer.seed == 2
        assert config.output.root == 'from_file'

        config = load_run_config(str(path), environ={OUTPUT_ROOT_ENV: 'from_env'})
        assert config.output.root == 'from_env'

        config = load_run_config(str(path), overrides=['trainer.seed=2'],
                                 flag_overrides={'trainer.seed': 9, 'output.root': 'from_flag', 'runtime.jobs': None},
                                 environ={OUTPUT_ROOT_ENV: 'from_env'})
        assert config.trainer.seed == 9
        assert config.output.root == 'from_flag'
        assert config.runtime.jobs == 4

    def test_parse_override(self):
        assert parse_override('trainer.sac.gamma=0.9') == ('trainer.sac.gamma', 0.9)
        assert parse_override('trainer.sac.hidden_sizes=[8, 8]') == ('trainer.sac.hidden_sizes', [8, 8])
        assert parse_override('env.id=kitty_walk') == ('env.id', 'kitty_walk')
        with pytest.raises(ConfigError, match="--set"):
            parse_override('trainer.seed')
        with pytest.raises(ConfigError, match="empty key"):
            parse_override('=3')

    def test_dynamics_override(self):
        config = load_run_config(None, overrides=['env.dynamics_overrides.damping=16'], environ={})
        assert config.env.dynamics_overrides == {'damping': 16.0}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(str(tmp_path / "absent.json"), environ={})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{trainer:", encoding='utf-8')
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_run_config(str(path), environ={})


class TestJsonLines:
    """Тесты журналов JSONL"""

    def test_write_append_truncate(self, tmp_path):
        path = tmp_path / "nested" / "ledger.jsonl"
        write_jsonl(path, [{'iteration': 0}])
        append_jsonl(path, {'iteration': 1, 'q': "1,5"})
        append_jsonl(path, {'iteration': 2})
        assert [r['iteration'] for r in read_jsonl(path)] == [0, 1, 2]
        truncate_jsonl(path, 2)
        assert read_jsonl(path) == [{'iteration': 0}, {'iteration': 1, 'q': "1,5"}]

    def test_missing_file_is_empty(self, tmp_path):
        assert read_jsonl(tmp_path / "absent.jsonl") == []

    def test_invalid_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"a": 1}\nnot json\n', encoding='utf-8')
        with pytest.raises(ValueError, match=":2:"):
            read_jsonl(path)


class TestRunLogger:
    """Тесты логгера запуска"""

    def test_log_files_and_error_context(self, tmp_path):
        run_logger = RunLogger(log_level="DEBUG", log_dir=tmp_path, log_to_console=False)
        try:
            run_logger.log_iteration(0, 3, "1,5", 12.5, 0.5, 400)
            run_logger.log_search_stages([{'stage': 1, 'base': "", 'chosen': 1, 'candidates': [
                {'set': "1", 'mean_return': 3.0, 'success_rate': 0.0}]}])
            run_logger.log_error("NonFiniteLossError", "critic_1 loss is not finite", iteration=2,
                                 damage_label="1,5", context={'batch': {'reward_max': 1e200}})
            run_logger.log_performance_metrics("итерация 3", 2.0, env_steps=400, updates=300)
            for handler in logging.getLogger(run_logger.package_logger.name).handlers:
                handler.flush()
            main_log = run_logger.log_file.read_text(encoding='utf-8')
            assert "ИТЕРАЦИЯ 1/3: q={1,5}" in main_log
            assert "ОШИБКА (NonFiniteLossError) на итерации 3, q={1,5}" in main_log
            assert "reward_max" in main_log
            assert "400 шагов среды (200.0/с), 300 обновлений (150.0/с)" in main_log
            for handler in run_logger.details_logger.handlers:
                handler.flush()
            details = run_logger.details_file.read_text(encoding='utf-8')
            assert "ЭТАП 1" in details and "{1}" in details
        finally:
            run_logger.close()

    def test_module_loggers_share_project_root(self, tmp_path):
        """Тест: логгеры модулей попадают в иерархию robust_rl и пишут в файл запуска"""
        assert PACKAGE_LOGGER == "robust_rl"
        assert get_logger("src.services.trainer_service").name == "robust_rl.services.trainer_service"
        run_logger = RunLogger(log_level="DEBUG", log_dir=tmp_path, log_to_console=False)
        try:
            with performance_timer("search") as timer:
                pass
            assert timer.elapsed_seconds >= 0.0 and not timer.failed
            with pytest.raises(KeyError):
                with performance_timer("heatmap") as failing:
                    raise KeyError("x")
            assert failing.failed
            for handler in run_logger.package_logger.handlers:
                handler.flush()
            main_log = run_logger.log_file.read_text(encoding='utf-8')
            assert "Stage 'search' finished" in main_log
            assert "Stage 'heatmap' aborted by KeyError" in main_log
        finally:
            run_logger.close()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
