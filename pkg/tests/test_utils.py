"""
ログ・並列実行ユーティリティのテスト
"""

import logging

import pytest

from utils.logger import configure_logging, setup_logger
from utils.parallel import THREADS_ENV_VAR, parallel_map, resolve_workers


class TestResolveWorkers:

    def test_explicit_value_wins(self):
        assert resolve_workers(3, {THREADS_ENV_VAR: "7"}) == 3

    def test_environment_value(self):
        assert resolve_workers(None, {THREADS_ENV_VAR: "5"}) == 5

    def test_default_is_positive(self):
        assert 1 <= resolve_workers(None, {}) <= 8

    @pytest.mark.parametrize("env", [{THREADS_ENV_VAR: "abc"}, {THREADS_ENV_VAR: "0"}])
    def test_invalid_environment(self, env):
        with pytest.raises(ValueError):
            resolve_workers(None, env)

    def test_invalid_explicit(self):
        with pytest.raises(ValueError):
            resolve_workers(0)


@pytest.mark.parametrize("workers", [1, 4])
def test_parallel_map_preserves_order(workers):
    assert parallel_map(lambda v: v * v, range(10), workers=workers) == [v * v for v in range(10)]


class TestLogger:

    def test_setup_logger_writes_to_file(self, tmp_path):
        log_file = tmp_path / "logs" / "run.log"
        logger = setup_logger("adini_fem.test", level="DEBUG", log_file=str(log_file))
        logger.debug("テスト出力")
        for handler in logger.handlers:
            handler.flush()
        assert "テスト出力" in log_file.read_text(encoding="utf-8")
        assert logger.propagate is False
        for handler in list(logger.handlers):
            handler.close()

    def test_configure_logging_updates_project_loggers(self):
        logger = setup_logger("src.dummy_for_test")
        try:
            configure_logging("WARNING")
            assert logging.getLogger("src.dummy_for_test").level == logging.WARNING
        finally:
            configure_logging("INFO")

    def test_configure_logging_shares_one_file_handler(self, tmp_path):
        log_file = tmp_path / "run.log"
        first = setup_logger("src.shared_a")
        second = setup_logger("src.shared_b")
        try:
            configure_logging("INFO", str(log_file))
            first_files = [h for h in first.handlers if isinstance(h, logging.FileHandler)]
            second_files = [h for h in second.handlers if isinstance(h, logging.FileHandler)]
            assert len(first_files) == 1
            assert first_files[0] is second_files[0]
            first.info("一行目")
            second.info("二行目")
            first_files[0].flush()
            lines = log_file.read_text(encoding="utf-8").splitlines()
            assert len(lines) == 2
            assert "一行目" in lines[0] and "二行目" in lines[1]
        finally:
            configure_logging("INFO")
        assert not any(isinstance(h, logging.FileHandler) for h in first.handlers)

    def test_configure_logging_rejects_unknown_level(self):
        with pytest.raises(ValueError):
            configure_logging("LOUD")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
