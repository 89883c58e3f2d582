"""Unit tests for logging setup."""

from __future__ import annotations

import io
import logging
import warnings

import pytest

from misclass_qlearn.utils.logger import (
    PACKAGE_LOGGER,
    get_logger,
    replication_context,
    setup_logging,
)


class TestGetLogger:
    """Tests for get_logger."""

    def test_module_names_are_kept(self) -> None:
        """Test package module names map to their own logger."""
        assert get_logger("misclass_qlearn.core.glm").name == "misclass_qlearn.core.glm"

    def test_foreign_names_are_prefixed(self) -> None:
        """Test other names are placed under the package logger."""
        assert get_logger("tests").name == f"{PACKAGE_LOGGER}.tests"


class TestSetupLogging:
    """Tests for setup_logging."""

    def test_level_from_string(self) -> None:
        """Test string levels are accepted."""
        setup_logging("DEBUG", stream=io.StringIO())
        assert logging.getLogger(PACKAGE_LOGGER).level == logging.DEBUG

    def test_quiet_suppresses_warnings(self) -> None:
        """Test quiet mode only lets errors through."""
        stream = io.StringIO()
        setup_logging("INFO", stream=stream, quiet=True)
        logger = get_logger("misclass_qlearn.test")
        logger.warning("hidden")
        logger.error("shown")

        assert "hidden" not in stream.getvalue()
        assert "shown" in stream.getvalue()

    def test_repeated_setup_does_not_duplicate(self) -> None:
        """Test handlers are replaced rather than stacked."""
        stream = io.StringIO()
        setup_logging("INFO", stream=stream)
        setup_logging("INFO", stream=stream)
        get_logger("misclass_qlearn.test").info("once")

        assert stream.getvalue().count("once") == 1
        setup_logging("WARNING")


class TestReplicationContext:
    """Tests for replication tagging."""

    def test_records_carry_replication(self) -> None:
        """Test the verbose format shows the replication inside the block only."""
        stream = io.StringIO()
        setup_logging("DEBUG", stream=stream)
        logger = get_logger("misclass_qlearn.test")
        with replication_context(17):
            logger.debug("inside")
        logger.debug("outside")
        setup_logging("WARNING")

        inside, outside = stream.getvalue().splitlines()
        assert "rep 17" in inside
        assert "rep -" in outside

    @pytest.mark.filterwarnings("default")
    def test_warnings_are_captured(self) -> None:
        """Test Python warnings go through the package handler and respect quiet mode."""
        stream, quiet = io.StringIO(), io.StringIO()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("always")
                setup_logging("INFO", stream=stream)
                warnings.warn("overflow in exp", RuntimeWarning, stacklevel=1)
                setup_logging("INFO", stream=quiet, quiet=True)
                warnings.warn("overflow again", RuntimeWarning, stacklevel=1)
        finally:
            logging.captureWarnings(False)
            setup_logging("WARNING")
            logging.captureWarnings(False)

        assert "overflow in exp" in stream.getvalue()
        assert "overflow again" not in quiet.getvalue()
