"""
Tests for settings, logging setup and value parsing.
"""
import json
import logging
from fractions import Fraction

import pytest

from qhgeo.core.config import Settings, worker_count
from qhgeo.core.exceptions import ConfigurationError
from qhgeo.core.logging import setup_logging
from qhgeo.utils.io import load_domain_spec
from qhgeo.utils.parsing import parse_bool, parse_point, parse_range, parse_rational


def test_settings_from_environment(monkeypatch):
    """Test QHGEO_ variables override the defaults."""
    monkeypatch.setenv("QHGEO_SEED", "17")
    monkeypatch.setenv("QHGEO_LAYER_FACTOR", "80")
    overridden = Settings()
    assert overridden.SEED == 17
    assert overridden.LAYER_FACTOR == 80.0
    assert overridden.PIECE_FACTOR == 71.0


def test_settings_reject_bad_format(monkeypatch):
    monkeypatch.setenv("QHGEO_LOG_FORMAT", "xml")
    with pytest.raises(ValueError):
        Settings()


def test_worker_count():
    """Test an explicit cap wins and never drops below one."""
    assert worker_count(3) == 3
    assert worker_count(0) == 1
    assert worker_count() >= 1


def test_json_logging(capsys):
    """Test the json formatter emits one object per record."""
    setup_logging("debug", "json")
    logging.getLogger("qhgeo.test").info("hello")
    line = capsys.readouterr().err.strip().splitlines()[-1]
    record = json.loads(line)
    assert record["message"] == "hello"
    assert record["levelname"] == "INFO"
    setup_logging("info", "text")


def test_parse_rational():
    assert parse_rational("1/256") == Fraction(1, 256)
    assert parse_rational(" 0.25 ") == Fraction(1, 4)
    with pytest.raises(ConfigurationError):
        parse_rational("1/0")
    with pytest.raises(ConfigurationError):
        parse_rational("abc")


def test_parse_range():
    """Test inclusive ranges, lists and bad input."""
    assert parse_range("4..8") == [4, 5, 6, 7, 8]
    assert parse_range("3,5") == [3, 5]
    assert parse_range("6") == [6]
    with pytest.raises(ConfigurationError):
        parse_range("8..4")
    with pytest.raises(ConfigurationError):
        parse_range("a..b")


def test_parse_point_and_bool():
    assert parse_point("1/2,0.25") == (0.5, 0.25)
    with pytest.raises(ConfigurationError):
        parse_point("1")
    assert parse_bool("yes") is True
    with pytest.raises(ConfigurationError):
        parse_bool("maybe")


def test_domain_spec_unknown_key(tmp_path):
    """Test spec files with stray keys are refused."""
    path = tmp_path / "bad.spec"
    path.write_text("kind=square\nbounds=0,1,0,1\ncolour=red\n")
    with pytest.raises(ConfigurationError):
        load_domain_spec(path)


def test_domain_spec_files(domains_dir):
    """Test the bundled spec files load."""
    square = load_domain_spec(domains_dir / "square.spec")
    assert square.kind == "square"
    cube = load_domain_spec(domains_dir / "cube.spec")
    assert cube.slice is not None and cube.slice.kind == "square"
