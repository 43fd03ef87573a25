import logging
import re

import pytest

from ionnet import config
from ionnet.config import ConfigError, load_config


@pytest.fixture
def shipped_text():
    return config.default_path().read_text()


def _write(tmp_path, text):
    p = tmp_path / "cal.ini"
    p.write_text(text)
    return p


class TestShipped:
    def test_zero_warnings(self, caplog):
        with caplog.at_level(logging.WARNING):
            cal = load_config()
        assert cal.warnings == []
        assert not [r for r in caplog.records if r.levelno >= logging.WARNING]

    def test_every_entry_tagged(self, cal):
        assert all(e.tag in config.TAGS for e in cal.entries.values())

    def test_provenance_lookup(self, cal):
        assert cal.provenance("Alice", "cnot_fidelity") == "measured"
        assert cal.provenance("storage", "coherence_T_N") == "fitted"

    def test_network_built(self, cal):
        assert set(cal.network.modules) == {"Alice", "Bob"}
        assert set(cal.network.schedules) == set(config.KINDS)

    def test_asymmetric_readout(self, cal):
        ro = cal.network.modules["Alice"].readout["X"]
        assert (ro.eps0 + ro.eps1) / 2 == pytest.approx(1.06e-3)
        assert ro.eps1 == pytest.approx(0.357e-3)

    def test_digest_stable(self):
        assert load_config().digest == load_config().digest


class TestValidation:
    def test_success_prob_range(self, tmp_path, shipped_text):
        bad = re.sub(r"(?m)^srsr = [^;]*", "srsr = 1.5 ", shipped_text, count=1)
        with pytest.raises(ConfigError, match=r"cal.ini:\d+ \[herald\] srsr"):
            load_config(_write(tmp_path, bad))

    def test_missing_key(self, tmp_path, shipped_text):
        bad = re.sub(r"(?m)^cnot_fidelity = .*\n", "", shipped_text, count=1)
        with pytest.raises(ConfigError, match="missing required key 'cnot_fidelity'"):
            load_config(_write(tmp_path, bad))

    def test_extra_key(self, tmp_path, shipped_text):
        bad = shipped_text.replace("[link]\n", "[link]\nbogus = 1 ; measured | x\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(_write(tmp_path, bad))

    def test_unknown_section(self, tmp_path, shipped_text):
        with pytest.raises(ConfigError, match="unknown section"):
            load_config(_write(tmp_path, shipped_text + "\n[extra]\na = 1 ; measured | x\n"))

    def test_missing_tag(self, tmp_path, shipped_text):
        bad = re.sub(r"(?m)^(cnot_duration = 62)\s*;.*$", r"\1", shipped_text, count=1)
        with pytest.raises(ConfigError, match="provenance tag"):
            load_config(_write(tmp_path, bad))

    def test_non_numeric(self, tmp_path, shipped_text):
        bad = re.sub(r"(?m)^cnot_duration = 62", "cnot_duration = fast", shipped_text, count=1)
        with pytest.raises(ConfigError, match="expected a number"):
            load_config(_write(tmp_path, bad))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_omitted_attempt_period_warns(self, tmp_path, shipped_text, caplog):
        text = re.sub(r"(?m)^attempt_period = .*\n", "", shipped_text)
        with caplog.at_level(logging.WARNING):
            cal = load_config(_write(tmp_path, text))
        assert any("attempt_period: uncalibrated default" in w for w in cal.warnings)
        assert cal.provenance("schedule.srsr", "attempt_period") == "uncalibrated"
        assert cal.network.schedules["srsr"].attempt_period == config.DEFAULTS["attempt_period"]


class TestParsing:
    def test_floats(self):
        assert config.parse_floats("0, 5,10") == [0.0, 5.0, 10.0]

    def test_dd(self):
        assert config._parse_dd("100:4,1000:16") == ((100.0, 4), (1000.0, 16))
