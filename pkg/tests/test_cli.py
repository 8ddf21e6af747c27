import json

import pytest

from scproto import cbe
from scproto.cli import (
    Report,
    ScenarioConfig,
    emit_report,
    load_report,
    main,
    run_scenario,
)
from scproto.config import ConfigError
from scproto.gas import GasTable, gas_estimate, read_trace
from scproto.ledger import LedgerConfig


def rbe_cfg(n=16, **kw):
    return ScenarioConfig(protocol="rbe", registrations=n, **kw)


@pytest.fixture(scope="module")
def rbe_report():
    return run_scenario(rbe_cfg())


@pytest.fixture(scope="module")
def cbe_report():
    return run_scenario(ScenarioConfig(protocol="cbe", users=5, revoke=2))


def test_rbe_sixteen_registrations(rbe_report):
    assert rbe_report.state["depths"] == [5]
    assert rbe_report.state["merges"] == 15
    assert rbe_report.ops["merge"] == 15 and rbe_report.ops["register-base"] == 16
    assert rbe_report.passed, rbe_report.verdicts


def test_cbe_five_users_two_revoked(cbe_report):
    lines = cbe_report.state["table"]
    assert [line.split("\t")[2] for line in lines] == ["valid", "revoked", "revoked", "valid", "valid"]
    assert [line.split("\t")[1] for line in lines] == [u[0] for u in cbe.EXAMPLE_USERS]
    assert cbe_report.ops["revoke"] == 2
    assert cbe_report.passed, cbe_report.verdicts


def test_empty_scenario():
    report = run_scenario(ScenarioConfig())
    assert report.ops == {} and report.gas["total"] == 0 and report.passed


def test_reports_are_byte_identical(tmp_path):
    a = emit_report(run_scenario(rbe_cfg(6)), tmp_path / "a.json").read_bytes()
    b = emit_report(run_scenario(rbe_cfg(6)), tmp_path / "b.json").read_bytes()
    assert a == b
    other = run_scenario(rbe_cfg(6).with_seed(1))
    assert other.digest() != Report.parse(a.decode()).digest()


def test_report_parses_back(tmp_path, cbe_report):
    path = emit_report(cbe_report, tmp_path / "r.json")
    assert load_report(path) == cbe_report
    with pytest.raises(ValueError):
        Report.from_dict({**cbe_report.to_dict(), "extra": 1})


def test_unwritable_path(tmp_path, rbe_report):
    with pytest.raises(OSError):
        emit_report(rbe_report, tmp_path / "missing" / "dir" / "r.json")


@pytest.mark.parametrize("name", ["rbe_report", "cbe_report"])
def test_gas_recomputable_from_trace(name, request, tmp_path):
    report = request.getfixturevalue(name)
    trace = [json.loads(line)["ops"] for line in report.trace]
    assert gas_estimate(trace, GasTable()).to_dict() == report.gas
    assert [b["ops"] for b in report.blocks] == trace


def test_config_file_and_errors(tmp_path):
    path = tmp_path / "s.conf"
    path.write_text("protocol = rbe\nregistrations = 3\nledger.k = 2\nseed = 4\n")
    cfg = ScenarioConfig.from_file(path)
    assert cfg.registrations == 3 and cfg.ledger.k == 2 and cfg.ledger.seed == 4
    path.write_text("protocol = rbe\nusers = -1\n")
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_file(path)
    assert (err.value.line, err.value.field) == (2, "users")
    path.write_text("gas = nowhere.conf\n")
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_file(path)
    assert err.value.field == "gas"
    path.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_file(path)
    with pytest.raises(ConfigError):
        ScenarioConfig(users=1, revoke=2)


def test_digest_tracks_config():
    assert ScenarioConfig().digest() == ScenarioConfig().digest()
    assert ScenarioConfig(users=1).digest() != ScenarioConfig().digest()
    assert ScenarioConfig(ledger=LedgerConfig(k=2)).digest() != ScenarioConfig().digest()


# -- main


def test_main_run_writes_report_and_trace(tmp_path):
    conf = tmp_path / "s.conf"
    conf.write_text("protocol = rbe\nregistrations = 5\n")
    out = tmp_path / "r.json"
    assert main(["run", "--config", str(conf), "--out", str(out)]) == 0
    report = load_report(out)
    assert report.state["depths"] == [3, 1]
    trace = read_trace(out.with_suffix(".trace"))
    assert main(["gas", "--trace", str(out.with_suffix(".trace")), "--out", str(tmp_path / "g.json")]) == 0
    assert load_report(tmp_path / "g.json").gas == report.gas == gas_estimate(trace).to_dict()


def test_main_stdout(capsys):
    assert main(["run", "--seed", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 3


def test_main_config_error_exit_two(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("protocol = ibe\n")
    assert main(["run", "--config", str(conf)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.conf")]) == 2


def test_main_unwritable_out_exit_two(tmp_path):
    assert main(["run", "--out", str(tmp_path / "no" / "r.json")]) == 2


def test_main_invariant_failure_exit_one(tmp_path):
    gas = tmp_path / "g.conf"
    gas.write_text("block_gas_limit = 1250000\nmerge = 1000\nregister-base = 1000\n")
    trace = tmp_path / "t.trace"
    trace.write_text('{"block": 1, "ops": {"deploy": 2}}\n')
    assert main(["gas", "--config", str(gas), "--trace", str(trace), "--out", str(tmp_path / "o.json")]) == 1


def test_main_games_small(tmp_path):
    conf = tmp_path / "g.conf"
    conf.write_text("games = nfrm\ngame_protocols = cbe\ngame_trials = 3\n")
    out = tmp_path / "games.json"
    assert main(["games", "--config", str(conf), "--out", str(out)]) == 0
    report = load_report(out)
    assert report.games[0]["wins"] == 0 and report.verdicts == {"games.no-wins": True}
