import json
import os
import subprocess
import sys

import pytest

from foggate import cli
from foggate import ledger as L


def run(*argv, env=None):
    return subprocess.run([sys.executable, "-m", "foggate", *argv], capture_output=True, text=True,
                          timeout=120, env=env)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(cli.CONFIG_ENV, raising=False)
    return tmp_path


def test_keygen(workdir, capsys):
    assert cli.main(["keygen", "--out", "dev.key"]) == 0
    record = json.loads((workdir / "dev.key").read_text())
    assert set(record) == {"serial_id", "public_key", "private_key"}
    assert (workdir / "dev.key.pub").exists()
    assert oct((workdir / "dev.key").stat().st_mode)[-3:] == "600"
    assert cli.main(["keygen", "--out", "dev.key"]) == 2
    assert cli.main(["keygen", "--out", "dev.key", "--force"]) == 0
    assert cli.main(["keygen", "--out", "small.key", "--bits", "1024"]) == 2
    assert "1024" in capsys.readouterr().err
    assert cli.main(["keygen", "--out", str(workdir / "missing" / "x.key")]) == 2


def test_ledger_flow(workdir, capsys):
    cli.main(["keygen", "--out", "a.key", "--serial", "sensor-a"])
    cli.main(["keygen", "--out", "b.key", "--serial", "sensor-b"])
    assert cli.main(["ledger", "init", "--ledger", "l.fgl"]) == 0
    assert cli.main(["ledger", "init", "--ledger", "l.fgl"]) == 2
    capsys.readouterr()
    assert cli.main(["ledger", "verify", "--ledger", "l.fgl"]) == 0
    assert "valid" in capsys.readouterr().out
    assert cli.main(["ledger", "add", "--ledger", "l.fgl", "--key", "a.key.pub"]) == 0
    assert cli.main(["ledger", "block", "--ledger", "l.fgl", "--key", "b.key.pub", "--key", "a.key.pub",
                     "--status", "blocked"]) == 0
    chain = L.load(workdir / "l.fgl")
    assert len(chain) == 3 and len(chain.tip.entries) == 2
    assert chain.lookup("sensor-a").status is L.Status.BLOCKED
    capsys.readouterr()
    assert cli.main(["ledger", "show", "--ledger", "l.fgl"]) == 0
    out = capsys.readouterr().out
    assert out.count("blocked") == 2


def test_ledger_add_shows_allowed(workdir, capsys):
    cli.main(["keygen", "--out", "a.key"])
    cli.main(["ledger", "init", "--ledger", "l.fgl"])
    cli.main(["ledger", "add", "--ledger", "l.fgl", "--key", "a.key.pub"])
    capsys.readouterr()
    cli.main(["ledger", "show", "--ledger", "l.fgl"])
    assert "allowed" in capsys.readouterr().out


def test_ledger_verify_corrupt(workdir, capsys):
    cli.main(["keygen", "--out", "a.key"])
    cli.main(["ledger", "init", "--ledger", "l.fgl"])
    cli.main(["ledger", "add", "--ledger", "l.fgl", "--key", "a.key.pub"])
    data = bytearray((workdir / "l.fgl").read_bytes())
    # a byte inside block 1's body, past its length prefix, index and prev_hash
    genesis_len = int.from_bytes(data[4:8], "big")
    data[4 + 4 + genesis_len + 4 + 8 + 32 + 3] ^= 0x01
    (workdir / "l.fgl").write_bytes(bytes(data))
    capsys.readouterr()
    assert cli.main(["ledger", "verify", "--ledger", "l.fgl"]) == 1
    assert "first_bad_index=1" in capsys.readouterr().out
    (workdir / "l.fgl").write_bytes(b"FGL1\x00")
    assert cli.main(["ledger", "verify", "--ledger", "l.fgl"]) == 1


def test_missing_required_flag(workdir, capsys):
    assert cli.main(["ledger", "show"]) == 2
    assert "--ledger" in capsys.readouterr().err
    assert cli.main(["connect", "--key", "x"]) == 2


def test_usage_error_exit_code(workdir):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 2


def test_config_file_supplies_fields(workdir, monkeypatch, capsys):
    cli.main(["keygen", "--out", "a.key"])
    cfg = workdir / "cfg.json"
    cfg.write_text(json.dumps({"ledger": "from-config.fgl"}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    assert cli.main(["ledger", "init"]) == 0
    assert (workdir / "from-config.fgl").exists()
    assert cli.main(["ledger", "init", "--ledger", "flag.fgl"]) == 0
    assert (workdir / "flag.fgl").exists()
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["ledger", "init"]) == 2


def test_simulate_single(workdir, capsys):
    assert cli.main(["simulate", "privilege", "--seed", "42", "--out", "r.jsonl"]) == 0
    out = capsys.readouterr().out
    assert "server E privilege" in out and "vulnerable" in out
    records = [json.loads(l) for l in (workdir / "r.jsonl").read_text().splitlines()]
    assert [(r["aspect"], r["verdict"]) for r in records] == [("client", "defended"), ("server", "vulnerable")]


def test_simulate_unexpected_outcome_exit_1(workdir, monkeypatch):
    cfg = workdir / "cfg.json"
    cfg.write_text(json.dumps({"thresholds": {"client_capacity": 64, "client_inbox_limit": 4096}}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    assert cli.main(["simulate", "--scenario", "dos-client"]) == 1


def test_simulate_unknown(workdir, capsys):
    assert cli.main(["simulate", "warp"]) == 2
    err = capsys.readouterr().err
    for name in ("spoofing", "dos-client", "privilege"):
        assert name in err


def test_serve_refuses_invalid_ledger(workdir):
    cli.main(["keygen", "--out", "s.key"])
    cli.main(["ledger", "init", "--ledger", "l.fgl"])
    data = bytearray((workdir / "l.fgl").read_bytes())
    data[-1] ^= 1
    (workdir / "l.fgl").write_bytes(bytes(data))
    assert cli.main(["serve", "--key", "s.key", "--ledger", "l.fgl", "--listen", "127.0.0.1:0"]) == 2


def test_serve_and_connect_processes(workdir):
    for name in ("s", "dev", "stranger"):
        assert cli.main(["keygen", "--out", f"{name}.key"]) == 0
    cli.main(["ledger", "init", "--ledger", "l.fgl"])
    cli.main(["ledger", "add", "--ledger", "l.fgl", "--key", "dev.key.pub"])
    env = {k: v for k, v in os.environ.items() if k != cli.CONFIG_ENV}
    server = subprocess.Popen(
        [sys.executable, "-m", "foggate", "serve", "--key", "s.key", "--ledger", "l.fgl",
         "--listen", "127.0.0.1:0", "--max-connections", "2", "--audit-out", "audit.jsonl"],
        stdout=subprocess.PIPE, text=True, env=env)
    try:
        line = server.stdout.readline()
        assert line.startswith("listening on 127.0.0.1:")
        address = line.split()[2]
        ok = run("connect", "--key", "dev.key", "--server-key", "s.key.pub", "--connect", address,
                 "--payload", "cafe", env=env)
        assert ok.returncode == 0, ok.stderr
        assert ok.stdout.splitlines() == ["granted", "data accepted (2 bytes)"]
        bad = run("connect", "--key", "stranger.key", "--server-key", "s.key.pub", "--connect", address,
                  "--timeout", "1.5", env=env)
        assert bad.returncode == 1
        assert bad.stdout.strip() == "denied (no response)"
        server.wait(timeout=30)
    finally:
        if server.poll() is None:
            server.kill()
        server.stdout.close()
    events = [json.loads(l) for l in (workdir / "audit.jsonl").read_text().splitlines()]
    assert [(e["verdict"], e["reason"]) for e in events] == [
        ("granted", "none"), ("granted", "none"), ("denied", "not-registered")]
    chain = L.load(workdir / "l.fgl")
    assert len(chain.transactions()) == 3


def test_connect_refused(workdir):
    cli.main(["keygen", "--out", "s.key"])
    cli.main(["keygen", "--out", "d.key"])
    assert cli.main(["connect", "--key", "d.key", "--server-key", "s.key.pub",
                     "--connect", "127.0.0.1:1", "--timeout", "1"]) == 1
