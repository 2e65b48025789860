import csv
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsnsec import crypto, merkle, parse_scenario, run
from wsnsec.cli import keychain_main, main, merkle_main, sim_main
from wsnsec.runner import COLUMNS, apply_axis, metrics_rows_csv, sweep
from wsnsec.scenario import ConfigError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SMALL = {"topology": {"nodes": [0, 1, 2, 3], "edges": [[0, 1], [1, 2], [2, 3]]}, "base_station": 3,
         "seed": 4, "duration": 400, "protocol": "undefended",
         "traffic": [{"source": 0, "count": 3, "payload_bytes": 8}]}

GOLDEN = [
    "seed,protocol,nodes,generated,delivered,delivery_ratio,adversary_dropped,channel_dropped,ttl_expired,"
    "no_route,unresolved,total_energy,transmit_energy,receive_energy,compute_energy,max_node_energy,"
    "data_transmissions,control_packets,promotions,reroutes,detections,true_positives,false_positives,"
    "detection_latency,probe_entries,probe_flags,flag_rate,frq_trusted,frq_flagged,adversary_drops,"
    "adversary_forgeries,blacklisted,mutesla_authenticated,snep_accepted,merkle_verified",
    "4,undefended,4,3,3,1.000000,0,0,0,0,0,3872000,2496000,1376000,0,1312000,9,6,0,0,0,0,0,,0,0,,0,0,0,0,,0,0,0",
]


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


# -- scenario validation ------------------------------------------------------------------

@pytest.mark.parametrize("change, where", [
    ({"protocol": "aodv"}, "protocol"),
    ({"traffic": [{"source": 9, "count": 1}]}, "traffic.0.source"),
    ({"adversaries": [{"node": 1, "kind": "Grayhole", "drop_p": 2}]}, "adversaries.0.drop_p"),
    ({"bogus": 1}, "bogus"),
    ({"base_station": 7}, "base_station"),
])
def test_validation_errors_name_the_field(change, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        parse_scenario(dict(SMALL, **change))


def test_malformed_json_is_config_error():
    with pytest.raises(ConfigError):
        parse_scenario("{not json")


def test_no_traffic_is_vacuous_success():
    m = run(parse_scenario(dict(SMALL, traffic=[]))).metrics
    assert m["generated"] == 0 and m["delivery_ratio"] == 1.0


def test_shipped_scenarios_parse():
    paths = sorted(SCENARIOS.glob("*.json"))
    assert len(paths) >= 4
    for p in paths:
        parse_scenario(p.read_bytes())


# -- metrics and csv ------------------------------------------------------------------------

def test_csv_golden_row():
    text = metrics_rows_csv([((), run(parse_scenario(SMALL)).metrics)])
    assert text.splitlines() == GOLDEN
    assert text.splitlines()[0].split(",") == COLUMNS


def test_metrics_cover_every_column():
    m = run(parse_scenario(SMALL)).metrics
    assert set(COLUMNS) <= set(m)


def test_energy_split_adds_up():
    m = run(parse_scenario(dict(SMALL, protocol="nms"))).metrics
    assert m["total_energy"] == m["transmit_energy"] + m["receive_energy"] + m["compute_energy"]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 0.5))
def test_conservation_under_loss(seed, q):
    doc = dict(SMALL, seed=seed, constants={"link_drop_q": q}, traffic=[{"source": 0, "count": 8}])
    m = run(parse_scenario(doc)).metrics
    parts = ("delivered", "adversary_dropped", "channel_dropped", "ttl_expired", "no_route", "unresolved")
    assert sum(m[k] for k in parts) == m["generated"]


def test_same_seed_same_everything():
    s = parse_scenario(json.loads((SCENARIOS / "fig5_bypass.json").read_text()))
    a, b = run(s, trace=True), run(s, trace=True)
    assert a.trace == b.trace
    assert metrics_rows_csv([((), a.metrics)]) == metrics_rows_csv([((), b.metrics)])


def test_seed_override_changes_seed_column():
    assert run(parse_scenario(SMALL), seed=99).metrics["seed"] == 99


# -- sweeps --------------------------------------------------------------------------------------

def test_single_value_sweep_equals_run():
    s = parse_scenario(SMALL)
    (lead, m), = sweep(s, "traffic.0.count", ["3"])
    assert lead == ("3",)
    assert m == run(s).metrics


def test_sweep_changes_the_named_field():
    s = parse_scenario(SMALL)
    assert apply_axis(s, "traffic.0.count", "5").traffic[0].count == 5
    rows = sweep(s, "traffic.0.count", ["1", "4"])
    assert [m["generated"] for _, m in rows] == [1, 4]
    assert [m["seed"] for _, m in rows] == [4, 5]


@pytest.mark.parametrize("axis, value", [
    ("topology.mode", "grid"),
    ("no.such.field", "1"),
    ("traffic.0.count", "many"),
    ("traffic.5.count", "1"),
])
def test_bad_axes_rejected(axis, value):
    with pytest.raises(ConfigError):
        apply_axis(parse_scenario(SMALL), axis, value)


def test_protocol_axis_compares_defences():
    doc = json.loads((SCENARIOS / "fig5_bypass.json").read_text())
    doc["adversaries"] = [{"node": 16, "kind": "Blackhole"}, {"node": 15, "kind": "Blackhole"}]
    rows = sweep(parse_scenario(doc), "protocol", ["nms", "multipath2"])
    ratio = {m["protocol"]: m["delivery_ratio"] for _, m in rows}
    assert ratio["nms"] == 1.0 and ratio["multipath2"] == 0.0


# -- command line ------------------------------------------------------------------------

def test_sim_run_writes_csv_and_trace(tmp_path, capsys):
    scen = _write(tmp_path, SMALL)
    out, trace = tmp_path / "m.csv", tmp_path / "t.txt"
    assert sim_main(["run", "--scenario", str(scen), "--seed", "4", "--trace", str(trace), "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8").splitlines() == GOLDEN
    lines = trace.read_text(encoding="utf-8").splitlines()
    assert lines and all(len(line.split(" ")) == 6 for line in lines)
    assert "delivered 3/3" in capsys.readouterr().out


def test_sim_sweep_writes_value_column(tmp_path):
    scen, out = _write(tmp_path, SMALL), tmp_path / "sweep.csv"
    code = sim_main(["sweep", "--scenario", str(scen), "--axis", "traffic.0.count", "--values", "1,2",
                     "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open(encoding="utf-8")))
    assert [r["value"] for r in rows] == ["1", "2"]
    assert list(rows[0]) == ["value"] + COLUMNS


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", "missing.json", "--out", "x.csv"],
    ["run", "--scenario"],
    ["sweep", "--scenario", "{scen}", "--axis", "topology.mode", "--values", "1", "--out", "{out}"],
    ["sweep", "--scenario", "{scen}", "--axis", "seed", "--values", ",", "--out", "{out}"],
    ["launch"],
])
def test_sim_config_errors_exit_2(tmp_path, argv):
    scen, out = _write(tmp_path, SMALL), tmp_path / "o.csv"
    argv = [a.format(scen=scen, out=out) for a in argv]
    try:
        code = sim_main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_invalid_scenario_file_exits_2(tmp_path, capsys):
    scen = _write(tmp_path, dict(SMALL, protocol="aodv"))
    assert sim_main(["run", "--scenario", str(scen), "--out", str(tmp_path / "o.csv")]) == 2
    assert "protocol" in capsys.readouterr().err


def test_keychain_gen_and_verify(capsys):
    seed = "00112233445566778899aabbccddeeff"
    assert keychain_main(["gen", "--seed", seed, "--n", "3"]) == 0
    lines = capsys.readouterr().out.split("\n")
    keys = [line.split()[1] for line in lines if line]
    assert len(keys) == 4 and keys[-1] == seed
    assert keychain_main(["verify", "--k0", keys[0], "--key", keys[2], "--steps", "2"]) == 0
    assert keychain_main(["verify", "--k0", keys[0], "--key", keys[2], "--steps", "1"]) == 1
    assert capsys.readouterr().out.split() == ["valid", "invalid"]


@pytest.mark.parametrize("argv", [
    ["gen", "--seed", "zz", "--n", "3"],
    ["gen", "--seed", "00", "--n", "0"],
    ["verify", "--k0", "00", "--key", "00", "--steps", "-1"],
    [],
])
def test_keychain_bad_input_exits_2(argv):
    try:
        code = keychain_main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def _directory(tmp_path, n=5):
    d = tmp_path / "dir.txt"
    d.write_text("".join(f"{i} {(bytes([i]) * 16).hex()}\n" for i in range(1, n + 1)))
    return d


def test_merkle_build_prove_verify(tmp_path, capsys):
    d = _directory(tmp_path)
    assert merkle_main(["build", "--dir", str(d)]) == 0
    out = capsys.readouterr().out.split()
    root = out[out.index("root") + 1]
    assert out[out.index("height") + 1] == "3"
    assert merkle_main(["prove", "--dir", str(d), "--id", "4"]) == 0
    path = tmp_path / "path.txt"
    path.write_text(capsys.readouterr().out)
    pk = (bytes([4]) * 16).hex()
    assert merkle_main(["verify", "--root", root, "--id", "4", "--pk", pk, "--path", str(path)]) == 0
    wrong = (bytes([5]) * 16).hex()
    assert merkle_main(["verify", "--root", root, "--id", "4", "--pk", wrong, "--path", str(path)]) == 1
    assert merkle_main(["verify", "--root", root, "--id", "5", "--pk", pk, "--path", str(path)]) == 1
    tree = merkle.build_tree(merkle.KeyDirectory.parse(d.read_text()))
    assert root == tree.root.hex()


def test_merkle_errors_exit_2(tmp_path):
    d = _directory(tmp_path)
    assert merkle_main(["prove", "--dir", str(d), "--id", "42"]) == 2
    assert merkle_main(["build", "--dir", str(tmp_path / "nope.txt")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("X abcd\n")
    assert merkle_main(["verify", "--root", "00", "--id", "1", "--pk", "00", "--path", str(bad)]) == 2


def test_umbrella_dispatches_groups(capsys):
    key = crypto.chain_step(b"\x00" * 16).hex()
    assert main(["keychain", "verify", "--k0", key, "--key", "00" * 16, "--steps", "1"]) == 0
    assert main(["nothing"]) == 2
