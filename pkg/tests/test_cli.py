"""CLI adapters: output shape, flag semantics, exit codes."""

import json

import pytest

from linkstate import encode
from linkstate.cli import main
from linkstate.history import HistoryLog

from graphops import new_root

STATE = {
    "title": "overview",
    "plots": [
        {"objectName": "p1", "className": "ex.Plot", "sessionState": {"title": "a"}},
        {"objectName": "p2", "className": "", "sessionState": None},
    ],
}


@pytest.fixture
def state_file(tmp_path):
    p = tmp_path / "one.state.json"
    p.write_text(encode(STATE))
    return str(p)


class TestInspect:
    def test_tree_rendering(self, state_file, capsys):
        assert main(["inspect", state_file]) == 0
        out = capsys.readouterr().out
        assert 'title: "overview"' in out
        assert "- p1:ex.Plot" in out
        assert "- p2 (reference)" in out

    def test_canonical_roundtrip_byte_identical(self, state_file, capsys, tmp_path):
        assert main(["inspect", state_file, "--canonical"]) == 0
        first = capsys.readouterr().out
        again = tmp_path / "again.json"
        again.write_text(first.strip())
        assert main(["inspect", str(again), "--canonical"]) == 0
        assert capsys.readouterr().out == first

    def test_malformed_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert main(["inspect", str(bad)]) == 1
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "error:" in captured.err

    def test_missing_file_exits_one(self, capsys):
        assert main(["inspect", "/definitely/not/here.json"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_usage_error_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["inspect"])
        assert exc.value.code == 2


class TestDiffApply:
    def test_diff_of_identical_files_is_empty(self, state_file, capsys):
        assert main(["diff", state_file, state_file]) == 0
        assert capsys.readouterr().out.strip() == "{}"

    def test_apply_diff_reproduces_target(self, tmp_path, capsys):
        a = {"x": 1, "kids": [{"objectName": "n", "className": "ex.Counter", "sessionState": {"count": 1}}]}
        b = {"x": 2, "kids": [{"objectName": "m", "className": "ex.Label", "sessionState": {"text": "t"}}]}
        fa, fb = tmp_path / "a.json", tmp_path / "b.json"
        fa.write_text(encode(a))
        fb.write_text(encode(b))
        assert main(["diff", str(fa), str(fb)]) == 0
        d = capsys.readouterr().out.strip()
        fd = tmp_path / "d.json"
        fd.write_text(d)
        assert main(["apply", str(fa), str(fd)]) == 0
        assert capsys.readouterr().out.strip() == encode(b)

    def test_keep_missing_retains_unmentioned_entries(self, tmp_path, capsys):
        base = [
            {"objectName": "a", "className": "ex.Counter", "sessionState": {"count": 1}},
            {"objectName": "b", "className": "ex.Counter", "sessionState": {"count": 2}},
        ]
        d = [{"objectName": "a", "className": "ex.Counter", "sessionState": {"count": 9}}]
        fb, fd = tmp_path / "base.json", tmp_path / "d.json"
        fb.write_text(encode(base))
        fd.write_text(json.dumps(d))
        assert main(["apply", str(fb), str(fd), "--keep-missing"]) == 0
        kept = json.loads(capsys.readouterr().out)
        assert [e["objectName"] for e in kept] == ["a", "b"]
        assert main(["apply", str(fb), str(fd)]) == 0
        dropped = json.loads(capsys.readouterr().out)
        assert [e["objectName"] for e in dropped] == ["a"]


def _history_file(tmp_path):
    root = new_root()
    log = HistoryLog(clock_ms=lambda: 0)
    log.attach(root)
    root.request_object("c", "ex.Counter")
    root.scheduler.flush_frame()
    root.get_object("c").count.set_state(5)
    root.scheduler.flush_frame()
    p = tmp_path / "session.history.json"
    p.write_text(log.export_json())
    return p, log


class TestReplay:
    def test_to_zero_is_baseline(self, tmp_path, capsys):
        p, log = _history_file(tmp_path)
        assert main(["replay", str(p), "--to", "0"]) == 0
        assert capsys.readouterr().out.strip() == encode(log.baseline)

    def test_default_is_cursor_state(self, tmp_path, capsys):
        p, log = _history_file(tmp_path)
        assert main(["replay", str(p)]) == 0
        assert capsys.readouterr().out.strip() == encode(log.state_at(2))

    def test_verify_reports_per_step(self, tmp_path, capsys):
        p, _ = _history_file(tmp_path)
        assert main(["replay", str(p), "--verify"]) == 0
        err = capsys.readouterr().err
        assert "step 0: ok" in err and "step 1: ok" in err

    def test_verify_catches_corrupted_inverse(self, tmp_path, capsys):
        p, _ = _history_file(tmp_path)
        data = json.loads(p.read_text())
        data["steps"][1]["backward"] = {"c": {"count": 999}}
        data["steps"][1]["backward"] = [
            {"objectName": "c", "className": "ex.Counter", "sessionState": {"count": 999}}
        ]
        p.write_text(json.dumps(data))
        assert main(["replay", str(p), "--verify"]) == 1
        err = capsys.readouterr().err
        assert "step 1: FAIL" in err

    def test_version_mismatch_exits_one(self, tmp_path, capsys):
        p = tmp_path / "log.json"
        p.write_text('{"version":99,"baseline":null,"cursor":0,"steps":[]}')
        assert main(["replay", str(p)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_out_of_range_index(self, tmp_path, capsys):
        p, _ = _history_file(tmp_path)
        assert main(["replay", str(p), "--to", "99"]) == 1


class TestJoin:
    def test_two_files_union(self, tmp_path, capsys):
        f1 = tmp_path / "pop.csv"
        f1.write_text("town,pop\nLowell,111\nBoston,222\n")
        f2 = tmp_path / "area.csv"
        f2.write_text("name,area\nBoston,90\nQuincy,27\n")
        code = main(
            ["join", "--key-type", "Town", "--csv", f"{f1}:town:pop", "--csv", f"{f2}:name:area"]
        )
        assert code == 0
        assert capsys.readouterr().out.splitlines() == [
            "key,pop,area",
            "Boston,222,90",
            "Lowell,111,",
            "Quincy,,27",
        ]

    def test_single_file_passthrough_sorted(self, tmp_path, capsys):
        f1 = tmp_path / "pop.csv"
        f1.write_text("town,pop\nQuincy,3\nBoston,2\n")
        assert main(["join", "--key-type", "Town", "--csv", f"{f1}:town:pop"]) == 0
        assert capsys.readouterr().out.splitlines() == ["key,pop", "Boston,2", "Quincy,3"]

    def test_mismatched_key_type_flag_exits_one(self, tmp_path, capsys):
        f1 = tmp_path / "pop.csv"
        f1.write_text("town,pop\nLowell,1\n")
        f2 = tmp_path / "score.csv"
        f2.write_text("school,score\nLowell,88\n")
        code = main(
            [
                "join",
                "--key-type",
                "Town",
                "--csv",
                f"{f1}:town:pop",
                "--csv",
                f"{f2}:school:score:School",
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_csv_spec_exits_two(self, tmp_path, capsys):
        assert main(["join", "--key-type", "T", "--csv", "only-a-path"]) == 2

    def test_missing_column_exits_one(self, tmp_path, capsys):
        f1 = tmp_path / "pop.csv"
        f1.write_text("town,pop\nLowell,1\n")
        assert main(["join", "--key-type", "T", "--csv", f"{f1}:town:nope"]) == 1


class TestSimulate:
    def scenario_path(self):
        import importlib.resources

        return str(importlib.resources.files("linkstate") / "scenarios" / "two-client-disjoint.json")

    def test_bundled_scenario_converges(self, capsys):
        assert main(["simulate", self.scenario_path(), "--seed", "1"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["converged"] is True
        assert report["seed"] == 1
        assert report["relay"]["stateHash"].startswith("sha256:")

    def test_deterministic_report_bytes(self, capsys):
        assert main(["simulate", self.scenario_path(), "--seed", "4"]) == 0
        first = capsys.readouterr().out
        assert main(["simulate", self.scenario_path(), "--seed", "4"]) == 0
        assert capsys.readouterr().out == first

    def test_trace_goes_to_stderr(self, capsys):
        assert main(["simulate", self.scenario_path(), "--seed", "2", "--trace"]) == 0
        captured = capsys.readouterr()
        assert "relay->" in captured.err
        assert "relay->" not in captured.out

    def test_invalid_script_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"session":"s","clients":[]}')
        assert main(["simulate", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_bundled_name_resolves_without_path(self, capsys):
        assert main(["simulate", "three-client-conflict", "--seed", "3"]) == 0
        assert json.loads(capsys.readouterr().out)["converged"] is True

    def test_unknown_scenario_name_exits_one(self, capsys):
        assert main(["simulate", "no-such-scenario"]) == 1
        assert "error:" in capsys.readouterr().err
