import json

from click.testing import CliRunner

from anima.cli import main
from anima.conversation import messages_to_jsonl
from anima.memory import MemoryStore

from conftest import make_message


def _transcript_file(tmp_path, count=25):
    msgs = [make_message(i + 1, turn=i) for i in range(count)]
    path = tmp_path / "transcript.jsonl"
    path.write_text(messages_to_jsonl(msgs), encoding="utf-8")
    return path


class TestEvalCommands:
    def test_sample_then_sets(self, tmp_path):
        runner = CliRunner()
        transcript = _transcript_file(tmp_path, 25)
        samples_path = tmp_path / "samples.jsonl"
        result = runner.invoke(main, ["eval", "sample", "--in", str(transcript),
                                      "--width", "20", "--stride", "1",
                                      "--out", str(samples_path)])
        assert result.exit_code == 0, result.output
        assert len(samples_path.read_text().splitlines()) == 6

        sets_path = tmp_path / "sets.json"
        result = runner.invoke(main, ["eval", "sets", "--in", str(samples_path),
                                      "--per-set", "5", "--n-sets", "30",
                                      "--seed", "7", "--out", str(sets_path)])
        assert result.exit_code == 0, result.output
        sets = json.loads(sets_path.read_text())
        assert len(sets) == 30
        assert all(len(s["sample_ids"]) == 5 for s in sets)
        assert all(len(set(s["sample_ids"])) == 5 for s in sets)

    def test_aggregate(self, tmp_path):
        runner = CliRunner()
        ratings = tmp_path / "ratings.csv"
        ratings.write_text(
            "evaluator_id,set_id,statement,score\n"
            "e1,set1,1,7\ne2,set1,1,6\ne3,set2,1,5\ne1,set1,2,3\n",
            encoding="utf-8")
        out = tmp_path / "plot.csv"
        result = runner.invoke(main, ["eval", "aggregate", "--ratings", str(ratings),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "statement 1: n=3 mean=6.000" in result.output
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "statement,score,count"
        assert len(lines) == 1 + 14  # two statements x 7 scores

    def test_sample_insufficient_width(self, tmp_path):
        runner = CliRunner()
        transcript = _transcript_file(tmp_path, 10)
        result = runner.invoke(main, ["eval", "sample", "--in", str(transcript)])
        assert result.exit_code == 0
        assert result.output.strip() == ""  # zero samples


class TestMemoryCommands:
    def _store_with_pieces(self, tmp_path):
        from anima.memory import MemoryPiece
        from conftest import EPOCH
        from datetime import timedelta

        store = MemoryStore(path=tmp_path / "data" / "memory" / "s1.jsonl")
        for i, statement in enumerate(["user loves jazz", "user loves jazz"]):
            store.store(MemoryPiece(
                id=f"p{i + 1:06d}", owner="user", category="preference",
                statement=statement, source_turn=0,
                created_at=EPOCH + timedelta(seconds=i)))
        return store

    def test_inspect(self, tmp_path):
        self._store_with_pieces(tmp_path)
        runner = CliRunner()
        result = runner.invoke(main, ["memory", "inspect", "s1",
                                      "--data-dir", str(tmp_path / "data")])
        assert result.exit_code == 0, result.output
        assert "user loves jazz" in result.output
        assert "p000001" in result.output

    def test_consolidate(self, tmp_path):
        self._store_with_pieces(tmp_path)
        runner = CliRunner()
        result = runner.invoke(main, ["memory", "consolidate", "s1",
                                      "--data-dir", str(tmp_path / "data")])
        assert result.exit_code == 0, result.output
        assert "merged=1" in result.output
        store = MemoryStore(path=tmp_path / "data" / "memory" / "s1.jsonl")
        assert len(store) == 1

    def test_inspect_empty(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["memory", "inspect", "ghost",
                                      "--data-dir", str(tmp_path)])
        assert result.exit_code == 0
        assert "no memory pieces" in result.output


class TestServe:
    def test_help(self):
        runner = CliRunner()
        result = runner.invoke(main, ["serve", "--help"])
        assert result.exit_code == 0
        for flag in ("--port", "--data-dir", "--persona-dir", "--provider", "--seed"):
            assert flag in result.output

    def test_missing_personas_fails(self, tmp_path):
        runner = CliRunner()
        empty = tmp_path / "personas"
        empty.mkdir()
        result = runner.invoke(main, ["serve", "--persona-dir", str(empty)])
        assert result.exit_code != 0
        assert "no persona documents" in result.output
