import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tilemul import cli
from tilemul.corpus import random_coo
from tilemul.errors import PrecisionError
from tilemul.mmio import write_matrix_market
from tilemul.tile_format import ElementCOO, from_element_coo, read_tiled_binary, write_tiled_binary

DATA = Path(__file__).parent / "data"


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def identity_mtx(tmp_path):
    p = tmp_path / "eye.mtx"
    write_matrix_market(ElementCOO.from_entries(40, 40, [(i, i, 1.0) for i in range(40)]), p)
    return p


def write_text(path, text):
    path.write_text(text)
    return path


class TestConvert:
    def test_one_entry(self, tmp_path, capsys):
        src = write_text(tmp_path / "a.mtx", "%%MatrixMarket matrix coordinate real general\n10 10 1\n3 4 2.5\n")
        assert run("convert", "--input", src, "--output", tmp_path / "a.tspz") == 0
        m = read_tiled_binary(tmp_path / "a.tspz")
        assert m.num_tiles == 1 and m.kind == "fp16"
        assert "tiles=1" in capsys.readouterr().out

    def test_pattern(self, tmp_path):
        assert run("convert", "--input", DATA / "pattern_small.mtx", "--output", tmp_path / "p.tspz") == 0
        m = read_tiled_binary(tmp_path / "p.tspz")
        assert np.all(m.elements == 1.0) and m.nnz == 9  # 3 diagonal + 3 mirrored pairs

    def test_overflow_exit_3(self, tmp_path):
        src = write_text(tmp_path / "big.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1e6\n")
        assert run("convert", "--input", src, "--output", tmp_path / "o.tspz", "--precision", "fp16") == 3
        assert run("convert", "--input", src, "--output", tmp_path / "o.tspz", "--precision", "fp32") == 0

    def test_parse_error_exit_2(self, tmp_path):
        src = write_text(tmp_path / "bad.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1\n")
        assert run("convert", "--input", src, "--output", tmp_path / "o.tspz") == 2

    def test_missing_file_exit_1(self, tmp_path):
        assert run("convert", "--input", tmp_path / "none.mtx", "--output", tmp_path / "o.tspz") == 1


class TestSquare:
    def test_identity(self, tmp_path, identity_mtx):
        out, rep = tmp_path / "c.tspz", tmp_path / "r.json"
        assert run("square", "--input", identity_mtx, "--output", out, "--report", rep) == 0
        C = read_tiled_binary(out)
        report = json.loads(rep.read_text())
        assert report["nnzC"] == report["nnzA"] == 40
        assert np.array_equal(C.to_dense(), np.eye(40))
        for key in ("matrixName", "dims", "nnzA", "nnzC", "timings", "memory", "smapeVsFp64",
                    "threadCount", "seed"):
            assert key in report
        assert set(report["timings"]) == {"taskList", "sort", "counting", "multiply", "compaction", "total"}
        assert report["smapeVsFp64"] == 0.0

    def test_pairing_byte_identical(self, tmp_path):
        src = DATA / "golden_fixture.mtx"
        run("square", "--input", src, "--output", tmp_path / "on.tspz", "--pairing", "on")
        run("square", "--input", src, "--output", tmp_path / "off.tspz", "--pairing", "off")
        assert (tmp_path / "on.tspz").read_bytes() == (tmp_path / "off.tspz").read_bytes()

    def test_golden_hash(self, tmp_path):
        golden = json.loads((DATA / "golden.json").read_text())
        out = tmp_path / "g.tspz"
        assert run("square", "--input", DATA / golden["fixture"], "--output", out) == 0
        assert hashlib.sha256(out.read_bytes()).hexdigest() == golden["sha256"]

    def test_tspz_input(self, tmp_path):
        m = from_element_coo(random_coo(50, 0.1, seed=3), kind="fp32")
        write_tiled_binary(m, tmp_path / "in.tspz")
        assert run("square", "--input", tmp_path / "in.tspz", "--output", tmp_path / "o.tspz") == 0

    def test_random_input_records_seed(self, tmp_path):
        rep = tmp_path / "r.json"
        assert run("square", "--input", "random:64:0.05:7", "--report", rep) == 0
        assert json.loads(rep.read_text())["seed"] == 7

    def test_non_square_exit_4(self, tmp_path):
        src = write_text(tmp_path / "r.mtx", "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1\n")
        assert run("square", "--input", src) == 4

    def test_precision_exit_5(self, identity_mtx, monkeypatch):
        def boom(*a, **k):
            raise PrecisionError("accumulator overflow")
        monkeypatch.setattr(cli, "spgemm_square", boom)
        assert run("square", "--input", identity_mtx) == 5

    def test_truncated_tspz_exit_2(self, tmp_path):
        m = from_element_coo(random_coo(30, 0.1, seed=1))
        write_tiled_binary(m, tmp_path / "t.tspz")
        data = (tmp_path / "t.tspz").read_bytes()
        (tmp_path / "t.tspz").write_bytes(data[:-3])
        assert run("square", "--input", tmp_path / "t.tspz") == 2


class TestCompare:
    def test_pattern_fp64_zero(self, capsys):
        assert run("compare", "--input", DATA / "pattern_small.mtx", "--mode", "fp64", "--json") == 0
        assert json.loads(capsys.readouterr().out)["smape"] == 0.0

    def test_mixed_zero(self, capsys):
        assert run("compare", "--input", DATA / "golden_fixture.mtx", "--mode", "mixed", "--json") == 0
        assert json.loads(capsys.readouterr().out)["smape"] == 0.0

    def test_real_fp64_small(self, tmp_path, capsys):
        src = tmp_path / "u.mtx"
        write_matrix_market(random_coo(120, 0.05, seed=5, values="unit"), src)
        assert run("compare", "--input", src, "--mode", "fp64", "--json") == 0
        value = json.loads(capsys.readouterr().out)["smape"]
        assert 0.0 < value <= 0.1


class TestStatsAdvise:
    def test_stats_json(self, identity_mtx, capsys):
        assert run("stats", "--input", identity_mtx, "--json") == 0
        s = json.loads(capsys.readouterr().out)
        assert s["nnzA"] == 40 and s["avgRow"] == 1.0 and s["nnzCbar"] == 40

    def test_stats_csv(self, identity_mtx, capsys):
        assert run("stats", "--input", identity_mtx) == 0
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert rows[0][0] == "matrix" and len(rows) == 2

    def test_advise(self, identity_mtx, capsys):
        assert run("advise", "--input", identity_mtx, "--json") == 0
        a = json.loads(capsys.readouterr().out)
        assert a["criteria"]["global"]["recommended"] is False
        assert a["criteria"]["CUSP"]["recommended"] is True
        assert run("advise", "--input", identity_mtx) == 0
        assert "spECK" in capsys.readouterr().out

    def test_parse_error(self, tmp_path):
        src = write_text(tmp_path / "bad.mtx", "garbage\n")
        assert run("stats", "--input", src) == 2
        assert run("advise", "--input", src) == 2


class TestBench:
    def test_identity_one_iter(self, tmp_path, identity_mtx):
        out = tmp_path / "b.csv"
        assert run("bench", "--input", identity_mtx, "--iters", 1, "--csv", out) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 1
        timing = ["taskList", "sort", "counting", "multiply", "compaction", "total"]
        assert all(c in rows[0] for c in timing)
        assert int(rows[0]["peakBytes"]) > 0

    def test_threads_same_hash(self, tmp_path):
        out = tmp_path / "b.csv"
        for t in (1, 8):
            assert run("bench", "--input", DATA / "golden_fixture.mtx", "--iters", 2, "--threads", t, "--csv", out) == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["threads"] for r in rows] == ["1", "8"]
        assert rows[0]["outputSha256"] == rows[1]["outputSha256"]
        for r in rows:
            assert float(r["total"]) >= float(r["multiply"])

    def test_bad_iters(self, identity_mtx):
        assert run("bench", "--input", identity_mtx, "--iters", 0) == 1


def test_console_script(tmp_path):
    out = tmp_path / "o.tspz"
    proc = subprocess.run(
        [sys.executable, "-m", "tilemul.cli", "square", "--input", str(DATA / "pattern_small.mtx"),
         "--output", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
