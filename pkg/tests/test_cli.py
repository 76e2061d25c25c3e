import json
import subprocess
import sys

import numpy as np
import pytest

from fairncut.bench import parse_csv_reports, parse_report
from fairncut.cli import main
from fairncut.graph import read_edge_list, read_groups


@pytest.fixture(scope="module")
def sbm_files(tmp_path_factory):
    prefix = tmp_path_factory.mktemp("sbm") / "g"
    code = main(["sbm", "--sizes", "30,20,20", "--p-in", "0.4", "--p-out", "0.05",
                 "--p-same", "0.6", "--seed", "2", "--out-prefix", str(prefix)])
    assert code == 0
    return prefix


def partition_args(prefix, *extra):
    return ["partition", "--edges", f"{prefix}.edges", "--groups", f"{prefix}.groups",
            "--k", "3", *extra]


def test_sbm_writes_files(sbm_files, capsys):
    g = read_edge_list(f"{sbm_files}.edges")
    ga = read_groups(f"{sbm_files}.groups", g.n)
    truth = np.loadtxt(f"{sbm_files}.truth", dtype=int)
    assert g.n == 70 and ga.n == 70
    assert np.bincount(truth[:, 1]).tolist() == [30, 20, 20]


def test_partition_json(sbm_files, tmp_path, capsys):
    out = tmp_path / "r.json"
    labels = tmp_path / "labels.txt"
    code = main(partition_args(sbm_files, "--sigma", "1/2", "--report", str(out),
                               "--labels-out", str(labels)))
    r = parse_report(out.read_bytes())
    assert code == r.exit_code and code in (0, 2)
    assert r.fair and r.balance >= 0.5
    assert np.loadtxt(labels, dtype=int)[:, 1].tolist() == r.labels


def test_partition_csv_to_stdout(sbm_files, capsys):
    code = main(partition_args(sbm_files, "--sigma", "0.8", "--format", "csv", "--mode", "kr"))
    rows = parse_csv_reports(capsys.readouterr().out)
    assert code in (0, 2)
    assert rows[0]["mode"] == "kr" and rows[0]["sigma"] == "4/5"


def test_partition_is_deterministic(sbm_files, capsys):
    args = partition_args(sbm_files, "--sigma", "1/5", "--seed", "3")
    main(args)
    a = json.loads(capsys.readouterr().out)
    main(args)
    b = json.loads(capsys.readouterr().out)
    assert (a["ncut"], a["balance"], a["labels"]) == (b["ncut"], b["balance"], b["labels"])


def test_infeasible_rounding_exit_code(tmp_path, capsys):
    (tmp_path / "e").write_text("0 1\n1 2\n2 3\n3 0\n")
    (tmp_path / "g").write_text("0 0\n1 0\n2 0\n3 1\n")
    code = main(["partition", "--edges", str(tmp_path / "e"), "--groups", str(tmp_path / "g"),
                 "--k", "2", "--sigma", "0"])
    assert code == 3


@pytest.mark.parametrize("extra", [["--sigma", "2"], ["--sigma", "x"], ["--k", "0"]])
def test_bad_arguments_exit_code(sbm_files, extra, capsys):
    args = ["partition", "--edges", f"{sbm_files}.edges", "--groups", f"{sbm_files}.groups"]
    args += extra + (["--k", "3"] if "--k" not in extra else ["--sigma", "1/2"])
    with pytest.raises(SystemExit) as info:
        main(args)
    assert info.value.code == 4


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["partition", "--edges", str(tmp_path / "none"), "--groups", str(tmp_path / "g"),
                 "--k", "2", "--sigma", "1/2"]) == 4


def test_k_larger_than_n(tmp_path, capsys):
    (tmp_path / "e").write_text("0 1\n1 2\n")
    (tmp_path / "g").write_text("0 0\n1 1\n2 0\n")
    assert main(["partition", "--edges", str(tmp_path / "e"), "--groups", str(tmp_path / "g"),
                 "--k", "5", "--sigma", "1/2"]) == 4


def test_disconnected_sbm_exit_code(tmp_path, capsys):
    assert main(["sbm", "--sizes", "5,5", "--p-in", "1", "--p-out", "0", "--p-same", "0.5",
                 "--out-prefix", str(tmp_path / "x")]) == 4


def test_prep(tmp_path, capsys):
    (tmp_path / "raw").write_text("# comment\n7 8\n8 9 2.5\n9 7\n8 8\n1 2\n")
    (tmp_path / "groups").write_text("".join(f"{i} {i % 2}\n" for i in range(10)))
    code = main(["prep", "--edges", str(tmp_path / "raw"), "--groups", str(tmp_path / "groups"),
                 "--out-prefix", str(tmp_path / "clean")])
    assert code == 0
    g = read_edge_list(tmp_path / "clean.edges")
    assert g.n == 3 and g.num_edges == 3
    assert np.loadtxt(tmp_path / "clean.ids", dtype=int).tolist() == [7, 8, 9]
    assert json.loads(capsys.readouterr().out) == {"n": 3, "edges": 3}


def test_module_entry_point(sbm_files):
    proc = subprocess.run([sys.executable, "-m", "fairncut", "partition", "--edges",
                           f"{sbm_files}.edges", "--groups", f"{sbm_files}.groups", "--k", "3",
                           "--sigma", "1/2", "--format", "csv"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode in (0, 2), proc.stderr
    assert proc.stdout.startswith("dataset,n,m,k,sigma")
