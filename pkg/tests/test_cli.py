import json

import numpy as np
import pytest

from kpshap import (
    RunManifest,
    default_schema,
    load_image,
    read_matrix_csv,
    save_image,
    schema_digest,
    sha256_file,
    write_matrix_csv,
)
from kpshap.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- exit codes ----------------------------------------------------------------


def test_missing_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["interdep"])
    assert exc.value.code == 2


def test_unknown_subcommand_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_jobs_must_be_positive(capsys, fixtures_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(
            [
                "interdep",
                "--synthetic",
                str(fixtures_dir / "synthetic17.json"),
                "--out-delta",
                str(tmp_path / "d.csv"),
                "--out-pi",
                str(tmp_path / "pi.csv"),
                "--jobs",
                "0",
            ]
        )
    assert exc.value.code == 2


def test_data_error_exit_3(capsys, tmp_path):
    code, _, err = run(
        capsys,
        "cluster",
        "--delta",
        str(tmp_path / "missing.csv"),
        "--out",
        str(tmp_path / "g.json"),
    )
    assert code == 3
    assert err.startswith("error(")


def test_missing_coalition_exit_4(capsys, fixtures_dir, tmp_path):
    # the frozen drop-table oracle only holds the 18 interdependency
    # coalitions, so a group attribution run must fail as an oracle error
    code, _, err = run(
        capsys,
        "shapley",
        "--oracle-table",
        str(fixtures_dir / "table2_oracle.csv"),
        "--groups",
        str(fixtures_dir / "expected_groups.json"),
        "--instances",
        "0",
        "--out",
        str(tmp_path / "report.json"),
    )
    assert code == 4
    assert err.startswith("error(")


def test_version_banner(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("kpshap ")


# --- plain stdout commands -------------------------------------------------------


def test_cost_prints_both_budgets(capsys):
    code, out, _ = run(capsys, "cost", "--groups", "5,3,3,3,3", "--n", "17")
    assert code == 0
    assert out.splitlines() == [
        "gsv distinct_coalitions 96",
        "gsv oracle_calls 96",
        "exact distinct_coalitions 131072",
        "exact oracle_calls 131072",
    ]


def test_cost_rejects_inconsistent_sizes(capsys):
    code, _, err = run(capsys, "cost", "--groups", "5,3", "--n", "17")
    assert code == 3
    assert "sum" in err


def test_exact_glove_stdout(capsys, fixtures_dir):
    code, out, _ = run(capsys, "exact", "--game", str(fixtures_dir / "glove3.csv"))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "p0 0.6666666667"
    assert lines[1] == "p1 0.1666666667"
    assert lines[2] == "p2 0.1666666667"
    assert lines[3].startswith("efficiency_gap ")
    assert float(lines[3].split()[1]) < 1e-12


def test_masks_csv_on_stdout(capsys):
    code, out, _ = run(
        capsys,
        "masks",
        "--keypoint",
        "50,60",
        "--count",
        "3",
        "--width",
        "128",
        "--height",
        "96",
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("mask_index,center_x,center_y,")
    assert len(lines) == 4
    assert [row.split(",")[0] for row in lines[1:]] == ["0", "1", "2"]


# --- artifact-producing pipeline ---------------------------------------------------


def test_interdep_artifacts_and_manifest(capsys, fixtures_dir, tmp_path):
    out_delta = tmp_path / "delta.csv"
    out_pi = tmp_path / "pi.csv"
    code, out, _ = run(
        capsys,
        "interdep",
        "--synthetic",
        str(fixtures_dir / "synthetic17.json"),
        "--instances",
        "0",
        "--out-delta",
        str(out_delta),
        "--out-pi",
        str(out_pi),
    )
    assert code == 0
    assert "17 keypoints" in out
    labels, pi = read_matrix_csv(out_pi)
    assert len(labels) == 17
    assert np.allclose(pi.sum(), 17.0)

    manifest = RunManifest.from_json(str(out_delta) + ".manifest.json")
    assert manifest.command == "interdep"
    assert manifest.seed == 0
    assert manifest.oracle.startswith("synthetic:")
    assert manifest.schema_sha256 == schema_digest(*default_schema())
    assert manifest.outputs[str(out_delta)] == sha256_file(out_delta)
    assert manifest.outputs[str(out_pi)] == sha256_file(out_pi)
    assert manifest.inputs[str(fixtures_dir / "synthetic17.json")] == sha256_file(
        fixtures_dir / "synthetic17.json"
    )


def test_cluster_recovers_expected_grouping(capsys, fixtures_dir, tmp_path):
    out = tmp_path / "groups.json"
    code, stdout, _ = run(
        capsys,
        "cluster",
        "--delta",
        str(fixtures_dir / "table2.csv"),
        "--out",
        str(out),
    )
    assert code == 0
    got = json.loads(out.read_text())
    want = json.loads((fixtures_dir / "expected_groups.json").read_text())
    assert got["groups"] == want["groups"]
    assert stdout.count("group") >= 5


def test_shapley_report_and_budget_line(capsys, fixtures_dir, tmp_path):
    out = tmp_path / "report.json"
    code, stdout, _ = run(
        capsys,
        "shapley",
        "--synthetic",
        str(fixtures_dir / "synthetic17.json"),
        "--groups",
        str(fixtures_dir / "expected_groups.json"),
        "--instances",
        "0",
        "--out",
        str(out),
    )
    assert code == 0
    assert "oracle calls 96" in stdout
    assert "distinct coalitions 86" in stdout
    report = json.loads(out.read_text())
    sigma = np.asarray(report["attribution"])
    assert sigma.shape == (17, 17)
    assert np.allclose(sigma.sum(axis=1), 1.0, atol=1e-9)
    assert (sigma >= 0).all()
    assert report["group_tables"][0]["players"] == [f"group{k}" for k in range(1, 6)]
    assert len(report["intra_tables"]) == 17


def test_gkr_plan_apply_stats_roundtrip(capsys, fixtures_dir, tmp_path):
    schema, _ = default_schema()
    rng = np.random.default_rng(0)
    images = tmp_path / "images"
    images.mkdir()
    doc = {"images": [], "annotations": []}
    for i, name in enumerate(["a.ppm", "b.ppm"]):
        doc["images"].append(
            {"id": i, "width": 64, "height": 48, "file_name": name}
        )
        kps = []
        for j in range(schema.n):
            kps += [8.0 + 3.0 * j, 10.0 + (j % 4) * 9.0, 2]
        doc["annotations"].append({"id": 100 + i, "image_id": i, "keypoints": kps})
        save_image(
            images / name, rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
        )
    ann = tmp_path / "persons.json"
    ann.write_text(json.dumps(doc))

    plans = tmp_path / "plans.jsonl"
    code, stdout, _ = run(
        capsys,
        "gkr",
        "plan",
        "--annotations",
        str(ann),
        "--groups",
        str(fixtures_dir / "expected_groups.json"),
        "--keep-prob",
        "0.0",
        "--out",
        str(plans),
    )
    assert code == 0
    assert "planned 2 persons" in stdout
    assert (tmp_path / "plans.jsonl.manifest.json").exists()

    erased = tmp_path / "erased"
    code, stdout, _ = run(
        capsys,
        "gkr",
        "apply",
        "--plans",
        str(plans),
        "--images",
        str(images),
        "--out",
        str(erased),
    )
    assert code == 0
    manifest = RunManifest.from_json(erased / "gkr-apply.manifest.json")
    assert manifest.command == "gkr apply"
    for name in ["a.ppm", "b.ppm"]:
        before = load_image(images / name)
        after = load_image(erased / name)
        assert after.shape == before.shape
        assert not np.array_equal(after, before)  # keep-prob 0 erases something
        assert manifest.outputs[str(erased / name)] == sha256_file(erased / name)

    code, stdout, _ = run(capsys, "gkr", "stats", "--annotations", str(ann))
    assert code == 0
    stats = json.loads(stdout)
    assert stats["images"] == 2
    assert stats["persons"] == 2
    assert stats["buckets"]["0"] == 2


def test_corr_reprints_warnings_on_stderr(capsys, tmp_path):
    table = tmp_path / "conf.csv"
    table.write_text(
        "instance,a,flat,c\n"
        "0,0.1,0.5,0.9\n"
        "1,0.4,0.5,0.3\n"
        "2,0.8,0.5,0.2\n"
    )
    out = tmp_path / "corr.csv"
    code, _, err = run(capsys, "corr", "--table", str(table), "--out", str(out))
    assert code == 0
    assert "warning:" in err and "flat" in err
    labels, matrix = read_matrix_csv(out)
    assert labels == ("a", "flat", "c")
    assert matrix[0, 1] == 0.0


def test_render_is_byte_deterministic(capsys, tmp_path):
    src = tmp_path / "matrix.csv"
    labels = ("nose", "l-eye", "r-eye")
    write_matrix_csv(src, labels, np.random.default_rng(5).random((3, 3)))
    svg1 = tmp_path / "one.svg"
    svg2 = tmp_path / "two.svg"
    for dst in (svg1, svg2):
        code, _, _ = run(capsys, "render", "--matrix", str(src), "--out", str(dst))
        assert code == 0
    assert svg1.read_bytes() == svg2.read_bytes()
    assert svg1.read_text().startswith("<svg ")
