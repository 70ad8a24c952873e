"""Subprocess tests of the patchbmi command-line tool.

Needs PATCHBMI_CLI pointing at the built binary (ctest sets it); the stub
bundle fixture also needs the patchbmi module importable.
"""

import json

import pytest

import patchbmi

from conftest import constant_head_blob, landmarks_text, write_sample

STUB_VALUES = [20.0, 22.0, 24.0, 26.0, 28.0, 30.0]  # ensemble mean 25.0


@pytest.fixture(scope="session")
def stub_bundle(tmp_path_factory):
    """Bundle whose heads ignore the input and predict STUB_VALUES."""
    out = tmp_path_factory.mktemp("stub") / "bundle"
    patchbmi.init_ensemble(0).save(str(out))
    for region, value in zip(patchbmi.REGION_NAMES, STUB_VALUES):
        (out / f"{region}.pbmi").write_bytes(constant_head_blob(value))
    return out


@pytest.fixture(scope="session")
def sample(tmp_path_factory):
    directory = tmp_path_factory.mktemp("sample")
    image, landmarks = write_sample(directory, "face", 31)
    return image, landmarks


def labeled_manifest(directory, n=12):
    """n samples, bmi = 20 + i, split cycle of 4 train / 1 val / 1 test."""
    rows = ["image_path,landmarks_path,bmi,split"]
    for i in range(n):
        write_sample(directory, f"s{i}", i)
        split = "val" if i % 6 == 4 else "test" if i % 6 == 5 else "train"
        rows.append(f"s{i}.pgm,s{i}.txt,{20 + i},{split}")
    manifest = directory / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


def test_help(run_cli):
    proc = run_cli("--help")
    for sub in ("train", "predict", "evaluate", "cross-evaluate", "bench", "extract-patches"):
        assert sub in proc.stdout


def test_unknown_flag_fails(run_cli):
    run_cli("predict", "--bogus", expect_code=1)


def test_train_writes_bundle_and_is_deterministic(run_cli, tmp_path):
    manifest = labeled_manifest(tmp_path / "data")
    args = ("train", "--manifest", manifest, "--seed", 5, "--max-epochs", 2,
            "--batch", 4, "--threads", 1, "--no-augment")
    out1, out2 = tmp_path / "b1", tmp_path / "b2"
    proc = run_cli(*args, "--out", out1)
    assert "bundle written to" in proc.stdout
    for region in patchbmi.REGION_NAMES:
        assert region in proc.stdout
        assert (out1 / f"{region}.pbmi").exists()
        assert (out1 / f"history_{region}.csv").exists()
    meta = json.loads((out1 / "meta.json").read_text())
    assert meta["parameter_count"] == 3288192
    assert meta["provenance"]["seed"] == 5

    run_cli(*args, "--out", out2)
    for name in ["meta.json"] + [f"{r}.pbmi" for r in patchbmi.REGION_NAMES]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_predict_text_and_json(run_cli, stub_bundle, sample):
    image, landmarks = sample
    proc = run_cli("predict", "--model", stub_bundle, "--image", image,
                   "--landmarks", landmarks)
    assert proc.stdout == "bmi=25.000\n"

    proc = run_cli("predict", "--model", stub_bundle, "--image", image,
                   "--landmarks", landmarks, "--json")
    data = json.loads(proc.stdout)
    assert data["bmi"] == pytest.approx(25.0, abs=1e-6)
    for region, value in zip(patchbmi.REGION_NAMES, STUB_VALUES):
        assert data["per_region"][region] == pytest.approx(value, abs=1e-6)


def test_predict_rejects_bad_inputs(run_cli, stub_bundle, sample, tmp_path):
    image, landmarks = sample
    empty = tmp_path / "empty"
    empty.mkdir()
    run_cli("predict", "--model", empty, "--image", image, "--landmarks", landmarks,
            expect_code=1)
    short = tmp_path / "short.txt"
    short.write_text("".join(landmarks_text(96, 96).splitlines(True)[:67]))
    run_cli("predict", "--model", stub_bundle, "--image", image, "--landmarks", short,
            expect_code=1)


def test_evaluate_split_table_and_csv(run_cli, stub_bundle, tmp_path):
    manifest = labeled_manifest(tmp_path / "data")
    csv_path = tmp_path / "report.csv"
    proc = run_cli("evaluate", "--model", stub_bundle, "--manifest", manifest,
                   "--label", "demo", "--csv", csv_path, "--threads", 1)
    for token in ("Dataset", "Training", "Validation", "Testing", "demo",
                  "3,288,192 params", "3.0000"):
        assert token in proc.stdout, token
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ("dataset,split,n,mae,mae_forehead,mae_left_eye,mae_right_eye,"
                        "mae_left_cheek,mae_right_cheek,mae_chin,failures")
    # bmi = 20 + i against constant 25: every split averages to MAE 3
    assert lines[1].startswith("demo,train,8,3.0000,")
    assert lines[2].startswith("demo,val,2,3.0000,")
    assert lines[3].startswith("demo,test,2,3.0000,")


def test_evaluate_json_and_split_filter(run_cli, stub_bundle, tmp_path):
    manifest = labeled_manifest(tmp_path / "data")
    proc = run_cli("evaluate", "--model", stub_bundle, "--manifest", manifest,
                   "--split", "val", "--json")
    reports = json.loads(proc.stdout)
    assert len(reports) == 1
    assert reports[0]["split"] == "val"
    assert reports[0]["n"] == 2
    assert reports[0]["mae"] == pytest.approx(3.0, abs=1e-6)
    assert reports[0]["failures"] == 0

    no_split = tmp_path / "flat.csv"
    rows = [line.rsplit(",", 1)[0] for line in manifest.read_text().splitlines()]
    no_split.write_text("\n".join(rows) + "\n")
    run_cli("evaluate", "--model", stub_bundle, "--manifest", no_split,
            "--split", "test", expect_code=1)


def test_evaluate_majority_failures_exit_2(run_cli, stub_bundle, tmp_path):
    directory = tmp_path / "data"
    write_sample(directory, "ok", 0)
    manifest = directory / "manifest.csv"
    manifest.write_text(
        "image_path,landmarks_path,bmi\n"
        "ok.pgm,ok.txt,25\n"
        "gone1.pgm,ok.txt,25\n"
        "gone2.pgm,ok.txt,25\n"
    )
    proc = run_cli("evaluate", "--model", stub_bundle, "--manifest", manifest,
                   expect_code=2)
    assert "failed on 2 of 3 samples" in proc.stderr


def test_cross_evaluate(run_cli, stub_bundle, tmp_path):
    alpha_dir, beta_dir = tmp_path / "alpha", tmp_path / "beta"
    write_sample(alpha_dir, "a0", 0)
    write_sample(alpha_dir, "a1", 1)
    write_sample(alpha_dir, "a2", 2)
    alpha = alpha_dir / "alpha.csv"
    alpha.write_text("image_path,landmarks_path,bmi\n"
                     "a0.pgm,a0.txt,22\na1.pgm,a1.txt,25\na2.pgm,a2.txt,28\n")
    write_sample(beta_dir, "b0", 3)
    write_sample(beta_dir, "b1", 4)
    beta = beta_dir / "beta.csv"
    beta.write_text("image_path,landmarks_path,bmi\nb0.pgm,b0.txt,24\nb1.pgm,b1.txt,26\n")

    proc = run_cli("cross-evaluate", "--model", stub_bundle,
                   "--manifest", alpha, "--manifest", beta)
    for token in ("Model", "PatchBMI-Net", "alpha", "beta", "2.0000", "1.0000"):
        assert token in proc.stdout, token

    proc = run_cli("cross-evaluate", "--model", stub_bundle,
                   "--manifest", alpha, "--manifest", beta, "--json")
    reports = json.loads(proc.stdout)
    assert [r["dataset"] for r in reports] == ["alpha", "beta"]
    assert reports[0]["mae"] == pytest.approx(2.0, abs=1e-6)
    assert reports[1]["mae"] == pytest.approx(1.0, abs=1e-6)


def test_bench(run_cli, stub_bundle, sample):
    image, landmarks = sample
    proc = run_cli("bench", "--model", stub_bundle, "--image", image,
                   "--landmarks", landmarks, "--iterations", 3, "--warmup", 1,
                   "--mode", "serial")
    assert "== serial heads ==" in proc.stdout
    assert "== parallel heads ==" not in proc.stdout
    assert "latency mean" in proc.stdout
    assert "informational" in proc.stdout

    proc = run_cli("bench", "--model", stub_bundle, "--image", image,
                   "--landmarks", landmarks, "--iterations", 3, "--warmup", 1,
                   "--mode", "both", "--json")
    data = json.loads(proc.stdout)
    for variant in ("serial", "parallel"):
        report = data[variant]
        assert report["iterations"] == 3
        assert report["param_count"] == 3288192
        assert report["latency_ms"]["mean"] > 0
        assert report["heads_parallel"] == (variant == "parallel")

    run_cli("bench", "--model", stub_bundle, "--image", image,
            "--landmarks", landmarks, "--iterations", 0, expect_code=1)


def test_extract_patches(run_cli, sample, tmp_path):
    image, landmarks = sample
    out = tmp_path / "patches"
    proc = run_cli("extract-patches", "--image", image, "--landmarks", landmarks,
                   "--out", out)
    for region in patchbmi.REGION_NAMES:
        assert (out / f"{region}.pgm").exists()
        assert f"{region}" in proc.stdout
    assert "box=[" in proc.stdout

    proc = run_cli("extract-patches", "--image", image, "--landmarks", landmarks,
                   "--out", tmp_path / "patches2", "--json")
    data = json.loads(proc.stdout)
    assert sorted(data) == sorted(patchbmi.REGION_NAMES)
    for region in patchbmi.REGION_NAMES:
        x0, y0, x1, y1 = data[region]["box"]
        assert x0 < x1 and y0 < y1
