import csv
import hashlib
import json

import numpy as np
import pytest

from conftest import finite_rank_kernel
from ikapprox.cli import main, parse_sweep_config, UsageError
from ikapprox.dataio import (
    read_feature_map,
    read_patches,
    write_feature_map,
    write_image_set,
    write_patches,
)
from ikapprox.evaluation import CSV_COLUMNS
from ikapprox.ika import MonomialBasis, fit_ika


def run(capsys, *argv):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def mixture(tmp_path, capsys):
    path = tmp_path / "mix.ikap"
    code, _, _ = run(capsys, "gen-data", "--kind", "mixture", "--out", path, "--count", 600,
                     "--dim", 4, "--seed", 1)
    assert code == 0
    return path


class TestGenData:
    def test_mixture(self, tmp_path, capsys):
        path = tmp_path / "x.ikap"
        code, out, _ = run(capsys, "gen-data", "--kind", "mixture", "--out", path,
                           "--count", 100, "--dim", 3, "--seed", 7)
        assert code == 0
        assert read_patches(path).shape == (100, 3)
        summary = json.loads(out)
        assert (summary["rows"], summary["cols"]) == (100, 3)

    def test_same_seed_same_hash(self, tmp_path, capsys):
        paths = [tmp_path / "a.ikap", tmp_path / "b.ikap"]
        for p in paths:
            run(capsys, "gen-data", "--kind", "mixture", "--out", p, "--count", 50,
                "--dim", 2, "--seed", 3)
        assert sha(paths[0]) == sha(paths[1])

    def test_images(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-data", "--kind", "images", "--out", tmp_path / "img",
                         "--count", 2, "--h", 8, "--w", 9, "--c", 1)
        assert code == 0
        assert (tmp_path / "img" / "header.txt").read_text().split() == ["2", "8", "9", "1"]

    def test_missing_out(self, capsys):
        code, _, err = run(capsys, "gen-data", "--kind", "mixture", "--count", 5, "--dim", 2)
        assert code == 2
        assert "--out" in err

    def test_missing_count(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-data", "--kind", "mixture", "--out", tmp_path / "x",
                         "--dim", 2)
        assert code == 2

    def test_negative_count(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-data", "--kind", "mixture", "--out", tmp_path / "x",
                         "--count", -1, "--dim", 2)
        assert code == 2

    def test_io_failure(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-data", "--kind", "mixture", "--out",
                         tmp_path / "missing" / "x.ikap", "--count", 5, "--dim", 2)
        assert code == 1


@pytest.fixture
def images(tmp_path, capsys):
    path = tmp_path / "images"
    run(capsys, "gen-data", "--kind", "images", "--out", path, "--count", 6, "--h", 16,
        "--w", 16, "--c", 3, "--seed", 2)
    return path


class TestPreprocess:
    def test_count_honored_and_unit_rows(self, images, tmp_path, capsys):
        out = tmp_path / "p.ikap"
        code, stdout, _ = run(capsys, "preprocess", "--images", images, "--out", out,
                              "--count", 250, "--seed", 4)
        assert code == 0
        P = read_patches(out)
        assert P.shape == (250, 7 * 7 * 3)
        np.testing.assert_allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-12)
        meta = json.loads(stdout)
        assert meta["sigma2"] > 0
        assert json.load(open(str(out) + ".json")) == meta
        whitening = json.load(open(str(out) + ".whitening.json"))
        assert np.array(whitening["projection"]).shape == (147, 147)

    def test_rerun_identical(self, images, tmp_path, capsys):
        outs = [tmp_path / "a.ikap", tmp_path / "b.ikap"]
        for o in outs:
            run(capsys, "preprocess", "--images", images, "--out", o, "--count", 100,
                "--patch", 5, "--seed", 9)
        for suffix in ("", ".whitening.json"):
            assert sha(str(outs[0]) + suffix) == sha(str(outs[1]) + suffix)

    def test_constant_images_give_zero_patches(self, tmp_path, capsys):
        write_image_set(tmp_path / "flat", np.full((2, 10, 10, 1), 7.0))
        out = tmp_path / "p.ikap"
        code, stdout, err = run(capsys, "preprocess", "--images", tmp_path / "flat",
                                "--out", out, "--count", 40)
        assert code == 0
        assert np.all(read_patches(out) == 0.0)
        assert "40 of 40 patches are zero" in err
        assert json.loads(stdout)["zero_rows"] == 40

    def test_patch_too_large(self, images, tmp_path, capsys):
        code, _, _ = run(capsys, "preprocess", "--images", images, "--out", tmp_path / "p",
                         "--count", 5, "--patch", 17)
        assert code == 2

    def test_missing_images(self, tmp_path, capsys):
        code, _, _ = run(capsys, "preprocess", "--images", tmp_path / "nothing",
                         "--out", tmp_path / "p", "--count", 5)
        assert code == 1


class TestFit:
    def test_ika_model(self, mixture, tmp_path, capsys):
        out = tmp_path / "m.ikaf"
        code, stdout, _ = run(capsys, "fit", "--method", "ika", "--patches", mixture,
                              "--n", 12, "--m", 8, "--sample-size", 300, "--out", out)
        assert code == 0
        fm = read_feature_map(out)
        assert (fm.basis.n_functions, fm.n_components) == (12, 8)
        assert json.loads(stdout)["S"] == 300

    def test_rerun_identical(self, mixture, tmp_path, capsys):
        outs = [tmp_path / "a.ikaf", tmp_path / "b.ikaf"]
        for o in outs:
            run(capsys, "fit", "--method", "ika", "--patches", mixture, "--n", 10, "--m", 10,
                "--filters", "kmeans", "--kmeans-iters", 5, "--kmeans-batch", 100, "--out", o)
        assert sha(outs[0]) == sha(outs[1])

    def test_nystrom_warns_about_sample_size(self, mixture, tmp_path, capsys):
        code, stdout, err = run(capsys, "fit", "--method", "nystrom", "--patches", mixture,
                                "--n", 10, "--m", 5, "--sample-size", 100,
                                "--out", tmp_path / "m.ikaf")
        assert code == 0
        assert "--sample-size is ignored" in err
        assert json.loads(stdout)["S"] is None

    def test_m_larger_than_n(self, mixture, tmp_path, capsys):
        code, _, err = run(capsys, "fit", "--method", "ika", "--patches", mixture,
                           "--n", 4, "--m", 5, "--out", tmp_path / "m.ikaf")
        assert code == 2
        assert "--m 5 exceeds --n 4" in err

    def test_sample_size_cap(self, mixture, tmp_path, capsys):
        code, _, _ = run(capsys, "fit", "--method", "ika", "--patches", mixture, "--n", 4,
                         "--m", 4, "--sample-size", 20_001, "--out", tmp_path / "m.ikaf")
        assert code == 2

    def test_full_scale_arguments_accepted(self):
        from ikapprox.cli import build_parser
        args = build_parser().parse_args(
            ["fit", "--method", "ika", "--patches", "p", "--n", "128", "--m", "128",
             "--sample-size", "15000", "--out", "m"])
        assert (args.n, args.m, args.sample_size) == (128, 128, 15000)


class TestEval:
    def test_exact_model(self, rng, tmp_path, capsys):
        kernel = finite_rank_kernel(rng, 5, 2)
        fm = fit_ika(kernel, rng.standard_normal((100, 5)), MonomialBasis(5), 5)
        write_feature_map(tmp_path / "m.ikaf", fm)
        write_patches(tmp_path / "p.ikap", rng.standard_normal((200, 5)))
        code, stdout, _ = run(capsys, "eval", "--model", tmp_path / "m.ikaf",
                              "--patches", tmp_path / "p.ikap", "--pairs", 5000)
        assert code == 0
        result = json.loads(stdout)
        assert result["mean_sq_error"] <= 1e-10
        assert result["pair_count"] == 5000

    def test_corrupt_model(self, tmp_path, capsys, mixture):
        (tmp_path / "bad.ikaf").write_bytes(b"nope")
        code, _, _ = run(capsys, "eval", "--model", tmp_path / "bad.ikaf", "--patches", mixture)
        assert code == 1

    def test_dimension_mismatch(self, mixture, tmp_path, capsys, rng):
        run(capsys, "fit", "--method", "nystrom", "--patches", mixture, "--n", 5, "--m", 5,
            "--out", tmp_path / "m.ikaf")
        write_patches(tmp_path / "p.ikap", rng.standard_normal((10, 3)))
        code, _, _ = run(capsys, "eval", "--model", tmp_path / "m.ikaf",
                         "--patches", tmp_path / "p.ikap")
        assert code == 2


def write_config(path, patches, **overrides):
    keys = {"patches": patches, "methods": "ika", "n": 8, "m_list": 8,
            "sample_sizes": 200, "seeds": "0..2", "pairs": 2000, **overrides}
    path.write_text("# sweep\n" + "".join(f"{k} = {v}\n" for k, v in keys.items()))
    return path


class TestSweep:
    def test_three_seeds_three_rows(self, mixture, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.cfg", mixture.name)
        code, stdout, _ = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r.csv")
        assert code == 0
        with open(tmp_path / "r.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 4
        assert [r[5] for r in rows[1:]] == ["0", "1", "2"]
        assert json.loads(stdout)["rows"] == 3

    def test_sidecar(self, mixture, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.cfg", mixture.name, methods="ika,nystrom", seeds="0,1")
        run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r.csv")
        meta = json.load(open(tmp_path / "r.csv.json"))
        assert meta["config_sha256"] == sha(cfg)
        assert "PCG64" in meta["rng_algorithm"]
        assert "nearest-rank" in meta["percentile_rule"]
        assert meta["library_version"]
        assert meta["rows"] == 4 and meta["failed_rows"] == 0
        assert np.isfinite(meta["mean_reduction"])

    def test_out_from_config_relative(self, mixture, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.cfg", mixture.name, out="res.csv", seeds=0)
        code, _, _ = run(capsys, "sweep", "--config", cfg)
        assert code == 0
        assert (tmp_path / "res.csv").exists()

    def test_threads_do_not_change_bytes(self, mixture, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.cfg", mixture.name, methods="ika,nystrom", seeds="0..3")
        run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "a.csv")
        run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "b.csv", "--threads", 3)
        assert sha(tmp_path / "a.csv") == sha(tmp_path / "b.csv")

    def test_unknown_key(self, mixture, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.cfg", mixture.name, sample_size=10)
        code, _, err = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r.csv")
        assert code == 2
        assert "'sample_size'" in err

    def test_bad_value(self, mixture, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.cfg", mixture.name, methods="ika,rff")
        code, _, err = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r.csv")
        assert code == 2
        assert "'methods'" in err

    def test_missing_config(self, tmp_path, capsys):
        code, _, _ = run(capsys, "sweep", "--config", tmp_path / "none.cfg")
        assert code == 1


class TestConfigParser:
    def test_parse(self):
        cfg = parse_sweep_config("n = 16  # filters\nm_list = 4, 8,16\n\nsample_sizes=1..3\n"
                                 "patches = p.ikap\n")
        assert cfg["n"] == 16
        assert cfg["m_list"] == [4, 8, 16]
        assert cfg["sample_sizes"] == [1, 2, 3]
        assert cfg["methods"] == ["ika", "nystrom"]
        assert cfg["pairs"] == 200_000

    @pytest.mark.parametrize("text, needle", [
        ("n 16", "expected 'key = value'"),
        ("n = 1\nn = 2", "duplicate key 'n'"),
        ("patches = p\nn = 2\nm_list = 2", "'sample_sizes' is required"),
    ])
    def test_errors(self, text, needle):
        with pytest.raises(UsageError, match=needle):
            parse_sweep_config(text)
