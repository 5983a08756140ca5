"""Command line interface: subcommands, outputs, and exit codes."""

import csv

import numpy as np
import pytest

import hqsdeblur.cli as cli
from hqsdeblur.errors import DivergenceError
from hqsdeblur.hqs import HqsOutcome
from hqsdeblur.imagecore import (Kernel, read_kernel_txt, read_png, write_kernel_txt,
                                 write_png)
from hqsdeblur.nonuniform import KernelDictionary, build_dictionary, write_field_txt
from hqsdeblur.synthetic import corpus_image, shake_kernels


@pytest.fixture
def workspace(tmp_path):
    """A truth image, its kernel file, and paths for CLI runs."""
    truth = corpus_image(0, side=32)
    ker = shake_kernels()[0]
    truth_png = tmp_path / "truth.png"
    ker_txt = tmp_path / "kernel.txt"
    write_png(truth_png, truth)
    write_kernel_txt(ker_txt, ker)
    return tmp_path, truth_png, ker_txt


class TestBlurDeblur:
    def test_uniform_round_trip(self, workspace, capsys):
        tmp, truth_png, ker_txt = workspace
        blurred = tmp / "blurred.png"
        restored = tmp / "restored.png"
        assert cli.main(["blur", "--image", str(truth_png), "--kernel",
                         str(ker_txt), "--noise", "2", "--seed", "3",
                         "--out", str(blurred)]) == 0
        assert blurred.exists()
        assert cli.main(["deblur", "--image", str(blurred), "--kernel",
                         str(ker_txt), "--truth", str(truth_png),
                         "--method", "cpcr", "--outer-iters", "3",
                         "--out", str(restored)]) == 0
        out = capsys.readouterr().out
        assert "method=cpcr" in out
        assert "psnr=" in out
        assert read_png(restored).shape == (32, 32)

    def test_field_round_trip(self, workspace):
        tmp, truth_png, ker_txt = workspace
        d = build_dictionary(side=7, lengths=(1, 3, 5), angles=(0.0, 90.0))
        dict_npz = tmp / "kernels.npz"
        d.save(dict_npz)
        field = np.zeros((32, 32), dtype=np.int32)
        field[:, 16:] = d.nearest(5, 0.0)
        field_txt = tmp / "field.txt"
        write_field_txt(field_txt, field)
        blurred = tmp / "blurred.png"
        restored = tmp / "restored.png"
        assert cli.main(["blur", "--image", str(truth_png), "--field",
                         str(field_txt), "--dict", str(dict_npz),
                         "--out", str(blurred)]) == 0
        assert cli.main(["deblur", "--image", str(blurred), "--field",
                         str(field_txt), "--dict", str(dict_npz),
                         "--outer-iters", "2", "--out", str(restored)]) == 0
        assert read_png(restored).shape == (32, 32)

    def test_rgb_image(self, workspace):
        tmp, truth_png, ker_txt = workspace
        rgb = np.stack([read_png(truth_png)] * 3, axis=2)
        rgb_png = tmp / "rgb.png"
        write_png(rgb_png, rgb)
        out_png = tmp / "rgb_blur.png"
        assert cli.main(["blur", "--image", str(rgb_png), "--kernel",
                         str(ker_txt), "--out", str(out_png)]) == 0
        assert read_png(out_png).shape == (32, 32, 3)

    def test_config_file_with_flag_override(self, workspace, monkeypatch):
        tmp, truth_png, ker_txt = workspace
        cfg_file = tmp / "cfg.txt"
        cfg_file.write_text("outer_iters = 2\nlambda = 0.01\n")
        seen = {}

        def fake_deblur(y, ker, config=None, bank=None, truth=None):
            seen["cfg"] = config
            return HqsOutcome(x=y, snapshots=[], solver_reports=[],
                              psnr_history=[])

        monkeypatch.setattr(cli, "deblur", fake_deblur)
        assert cli.main(["deblur", "--image", str(truth_png), "--kernel",
                         str(ker_txt), "--config", str(cfg_file),
                         "--outer-iters", "5", "--out", str(tmp / "x.png")]) == 0
        assert seen["cfg"].outer_iters == 5  # flag wins over file
        assert seen["cfg"].lam == 0.01


class TestBench:
    def test_writes_csvs(self, tmp_path, capsys):
        out = tmp_path / "bench"
        assert cli.main(["bench", "--out", str(out), "--images", "2",
                         "--side", "32", "--margin", "8",
                         "--methods", "cpcr,fft-none"]) == 0
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert set(rows[0]) == {"image", "kernel_side", "method", "psnr_db",
                                "seconds"}
        with open(out / "summary.csv") as fh:
            summary = list(csv.DictReader(fh))
        assert [r["method"] for r in summary] == ["cpcr", "fft-none"]
        for r in summary:
            float(r["mean_psnr_db"])
            float(r["mean_seconds"])

    def test_jobs_fanout_matches_sequential(self, tmp_path):
        seq = tmp_path / "seq"
        par = tmp_path / "par"
        for out, jobs in ((seq, "1"), (par, "2")):
            assert cli.main(["bench", "--out", str(out), "--images", "2",
                             "--side", "32", "--margin", "8", "--jobs", jobs,
                             "--methods", "fft-none"]) == 0
        with open(seq / "results.csv") as fh:
            a = [r["psnr_db"] for r in csv.DictReader(fh)]
        with open(par / "results.csv") as fh:
            b = [r["psnr_db"] for r in csv.DictReader(fh)]
        assert a == b

    def test_unknown_method(self, tmp_path):
        assert cli.main(["bench", "--out", str(tmp_path), "--methods",
                         "cpcr,warp"]) == 3

    def test_bad_jobs(self, tmp_path):
        assert cli.main(["bench", "--out", str(tmp_path), "--jobs", "0"]) == 3

    def _rigged_deblur(self, scores):
        """Stub returning images whose PSNR against truth is controlled."""

        def fake_deblur(y, ker, config=None, bank=None, truth=None):
            method = config.inner if config.inner != "fft" else \
                f"fft-{config.padding}"
            rmse = 10 ** (-scores[method] / 20.0)
            x = truth + rmse  # constant offset: PSNR == scores[method]
            return HqsOutcome(x=x, snapshots=[], solver_reports=[],
                              psnr_history=[])

        return fake_deblur

    def test_check_passes_on_expected_ordering(self, tmp_path, monkeypatch, capsys):
        scores = {"cpcr": 26.0, "cg": 26.0, "fft-edgetaper": 25.0,
                  "fft-replicate": 24.0, "fft-none": 20.0}
        monkeypatch.setattr(cli, "deblur", self._rigged_deblur(scores))
        assert cli.main(["bench", "--out", str(tmp_path / "b"), "--images", "1",
                         "--side", "32", "--margin", "8", "--check"]) == 0
        assert "ordering checks passed" in capsys.readouterr().out

    def test_check_fails_on_violation(self, tmp_path, monkeypatch, capsys):
        scores = {"cpcr": 20.0, "cg": 26.0, "fft-edgetaper": 25.0,
                  "fft-replicate": 24.0, "fft-none": 20.0}
        monkeypatch.setattr(cli, "deblur", self._rigged_deblur(scores))
        assert cli.main(["bench", "--out", str(tmp_path / "b"), "--images", "1",
                         "--side", "32", "--margin", "8", "--check"]) == 1
        assert "ordering check failed" in capsys.readouterr().err


class TestInvkernel:
    def test_writes_filters(self, workspace, capsys):
        tmp, _, ker_txt = workspace
        prefix = tmp / "inv" / "bank"
        assert cli.main(["invkernel", "--kernel", str(ker_txt), "--mu", "0.008",
                         "--out", str(prefix)]) == 0
        for i in range(3):
            fil = read_kernel_txt(f"{prefix}_c{i}.txt")
            assert isinstance(fil, Kernel)
        assert "dirac residual" in capsys.readouterr().out

    def test_grid_reports_radius(self, workspace, capsys):
        tmp, _, ker_txt = workspace
        prefix = tmp / "bank"
        assert cli.main(["invkernel", "--kernel", str(ker_txt), "--mu", "0.008",
                         "--grid", "12", "--out", str(prefix)]) == 0
        out = capsys.readouterr().out
        assert "spectral radius" in out

    def test_no_bank(self, workspace):
        tmp, _, ker_txt = workspace
        prefix = tmp / "solo"
        assert cli.main(["invkernel", "--kernel", str(ker_txt), "--mu", "0",
                         "--no-bank", "--out", str(prefix)]) == 0
        assert (tmp / "solo_c0.txt").exists()
        assert not (tmp / "solo_c1.txt").exists()


class TestDictCommand:
    def test_full_dictionary(self, tmp_path, capsys):
        out = tmp_path / "d"
        assert cli.main(["dict", "--out", str(out)]) == 0
        d = KernelDictionary.load(out / "kernels.npz")
        assert len(d) == 511
        import json
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["entries"] == 511
        assert manifest["side"] == 35


class TestCorpusCommand:
    def test_writes_triples(self, tmp_path):
        out = tmp_path / "corpus"
        assert cli.main(["corpus", "--out", str(out), "--count", "2",
                         "--side", "24", "--margin", "8"]) == 0
        for i in range(2):
            assert read_png(out / f"truth_{i:02d}.png").shape == (24, 24)
            assert read_png(out / f"blurred_{i:02d}.png").shape == (24, 24)
            read_kernel_txt(out / f"kernel_{i:02d}.txt")


class TestExitCodes:
    def test_missing_image_is_io_error(self, workspace):
        tmp, _, ker_txt = workspace
        assert cli.main(["deblur", "--image", str(tmp / "absent.png"),
                         "--kernel", str(ker_txt),
                         "--out", str(tmp / "x.png")]) == 2

    def test_malformed_kernel_is_io_error(self, workspace):
        tmp, truth_png, _ = workspace
        bad = tmp / "bad.txt"
        bad.write_text("junk\n")
        assert cli.main(["blur", "--image", str(truth_png), "--kernel",
                         str(bad), "--out", str(tmp / "x.png")]) == 2

    def test_unknown_flag_is_config_error(self, workspace):
        tmp, truth_png, ker_txt = workspace
        assert cli.main(["deblur", "--image", str(truth_png), "--kernel",
                         str(ker_txt), "--warp", "--out", str(tmp / "x.png")]) == 3

    def test_bad_method_is_config_error(self, workspace):
        tmp, truth_png, ker_txt = workspace
        assert cli.main(["deblur", "--image", str(truth_png), "--kernel",
                         str(ker_txt), "--method", "magic",
                         "--out", str(tmp / "x.png")]) == 3

    def test_kernel_or_field_required(self, workspace):
        tmp, truth_png, _ = workspace
        assert cli.main(["blur", "--image", str(truth_png),
                         "--out", str(tmp / "x.png")]) == 3

    def test_bad_config_file_key(self, workspace):
        tmp, truth_png, ker_txt = workspace
        cfg = tmp / "cfg.txt"
        cfg.write_text("speed = 11\n")
        assert cli.main(["deblur", "--image", str(truth_png), "--kernel",
                         str(ker_txt), "--config", str(cfg),
                         "--out", str(tmp / "x.png")]) == 3

    def test_field_out_of_dictionary_range(self, workspace):
        tmp, truth_png, _ = workspace
        d = build_dictionary(side=5, lengths=(1, 3), angles=(0.0,))
        dict_npz = tmp / "k.npz"
        d.save(dict_npz)
        field = np.full((32, 32), 7, dtype=np.int32)
        field_txt = tmp / "field.txt"
        write_field_txt(field_txt, field)
        assert cli.main(["blur", "--image", str(truth_png), "--field",
                         str(field_txt), "--dict", str(dict_npz),
                         "--out", str(tmp / "x.png")]) == 3

    def test_divergence_exit_code(self, workspace, monkeypatch):
        tmp, truth_png, ker_txt = workspace

        def exploding(y, ker, config=None, bank=None, truth=None):
            raise DivergenceError("estimate became non-finite")

        monkeypatch.setattr(cli, "deblur", exploding)
        assert cli.main(["deblur", "--image", str(truth_png), "--kernel",
                         str(ker_txt), "--out", str(tmp / "x.png")]) == 4
