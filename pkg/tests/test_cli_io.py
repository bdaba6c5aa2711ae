import math
import subprocess
import sys

import numpy as np
import pytest

from brokenray.cli import DEFAULT_CONFIG, ExperimentConfig, main
from brokenray.errors import ConfigError
from brokenray.io import (
    load_image,
    load_sinogram,
    read_manifest,
    save_image,
    save_pgm,
    save_sinogram,
)
from brokenray.transforms import GridImage, Sinogram


SMALL_CONFIG = """\
[experiment]
name = smoke
seed = 3

[grid]
n = 48
half_width = 1.0
n_s = 48
n_alpha = 60
s_max = 1.0

[boundary]
kind = circle
radius = 1.0

[family]
kind = full

[phantom]
kind = gaussian
center = 0.4 0.0
sigma = 0.05

[reconstruct]
method = fbp
"""


class TestFileFormats:
    def test_image_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = GridImage(rng.standard_normal((17, 17)), -2.0, 2.0, -2.0, 2.0)
        path = tmp_path / "img.txt"
        save_image(path, img)
        back = load_image(path)
        np.testing.assert_array_equal(back.data, img.data)
        assert (back.x_min, back.x_max) == (img.x_min, img.x_max)
        # top row of the file is the largest y
        first_row = (path.read_text().splitlines()[1]).split()
        assert float(first_row[0]) == pytest.approx(img.data[-1, 0])

    def test_sinogram_roundtrip_with_mask(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((12, 9))
        data[3, 4] = np.nan
        g = Sinogram(data, 1.5)
        path = tmp_path / "sino.txt"
        save_sinogram(path, g)
        back = load_sinogram(path)
        assert back.s_max == g.s_max
        np.testing.assert_array_equal(np.isnan(back.data), np.isnan(g.data))
        np.testing.assert_allclose(back.filled(), g.filled())

    def test_pgm_with_sidecar(self, tmp_path):
        img = GridImage(np.outer(np.arange(8.0), np.ones(8)), -1, 1, -1, 1)
        path = tmp_path / "img.pgm"
        save_pgm(path, img)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n8 8\n65535\n")
        pixels = np.frombuffer(raw.split(b"65535\n", 1)[1], dtype=">u2")
        assert pixels.size == 64
        assert pixels.max() == 65535
        side = (tmp_path / "img.pgm.scale").read_text()
        assert "min 0" in side and "max 7" in side


class TestConfig:
    def test_roundtrip_lossless(self):
        cfg = ExperimentConfig.from_string(DEFAULT_CONFIG)
        text = cfg.serialize()
        cfg2 = ExperimentConfig.from_string(text)
        assert cfg2.serialize() == text

    def test_validation_errors(self):
        bad = SMALL_CONFIG.replace("kind = full", "kind = sideways")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_string(bad)
        bad = SMALL_CONFIG.replace("n = 48", "n = -3")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_string(bad)

    def test_operator_kinds(self):
        cfg = ExperimentConfig.from_string(SMALL_CONFIG)
        from brokenray.transforms import BrokenRayOperator

        assert isinstance(cfg.operator(), BrokenRayOperator)
        par = SMALL_CONFIG.replace("kind = full", "kind = parallel\noffset = 0.6")
        cfg = ExperimentConfig.from_string(par)
        from brokenray.transforms import ParallelRayOperator

        assert isinstance(cfg.operator(), ParallelRayOperator)


class TestCommands:
    def test_forward_smoke(self, tmp_path):
        cfg_path = tmp_path / "cfg.ini"
        cfg_path.write_text(SMALL_CONFIG)
        out = tmp_path / "out"
        rc = main(["forward", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        g = load_sinogram(out / "sinogram.txt")
        assert np.nanmax(np.abs(g.data)) > 0
        manifest = read_manifest(out / "manifest.txt")
        assert manifest["family"] == "full"
        assert int(manifest["masked_bins"]) > 0

    def test_parallel_zero_offset_doubles_radon(self, tmp_path):
        base = SMALL_CONFIG.replace("kind = full", "kind = parallel\noffset = 0.0")
        base = base.replace("kind = circle", "kind = none")
        cfg_path = tmp_path / "cfg.ini"
        cfg_path.write_text(base)
        out = tmp_path / "out"
        assert main(["forward", "--config", str(cfg_path), "--out", str(out)]) == 0
        g = load_sinogram(out / "sinogram.txt")
        cfg = ExperimentConfig.from_string(base)
        from brokenray.transforms import radon

        plain = radon(cfg.rendered_phantom(), cfg.sino_layout())
        np.testing.assert_allclose(g.data, 2.0 * plain.data, atol=1e-10)

    def test_reconstruct_smoke(self, tmp_path):
        cfg_path = tmp_path / "cfg.ini"
        cfg_path.write_text(SMALL_CONFIG)
        out = tmp_path / "out"
        rc = main(["reconstruct", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        manifest = read_manifest(out / "manifest.txt")
        assert float(manifest["relative_error"]) >= 0.0
        assert (out / "reconstruction.txt").exists()
        assert (out / "error_map.pgm").exists()

    def test_reconstruct_landweber_smoke(self, tmp_path):
        text = SMALL_CONFIG.replace("method = fbp",
                                    "method = landweber\niterations = 3\nrecord_every = 2")
        cfg_path = tmp_path / "cfg.ini"
        cfg_path.write_text(text)
        out = tmp_path / "out"
        rc = main(["reconstruct", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        manifest = read_manifest(out / "manifest.txt")
        assert manifest["method"] == "landweber"
        assert (out / "iterate_k0002.txt").exists()
        assert (out / "backprojection_f1.txt").exists()

    def test_predict_smoke(self, tmp_path):
        cfg_path = tmp_path / "cfg.ini"
        cfg_path.write_text(SMALL_CONFIG)
        out = tmp_path / "out"
        rc = main(["predict", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        caustic = (out / "caustic.csv").read_text().splitlines()
        assert caustic[0] == "alpha,t,x,y,flag"
        assert len(caustic) > 10
        chain = (out / "chain.csv").read_text()
        assert "status_positive" in chain
        radii = (out / "polygon_radii.csv").read_text().splitlines()
        assert any(line.startswith("0.7071") for line in radii)

    def test_missing_config_is_validation_error(self, tmp_path):
        rc = main(["forward", "--config", str(tmp_path / "nope.ini")])
        assert rc == 1

    def test_selftest_passes(self):
        rc = main(["selftest", "--n", "48"])
        assert rc == 0

    def test_selftest_negative_control(self):
        rc = main(["selftest", "--n", "48", "--corrupt-adjoint"])
        assert rc == 2

    def test_console_entry_point(self, tmp_path):
        rc = subprocess.run(
            [sys.executable, "-m", "brokenray.cli", "selftest", "--n", "32"],
            capture_output=True,
            text=True,
        )
        assert rc.returncode == 0
        assert "PASS" in rc.stdout
