import numpy as np
import pytest

from tsformer import gradcheck
from tsformer.checkpoint import checkpoint_save
from tsformer.cli import main
from tsformer.model import TSFormer
from tsformer.pipeline.config import RunConfig
from tsformer.pipeline.imageio import load_image, save_image

TINY = "base_channels = 4\nblock_counts = 1,1\npatch_size = 4\n"


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(TINY)
    return p


def test_restore_zero_checkpoint_is_identity(tmp_path, tiny_cfg, rng, capsys):
    model = TSFormer(RunConfig(base_channels=4, block_counts=(1, 1), patch_size=4).model_config())
    for p in model.parameters():
        p.data[...] = 0
    checkpoint_save(model, tmp_path / "zero.tsf")
    img = rng.random((1, 3, 21, 18), dtype=np.float32)
    save_image(img, tmp_path / "in.png")
    rc = main(["restore", "--config", str(tiny_cfg), "--input", str(tmp_path / "in.png"),
               "--checkpoint", str(tmp_path / "zero.tsf"), "--ground-truth", str(tmp_path / "in.png"),
               "--out", str(tmp_path / "out.ppm")])
    assert rc == 0
    np.testing.assert_array_equal(load_image(tmp_path / "out.ppm").data, load_image(tmp_path / "in.png").data)
    assert "psnr inf" in capsys.readouterr().out


def test_restore_errors(tmp_path, tiny_cfg, rng):
    save_image(rng.random((1, 3, 8, 8)), tmp_path / "in.png")
    args = ["restore", "--config", str(tiny_cfg), "--input", str(tmp_path / "in.png"), "--out", str(tmp_path / "o.png")]
    assert main(args + ["--checkpoint", str(tmp_path / "none.tsf")]) == 2
    checkpoint_save(TSFormer(RunConfig(base_channels=8, block_counts=(1, 1), patch_size=4).model_config()),
                    tmp_path / "other.tsf")
    assert main(args + ["--checkpoint", str(tmp_path / "other.tsf")]) == 2
    assert main(["restore", "--config", str(tiny_cfg)]) == 1


def test_usage_errors(tmp_path):
    assert main([]) == 1
    assert main(["nonsense"]) == 1
    assert main(["bench", "--seed", "-3"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["bench", "--config", str(bad)]) == 1


def test_bench_and_train_commands(tmp_path, tiny_cfg, capsys):
    tiny_cfg.write_text(TINY + "bench_size = 32\niterations = 2\nbatch = 2\ncrop = 16\nimage_size = 24\ntrain_images = 2\n")
    assert main(["bench", "--config", str(tiny_cfg), "--out", str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    assert "params " in out and "config base_channels = 4" in out
    assert main(["train-toy", "--config", str(tiny_cfg), "--seed", "18446744073709551615",
                 "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "model.tsf").exists()


def test_ablate_command(tmp_path, tiny_cfg, capsys):
    tiny_cfg.write_text(TINY + "ablate_seeds = 4\n")
    assert main(["ablate", "--support-only", "--config", str(tiny_cfg), "--out", str(tmp_path)]) == 0
    lines = [ln for ln in (tmp_path / "ablation.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 6


def test_grad_check_lists_every_op(monkeypatch, capsys):
    subset = {k: gradcheck.CASES[k] for k in ("add", "gelu", "softmax")}
    monkeypatch.setattr(gradcheck, "CASES", subset)
    assert main(["grad-check"]) == 0
    out = capsys.readouterr().out
    for op in subset:
        assert op in out


def test_grad_check_fails_on_broken_rule(monkeypatch, capsys):
    from tsformer.tensor import Tensor, ops
    from tsformer.tensor.core import make_result
    real = ops.sigmoid

    def broken(x):
        return make_result("sigmoid", real(Tensor(x.data)).data, (x,), lambda g: (g,))

    monkeypatch.setattr(ops, "sigmoid", broken)
    monkeypatch.setattr(gradcheck, "CASES", {"sigmoid": gradcheck.CASES["sigmoid"]})
    assert main(["grad-check"]) == 3
    assert "failed: sigmoid" in capsys.readouterr().out
