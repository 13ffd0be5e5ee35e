import re
from pathlib import Path

import numpy as np
import pytest

import tsformer
from tsformer import gradcheck
from tsformer.model import ModelConfig, TSFormer, model_forward
from tsformer.tensor import Tape, Tensor, l1_loss, ops
from tsformer.tensor.core import make_result


@pytest.mark.parametrize("name", sorted(gradcheck.CASES))
def test_case_passes_seed0(name):
    rng = np.random.default_rng(0)
    err = gradcheck.check_case(gradcheck.CASES[name](rng), rng)
    assert err <= gradcheck.RTOL, f"{name}: {err:.3e}"


def _source_op_names() -> set[str]:
    src = Path(tsformer.__file__).parent
    names = set()
    for path in src.rglob("*.py"):
        names |= set(re.findall(r'make_result\(\s*"([a-z0-9_]+)"', path.read_text()))
    return names


def test_every_recorded_op_has_a_case():
    cfg = ModelConfig(base_channels=4, block_counts=(1, 1), patch_size=4)
    model = TSFormer(cfg)
    x = Tensor(np.random.default_rng(0).random((1, 3, 12, 10), dtype=np.float32))
    with Tape() as tape:
        l1_loss(model_forward(x, model), x)
    recorded = set(tape.ops) | _source_op_names()
    missing = recorded - set(gradcheck.CASES)
    assert not missing, f"ops without a gradient check: {sorted(missing)}"


def test_model_step_reaches_every_parameter():
    # dead-parameter detector, several random inputs
    cfg = ModelConfig(base_channels=4, block_counts=(1, 1), patch_size=4)
    for seed in range(5):
        model = TSFormer(cfg, seed=seed)
        rng = np.random.default_rng(seed)
        x = Tensor(rng.random((2, 3, 16, 16), dtype=np.float32))
        y = Tensor(rng.random((2, 3, 16, 16), dtype=np.float32))
        with Tape() as tape:
            loss = l1_loss(model_forward(x, model), y)
        tape.backward(loss)
        dead = [n for n, p in model.named_parameters() if not np.any(p.grad)]
        assert not dead, f"seed {seed}: no gradient reaches {dead}"


def test_corrupted_backward_is_caught(monkeypatch):
    real_gelu = ops.gelu

    def broken_gelu(x):
        out = real_gelu(Tensor(x.data))
        return make_result("gelu", out.data, (x,), lambda g: (0.9 * g,))

    monkeypatch.setattr(ops, "gelu", broken_gelu)
    results = gradcheck.run_suite(seeds=[0, 1], cases={"gelu": gradcheck.CASES["gelu"],
                                                       "sigmoid": gradcheck.CASES["sigmoid"]})
    table = gradcheck.summarize(results)
    assert not table["gelu"][1]
    assert table["sigmoid"][1]


def test_relative_error_floor():
    assert gradcheck.relative_error(np.zeros(3), np.full(3, 1e-9)) == pytest.approx(1e-3)
    assert gradcheck.relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
