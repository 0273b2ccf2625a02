import os
import subprocess
import sys

import numpy as np
import pytest

from wiou_lab.audit import random_pairs
from wiou_lab.geometry import BBox
from wiou_lab.losses import Base, LossSpec, compose
from wiou_lab.simlab import SimConfig, evaluate_batch, generate_cases, get_backend
from wiou_lab.simlab import kernel as kmod

BACKENDS = [get_backend(name) for name in kmod.available_backends()]


def _pairs():
    pairs = random_pairs(300, seed=31)
    extra = [
        (BBox(0.5, 0.5, 0.2, 0.1), BBox(0.5, 0.5, 0.2, 0.1)),
        (BBox(0.5, 0.5, 0.3, 0.1), BBox(0.5, 0.5, 0.2, 0.2)),
        (BBox(0.3, 0.5, 0.1, 0.1), BBox(0.5, 0.5, 0.2, 0.2)),
        (BBox(0.5, 0.3, 0.1, 0.1), BBox(0.5, 0.5, 0.2, 0.2)),
        (BBox(0.3, 0.3, 0.2, 0.2), BBox(0.5, 0.5, 0.2, 0.2)),
        (BBox(0.25, 0.5, 0.5, 0.5), BBox(0.75, 0.5, 0.5, 0.5)),
    ]
    return pairs + extra


@pytest.fixture(scope="module")
def tape_reference():
    pairs = _pairs()
    anchors = np.array([a.as_tuple() for a, _ in pairs])
    targets = np.array([t.as_tuple() for _, t in pairs])
    ref = {}
    for base in Base:
        rows = [compose(LossSpec(base), a, t) for a, t in pairs]
        ref[base] = (
            np.array([c.iou_loss for c in rows]),
            np.array([c.value for c in rows]),
            np.array([c.grads for c in rows]),
        )
    return anchors, targets, ref


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.name)
@pytest.mark.parametrize("base", list(Base), ids=lambda b: b.value)
def test_backend_matches_tape(backend, base, tape_reference):
    anchors, targets, ref = tape_reference
    iou, loss, grad = evaluate_batch(base, anchors, targets, 1e-7, backend=backend)
    r_iou, r_loss, r_grad = ref[base]
    np.testing.assert_allclose(iou, r_iou, rtol=0, atol=1e-13)
    np.testing.assert_allclose(loss, r_loss, rtol=0, atol=1e-13)
    np.testing.assert_allclose(grad, r_grad, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.name)
def test_worker_count_does_not_change_bits(backend):
    cases = generate_cases(SimConfig(radius=0.5, subsample=0.01, seed=2))
    a, t = cases.anchors(), cases.targets()
    for base in Base:
        one = evaluate_batch(base, a, t, 1e-7, workers=1, backend=backend)
        for workers in (2, 3, 7):
            many = evaluate_batch(base, a, t, 1e-7, workers=workers, backend=backend)
            for x, y in zip(one, many):
                assert x.tobytes() == y.tobytes()


def test_evaluate_batch_leaves_inputs_untouched():
    cases = generate_cases(SimConfig(radius=0.1, subsample=0.05))
    a = cases.anchors()
    before = a.copy()
    evaluate_batch(Base.SIOU, a, cases.targets(), 1e-7, workers=2)
    assert np.array_equal(a, before)


def test_get_backend_names():
    assert get_backend("python").name == "python"
    assert get_backend("auto").name == kmod.available_backends()[0]
    with pytest.raises(ValueError):
        get_backend("fortran")


@pytest.mark.skipif(kmod.COMPILED is None, reason="compiled kernel not built")
def test_compiled_backend_is_default_when_built():
    assert get_backend().name == "c"


def test_env_var_selects_fallback():
    env = dict(os.environ, WIOU_LAB_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", "from wiou_lab.simlab import kernel; print(kernel.DEFAULT_BACKEND.name)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
