import math

import numpy as np
import pytest

from conftest import DESK_LOSSES
from wiou_lab.focusing import EmaTracker
from wiou_lab.geometry import BBox
from wiou_lab.losses import LOSS_NAMES, parse_loss
from wiou_lab.simlab import (
    RegressionCase,
    SimConfig,
    SimulationError,
    case_count,
    descend_case,
    disc_covered_by_targets,
    final_report,
    generate_cases,
    point_in_target_union,
    run,
)
from wiou_lab.simlab.cases import CENTER, box_sizes

SMALL = SimConfig(radius=0.5, subsample=0.002, iterations=20, seed=5)


def test_case_count_formula():
    for r, points, cases in [(0.1, 200, 68_600), (0.5, 5_000, 1_715_000)]:
        cfg = SimConfig(radius=r)
        assert cfg.n_points == points
        assert case_count(cfg) == cases == round(6_860_000 * r * r)


def test_generate_cases_count_r01():
    cs = generate_cases(SimConfig(radius=0.1))
    assert len(cs) == 68_600
    assert np.array_equal(cs.ids, np.arange(68_600))


def test_targets_and_anchors():
    cfg = SimConfig(radius=0.1)
    cs = generate_cases(cfg)
    t, a = cs.targets(), cs.anchors()
    assert np.all(t[:, 0] == CENTER[0]) and np.all(t[:, 1] == CENTER[1])
    np.testing.assert_allclose(t[:, 2] * t[:, 3], cfg.target_area, rtol=1e-15)
    assert np.all(a[:, 2:] > 0)
    assert set(np.round(a[:, 2] * a[:, 3], 15)) == set(np.round(cfg.scales, 15))
    np.testing.assert_allclose(np.sort(np.unique(np.round(a[:, 2] / a[:, 3], 12))), sorted(cfg.aspect_ratios))
    dist = np.hypot(a[:, 0] - 0.5, a[:, 1] - 0.5)
    assert dist.max() <= 0.1


def test_each_point_gets_every_anchor_target_combination():
    cfg = SimConfig(radius=0.1)
    cs = generate_cases(cfg)
    a, t = cs.anchors(), cs.targets()
    per_point = cfg.cases_per_point
    block_a, block_t = a[:per_point], t[:per_point]
    assert len(np.unique(block_a[:, :2], axis=0)) == 1
    combos = {tuple(np.round(np.r_[x[2:], y[2:]], 12)) for x, y in zip(block_a, block_t)}
    assert len(combos) == per_point


def test_box_sizes():
    w, h = box_sizes(1 / 32, 4.0)
    assert w * h == pytest.approx(1 / 32, rel=1e-15)
    assert w / h == pytest.approx(4.0, rel=1e-15)


def test_generation_is_deterministic():
    cfg = SimConfig(radius=0.5, subsample=0.01, seed=3)
    one, two = generate_cases(cfg), generate_cases(cfg)
    assert np.array_equal(one.ids, two.ids)
    assert one.anchors().tobytes() == two.anchors().tobytes()
    other = generate_cases(SimConfig(radius=0.5, subsample=0.01, seed=4))
    assert not np.array_equal(one.anchors(), other.anchors())


def test_subsample():
    cfg = SimConfig(radius=0.5, subsample=0.05)
    cs = generate_cases(cfg)
    assert len(cs) == 85_750
    assert np.all(np.diff(cs.ids) > 0)
    assert cs.ids.max() < case_count(cfg)


def test_points_uniform_in_disc():
    cfg = SimConfig(radius=0.5, points_density=200_000)
    pts = generate_cases(cfg).points
    r2 = ((pts - 0.5) ** 2).sum(axis=1) / 0.25
    assert r2.max() <= 1.0
    # r^2 is uniform on [0, 1] for a uniform disc
    assert np.mean(r2) == pytest.approx(0.5, abs=0.01)
    assert np.mean(pts[:, 0]) == pytest.approx(0.5, abs=0.005)


def test_small_disc_lies_inside_target_coverage():
    cfg = SimConfig(radius=0.1)
    assert disc_covered_by_targets(cfg)
    assert point_in_target_union(generate_cases(cfg).points, cfg).all()
    assert not disc_covered_by_targets(SimConfig(radius=0.5))


def test_narrowest_target_cannot_hold_the_whole_disc():
    # a 1:4 target is about 0.088 wide, so single-target coverage of an r = 0.1 disc is impossible
    w, _ = box_sizes(1 / 32, 0.25)
    assert w / 2 < 0.1


def test_config_validation():
    for bad in [dict(radius=0.0), dict(radius=0.6), dict(subsample=0.0), dict(lr=-1), dict(ema_momentum=1.0)]:
        with pytest.raises(ValueError):
            SimConfig(**bad)


@pytest.mark.parametrize("name", LOSS_NAMES)
def test_descend_identical_boxes_is_zero_step(name):
    box = BBox(0.5, 0.5, 0.25, 0.125)
    case = RegressionCase(0, box, box)
    new = descend_case(case, parse_loss(name), EmaTracker(), 0.01)
    np.testing.assert_allclose(new.as_tuple(), box.as_tuple(), rtol=0, atol=1e-14)


def test_descend_disjoint_iou_is_zero_step():
    case = RegressionCase(1, BBox(0.1, 0.2, 0.1, 0.1), BBox(0.5, 0.5, 0.2, 0.2))
    assert descend_case(case, parse_loss("iou"), None, 0.01) == case.anchor


def test_descend_disjoint_diou_moves_toward_target():
    target = BBox(0.5, 0.5, 0.2, 0.2)
    for anchor in [BBox(0.1, 0.2, 0.1, 0.1), BBox(0.9, 0.5, 0.05, 0.1), BBox(0.5, 0.05, 0.1, 0.1)]:
        new = descend_case(RegressionCase(2, anchor, target), parse_loss("diou"), None, 0.01)
        before = math.hypot(anchor.x - 0.5, anchor.y - 0.5)
        after = math.hypot(new.x - 0.5, new.y - 0.5)
        assert after < before
        assert abs(new.x - 0.5) <= abs(anchor.x - 0.5) and abs(new.y - 0.5) <= abs(anchor.y - 0.5)


def test_descend_reports_case_and_loss():
    case = RegressionCase(42, BBox(0.5, 0.5, 0.2, 0.2), BBox(0.5, 0.5, 0.2, 0.2))
    with pytest.raises(SimulationError, match="42.*wiou3"):
        descend_case(case, parse_loss("wiou3"), None, 0.01)


@pytest.mark.parametrize("name", ["giou", "ciou", "siou", "wiou1", "wiou3"])
def test_batch_step_matches_tape_step(name):
    cfg = SimConfig(radius=0.5, subsample=0.0005, iterations=1, seed=9)
    cases = generate_cases(cfg)
    spec = parse_loss(name)
    result = run(cfg, spec, cases=cases)
    tracker = EmaTracker(1.0, cfg.ema_momentum) if spec.needs_tracker else None
    for k, case in enumerate(cases):
        want = descend_case(case, spec, tracker, cfg.lr, cfg.min_size)
        np.testing.assert_allclose(result.final_anchors[k], want.as_tuple(), rtol=1e-12, atol=1e-14)


def test_run_records():
    result = run(SMALL, parse_loss("diou"))
    assert [r.iteration for r in result.records] == list(range(SMALL.iterations + 1))
    assert all(0 <= r.mean_iou_loss <= 1 for r in result.records)
    assert all(r.loss_name == "diou" for r in result.records)
    assert result.records[-1].mean_iou_loss < result.records[0].mean_iou_loss


def test_iou_plateaus_because_disjoint_cases_never_move():
    cfg = SimConfig(radius=0.5, subsample=0.002, iterations=30, seed=1)
    cases = generate_cases(cfg)
    result = run(cfg, parse_loss("iou"), cases=cases)
    start = cases.anchors()
    ax, tx = start[:, 0], cases.targets()
    disjoint = (np.abs(ax - tx[:, 0]) > (start[:, 2] + tx[:, 2]) / 2) | (
        np.abs(start[:, 1] - tx[:, 1]) > (start[:, 3] + tx[:, 3]) / 2
    )
    assert disjoint.sum() > 0
    assert np.array_equal(result.final_anchors[disjoint], start[disjoint])
    assert result.final_mean_iou_loss > disjoint.mean() * 0.99


def test_run_is_bit_identical_across_workers():
    spec = parse_loss("wiou3")
    one = run(SMALL, spec, workers=1)
    many = run(SMALL, spec, workers=3)
    assert one.records == many.records
    assert one.final_anchors.tobytes() == many.final_anchors.tobytes()


def test_fixed_mean_with_zero_momentum():
    cfg = SimConfig(radius=0.5, subsample=0.001, iterations=3, ema_momentum=0.0)
    spec = parse_loss("wiou2")
    result = run(cfg, spec)
    cases = generate_cases(cfg)
    # with the mean pinned at 1 the coefficient is sqrt(L_IoU) on every iteration
    from wiou_lab.simlab import evaluate_batch

    iou, loss, _ = evaluate_batch(spec.base, cases.anchors(), cases.targets(), spec.epsilon)
    assert result.records[0].mean_training_loss == pytest.approx(np.mean(np.sqrt(iou) * loss), rel=1e-12)


def test_final_report():
    cases = generate_cases(SMALL)
    runs = [run(SMALL, parse_loss(n), cases=cases) for n in ("iou", "diou", "wiou1")]
    report = final_report(runs, threshold=0.9)
    finals = [row.final_mean_iou_loss for row in report]
    assert finals == sorted(finals)
    assert {row.loss for row in report} == {"iou", "diou", "wiou1"}
    single = final_report(runs[:1])
    assert len(single) == 1 and single[0].loss == "iou"


def test_final_report_rejects_mismatched_configs():
    a = run(SMALL, parse_loss("diou"))
    other = SimConfig(radius=0.5, subsample=0.002, iterations=20, seed=6)
    b = run(other, parse_loss("giou"))
    with pytest.raises(ValueError):
        final_report([a, b])


@pytest.mark.slow
@pytest.mark.parametrize("radius, subsample, seed", [(0.1, 1.0, 7), (0.5, 0.05, 0)])
def test_mean_iou_loss_non_increasing(sim_cache, radius, subsample, seed):
    """Penalty-based losses at lr 0.01 should not raise the mean IoU loss
    by more than 1e-4 between iterations."""
    curves = sim_cache.curves(radius, subsample, seed)
    worst = {}
    for name in DESK_LOSSES:
        means = np.array([r.mean_iou_loss for r in curves[name]])
        worst[name] = float(np.diff(means).max())
    print({k: f"{v:.3e}" for k, v in worst.items()})
    assert all(v <= 1e-4 for v in worst.values()), worst
