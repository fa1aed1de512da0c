import numpy as np
import pytest

from hpcm import oracle
from hpcm.schedule import (SUPPORTED_ALLOCATIONS, ScaleId, ScheduleError, build_schedule,
                           downsample_to_scale, from_scale_grid, to_scale_grid, upsample_fill, GROUP_PHASES)


def _steps(schedule):
    return [(int(schedule.scale_of(i)), map(tuple, schedule.step_sites(i)))
            for i in range(1, schedule.num_steps + 1)]


@pytest.mark.parametrize("allocation", SUPPORTED_ALLOCATIONS)
@pytest.mark.parametrize("dims", [(8, 8, 8), (8, 5, 7), (16, 12, 20)])
def test_cover_is_disjoint_and_exhaustive(allocation, dims):
    schedule = build_schedule(dims, allocation)
    verdict = oracle.schedule_coverage_check(dims, allocation, _steps(schedule))
    assert verdict.ok, verdict.message


def test_default_has_eleven_steps():
    assert build_schedule((8, 8, 8)).num_steps == 11


def test_coverage_checker_catches_duplicates():
    schedule = build_schedule((8, 8, 8))
    steps = [(int(schedule.scale_of(i)), list(map(tuple, schedule.step_sites(i)))) for i in range(1, 12)]
    steps[3][1].append(steps[0][1][0])
    verdict = oracle.schedule_coverage_check((8, 8, 8), (2, 3, 6), steps)
    assert not verdict.ok and verdict.site == steps[0][1][0]


def test_golden_dump(testdata):
    text = build_schedule((8, 8, 8), (2, 3, 6)).dump_csv()
    assert text == (testdata / "schedule_8x8x8_2-3-6.csv").read_text()


def test_group_zero_s1_checkerboard():
    step_map = build_schedule((8, 8, 8)).step_map
    assert step_map[0, 0, 0] == 1 and step_map[0, 4, 4] == 1
    assert step_map[0, 0, 4] == 2 and step_map[0, 4, 0] == 2


@pytest.mark.parametrize("bad", [(2, 3), (3, 3, 6), (2, 0, 6), (2, 3, 7)])
def test_unsupported_allocations_rejected(bad):
    with pytest.raises(ScheduleError):
        build_schedule((8, 8, 8), bad)


@pytest.mark.parametrize("dims", [(7, 8, 8), (0, 8, 8), (8, 0, 4)])
def test_bad_dims_rejected(dims):
    with pytest.raises(ScheduleError):
        build_schedule(dims)


def test_scale_grid_roundtrip():
    x = np.arange(8 * 8 * 8, dtype=float).reshape(8, 8, 8)
    for scale in ScaleId:
        grid = to_scale_grid(x, scale)
        assert grid.shape[1:] == (8 // scale.spacing, 8 // scale.spacing)
        back = from_scale_grid(grid, np.full_like(x, -1.0), scale)
        np.testing.assert_array_equal(to_scale_grid(back, scale), grid)


def test_coarse_lattice_nests_in_finer_one():
    x = np.arange(64, dtype=float).reshape(1, 8, 8) + 1
    phase = GROUP_PHASES[2]
    s2 = downsample_to_scale(x, ScaleId.S2, phase)
    s1 = downsample_to_scale(x, ScaleId.S1, phase)
    np.testing.assert_array_equal(downsample_to_scale(s2, ScaleId.S1, phase, source=ScaleId.S2), s1)
    filled = upsample_fill(s1, np.zeros_like(s2), ScaleId.S1, phase, into_scale=ScaleId.S2)
    assert np.count_nonzero(filled) == s1.size
    np.testing.assert_array_equal(np.sort(filled[filled > 0]), np.sort(s1.ravel()))


def test_per_group_site_counts_on_8x8x8():
    schedule = build_schedule((8, 8, 8))
    for g in range(8):
        counts = {scale: sum(len(schedule.steps[i - 1].sites[g]) for i in schedule.steps_at(scale))
                  for scale in ScaleId}
        assert counts == {ScaleId.S1: 4, ScaleId.S2: 12, ScaleId.S3: 48}


def test_single_s1_cell_leaves_second_step_empty():
    schedule = build_schedule((8, 4, 4))
    assert schedule.steps[0].num_sites == 8
    assert schedule.steps[1].num_sites == 0
    assert len(schedule.step_sites(2)) == 0


def test_step_masks_partition_the_grid():
    schedule = build_schedule((16, 8, 12))
    total = np.zeros(schedule.dims, dtype=int)
    for i in range(1, schedule.num_steps + 1):
        before, current = schedule.step_mask(i)
        if i == 1:
            assert not before.any()
        assert not (before & current).any()
        np.testing.assert_array_equal(before, total > 0)
        total += current
    np.testing.assert_array_equal(total, 1)


def test_s1_phase_agrees_with_s2_phase():
    for phase in GROUP_PHASES:
        r1, c1 = phase.offset(ScaleId.S1)
        r2, c2 = phase.offset(ScaleId.S2)
        assert (r1 % 2, c1 % 2) == (r2, c2)


def test_chained_fill_matches_direct_scatter():
    x = np.arange(3 * 8 * 8, dtype=float).reshape(3, 8, 8) + 1
    for phase in GROUP_PHASES:
        s1 = downsample_to_scale(x, ScaleId.S1, phase)
        s2 = upsample_fill(s1, np.zeros((3, 4, 4)), ScaleId.S1, phase, into_scale=ScaleId.S2)
        chained = upsample_fill(s2, np.zeros_like(x), ScaleId.S2, phase)
        direct = upsample_fill(s1, np.zeros_like(x), ScaleId.S1, phase)
        np.testing.assert_array_equal(chained, direct)
        (r, c) = phase.offset(ScaleId.S1)
        expected = np.zeros_like(x)
        expected[:, r::4, c::4] = x[:, r::4, c::4]
        np.testing.assert_array_equal(direct, expected)


def test_s3_downsample_is_identity():
    x = np.arange(64.0).reshape(1, 8, 8)
    np.testing.assert_array_equal(downsample_to_scale(x, ScaleId.S3, GROUP_PHASES[5]), x)
