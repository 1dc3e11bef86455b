import math
import os

import pytest
import torch
from colossalai.testing import parameterize
from torch.testing import assert_close

from polymer_lab.environment import EnvironmentField, create_named_family, omega, temperature_profile
from polymer_lab.errors import DomainError, ResourceError
from polymer_lab.experiments.statistics import summarize
from polymer_lab.oracle import exact_increment_variance
from polymer_lab.polymer import (
    PolymerState,
    export_slab,
    homogenized_inner_sum,
    increment_bracket,
    llt_residual,
    load_slab,
    partition_function,
    residual_from_state,
    reversed_partition,
    reversed_partition_slab,
    window_return_mass,
    window_sites,
)
from polymer_lab.utils.lattice import parity_mask
from polymer_lab.walk import return_probabilities, step_distribution

GAUSSIAN = create_named_family("gaussian")


def _setup(beta: float, d: int = 3, seed: int = 1):
    return EnvironmentField(seed, GAUSSIAN), temperature_profile(GAUSSIAN, beta, d)


@parameterize("d", [3, 4])
def check_zero_temperature(d: int):
    field, profile = _setup(0.0, d)
    for w in partition_function(field, profile, 6):
        assert w == pytest.approx(1.0, abs=1e-12)


def test_partition_function():
    check_zero_temperature()
    field, profile = _setup(0.4)
    w1 = partition_function(field, profile, 1)[1]
    neighbours = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    expected = math.fsum(math.exp(0.4 * omega(field, 1, x) - profile.lambda_) for x in neighbours) / 6.0
    assert w1 == pytest.approx(expected, rel=1e-13)
    assert partition_function(field, profile, 12) == partition_function(field, profile, 12)
    with pytest.raises(DomainError):
        partition_function(field, profile, -1)


def test_martingale_mean():
    _, profile = _setup(0.4)
    values = [partition_function(EnvironmentField(seed, GAUSSIAN), profile, 8)[8] for seed in range(300)]
    mean = math.fsum(values) / len(values)
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))
    assert abs(mean - 1.0) < 4.0 * sd / math.sqrt(len(values))


def test_slab_support():
    field, profile = _setup(0.4)
    state = PolymerState(field, profile)
    for _ in range(12):
        state.step()
        assert state.slab[~parity_mask(3, state.radius, state.k)].abs().max().item() == 0.0
    _, cold = _setup(0.0)
    state = PolymerState(field, cold)
    for k in range(1, 21):
        state.step()
        assert_close(state.slab, step_distribution(3, k), rtol=0.0, atol=1e-12)


def test_increment_moments():
    _, profile = _setup(0.4)
    grid = (4, 8, 16)
    increments, brackets = {k: [] for k in grid}, {k: [] for k in grid}
    for seed in range(400):
        state = PolymerState(EnvironmentField(seed, GAUSSIAN), profile)
        while True:
            if state.k in increments:
                record = increment_bracket(state, alpha=2.0)
                increments[state.k].append(record.D)
                brackets[state.k].append(record.bracket)
            if state.k == grid[-1]:
                break
            state.step()
    for k in grid:
        increment = summarize(increments[k])
        assert abs(increment.mean) < 4.0 * increment.standard_error
        bracket = summarize(brackets[k])
        assert abs(bracket.mean - exact_increment_variance(3, profile.lambda2, k)) < 3.0 * bracket.standard_error


def test_increment_bracket():
    field, profile = _setup(0.4)
    state = PolymerState(field, profile)
    first = increment_bracket(state, alpha=2.0)
    assert first.bracket == pytest.approx(profile.kappa2 / 6.0, rel=1e-13)
    for _ in range(10):
        before = state.W
        record = increment_bracket(state, alpha=2.0, alphas=(1.0, 2.0, 4.0, 8.0))
        assert record.k == state.k
        state.step()
        assert state.W - before == pytest.approx(record.D, abs=1e-13)
        assert record.windows[1] == record.window_mass
        assert all(a >= b for a, b in zip(record.windows, record.windows[1:]))
        assert 0.0 <= record.window_mass <= record.bracket


def test_clipping_and_budget():
    field, profile = _setup(0.0)
    state = PolymerState(field, profile, radius_cap=3)
    for _ in range(10):
        state.step()
    assert state.radius == 3
    assert state.clipped_mass > 0.0
    assert state.W + state.clipped_mass == pytest.approx(1.0, abs=1e-12)
    assert not state.certified(1e-6)
    small = PolymerState(field, profile, max_cells=1000)
    with pytest.raises(ResourceError) as info:
        for _ in range(10):
            small.step()
    assert info.value.reached == 4


def test_reversed_partition():
    field, profile = _setup(0.4)
    sites = torch.tensor([[0, 0, 0], [1, -1, 0]])
    one_step = reversed_partition(field, profile, anchor=5, l=1, sites=sites)
    offsets = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    for x, value in zip(sites.tolist(), one_step.values.tolist()):
        expected = math.fsum(
            math.exp(0.4 * omega(field, 4, [a + b for a, b in zip(x, e)]) - profile.lambda_) for e in offsets
        )
        assert value == pytest.approx(expected / 6.0, rel=1e-13)
    assert_close(reversed_partition_slab(field, profile, 5, 0, 2), torch.ones(5, 5, 5, dtype=torch.float64))
    _, cold = _setup(0.0)
    assert_close(reversed_partition_slab(field, cold, 9, 4, 2), torch.ones(5, 5, 5, dtype=torch.float64))
    with pytest.raises(DomainError):
        reversed_partition_slab(field, profile, 4, 4, 2)


def test_reversed_partition_law():
    # <-W^0_{k+1,l} has the law of W_l
    _, profile = _setup(0.4)
    origin = torch.zeros(1, 3, dtype=torch.int64)
    reversed_values = [
        reversed_partition(EnvironmentField(seed, GAUSSIAN), profile, 9, 3, origin).values.item() for seed in range(300)
    ]
    mean = math.fsum(reversed_values) / len(reversed_values)
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in reversed_values) / (len(reversed_values) - 1))
    assert abs(mean - 1.0) < 4.0 * sd / math.sqrt(len(reversed_values))


def test_llt_residual():
    field, cold = _setup(0.0)
    residual = llt_residual(field, cold, k=8, l_k=3, alpha=4.0)
    assert residual.delta.numel() > 0
    assert residual.delta.abs().max().item() < 1e-12
    _, profile = _setup(0.4)
    warm = llt_residual(field, profile, k=8, l_k=3, alpha=4.0)
    assert warm.sites.shape == (warm.delta.numel(), 3)
    assert warm.delta.abs().max().item() > 0.0
    state = PolymerState(field, profile)
    with pytest.raises(DomainError):
        residual_from_state(state, 1.0, 0, 4.0)
    with pytest.raises(DomainError):
        llt_residual(field, profile, k=8, l_k=4, alpha=4.0)


def test_llt_residual_is_centred():
    field, profile = _setup(0.4)
    residuals = [llt_residual(EnvironmentField(seed, GAUSSIAN), profile, k=8, l_k=3, alpha=2.0) for seed in range(300)]
    sites = residuals[0].sites
    assert torch.equal(sites, window_sites(3, 8, 2.0))
    stacked = torch.stack([r.delta for r in residuals])
    pooled = summarize(stacked.mean(dim=1).tolist())
    assert abs(pooled.mean) < 3.0 * pooled.standard_error
    # S_9 never sits at the origin; the nearest sites of the window are its neighbours
    assert residuals[0].skipped > 0
    norms = sites.pow(2).sum(dim=-1)
    assert norms.min().item() == 1
    nearest = summarize(stacked[:, int(norms.argmin().item())].tolist())
    assert abs(nearest.mean) < 3.0 * nearest.standard_error
    even = llt_residual(field, profile, k=7, l_k=3, alpha=2.0)
    assert (even.sites.abs().sum(dim=-1) == 0).any()


def test_window_return_mass():
    table = return_probabilities(3, 16)
    wide = window_return_mass(3, 10, 100.0)
    for k in range(1, 10):
        assert wide[k] == pytest.approx(table[k + 1], rel=1e-12)
    narrow = window_return_mass(3, 10, 1.0)
    assert all(a <= b for a, b in zip(narrow, wide))
    field, cold = _setup(0.0)
    assert homogenized_inner_sum(field, cold, 16, 4, 6.0) == pytest.approx(window_return_mass(3, 17, 6.0)[16], rel=1e-12)


def test_snapshot(tmp_path):
    field, profile = _setup(0.4)
    state = PolymerState(field, profile)
    for _ in range(5):
        state.step()
    path = os.path.join(tmp_path, "slab.bin")
    export_slab(state, path)
    assert os.path.getsize(path) == 32 + 8 * state.slab.numel()
    header, slab = load_slab(path)
    assert header == {"d": 3, "k": 5, "radius": 5, "parity": 1}
    assert_close(slab, state.slab, rtol=0, atol=0)


if __name__ == "__main__":
    test_partition_function()
    test_increment_bracket()
    test_reversed_partition()
