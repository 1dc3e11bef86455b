import math

import pytest
import torch
from colossalai.testing import parameterize
from torch.testing import assert_close

from polymer_lab.errors import DomainError
from polymer_lab.utils.lattice import coordinates, l1_norm, parity_mask, squared_norm
from polymer_lab.walk import (
    GOLDEN_PI_D,
    check_dimension,
    contract,
    difference_kernel,
    kernel_power,
    lclt_density,
    pi_d,
    propagate,
    quadrature_return_probability,
    return_probabilities,
    simple_kernel,
    step_distribution,
    table_cache,
    table_cache_dir,
    zeta_d,
    zeta_d_limit,
)


@parameterize("d", [3, 4, 5])
def check_kernels(d: int):
    simple = simple_kernel(d)
    assert len(simple.offsets) == 2 * d
    assert math.isclose(simple.total_mass(), 1.0)
    assert simple.is_symmetric()
    diff = difference_kernel(d)
    assert diff.radius == 2
    assert math.isclose(diff.total_mass(), 1.0)
    assert diff.is_symmetric()
    # staying put takes a step and its reverse
    assert math.isclose(diff.mass_at((0,) * d), 1.0 / (2 * d))


@parameterize("d", [3, 4])
@parameterize("k", [1, 2, 5])
def check_step_distribution(d: int, k: int):
    law = step_distribution(d, k)
    assert law.shape == (2 * k + 1,) * d
    assert_close(law.sum(), torch.tensor(1.0, dtype=torch.float64))
    assert law[~parity_mask(d, k, k)].abs().max().item() == 0.0


@parameterize("d", [3, 4])
def check_difference_walk(d: int):
    # S - S~ after k steps has the law of S_2k
    for k in (1, 2, 3):
        assert_close(kernel_power(difference_kernel(d), k), step_distribution(d, 2 * k))


def check_propagate_contract_adjoint():
    # <propagate(f), g> = <f, contract(g)> on a box large enough to hold both
    d, kernel = 3, simple_kernel(3)
    gen = torch.Generator().manual_seed(0)
    f = torch.rand((5, 5, 5), dtype=torch.float64, generator=gen)
    g = torch.rand((7, 7, 7), dtype=torch.float64, generator=gen)
    lhs = (propagate(f, kernel) * g).sum()
    rhs = (f * contract(g, kernel)).sum()
    assert_close(lhs, rhs)


def test_kernels():
    check_kernels()
    check_step_distribution()
    check_difference_walk()
    check_propagate_contract_adjoint()


@parameterize("d", [3, 4])
@parameterize("radius", [0, 1, 3])
def check_lattice_norms(d: int, radius: int):
    sites = coordinates(d, radius)
    assert torch.equal(squared_norm(d, radius), sites.pow(2).sum(dim=-1).to(torch.float64))
    assert torch.equal(l1_norm(d, radius), sites.abs().sum(dim=-1))
    norm = sites.abs().sum(dim=-1)
    for k in (0, 1, 2, 5):
        assert torch.equal(parity_mask(d, radius, k), (norm <= k) & (norm % 2 == k % 2))


def test_lattice_norms():
    check_lattice_norms()
    # norms are rebuilt per call, nothing keeps a box alive between steps
    assert squared_norm(3, 2) is not squared_norm(3, 2)
    assert squared_norm(3, 40).shape == (81, 81, 81)


@parameterize("d", [3, 4, 5])
def check_table_against_walk(d: int):
    table = return_probabilities(d, 16)
    assert table[0] == 1.0
    assert math.isclose(table[1], 1.0 / (2 * d), rel_tol=1e-12)
    for k in range(1, 5):
        law = step_distribution(d, 2 * k)
        assert math.isclose(table[k], law[(2 * k,) * d].item(), rel_tol=1e-10)


@parameterize("d", [3, 4])
def check_table_against_quadrature(d: int):
    table = return_probabilities(d, 8)
    for k in (1, 3, 6):
        assert math.isclose(quadrature_return_probability(d, k), table[k], rel_tol=1e-8)


def test_return_probabilities():
    check_table_against_walk()
    check_table_against_quadrature()
    ratio = return_probabilities(3, 1024).lclt_ratio()
    assert abs(ratio[999].item() - 1.0) < 5e-3


def test_table_cache(tmp_path):
    table = return_probabilities(3, 300, cache_dir=str(tmp_path))
    path = tmp_path / "return_d3_k512.pt"
    assert path.exists()
    # a persisted table is read back rather than rebuilt
    torch.save(torch.full((513,), 0.5, dtype=torch.float64), str(path))
    with table_cache(str(tmp_path)):
        assert table_cache_dir() == str(tmp_path)
        assert return_probabilities(3, 300)[1] == 0.5
        path.write_bytes(b"{")
        assert return_probabilities(3, 300)[1] == table[1]
    assert table_cache_dir() is None
    assert_close(torch.load(str(path)), return_probabilities(3, 512).p)


@parameterize("d", [3, 4, 5])
def check_pi_d(d: int):
    estimate = pi_d(d, tol=1e-5)
    assert estimate.error <= 1e-5
    assert abs(estimate.value - GOLDEN_PI_D[d]) < 2e-5


def test_walk_constants():
    assert abs(pi_d(3).value - 0.3405) < 1e-3
    check_pi_d()
    assert math.isclose(zeta_d_limit(3), 0.46657, rel_tol=1e-4)
    assert math.isclose(zeta_d_limit(4), 0.20264, rel_tol=1e-4)
    assert math.isclose(zeta_d(3, 256), zeta_d_limit(3), rel_tol=2e-2)


def test_walk_constants_converge():
    coarse = pi_d(3, tol=1e-3, k_max=1024)
    fine = pi_d(3, tol=1e-3, k_max=2048)
    assert coarse.k_max == 1024 and fine.k_max == 2048
    assert abs(coarse.value - fine.value) <= coarse.error
    gaps = [abs(zeta_d(3, 2 * n) - zeta_d(3, n)) for n in (16, 32, 64, 128)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_lclt_density():
    d = 3
    table = return_probabilities(d, 1024)
    assert math.isclose(lclt_density(d, 2000, (0, 0, 0)), table[1000], rel_tol=5e-3)
    with pytest.raises(DomainError):
        lclt_density(d, 40, (1, 0, 0))


def test_domain_errors():
    with pytest.raises(DomainError):
        check_dimension(2)
    with pytest.raises(DomainError):
        pi_d(3, tol=1e-2)
    with pytest.raises(DomainError):
        step_distribution(3, -1)


if __name__ == "__main__":
    test_kernels()
    test_return_probabilities()
    test_walk_constants()
