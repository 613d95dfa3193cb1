import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from clipflow.clipcore import ClipBounds
from clipflow.errors import DegenerateKernelError, DimensionError, UnsupportedGrowthError
from clipflow.field import ScalarField, constant_field, random_field, single_cell_field, sup_distance
from clipflow.operators import (
    ConstantGrowth,
    ExpBumpKernel,
    GaussianBump,
    GoLGrowth,
    GoLKernel,
    Rectifier,
    RingSumKernel,
    TableGrowth,
    TableKernel,
    convolve,
    convolve_direct,
    convolve_fft,
    discretize_kernel,
    effective_max_abs,
    fft_eligible,
    from_weights,
    growth_eval,
    kernel_as_field,
    kernel_profile,
    lipschitz_bound,
    nonpositive_radius,
)


def quad_loop_convolution(values, weights):
    """out[y, x] = sum_{j, i} K[j, i] f[y - j, x - i], offsets row-major, zero weights skipped."""
    h, w = values.shape
    r = weights.shape[0] // 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for j in range(-r, r + 1):
                for i in range(-r, r + 1):
                    k = weights[j + r, i + r]
                    if k != 0.0:
                        acc += k * values[(y - j) % h, (x - i) % w]
            out[y, x] = acc
    return out


def test_gol_kernel():
    K = discretize_kernel(GoLKernel())
    assert K.l1_norm == 8.5
    assert K.center_weight == 0.5 and K.diameter == 3
    assert discretize_kernel(GoLKernel(normalize=True)).l1_norm == pytest.approx(1.0, abs=1e-15)


def test_expbump_normalized_and_converging():
    K = discretize_kernel(ExpBumpKernel(1.0, normalize=True), 1 / 32)
    assert abs(K.l1_norm - 1.0) <= 1e-12
    l1 = {n: discretize_kernel(ExpBumpKernel(1.0), 1 / n).l1_norm for n in (16, 32, 64, 256)}
    assert abs(l1[64] / l1[32] - 1.0) <= 0.02
    # quadrature oracle for the continuum integral 2 pi int_0^1 r K(r) dr
    exact, _ = integrate.quad(lambda r: 2 * math.pi * r * kernel_profile(ExpBumpKernel(), r), 0, 1, limit=200)
    assert abs(l1[256] / exact - 1.0) <= 0.02
    assert abs(l1[64] / l1[256] - 1.0) <= 0.02


def test_expbump_support_and_radius():
    K = discretize_kernel(ExpBumpKernel(1.0), 1 / 16)
    assert K.radius_cells == 15
    assert K.weights[15, 15] == 0.0  # profile vanishes at r = 0
    assert K.nonnegative
    # every nonzero weight sits strictly inside the reported support radius
    off = (np.argwhere(K.weights != 0) - 15) / 16
    assert np.sqrt((off**2).sum(axis=1)).max() < K.support_radius_space


def test_degenerate_kernel():
    with pytest.raises(DegenerateKernelError):
        discretize_kernel(ExpBumpKernel(1.0), 1.0)
    with pytest.raises(DegenerateKernelError):
        from_weights(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        from_weights(np.ones((2, 2)))


def test_ring_kernel_truncation():
    spec = RingSumKernel(1.0, (0.25, 0.75), (1.0, 0.5), (0.005, 0.005), normalize=True)
    K = discretize_kernel(spec, 1 / 16)
    assert abs(K.l1_norm - 1.0) <= 1e-12
    assert spec.k == 2
    r = K.radius_cells
    assert 0 < r < 32


def test_table_kernel_and_l1_oracle():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(7, 7))
    K = discretize_kernel(TableKernel(3, tuple(w.ravel())))
    assert np.array_equal(K.weights, w)
    assert abs(K.l1_norm - math.fsum(np.abs(w).ravel().tolist())) <= 1e-12 * K.l1_norm
    with pytest.raises(ValueError):
        TableKernel(1, (1.0, 2.0))


def test_kernel_as_field():
    K = discretize_kernel(GoLKernel())
    m = kernel_as_field(K)
    assert len(m) == 1 and np.array_equal(m[0].values, K.weights)


def test_growth_examples():
    assert GaussianBump(0.5, 1.0)(0.5) == 1.0
    G = GoLGrowth()
    assert G(3.5) == 1.0 and G(3.50000001) == -1.0 and G(2.0) == -1.0 and G(2.5) == 1.0
    assert np.array_equal(ConstantGrowth(0.3)(np.zeros((2, 2))), np.full((2, 2), 0.3))
    assert Rectifier(2.0)(np.array([-1.0, 1.0, 3.0])).tolist() == [0.0, 1.0, 2.0]
    T = TableGrowth(((0.0, -1.0), (1.0, 1.0)))
    assert T(0.5) == 0.0 and T(-3.0) == -1.0 and T(9.0) == 1.0
    u = ScalarField(np.full((2, 2), 0.5))
    assert np.all(growth_eval(GaussianBump(0.5, 1.0), u).values == 1.0)


def test_lipschitz_bounds():
    Kn = discretize_kernel(ExpBumpKernel(1.0, normalize=True), 1 / 16)
    Kg = discretize_kernel(GoLKernel())
    assert lipschitz_bound(ConstantGrowth(0.7), Kn) == 0.0
    assert lipschitz_bound(Rectifier(), Kg) == 8.5
    with pytest.raises(UnsupportedGrowthError):
        lipschitz_bound(GoLGrowth(), Kg)
    # dense numeric max of |G'| by central differences
    G = GaussianBump(0.15, 0.015)
    u = np.linspace(0.15 - 5 * 0.015, 0.15 + 5 * 0.015, 2_000_001)
    h = 1e-7
    numeric = float(np.max(np.abs(G(u + h) - G(u - h)) / (2 * h)))
    assert abs(lipschitz_bound(G, Kn) - numeric) <= 1e-6
    assert numeric == pytest.approx(80.88, abs=0.01)


def test_table_growth_lipschitz_and_max():
    T = TableGrowth(((0.0, 0.0), (0.1, 1.0), (0.3, -1.0)))
    assert T.lipschitz_constant == pytest.approx(10.0)
    assert T.max_abs == 1.0 and T.max_positive == 1.0


def test_effective_max_abs():
    K = discretize_kernel(GoLKernel())
    assert effective_max_abs(Rectifier(), K, 1.0) == 8.5
    assert effective_max_abs(Rectifier(2.0), K, 1.0) == 2.0
    assert effective_max_abs(GaussianBump(), K) == 1.0


@pytest.mark.parametrize(
    "G",
    [GaussianBump(0.15, 0.015), GaussianBump(0.3, 0.05), TableGrowth(((-1.0, 0.0), (0.2, -0.5), (0.6, 1.0))),
     TableGrowth(((-0.5, 1.0), (-0.1, -1.0), (0.4, -0.2), (0.5, 0.3)))],
)
def test_nonpositive_radius_scan(G):
    a = nonpositive_radius(G)
    u = np.linspace(-a, a, 200_001)
    assert np.all(G(u) <= 1e-12)
    # just beyond a, G turns positive on at least one side
    eps = 1e-6
    assert max(float(G(a + eps)), float(G(-a - eps))) > 0


def test_nonpositive_radius_special():
    assert nonpositive_radius(Rectifier()) == 0.0
    assert nonpositive_radius(ConstantGrowth(-1.0)) == math.inf
    assert nonpositive_radius(ConstantGrowth(0.5)) == 0.0


def test_convolution_examples():
    K = discretize_kernel(ExpBumpKernel(1.0), 1 / 8)
    f = constant_field(0.3, 32, 32, 1 / 8)
    assert np.allclose(convolve_direct(f, K).values, 0.3 * K.l1_norm, rtol=0, atol=1e-14)
    delta = single_cell_field(32, 32, 1 / 8, x=5, y=7)
    out = convolve_direct(delta, K).values
    r = K.radius_cells
    # impulse response: out(p + y) = K(y)
    stamp = np.roll(np.roll(out, -7 + r, axis=0), -5 + r, axis=1)[: 2 * r + 1, : 2 * r + 1]
    assert np.array_equal(stamp, K.weights)
    fft_out = convolve_fft(delta, K).values
    assert np.max(np.abs(fft_out - out)) <= 1e-12
    zero = convolve_fft(constant_field(0.0, 32, 32, 1 / 8), K).values
    assert np.max(np.abs(zero)) <= 1e-14
    with pytest.raises(DimensionError):
        convolve_direct(constant_field(0.0, 8, 8, 1 / 8), K)


def test_convolution_orientation_asymmetric():
    w = np.zeros((3, 3))
    w[1, 2] = 1.0  # offset (dy=0, dx=+1)
    K = from_weights(w)
    f = single_cell_field(5, 4, x=1, y=2)
    out = convolve(f, K, "direct").values
    assert out[2, 2] == 1.0 and out.sum() == 1.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_direct_matches_quadruple_loop_exactly(seed):
    rng = np.random.default_rng(seed)
    f = random_field(32, 32, seed=seed)
    w = rng.normal(size=(5, 5))
    w[rng.random((5, 5)) < 0.3] = 0.0
    w[2, 2] = 1.0
    K = from_weights(w)
    assert np.array_equal(convolve_direct(f, K).values, quad_loop_convolution(f.values, w))


def _random_kernel(rng, dx):
    kind = rng.integers(3)
    if kind == 0:
        return discretize_kernel(ExpBumpKernel(float(rng.uniform(0.3, 1.0)), bool(rng.integers(2))), dx)
    if kind == 1:
        return discretize_kernel(RingSumKernel(float(rng.uniform(0.3, 0.8)), (0.5,), (1.0,), (0.01,)), dx)
    r = int(rng.integers(1, 6))
    return from_weights(rng.normal(size=(2 * r + 1, 2 * r + 1)), dx)


def test_fft_matches_direct_100_cases():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for case in range(100):
        shape = [(64, 64), (32, 64), (64, 32), (32, 32)][case % 4]
        dx = 1 / 16
        K = _random_kernel(rng, dx)
        if K.diameter > min(shape):
            shape = (64, 64)
        f = random_field(shape[1], shape[0], dx, seed=case)
        assert fft_eligible(shape, K)
        worst = max(worst, sup_distance(convolve_fft(f, K), convolve_direct(f, K)))
    assert worst <= 1e-10


def test_fft_falls_back_on_odd_grids():
    K = discretize_kernel(GoLKernel())
    f = random_field(30, 20, seed=1)
    assert not fft_eligible(f.shape, K)
    assert np.array_equal(convolve_fft(f, K).values, convolve_direct(f, K).values)


def test_fft_deterministic_across_thread_counts(monkeypatch):
    K = discretize_kernel(ExpBumpKernel(1.0, normalize=True), 1 / 16)
    f = random_field(256, 256, 1 / 16, seed=3)
    outs = []
    for threads in ("1", "4", "0"):
        monkeypatch.setenv("CLIPFLOW_THREADS", threads)
        outs.append(convolve_fft(f, K).values.tobytes())
    assert outs[0] == outs[1] == outs[2]


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 50))
def test_convolution_linear(a, b, seed):
    K = discretize_kernel(GoLKernel())
    f = random_field(8, 8, seed=seed).values
    g = random_field(8, 8, seed=seed + 1).values
    from clipflow.operators import convolve_array

    lhs = convolve_array(a * f + b * g, K, "direct")
    rhs = a * convolve_array(f, K, "direct") + b * convolve_array(g, K, "direct")
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + abs(a) + abs(b)) * 17


LIPSCHITZ_GROWTHS = [
    GaussianBump(0.15, 0.015),
    GaussianBump(0.3, 0.05),
    ConstantGrowth(0.4),
    Rectifier(),
    Rectifier(0.7),
    TableGrowth(((-1.0, 0.0), (0.2, -0.5), (0.6, 1.0))),
]


@pytest.mark.parametrize("G", LIPSCHITZ_GROWTHS, ids=lambda g: type(g).__name__)
def test_growth_lipschitz_million_pairs(G):
    rng = np.random.default_rng(11)
    u = rng.uniform(-1.0, 2.0, 1_000_000)
    # half the pairs are close neighbours, where the derivative bound is tight
    v = np.where(np.arange(u.size) % 2 == 0, rng.uniform(-1.0, 2.0, u.size), u + rng.normal(0, 1e-3, u.size))
    lhs = np.abs(G(u) - G(v))
    rhs = G.lipschitz_constant * np.abs(u - v)
    # 1e-12 covers rounding in the evaluation of G itself
    assert int(np.count_nonzero(lhs > rhs + 1e-12)) == 0


@pytest.mark.parametrize("G", [GaussianBump(0.15, 0.015), GaussianBump(0.3, 0.05), GoLGrowth(),
                               ConstantGrowth(-0.8), Rectifier(0.7),
                               TableGrowth(((-1.0, 0.0), (0.2, -0.5), (0.6, 1.0)))],
                         ids=lambda g: type(g).__name__)
def test_growth_respects_max_abs(G):
    u = np.random.default_rng(12).uniform(-10.0, 10.0, 200_000)
    assert float(np.max(np.abs(G(u)))) <= G.max_abs


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(0.1, 50.0))
def test_young_bound(seed, radius, amp):
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 1.0, (2 * radius + 1, 2 * radius + 1))
    K = from_weights(weights)
    f = ScalarField(rng.uniform(-amp, amp, (16, 16)), bounds=ClipBounds(-amp, amp))
    out = convolve(f, K)
    assert float(np.max(np.abs(out.values))) <= K.l1_norm * float(np.max(np.abs(f.values))) + 1e-12
