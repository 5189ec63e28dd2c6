import math

import numpy as np
import pytest
from scipy import stats

from sfgilbert.errors import CapacityError, FormatError, InfiniteMeanError, ParameterError
from sfgilbert.graph import build_full_graph
from sfgilbert.sampling import (
    RadiusLaw,
    instance_from_points,
    read_points,
    sample_instance,
    sample_radius,
    sample_typical_in_sum,
    sample_typical_out_sum,
    stream,
    write_points,
)
from sfgilbert.torus import unit_ball_volume


class FixedUniform:
    """Stand-in generator whose uniforms are 1 - u, so the law sees U = u."""

    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return 1.0 - self.u if size is None else np.full(size, 1.0 - self.u)


def test_pareto_inverse_cdf_examples():
    law = RadiusLaw.pareto(2, 1)
    assert sample_radius(law, FixedUniform(0.25)) == pytest.approx(2.0)
    assert sample_radius(law, FixedUniform(1.0)) == pytest.approx(1.0)
    assert law.x_m == 1.0


def test_pareto_tail_is_exact():
    law = RadiusLaw.pareto(3.0, 2.0)
    t = np.array([law.x_m, 2.0, 10.0, 1e3])
    assert np.allclose(t**3 * law.sf(t), 2.0)
    assert law.sf(0.5 * law.x_m) == 1.0


def test_radius_moment_monte_carlo():
    law = RadiusLaw.pareto(4, 1)
    r2 = law.sample(stream(1), 10**6) ** 2
    assert abs(r2.mean() - 2.0) <= 3 * r2.std(ddof=1) / 1000
    assert law.moment(2) == pytest.approx(2.0)
    assert math.isinf(law.moment(4))


def test_radii_ks_against_closed_form():
    law = RadiusLaw.pareto(2.5, 1.7)
    r = law.sample(stream(2), 10**5)
    assert r.min() >= law.x_m
    assert stats.kstest(r, law.cdf).pvalue > 1e-3


def test_mixture_law():
    law = RadiusLaw.mixture(3.0, 1.0, 0.3, 2.0, 4.0)
    assert law.s == 2.0 and law.beta == pytest.approx(0.3 * 4.0)
    r = law.sample(stream(3), 10**5)
    assert stats.kstest(r, law.cdf).pvalue > 1e-3
    assert RadiusLaw.from_description(law.describe()) == law
    with pytest.raises(ParameterError):
        RadiusLaw.mixture(3.0, 1.0, 1.5, 2.0, 4.0)


def test_same_seed_same_instance():
    law = RadiusLaw.pareto(2, 1)
    a = sample_instance(2, 16, 1.0, law, 99)
    b = sample_instance(2, 16, 1.0, law, 99)
    assert np.array_equal(a.coords, b.coords) and np.array_equal(a.radii, b.radii)
    c = sample_instance(2, 16, 1.0, law, 100)
    assert a.size != c.size or not np.array_equal(a.coords, c.coords)


def test_negligible_intensity_gives_empty_instance():
    law = RadiusLaw.pareto(2, 1)
    sizes = [sample_instance(2, 1e-5, 1.0, law, s).size for s in range(50)]
    assert sum(sizes) == 0


def test_invalid_and_capacity():
    law = RadiusLaw.pareto(2, 1)
    with pytest.raises(ParameterError):
        sample_instance(2, -1, 1.0, law, 0)
    with pytest.raises(ParameterError):
        sample_instance(2, 4, 0.0, law, 0)
    with pytest.raises(CapacityError):
        sample_instance(2, 1e5, 1.0, law, 0)


def test_points_uniform_and_in_range():
    inst = sample_instance(2, 32, 1.0, RadiusLaw.pareto(2, 1), 5)
    assert np.all(inst.coords >= -16) and np.all(inst.coords < 16)
    for k in range(2):
        assert stats.kstest(inst.coords[:, k], stats.uniform(-16, 32).cdf).pvalue > 1e-3


def test_poisson_point_counts_across_seeds():
    law = RadiusLaw.pareto(2, 1)
    counts = np.array([sample_instance(2, 32, 1.0, law, s).size for s in range(10_000)])
    assert abs(counts.mean() - 1024) <= 3 * math.sqrt(1024 / len(counts))
    assert 0.95 <= counts.var(ddof=1) / counts.mean() <= 1.05


def test_typical_out_sum_zero_radius():
    law = RadiusLaw.pareto(2, 1)
    assert sample_typical_out_sum(1.0, law, stream(0), radius=0.0) == 0.0


def test_typical_out_degree_given_radius_is_poisson():
    law = RadiusLaw.pareto(2, 1)
    r = 1.7
    k = sample_typical_out_sum(0.0, law, stream(4), size=50_000, radius=r).astype(int)
    mean = unit_ball_volume(2) * r**2
    top = int(stats.poisson.ppf(0.999, mean))
    obs = np.bincount(np.minimum(k, top), minlength=top + 1)
    exp = stats.poisson.pmf(np.arange(top + 1), mean)
    exp[-1] = stats.poisson.sf(top - 1, mean)
    assert stats.chisquare(obs, exp * len(k)).pvalue > 1e-3


def test_typical_out_sum_mean_matches_moment_formula():
    law = RadiusLaw.pareto(5, 1)
    x = sample_typical_out_sum(1.0, law, stream(5), size=10**6)
    assert abs(x.mean() - 5 * math.pi / 3) <= 3 * x.std(ddof=1) / 1000


def test_typical_in_degree_mean():
    law = RadiusLaw.pareto(4, 1)
    k = sample_typical_in_sum(0.0, law, stream(6), size=10**5)
    assert abs(k.mean() - 2 * math.pi) <= 3 * k.std(ddof=1) / math.sqrt(len(k))


def test_typical_in_sum_needs_s_above_d():
    with pytest.raises(InfiniteMeanError):
        sample_typical_in_sum(1.0, RadiusLaw.pareto(2, 1), stream(0), size=10)


def test_in_neighbor_distances_follow_campbell_density():
    # with alpha=1 and one in-neighbor at most, the sum is that neighbor's distance
    law = RadiusLaw.pareto(4, 1)
    from sfgilbert.sampling import _in_neighbor_distance_icdf

    u = _in_neighbor_distance_icdf(law, 2, stream(7), 50_000)
    total = law.power_sf_integral(1, 0, math.inf)
    cdf = np.vectorize(lambda t: law.power_sf_integral(1, 0, t) / total)
    assert stats.kstest(u, cdf).pvalue > 1e-3


def test_typical_in_degree_matches_full_torus_vertices():
    law = RadiusLaw.pareto(4, 1)
    full = []
    for s in range(40):
        inst = sample_instance(2, 48, 1.0, law, s)
        g = build_full_graph(inst)
        deg = g.in_degrees()
        pick = stream(s, 1).choice(inst.size, size=50, replace=False)
        full.extend(deg[pick].tolist())
    typical = sample_typical_in_sum(0.0, law, stream(8), size=10**5)
    assert stats.ks_2samp(full, typical).pvalue > 1e-3


def test_point_file_roundtrip(tmp_path):
    inst = sample_instance(2, 6, 1.0, RadiusLaw.pareto(2.5, 1.5), 11)
    path = tmp_path / "pts.txt"
    write_points(inst, path)
    back = read_points(path)
    assert back.n == inst.n and back.d == inst.d and back.seed == 11
    assert np.array_equal(back.coords, inst.coords) and np.array_equal(back.radii, inst.radii)
    assert back.law == inst.law


def test_point_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 1.0 2.0 0.5\n")
    with pytest.raises(FormatError):
        read_points(p)
    p.write_text("# d=2 n=4 lambda=1 s=2 beta=1 seed=0\n0 1.0 0.5\n")
    with pytest.raises(FormatError):
        read_points(p)


def test_hand_built_instance_ids(three_points):
    assert list(three_points.ids) == [0, 1, 2]
    assert three_points.point(1).radius == 1.0
    with pytest.raises(ParameterError):
        three_points.index_of(7)
    shuffled = instance_from_points([((0, 0), 1.0)], 4).with_points([[1, 1], [0, 0]], [2.0, 1.0], ids=[9, 3])
    assert list(shuffled.ids) == [3, 9] and shuffled.radii[0] == 1.0
