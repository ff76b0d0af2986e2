import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspin import (IntegratorConfig, MixtureSpec, ModelParams, NonCrossingInvolution, SeriesConfig,
                   TruncationError, TwoTimeField, catalan, enumerate_nc, h_series, integrate,
                   response_from_series)
from pspin.model import tri_offset
from pspin.series import constant_kernel_series, has_crossing, semicircle_bound, stack_match, tail_bound

CATALAN = [1, 1, 2, 5, 14, 42, 132, 429, 1430]  # OEIS A000108


def brute_force_nc(n):
    """Every perfect matching of 2n points, filtered by the crossing test."""
    out = set()

    def rec(free, pairing):
        if not free:
            out.add(tuple(pairing))
            return
        i = free[0]
        for j in free[1:]:
            p = list(pairing)
            p[i], p[j] = j, i
            rec([k for k in free if k not in (i, j)], p)

    rec(list(range(2 * n)), [-1] * (2 * n))
    return {p for p in out if not has_crossing(p)}


def test_catalan_numbers():
    assert [catalan(n) for n in range(9)] == CATALAN


@pytest.mark.parametrize("n", range(1, 9))
def test_enumeration_counts_and_validity(n):
    nc = enumerate_nc(n)
    assert len(nc) == CATALAN[n]
    assert len({s.pairing for s in nc}) == len(nc)
    for s in nc:
        assert not has_crossing(s.pairing)
        assert all(s.pairing[s.pairing[i]] == i != s.pairing[i] for i in range(2 * n))


@pytest.mark.parametrize("n", range(1, 6))
def test_enumeration_matches_brute_force(n):
    assert {s.pairing for s in enumerate_nc(n)} == brute_force_nc(n)


def test_enumeration_bounds():
    for bad in (0, 9, 2.5):
        with pytest.raises(ValueError):
            enumerate_nc(bad)


def test_involution_validation():
    NonCrossingInvolution(2, (3, 2, 1, 0))
    with pytest.raises(ValueError):
        NonCrossingInvolution(2, (2, 3, 0, 1))  # crossing
    with pytest.raises(ValueError):
        NonCrossingInvolution(2, (0, 2, 1, 3))  # fixed points
    with pytest.raises(ValueError):
        NonCrossingInvolution(2, (1, 0))


@given(st.lists(st.booleans(), min_size=2, max_size=16))
def test_stack_matching_yields_non_crossing_pairings(word):
    p = stack_match([int(w) for w in word])
    opens = sum(word)
    balanced = all(sum(word[:k]) >= k - sum(word[:k]) for k in range(len(word) + 1)) \
        and 2 * opens == len(word)
    assert (p is not None) == balanced
    if p is not None:
        assert not has_crossing(p)
        for i, w in enumerate(word):
            assert (p[i] > i) == bool(w)


@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 2.0])
def test_constant_kernel_series_equals_semicircle_moment(a):
    assert constant_kernel_series(a) == pytest.approx(semicircle_bound(a), rel=1e-10, abs=1e-10)


@given(st.floats(0.0, 3.0), st.integers(1, 8))
def test_tail_bound_is_the_remainder(a, n):
    full = constant_kernel_series(a)
    assert abs(full - constant_kernel_series(a, n) - tail_bound(a, n)) <= 1e-12 * full


def constant_field(n, dt, value=1.0):
    return TwoTimeField(n, dt, "symmetric", np.full(tri_offset(n), value))


@pytest.mark.parametrize("beta,tau", [(0.3, 1.0), (0.8, 0.5)])
def test_h_series_exact_for_constant_kernel(beta, tau):
    dt = 0.05
    C = constant_field(int(round(tau / dt)) + 1, dt, 0.7)
    mix = MixtureSpec.pure(2)  # nu'' = 1
    cfg = SeriesConfig(n_max=4, tail_tol=1.0)
    H, terms = h_series(C, beta, mix, tau, 0.0, cfg, return_terms=True)
    assert len(terms) == 5
    assert H == pytest.approx(constant_kernel_series(beta * tau, 4), rel=1e-13)


def test_h_series_trivial_cases():
    C = constant_field(11, 0.1)
    assert h_series(C, 0.0, MixtureSpec.pure(3), 1.0, 0.0) == 1.0
    assert h_series(C, 0.5, MixtureSpec.pure(3), 0.5, 0.5) == 1.0
    with pytest.raises(ValueError):
        h_series(C, 0.5, MixtureSpec.pure(3), 0.55, 0.0)
    with pytest.raises(ValueError):
        h_series(C, 0.5, MixtureSpec.pure(3), 0.2, 0.5)


def test_truncation_guard():
    C = constant_field(41, 0.1)
    with pytest.raises(TruncationError):
        h_series(C, 2.0, MixtureSpec.pure(2), 4.0, 0.0, SeriesConfig(n_max=2, tail_tol=1e-6))


def test_response_from_series_free_case():
    mu = np.full(11, 0.5)
    assert response_from_series(mu, 1.0, 1.0, 0.0, 0.1) == pytest.approx(np.exp(-0.5), rel=1e-14)


def test_series_matches_integrator_response():
    p = ModelParams(0.2, 0.1, MixtureSpec.pure(3), alpha=0.3)
    b = integrate(p, IntegratorConfig(0.02, 1.0))
    for s, t in itertools.product((0.6, 1.0), (0.0, 0.2)):
        H = h_series(b.C, p.beta, p.mixture, s, t, SeriesConfig(n_max=3))
        rs = response_from_series(b.mu, H, s, t, b.dt)
        ri = b.R[int(round(s / b.dt)), int(round(t / b.dt))]
        assert abs(rs - ri) / ri <= 1e-3


def test_series_config_validation():
    with pytest.raises(ValueError):
        SeriesConfig(n_max=9)
    with pytest.raises(ValueError):
        SeriesConfig(simplex_nodes=1)
    with pytest.raises(ValueError):
        SeriesConfig(tail_tol=0.0)
