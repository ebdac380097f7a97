"""Subspace estimation, distances, and perturbation diagnostics."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from helpers import random_orthonormal

from ncmatch import (
    DataFormatError,
    InvalidArgumentError,
    estimate_subspace,
    read_estimate_csv,
    subspace_distance,
    wedin_check,
    write_estimate_csv,
)


def _rand_delta(d: int, k: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((d, k))


class TestEstimate:
    def test_r_zero_projection_is_exact_identity(self):
        est = estimate_subspace(_rand_delta(12, 8, 0), r=0)
        assert est.r == 0
        assert est.basis.shape == (12, 0)
        assert np.array_equal(est.projection, np.eye(12))

    def test_projection_orthonormal_idempotent_symmetric(self):
        est = estimate_subspace(_rand_delta(15, 9, 1), r=4)
        p = est.projection
        assert np.abs(p - p.T).max() <= 1e-10
        assert np.abs(p @ p - p).max() <= 1e-10
        gram = est.basis.T @ est.basis
        assert np.abs(gram - np.eye(4)).max() <= 1e-10

    def test_projection_annihilates_basis(self):
        est = estimate_subspace(_rand_delta(15, 9, 1), r=4)
        assert np.abs(est.projection @ est.basis).max() <= 1e-10

    def test_full_spectrum_retained(self):
        delta = _rand_delta(10, 6, 2)
        est = estimate_subspace(delta, r=2)
        expected = np.linalg.svd(delta, compute_uv=False)
        np.testing.assert_allclose(est.singular_values, expected, rtol=1e-12)
        assert est.singular_values.shape == (6,)

    def test_projected_energy_monotone_in_r(self):
        """Each extra retained direction removes more pair energy."""
        delta = _rand_delta(20, 12, 3)
        energies = [
            estimate_subspace(delta, r).projected_energy(delta) for r in range(13)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(energies, energies[1:]))
        assert energies[0] == pytest.approx(np.linalg.norm(delta, "fro"))
        assert energies[12] <= 1e-8

    def test_recovers_planted_spurious_directions(self):
        """Columns drawn from a 3-dim subspace are recovered exactly."""
        basis = random_orthonormal(20, 3, seed=5)
        coeffs = np.random.default_rng(6).standard_normal((3, 30))
        est = estimate_subspace(basis @ coeffs, r=3)
        assert subspace_distance(est.basis, basis) <= 1e-9

    def test_boundary_tie_flag(self):
        # Two equal singular values straddling the cut trip the flag.
        tied = np.diag([5.0, 3.0, 3.0, 1.0])
        assert estimate_subspace(tied, r=2).boundary_tie
        assert not estimate_subspace(tied, r=1).boundary_tie
        assert not estimate_subspace(tied, r=0).boundary_tie
        # Full-rank retention has no next value to tie with.
        assert not estimate_subspace(tied, r=4).boundary_tie

    def test_validation(self):
        delta = _rand_delta(6, 4, 0)
        with pytest.raises(InvalidArgumentError):
            estimate_subspace(delta, r=5)  # r > min(d, k)
        with pytest.raises(InvalidArgumentError):
            estimate_subspace(delta, r=-1)
        with pytest.raises(InvalidArgumentError):
            estimate_subspace(np.zeros((0, 3)), r=0)
        bad = delta.copy()
        bad[0, 0] = np.nan
        with pytest.raises(InvalidArgumentError):
            estimate_subspace(bad, r=1)

    def test_arrays_read_only(self):
        est = estimate_subspace(_rand_delta(6, 4, 0), r=2)
        with pytest.raises(ValueError):
            est.projection[0, 0] = 1.0
        with pytest.raises(ValueError):
            est.basis[0, 0] = 1.0


class TestDistance:
    def test_identical_bases(self):
        q = random_orthonormal(10, 3, seed=0)
        assert subspace_distance(q, q) == 0.0

    def test_rotation_invariance(self):
        q = random_orthonormal(10, 3, seed=0)
        rot = np.linalg.qr(np.random.default_rng(1).standard_normal((3, 3)))[0]
        assert subspace_distance(q, q @ rot) <= 1e-10

    def test_orthogonal_lines_are_at_distance_one(self):
        e1 = np.eye(4)[:, :1]
        e2 = np.eye(4)[:, 1:2]
        assert subspace_distance(e1, e2) == pytest.approx(1.0)

    def test_angle_gives_sine(self):
        """A line tilted by angle t sits at distance sin(t)."""
        t = math.pi / 6
        a = np.array([[1.0], [0.0]])
        b = np.array([[math.cos(t)], [math.sin(t)]])
        assert subspace_distance(a, b) == pytest.approx(math.sin(t), abs=1e-12)

    def test_empty_bases(self):
        empty = np.zeros((5, 0))
        assert subspace_distance(empty, empty) == 0.0

    def test_symmetric(self):
        a = random_orthonormal(8, 2, seed=2)
        b = random_orthonormal(8, 2, seed=3)
        assert subspace_distance(a, b) == pytest.approx(subspace_distance(b, a))

    def test_validation(self):
        a = random_orthonormal(8, 2, seed=2)
        with pytest.raises(InvalidArgumentError):
            subspace_distance(a, random_orthonormal(8, 3, seed=3))
        with pytest.raises(InvalidArgumentError):
            subspace_distance(a, np.ones((8, 2)))  # not orthonormal

    @settings(max_examples=25, deadline=None)
    @given(
        seed_a=st.integers(0, 10_000),
        seed_b=st.integers(0, 10_000),
        cols=st.integers(1, 4),
    )
    def test_symmetric_and_bounded(self, seed_a, seed_b, cols):
        a = random_orthonormal(9, cols, seed=seed_a)
        b = random_orthonormal(9, cols, seed=seed_b)
        d_ab = subspace_distance(a, b)
        assert 0.0 <= d_ab <= 1.0
        assert d_ab == pytest.approx(subspace_distance(b, a), abs=1e-12)


class TestWedin:
    def test_zero_noise(self):
        delta = _rand_delta(12, 8, 4)
        diag = wedin_check(delta, delta, s=3)
        assert diag.noise_norm == 0.0
        assert diag.wedin_bound == 0.0
        assert diag.measured_dist == 0.0
        assert diag.condition_ok

    def test_bound_dominates_measured_distance(self):
        """Under small perturbations, 2|E|/gap covers the true rotation."""
        gen = np.random.default_rng(7)
        basis = random_orthonormal(25, 4, seed=8)
        clean = basis @ np.diag([40.0, 30.0, 20.0, 10.0]) @ random_orthonormal(
            40, 4, seed=9
        ).T
        for trial in range(10):
            noise = gen.standard_normal(clean.shape)
            noise *= 0.2 / np.linalg.norm(noise, 2)
            diag = wedin_check(clean, clean + noise, s=4)
            assert diag.condition_ok
            assert diag.measured_dist <= diag.wedin_bound + 1e-12

    def test_zero_gap_gives_infinite_bound_and_false_flag(self):
        clean = np.diag([3.0, 3.0, 1.0])
        noise = np.zeros((3, 3))
        noise[0, 1] = 0.05
        diag = wedin_check(clean, clean + noise, s=1)
        assert diag.singular_gap == 0.0
        assert math.isinf(diag.wedin_bound)
        assert not diag.condition_ok

    def test_condition_threshold(self):
        """Flag flips exactly at (1 - 1/sqrt(2)) of the clean gap."""
        clean = np.diag([10.0, 2.0, 1.0])
        gap = 8.0
        factor = 1.0 - 1.0 / math.sqrt(2.0)
        bump = np.zeros((3, 3))
        bump[2, 0] = 1.0
        under = wedin_check(clean, clean + 0.99 * factor * gap * bump, s=1)
        over = wedin_check(clean, clean + 1.01 * factor * gap * bump, s=1)
        assert under.condition_ok
        assert not over.condition_ok

    def test_json_record(self):
        delta = _rand_delta(6, 5, 10)
        diag = wedin_check(delta, delta + 0.01, s=2)
        payload = json.loads(diag.to_json_record())
        assert payload["record"] == "wedin-check"
        assert payload["s"] == 2
        assert payload["condition_ok"] == diag.condition_ok
        # Non-finite bounds become null for JSON consumers.
        inf_diag = wedin_check(
            np.diag([3.0, 3.0, 1.0]),
            np.diag([3.0, 3.0, 1.0]) + np.array([[0, 0.05, 0], [0, 0, 0], [0, 0, 0]]),
            s=1,
        )
        assert json.loads(inf_diag.to_json_record())["wedin_bound"] is None

    def test_validation(self):
        delta = _rand_delta(6, 5, 10)
        with pytest.raises(InvalidArgumentError):
            wedin_check(delta, delta[:, :4], s=1)
        with pytest.raises(InvalidArgumentError):
            wedin_check(delta, delta, s=0)
        with pytest.raises(InvalidArgumentError):
            wedin_check(delta, delta, s=6)


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        est = estimate_subspace(_rand_delta(9, 7, 11), r=3)
        path = tmp_path / "estimate.csv"
        write_estimate_csv(est, path)
        back = read_estimate_csv(path)
        assert np.array_equal(back.basis, est.basis)
        assert np.array_equal(back.singular_values, est.singular_values)
        assert np.array_equal(back.projection, est.projection)
        assert back.r == est.r

    def test_round_trip_r_zero(self, tmp_path):
        est = estimate_subspace(_rand_delta(9, 7, 11), r=0)
        path = tmp_path / "estimate.csv"
        write_estimate_csv(est, path)
        back = read_estimate_csv(path)
        assert back.r == 0
        assert np.array_equal(back.projection, np.eye(9))
        assert np.array_equal(back.singular_values, est.singular_values)

    def test_malformed_file_is_format_error(self, tmp_path):
        path = tmp_path / "estimate.csv"
        path.write_text("kind,row,col,value\nmystery,0,0,1.0\n")
        with pytest.raises(DataFormatError):
            read_estimate_csv(path)
        path.write_text("kind,row,col,value\n")
        with pytest.raises(DataFormatError):
            read_estimate_csv(path)
