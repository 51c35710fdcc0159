"""
Tests for the measurement matrices.
"""

import numpy as np
import pandas as pd
import pytest

from stealth_grid.grid_jacobian import (
    OperatingPoint,
    RowKind,
    ac_jacobian_at,
    dc_jacobian,
    flat_start,
    full_angles,
    perturb_point,
)
from stealth_grid.matpower_ingest import bundled_case, parse_case
from stealth_grid.utils.errors import DimensionError, RegimeError


class TestDCJacobian:
    """DC measurement matrix structure."""

    def test_toy_matrix(self, toy_h):
        """Test the two-bus matrix against the hand-derived (1, -1, 1, -1)^T."""
        np.testing.assert_array_equal(toy_h.h, np.array([[1.0], [-1.0], [1.0], [-1.0]]))
        assert toy_h.state_labels == (1,)

    @pytest.mark.parametrize(
        "name, m, n, rank",
        [("case14", 54, 13, 13), ("case30", 112, 29, 29), ("case118", 490, 117, 117)],
    )
    def test_bundled_shapes_and_rank(self, name, m, n, rank):
        """Test m = n_bus + 2 n_branch, n = n_bus - 1 and full column rank."""
        h = dc_jacobian(bundled_case(name))
        assert (h.m, h.n) == (m, n)
        assert h.rank() == rank

    def test_row_order(self, case14, case14_h):
        """Test injections first in bus order, then forward/reverse flow pairs."""
        labels = case14_h.row_labels
        assert labels[: case14.n_bus] == tuple((RowKind.INJECTION, bus.id) for bus in case14.buses)
        assert labels[case14.n_bus] == (RowKind.FLOW_FWD, 0)
        assert labels[case14.n_bus + 1] == (RowKind.FLOW_REV, 0)
        assert len(case14_h.rows_of(RowKind.FLOW_FWD)) == 20

    def test_reverse_flow_negates_forward(self, case14_h):
        """Test that each reverse-flow row is the negated forward row."""
        fwd = case14_h.h[case14_h.rows_of(RowKind.FLOW_FWD)]
        rev = case14_h.h[case14_h.rows_of(RowKind.FLOW_REV)]
        np.testing.assert_array_equal(rev, -fwd)

    def test_injections_balance(self, case14_h):
        """Test that bus injections sum to zero (lossless DC model)."""
        injections = case14_h.h[case14_h.rows_of(RowKind.INJECTION)]
        np.testing.assert_allclose(injections.sum(axis=0), 0.0, atol=1e-9)

    @pytest.mark.parametrize("name", ["case14", "case30", "case118"])
    def test_degree_one_injection(self, name):
        """Test that a degree-1 bus injection equals its single outgoing flow row."""
        case = bundled_case(name)
        h = dc_jacobian(case)
        degree = {}
        for k, br in case.in_service_branches():
            for end in (br.from_bus, br.to_bus):
                degree.setdefault(end, []).append(k)
        leaves = [bus for bus, ks in degree.items() if len(ks) == 1]
        row_of = {label: r for r, label in enumerate(h.row_labels)}
        for bus in leaves:
            k = degree[bus][0]
            br = case.branches[k]
            kind = RowKind.FLOW_FWD if br.from_bus == bus else RowKind.FLOW_REV
            np.testing.assert_array_equal(h.h[row_of[(RowKind.INJECTION, bus)]], h.h[row_of[(kind, k)]])

    def test_flow_entries_are_susceptances(self, case14, case14_h):
        """Test that the first flow row holds +-1/x on its endpoints."""
        br = case14.branches[0]
        row = case14_h.h[case14_h.rows_of(RowKind.FLOW_FWD)[0]]
        col = {bus: k for k, bus in enumerate(case14_h.state_labels)}
        if br.from_bus in col:
            assert row[col[br.from_bus]] == pytest.approx(1.0 / br.reactance_x)
        if br.to_bus in col:
            assert row[col[br.to_bus]] == pytest.approx(-1.0 / br.reactance_x)

    def test_out_of_service_branch_skipped(self, toy_case_text):
        """Test that out-of-service branches contribute no rows."""
        text = toy_case_text.replace(
            "1\t2\t0\t1.0\t0\t0\t0\t0\t0\t0\t1;",
            "1\t2\t0\t1.0\t0\t0\t0\t0\t0\t0\t1;\n\t1\t2\t0\t2.0\t0\t0\t0\t0\t0\t0\t0;",
        )
        case = parse_case(text)
        assert len(case.branches) == 2
        assert dc_jacobian(case).m == 4

    def test_h_is_read_only(self, toy_h):
        """Test that the stored matrix cannot be modified."""
        with pytest.raises(ValueError):
            toy_h.h[0, 0] = 5.0

    def test_dump_csv(self, toy_h, tmp_path):
        """Test the debug dump: label column then one column per state."""
        path = tmp_path / "h.csv"
        toy_h.dump_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["row", "theta_1"]
        assert list(frame["row"]) == ["injection:1", "injection:2", "flow_fwd:0", "flow_rev:0"]
        assert b"\r\n" not in path.read_bytes()


class TestACJacobian:
    """Lossless AC Jacobian at an operating point."""

    def test_flat_start_equals_dc(self, case14, case14_h):
        """Test that the AC Jacobian at flat start is the DC Jacobian."""
        np.testing.assert_array_equal(ac_jacobian_at(case14, flat_start(case14)).h, case14_h.h)

    def test_toy_cosine_scaling(self, toy_case, toy_h):
        """Test that an angle difference of pi/3 halves every entry."""
        h = ac_jacobian_at(toy_case, OperatingPoint(np.array([np.pi / 3])))
        np.testing.assert_allclose(h.h, 0.5 * toy_h.h, atol=1e-12)

    @pytest.mark.parametrize("name", ["case14", "case30"])
    def test_injection_rows_are_signed_flow_sums(self, name):
        """Test that every injection row is the sum of its incident flows oriented out of the bus."""
        case = bundled_case(name)
        rng = np.random.default_rng(4)
        matrices = [dc_jacobian(case), ac_jacobian_at(case, perturb_point(flat_start(case), 0.05, rng))]
        for h in matrices:
            fwd = h.rows_of(RowKind.FLOW_FWD)
            rev = h.rows_of(RowKind.FLOW_REV)
            for row, bus in zip(h.rows_of(RowKind.INJECTION), case.buses):
                expected = np.zeros(h.n)
                for b, (_, br) in enumerate(case.in_service_branches()):
                    if br.from_bus == bus.id:
                        expected += h.h[fwd[b]]
                    if br.to_bus == bus.id:
                        expected += h.h[rev[b]]
                np.testing.assert_allclose(h.h[row], expected, rtol=0, atol=1e-12)

    def test_locality(self, case14):
        """Test that moving one angle only changes rows touching that bus."""
        rng = np.random.default_rng(8)
        base = perturb_point(flat_start(case14), 0.01, rng)
        k = 4
        bus_id = case14.non_slack_ids()[k]
        theta = base.theta.copy()
        theta[k] += 0.2
        before = ac_jacobian_at(case14, base)
        after = ac_jacobian_at(case14, OperatingPoint(theta))
        changed = {before.row_labels[r] for r in np.flatnonzero(np.any(before.h != after.h, axis=1))}
        incident = {k_br for k_br, br in case14.in_service_branches() if bus_id in (br.from_bus, br.to_bus)}
        neighbours = {bus_id}
        for _, br in case14.in_service_branches():
            if bus_id in (br.from_bus, br.to_bus):
                neighbours |= {br.from_bus, br.to_bus}
        assert changed
        for kind, ref in changed:
            if kind is RowKind.INJECTION:
                assert ref in neighbours
            else:
                assert ref in incident

    @pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
    def test_continuity_at_flat_start(self, case14, case14_h, eps):
        """Test ||H(eps u) - H(0)|| <= 2 eps^2 ||u||_inf^2 ||H(0)||, a fortiori <= C eps."""
        u = np.random.default_rng(12).uniform(-1.0, 1.0, size=case14_h.n)
        moved = ac_jacobian_at(case14, OperatingPoint(eps * u))
        gap = np.linalg.norm(moved.h - case14_h.h)
        bound = 2.0 * eps**2 * np.max(np.abs(u)) ** 2 * np.linalg.norm(case14_h.h)
        assert 0.0 < gap <= bound * (1.0 + 1e-9) + 1e-15
        assert gap <= eps * np.linalg.norm(case14_h.h)

    def test_wrong_point_length(self, case14):
        """Test that the operating point must have one angle per non-slack bus."""
        with pytest.raises(DimensionError):
            full_angles(case14, OperatingPoint(np.zeros(5)))

    def test_full_angles_slack_zero(self, toy_case):
        """Test that the slack angle is zero in the dense vector."""
        np.testing.assert_array_equal(full_angles(toy_case, OperatingPoint([0.3])), [0.3, 0.0])


class TestOperatingPoint:
    """Operating points and perturbations."""

    def test_non_finite_angles(self):
        """Test that non-finite angles are rejected."""
        with pytest.raises(RegimeError):
            OperatingPoint(np.array([0.0, np.nan]))

    def test_zero_perturbation(self, case14):
        """Test that zero variance leaves the angles unchanged."""
        point = flat_start(case14)
        np.testing.assert_array_equal(perturb_point(point, 0.0, np.random.default_rng(0)).theta, point.theta)

    def test_stream_independent_of_variance(self, case14):
        """Test that every variance, zero included, consumes the same draws."""
        point = flat_start(case14)
        rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
        perturb_point(point, 0.0, rng_a)
        perturb_point(point, 0.05, rng_b)
        a = perturb_point(point, 0.01, rng_a)
        b = perturb_point(point, 0.01, rng_b)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_perturbation_moments(self, case14):
        """Test the sample mean and variance of 10^4 perturbations of the flat start."""
        sigma_sq = 0.04
        rng = np.random.default_rng(19)
        point = flat_start(case14)
        draws = np.array([perturb_point(point, sigma_sq, rng).theta for _ in range(10000)])
        assert np.all(np.abs(draws.mean(axis=0)) <= 4.0 * np.sqrt(sigma_sq) / 100.0)
        np.testing.assert_allclose(draws.var(axis=0), sigma_sq, rtol=0.1)

    def test_negative_perturbation(self, case14):
        """Test that a negative variance is rejected."""
        with pytest.raises(RegimeError):
            perturb_point(flat_start(case14), -0.1, np.random.default_rng(0))

    def test_perturbation_is_seeded(self, case14):
        """Test that equal seeds give equal perturbed points with the requested spread."""
        a = perturb_point(flat_start(case14), 0.04, np.random.default_rng(7))
        b = perturb_point(flat_start(case14), 0.04, np.random.default_rng(7))
        np.testing.assert_array_equal(a.theta, b.theta)
        assert 0.0 < np.std(a.theta) < 1.0
