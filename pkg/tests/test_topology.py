"""Winding numbers, gap-closing solvers, edge counting, loop detection."""

import numpy as np
import pytest

from nhlab import (PBC, RECIPROCAL_MODULAR, SHIFTED, CouplingPreset,
                   UnsupportedStructureError, ValidationError, band_winding,
                   build_hamiltonian, count_spectral_loops,
                   direct_band_minimum, edge_states, gbz_contour, gbz_radius,
                   gbz_zero_gap_solutions, line_gap_minima, make_params,
                   pbc_zero_gap_solutions, point_gap_residual,
                   spectral_winding)
from nhlab.topology import IllConditionedContourError


def shifted(jr, L=50, J=2.0, J0=1.25):
    return make_params(2, 2, L, J0=J0, JL=1, JR=jr,
                       preset=CouplingPreset(SHIFTED, J))


def hn(jr, L=20, boundary="OBC"):
    return make_params(1, 3, L, JL=1, JR=jr, boundary=boundary,
                       preset=CouplingPreset(RECIPROCAL_MODULAR, 2.0))


def nearest(values, target):
    values = list(values)
    return values[int(np.argmin([abs(v - target) for v in values]))]


def test_pbc_closing_solver_contains_known_roots():
    roots = pbc_zero_gap_solutions(shifted(0.5))
    for want in (0.6008, -2.6008, -1.3822):
        assert abs(nearest(roots, want) - want) < 5e-4
    # every returned root is an actual band touching of the Bloch family
    for v in roots:
        assert direct_band_minimum(shifted(v), grid_size=4096) < 1e-3


def test_gbz_closing_solver_contains_known_roots():
    roots = gbz_zero_gap_solutions(shifted(0.5))
    for want in (0.3468, -0.5685, -1.4315, -2.3468, -1.75):
        assert abs(nearest(roots, want) - want) < 5e-4
    for v in roots:
        q = shifted(v)
        assert direct_band_minimum(q, use_gbz=True, grid_size=4096) < 1e-3


def test_solvers_require_the_two_band_structure():
    with pytest.raises(ValidationError):
        pbc_zero_gap_solutions(hn(-2.5))
    with pytest.raises(ValidationError):
        gbz_zero_gap_solutions(hn(-2.5))


def test_band_winding_alternates_and_matches_edge_counts():
    # winding 1 regions carry a mid-gap edge pair, winding 0 regions none
    expected = {-3.0: 1, -2.0: 0, -1.0: 1, 0.0: 0, 0.7: 1}
    for jr, w in expected.items():
        p = shifted(jr)
        res = band_winding(p, gbz_contour(p))
        assert res.value == w, "winding at JR=%g" % jr
        assert abs(res.raw_phase - round(res.raw_phase)) < 0.05
        assert len(edge_states(p, 0.2)) == 2 * w


def test_band_winding_stable_under_contour_refinement():
    p = shifted(-1.0)
    coarse = band_winding(p, gbz_contour(p, n_points=512))
    fine = band_winding(p, gbz_contour(p, n_points=1024))
    assert coarse.value == fine.value == 1


def test_band_winding_flip_marker():
    # closings happen where |beta0| = JR JmP / J0^2 crosses the circle
    p = shifted(0.5)
    roots = sorted(gbz_zero_gap_solutions(p))
    central = [v for v in roots if abs(v) < 3.0 and abs(v + 1.75) > 1e-6]
    assert len(central) == 4
    for v in central:
        def excess(jr):
            q = shifted(jr)
            beta0 = abs(jr * (jr + 2.0)) / 1.25 ** 2
            return beta0 - gbz_radius(q)
        assert excess(v - 1e-3) * excess(v + 1e-3) < 0


def test_band_winding_needs_bipartite_structure():
    p = hn(-2.5)
    with pytest.raises(UnsupportedStructureError):
        band_winding(p, gbz_contour(p))


def test_spectral_winding_signed_loops():
    p = hn(-2.5, boundary=PBC)
    w0 = spectral_winding(p, 0j)
    assert abs(w0.value) == 1
    assert abs(w0.raw_phase - w0.value) < 0.05
    # far outside every loop nothing is enclosed
    assert spectral_winding(p, 50.0 + 0j).value == 0


def test_spectral_winding_rejects_reference_on_spectrum():
    p = hn(-2.5, boundary=PBC)
    E = np.linalg.eigvals(build_hamiltonian(p))[0]
    with pytest.raises(IllConditionedContourError):
        spectral_winding(p, complex(E))


def test_no_spectral_flow_without_nonreciprocity():
    p = hn(-2.0, boundary=PBC)
    assert point_gap_residual(p) == 0.0
    for eref in (1.5 + 0.5j, -1.5 - 0.8j, 0.3 + 1j):
        assert spectral_winding(p, eref).value == 0


def test_line_gap_reports():
    p = shifted(-1.0)
    reports = line_gap_minima(p)
    kinds = {rep.kind for rep in reports}
    assert "LINE_GAP_CENTRAL" in kinds
    for rep in reports:
        assert rep.min_gap >= 0
        assert rep.closed == (rep.min_gap < 1e-6)


def test_loop_count_collapses_at_criticality():
    assert count_spectral_loops(hn(-2.5, L=50, boundary=PBC)) == 3
    assert count_spectral_loops(hn(-2.0, L=50, boundary=PBC)) == 0
