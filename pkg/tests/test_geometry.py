import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from nlhardy.errors import ParameterError, ValidationError
from nlhardy.geometry import (DIRICHLET, NEUMANN, OMEGA, Example1Params, FarField, build_grid,
                              full_dirichlet, label_ball_config, label_example1, neumann_only,
                              omega_distance, read_label_file, shrinking_family, validate,
                              write_label_file)


def test_build_grid_1d():
    g = build_grid(1, 2.0, 16)
    assert g.size == 16
    assert g.h == 0.25
    assert np.allclose(np.diff(g.centers[:, 0]), 0.25)


@given(st.sampled_from([1, 2]), st.integers(4, 20).map(lambda k: 2 * k))
def test_cell_count(d, n):
    g = build_grid(d, 1.5, n)
    assert g.size == n**d == len(g.labels) == len(g.centers)


def test_origin_cell_2d():
    g = build_grid(2, 1.0, 8)
    lo, hi = g.cell_bounds()
    hits = np.flatnonzero(np.all((lo <= 0.0) & (hi > 0.0), axis=1))
    assert hits.tolist() == [g.origin_index]


@pytest.mark.parametrize("n", [7, 6, 9])
def test_bad_n(n):
    with pytest.raises(ParameterError):
        build_grid(1, 1.0, n)


def test_ball_labels():
    g = build_grid(2, 2.0, 32, FarField.NEUMANN_TRUNCATED)
    cfg = label_ball_config(g, 0.5, (0.8, 1.5))
    r = np.linalg.norm(cfg.centers, axis=1)
    assert np.all(cfg.labels[r < 0.5] == OMEGA)
    assert np.all(cfg.labels[(r > 0.8) & (r < 1.5)] == DIRICHLET)
    assert np.all(cfg.labels[(r > 0.5) & (r < 0.8)] == NEUMANN)
    assert validate(cfg) == []


def test_ball_requires_dirichlet_when_truncated():
    g = build_grid(1, 2.0, 32, FarField.NEUMANN_TRUNCATED)
    with pytest.raises(ValidationError):
        label_ball_config(g, 0.5, (0.75, 0.75))
    # the diagnostic flag lets it through
    assert neumann_only(g, 0.5).count(DIRICHLET) == 0


def test_shell_width_monotone():
    g = build_grid(1, 2.0, 64)
    counts = [label_ball_config(g, 0.5, (0.75, r2)).count(DIRICHLET) for r2 in (2.0, 1.5, 1.0, 0.8)]
    assert counts == sorted(counts, reverse=True)


def test_full_dirichlet():
    cfg = full_dirichlet(build_grid(1, 1.0, 32), 0.5)
    assert cfg.far_field == FarField.DIRICHLET
    assert cfg.count(NEUMANN) == 0
    assert cfg.count(OMEGA) == 16


def test_example1_labels():
    p = Example1Params(0.1, 0.9, 1.2, 0.9, 2.7)
    cfg = label_example1(build_grid(2, 3.0, 48), p)
    assert validate(cfg) == []
    n_centers = cfg.centers[cfg.mask(NEUMANN)]
    r = np.linalg.norm(n_centers, axis=1)
    assert np.all(r >= p.eta) and np.all(r <= p.A_len * math.sqrt(2))
    # every N center lies in the analytic N set
    assert np.all(cfg.region.label_points(n_centers) == NEUMANN)


def test_example1_parameter_order():
    with pytest.raises(ValidationError):
        Example1Params(0.5, 0.9, 1.2, 0.9, 2.7)      # eps >= eta/4
    with pytest.raises(ValidationError):
        Example1Params(0.1, 1.3, 1.2, 0.9, 2.7)      # eta > A
    with pytest.raises(ValidationError):
        label_example1(build_grid(2, 2.0, 16), Example1Params(0.1, 0.9, 1.2, 0.9, 2.7))


def test_shrinking_family(mixed_1d):
    g = build_grid(1, 2.0, 128, FarField.NEUMANN_TRUNCATED)
    d0 = mixed_1d.count(DIRICHLET)
    counts = [shrinking_family(g, mixed_1d, k).count(DIRICHLET) for k in range(12)]
    assert counts[0] == d0
    assert counts == [math.ceil(d0 / 2**k) for k in range(12)]
    assert counts[-1] == 1
    # the kept cells are the ones nearest to Omega
    cfg = shrinking_family(g, mixed_1d, 3)
    dist = omega_distance(mixed_1d)
    kept = dist[cfg.mask(DIRICHLET)].max()
    dropped = dist[mixed_1d.mask(DIRICHLET) & ~cfg.mask(DIRICHLET)].min()
    assert kept <= dropped
    with pytest.raises(ParameterError):
        shrinking_family(g, mixed_1d, -1)


def test_validate_origin_and_components():
    cfg = full_dirichlet(build_grid(2, 1.0, 16), 0.5)
    labels = cfg.labels.copy()
    labels[cfg.origin_index] = DIRICHLET
    assert len(validate(cfg.with_labels(labels))) == 1

    labels = np.full(cfg.size, int(DIRICHLET))
    labels[cfg.origin_index] = OMEGA
    labels[3 * 16 + 3] = OMEGA                       # isolated cell far away
    diags = validate(cfg.with_labels(labels))
    assert len(diags) == 1 and "connected" in diags[0]
    _, ncomp = ndimage.label(labels.reshape(16, 16) == OMEGA)
    assert ncomp == 2


def test_validate_box_boundary():
    cfg = full_dirichlet(build_grid(1, 1.0, 16), 0.5)
    labels = np.full(16, int(OMEGA))
    assert any("boundary" in msg for msg in validate(cfg.with_labels(labels)))


def test_label_file_round_trip(tmp_path, mixed_1d):
    path = tmp_path / "labels.txt"
    write_label_file(mixed_1d, path)
    grid = build_grid(1, 2.0, 128, FarField.NEUMANN_TRUNCATED)
    back = read_label_file(grid, path)
    assert np.array_equal(back.labels, mixed_1d.labels)


def test_label_file_errors(tmp_path):
    grid = build_grid(1, 1.0, 8)
    bad = tmp_path / "bad.txt"
    bad.write_text("0\n1\n")
    with pytest.raises(ValidationError):
        read_label_file(grid, bad)
    bad.write_text("\n".join(["3"] * 8))
    with pytest.raises(ValidationError):
        read_label_file(grid, bad)
