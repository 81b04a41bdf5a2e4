import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hardylab.geometry import (
    Raster,
    SamplingPlan,
    boundary_curve,
    cardioid_boundary,
    cardioid_membership,
    image_contained,
    render_svg,
    valence,
    valence_many,
    winding_numbers,
    write_raster_csv,
)
from hardylab.series import Polynomial, UnitSingular, Z, Z2Z

circle = np.exp(2j * np.pi * np.arange(256) / 256)


def test_winding_of_circle():
    wn, dist = winding_numbers(circle, [0, 0.5j, 2, -3j])
    assert list(wn) == [1, 1, 0, 0]
    assert dist[0] == pytest.approx(1, abs=1e-3)
    wn, _ = winding_numbers(circle[::-1], [0])
    assert wn[0] == -1
    # doubled circle winds twice
    wn, _ = winding_numbers(np.concatenate([circle, circle]), [0.1])
    assert wn[0] == 2


def quadratic_valence(w):
    roots = [(-1 + s * np.sqrt(1 + 4 * w + 0j)) / 2 for s in (1, -1)]
    return sum(abs(r) < 1 for r in roots)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_z2z_valence_counts_quadratic_roots(x, y):
    w = complex(x, y)
    roots = [(-1 + s * np.sqrt(1 + 4 * w + 0j)) / 2 for s in (1, -1)]
    assume(all(abs(abs(r) - 1) > 2e-3 for r in roots))
    v = valence(Z2Z, w)
    if v.status == "unresolved":
        return
    assert v.valence == quadratic_valence(w)


def test_z2z_anchor_valences():
    assert valence(Z2Z, -0.2).valence == 2
    assert valence(Z2Z, 0).valence == 1
    assert valence(Z2Z, 1).valence == 1
    assert valence(Z2Z, 3).valence == 0


def test_cardioid_formula_matches_winding():
    x = np.linspace(-3, 3, 61)
    W = (x[None, :] + 1j * x[:, None]).ravel()
    boundary = cardioid_boundary(8192)
    d = np.min(np.abs(W[:, None] - boundary[None, :]), axis=1)
    W = W[d > 1e-2]
    field = valence_many(Z2Z, W)
    resolved = field.status != -1
    assert resolved.mean() > 0.99
    assert np.array_equal(field.status[resolved] == 1, cardioid_membership(W[resolved]))


def test_cardioid_boundary_is_image_boundary():
    b = cardioid_boundary(64)
    # every boundary point is z^2 + z for some |z| = 1
    for w in b[::8]:
        r = np.array([(-1 + s * np.sqrt(1 + 4 * w)) / 2 for s in (1, -1)])
        assert np.min(np.abs(np.abs(r) - 1)) < 1e-12


def test_z2z_curve_crosses_itself_near_minus_one():
    hits = boundary_curve(Z2Z, 2048).self_intersections()
    assert len(hits) >= 1
    assert min(abs(h + 1) for h in hits) < 1e-2


def test_unit_singular_uses_closed_form():
    f = UnitSingular()
    assert valence(f, 0.5).status == "inside"
    assert valence(f, 0.5).valence is None
    assert valence(f, 0).status == "unresolved"
    assert valence(f, 1.5).status == "outside"


def test_containment_directions():
    half = Polynomial((0, 0.5))
    assert image_contained(half, Z).passes
    rep = image_contained(Z, half)
    assert not rep.passes_closure
    assert len(rep.violations) > 0
    assert 0 < rep.fraction_inside < 1


def test_ring_plan_lies_on_one_circle():
    pts = SamplingPlan.ring(32, 0.9).points()
    assert pts.size == 32
    assert np.allclose(np.abs(pts), 0.9)
    assert SamplingPlan.default(4, 8).points().size == 32


def test_svg_is_well_formed(tmp_path):
    xs = np.linspace(-1, 1, 4)
    raster = Raster(xs, xs, np.array([[1, 0, -1, 1]] * 4))
    text = render_svg(tmp_path / "p.svg", [circle], raster, title="a < b & c")
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert (tmp_path / "p.svg").read_text() == text
    assert root.get("width") == "1024"


def test_raster_csv(tmp_path):
    xs = np.array([0.0, 1.0])
    raster = Raster(xs, xs, np.array([[1, 0], [-1, 1]]), valence=np.array([[2, 0], [-1, 1]]))
    write_raster_csv(tmp_path / "r.csv", raster)
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 4
    assert rows[0] == {"x": "0.0", "y": "0.0", "valence": "2", "status": "in"}
    assert rows[2]["status"] == "undetermined"


def test_resolved_verdicts_are_mesh_stable():
    rng = np.random.default_rng(3)
    W = rng.uniform(-2.5, 2.5, 400) + 1j * rng.uniform(-2.5, 2.5, 400)
    for spec in (Z2Z, Polynomial((0, 0.5, 0.3, 0.1j))):
        a = valence_many(spec, W, M=2048)
        b = valence_many(spec, W, M=4096)
        both = (a.status != -1) & (b.status != -1)
        assert np.array_equal(a.valence[both], b.valence[both])
        # refining the mesh never loses resolution
        assert np.all(b.status[a.status != -1] != -1)
