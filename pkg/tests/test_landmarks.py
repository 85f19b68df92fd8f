import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpmm.errors import DomainError, FormatError
from lpmm.landmarks import (
    LandmarkDataset,
    LandmarkRecord,
    LandmarkSet,
    dataset_fingerprint,
    interocular_distance,
    nme,
    normalize_dataset,
    normalize_to_canonical,
    parse_landmark_records,
    serialize_landmark_records,
)

from conftest import stylized_face


def make_record_line(points, identity="a", frame="0", space="canonical"):
    return json.dumps({"id": identity, "frame": frame, "points": points, "space": space})


def grid68(dx=0.0, dy=0.0):
    xs, ys = np.meshgrid(np.linspace(0.1, 0.9, 17), np.linspace(0.2, 0.8, 4))
    return np.column_stack([xs.ravel() + dx, ys.ravel() + dy])


class TestParse:
    def test_three_valid_lines(self, face68):
        pts = face68.points.tolist()
        data = "\n".join(make_record_line(pts, frame=str(i)) for i in range(3)).encode()
        ds = parse_landmark_records(data)
        assert len(ds) == 3
        assert ds.n == 68
        assert [r.frame for r in ds] == ["0", "1", "2"]

    def test_empty_stream(self):
        with pytest.raises(FormatError, match="empty dataset"):
            parse_landmark_records(b"")

    def test_inconsistent_point_count_names_line(self, face68):
        good = make_record_line(face68.points.tolist())
        bad = make_record_line(face68.points[:67].tolist(), frame="1")
        with pytest.raises(FormatError, match="line 2") as exc:
            parse_landmark_records(f"{good}\n{bad}\n".encode())
        assert exc.value.code == "inconsistent_point_count"

    def test_invalid_json_names_line(self, face68):
        good = make_record_line(face68.points.tolist())
        with pytest.raises(FormatError, match="line 2"):
            parse_landmark_records(f"{good}\nnot json\n".encode())

    def test_nonfinite_coordinate_rejected(self, face68):
        pts = face68.points.tolist()
        pts[3][0] = float("nan")
        line = json.dumps({"id": "a", "frame": "0", "points": pts, "space": "canonical"})
        with pytest.raises(FormatError) as exc:
            parse_landmark_records(line.encode())
        assert exc.value.code == "nonfinite_coordinate"

    def test_unknown_space_rejected(self, face68):
        line = json.dumps({"id": "a", "frame": "0", "points": face68.points.tolist(), "space": "voxel"})
        with pytest.raises(FormatError, match="line 1"):
            parse_landmark_records(line.encode())

    def test_round_trip_exact(self, face68):
        recs = [
            LandmarkRecord("idA", "f0", face68, "canonical"),
            LandmarkRecord("idB", "f1", LandmarkSet(stylized_face(scale=311.7, center=(400, 300))), "pixel"),
        ]
        ds = LandmarkDataset(recs)
        again = parse_landmark_records(serialize_landmark_records(ds))
        assert serialize_landmark_records(again) == serialize_landmark_records(ds)
        for a, b in zip(ds, again):
            assert a.identity == b.identity and a.frame == b.frame and a.space == b.space
            assert np.array_equal(a.landmarks.points, b.landmarks.points)
        assert dataset_fingerprint(again) == dataset_fingerprint(ds)


class TestNormalize:
    def test_translation_invariance(self):
        raw = stylized_face(scale=250.0, center=(300.0, 200.0))
        a = normalize_to_canonical(LandmarkSet(raw))
        b = normalize_to_canonical(LandmarkSet(raw + [500.0, -300.0]))
        np.testing.assert_allclose(a.points, b.points, rtol=1e-12, atol=1e-12)

    def test_scale_invariance(self):
        raw = stylized_face(scale=250.0, center=(300.0, 200.0))
        a = normalize_to_canonical(LandmarkSet(raw))
        b = normalize_to_canonical(LandmarkSet(raw * 2.0))
        np.testing.assert_allclose(a.points, b.points, rtol=1e-12, atol=1e-12)

    def test_fixed_point_up_to_margin(self):
        # a set already centered in the unit square maps onto itself
        # after one round of normalization
        once = normalize_to_canonical(LandmarkSet(stylized_face(scale=777.0)))
        twice = normalize_to_canonical(once)
        np.testing.assert_allclose(once.points, twice.points, rtol=1e-12, atol=1e-12)

    def test_result_inside_unit_square(self):
        raw = LandmarkSet(stylized_face(scale=1234.5, center=(-50.0, 900.0)))
        out = normalize_to_canonical(raw).points
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_degenerate_box(self):
        pts = np.tile([3.0, 4.0], (68, 1))
        with pytest.raises(DomainError) as exc:
            normalize_to_canonical(LandmarkSet(pts))
        assert exc.value.code == "degenerate_box"

    def test_collinear_points_allowed(self):
        # height zero but positive width: still a valid square via max(w, h)
        pts = np.column_stack([np.linspace(0, 100, 68), np.full(68, 5.0)])
        out = normalize_to_canonical(LandmarkSet(pts)).points
        assert np.all(np.isfinite(out))

    @settings(max_examples=30, deadline=None)
    @given(
        tx=st.floats(-1e4, 1e4), ty=st.floats(-1e4, 1e4),
        s=st.floats(0.01, 1e3),
    )
    def test_similarity_invariance_property(self, tx, ty, s):
        raw = stylized_face(scale=100.0)
        a = normalize_to_canonical(LandmarkSet(raw))
        b = normalize_to_canonical(LandmarkSet(raw * s + [tx, ty]))
        np.testing.assert_allclose(a.points, b.points, rtol=1e-9, atol=1e-12)

    def test_dataset_normalization_marks_canonical(self):
        recs = [LandmarkRecord("a", "0", LandmarkSet(stylized_face(scale=200, center=(128, 128))), "pixel")]
        ds = normalize_dataset(LandmarkDataset(recs))
        assert ds.is_canonical()
        assert ds.records[0].landmarks.points.max() <= 1.0


class TestInterocular:
    def test_hand_computed(self):
        pts = grid68()
        pts[36] = [0.3, 0.5]
        pts[45] = [0.7, 0.5]
        assert interocular_distance(LandmarkSet(pts)) == pytest.approx(0.4, abs=1e-15)

    def test_degenerate(self):
        pts = grid68()
        pts[45] = pts[36]
        with pytest.raises(DomainError) as exc:
            interocular_distance(LandmarkSet(pts))
        assert exc.value.code == "degenerate_interocular"

    def test_symmetric(self):
        pts = grid68()
        pts[36] = [0.31, 0.42]
        pts[45] = [0.66, 0.44]
        swapped = pts.copy()
        swapped[[36, 45]] = swapped[[45, 36]]
        assert interocular_distance(LandmarkSet(pts)) == interocular_distance(LandmarkSet(swapped))

    def test_wrong_point_count(self):
        pts = np.random.default_rng(0).uniform(size=(10, 2))
        with pytest.raises(DomainError):
            interocular_distance(LandmarkSet(pts))


class TestNme:
    def truth_with_interocular(self, d):
        pts = grid68()
        pts[36] = [0.5 - d / 2, 0.4]
        pts[45] = [0.5 + d / 2, 0.4]
        return pts

    def test_identity_is_zero(self, face68):
        assert nme(face68, face68) == 0.0

    def test_hand_computed_uniform_offset(self):
        truth = self.truth_with_interocular(0.1)
        pred = truth + [0.01, 0.0]
        # every per-point term is 0.01 / 0.1
        assert nme(LandmarkSet(pred), LandmarkSet(truth)) == pytest.approx(0.1, abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            truth = self.truth_with_interocular(0.2) + rng.normal(0, 0.01, (68, 2))
            pred = truth + rng.normal(0, 0.02, (68, 2))
            s = float(rng.uniform(0.1, 10.0))
            a = nme(LandmarkSet(pred), LandmarkSet(truth))
            b = nme(LandmarkSet(pred * s), LandmarkSet(truth * s))
            assert b == pytest.approx(a, rel=1e-12)

    def test_nonnegative_and_zero_on_self(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            truth = self.truth_with_interocular(0.3) + rng.normal(0, 0.005, (68, 2))
            pred = truth + rng.normal(0, 0.03, (68, 2))
            assert nme(LandmarkSet(pred), LandmarkSet(truth)) >= 0.0
            assert nme(LandmarkSet(truth), LandmarkSet(truth)) == 0.0

    def test_degenerate_truth_propagates(self):
        truth = self.truth_with_interocular(0.0)
        with pytest.raises(DomainError) as exc:
            nme(LandmarkSet(grid68()), LandmarkSet(truth))
        assert exc.value.code == "degenerate_interocular"


class TestTypes:
    def test_landmark_set_immutable(self, face68):
        with pytest.raises(ValueError):
            face68.points[0, 0] = 99.0

    def test_vector_layout_interleaved(self):
        pts = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert LandmarkSet(pts).vector.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_from_vector_round_trip(self, face68):
        again = LandmarkSet.from_vector(face68.vector)
        assert np.array_equal(again.points, face68.points)

    def test_empty_dataset_rejected(self):
        with pytest.raises(FormatError):
            LandmarkDataset([])

    def test_mixed_point_counts_rejected(self, face68):
        r1 = LandmarkRecord("a", "0", face68)
        r2 = LandmarkRecord("b", "1", LandmarkSet(np.random.default_rng(0).uniform(size=(32, 2))))
        with pytest.raises(FormatError):
            LandmarkDataset([r1, r2])
