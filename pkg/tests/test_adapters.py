import json
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from portraitforge import fiducial
from portraitforge.adapters import (
    AdapterRegistry,
    CommandAdapter,
    FaceEmbedding,
    detect_faces,
    embed_face,
    enhance_portrait,
    face_similarity,
    fuse_faces,
    retouch_skin,
    saliency_matte,
)
from portraitforge.errors import (
    DegenerateCrop,
    DegenerateHull,
    DimensionMismatch,
)
from portraitforge.geometry import BBox, Image, LandmarkSet


def blank(h=64, w=64, value=0.1):
    return Image.full(h, w, value)


class TestDetector:
    def test_blank_image_no_faces(self):
        assert detect_faces(blank()) == []

    def test_two_faces_sorted_left_to_right(self):
        img = blank(64, 128)
        fiducial.paint_face(img, BBox(80, 10, 120, 58))
        fiducial.paint_face(img, BBox(10, 12, 46, 55))
        dets = detect_faces(img)
        assert len(dets) == 2
        assert dets[0].bbox.x0 == 10 and dets[1].bbox.x0 == 80
        assert dets[0].bbox.center[0] < dets[1].bbox.center[0]

    def test_painter_detector_exact_round_trip(self):
        img = blank(96, 96)
        painted = fiducial.paint_face(img, BBox(20, 16, 76, 84))
        dets = detect_faces(img)
        assert len(dets) == 1
        det = dets[0]
        assert (det.bbox.x0, det.bbox.y0, det.bbox.x1, det.bbox.y1) == (20, 16, 76, 84)
        np.testing.assert_allclose(det.landmarks.as_array(), painted.as_array())
        assert det.confidence > 0.99

    def test_landmarks_at_canonical_fractions(self):
        img = blank(100, 100)
        fiducial.paint_face(img, BBox(10, 10, 90, 90))
        det = detect_faces(img)[0]
        expected = fiducial.landmark_positions(BBox(10, 10, 90, 90))
        np.testing.assert_allclose(det.landmarks.as_array(), expected)


class TestEmbedder:
    def test_deterministic_self_similarity(self):
        img = blank(64, 64)
        fiducial.paint_face(img, BBox(8, 8, 56, 56))
        e1 = embed_face(img, BBox(8, 8, 56, 56))
        e2 = embed_face(img, BBox(8, 8, 56, 56))
        assert np.array_equal(e1.vector, e2.vector)
        assert face_similarity(e1, e2) == pytest.approx(1.0, abs=1e-12)

    def test_constant_crop_degenerate(self):
        with pytest.raises(DegenerateCrop):
            embed_face(blank(32, 32, 0.5), BBox(4, 4, 28, 28))

    def test_known_pattern_cosine(self):
        # oracle-first: gray patterns whose centered vectors are
        # k*(0.6, 0.8, -0.6, -0.8, 0...) and k*(0.8, 0.6, -0.8, -0.6, 0...),
        # whose cosine is exactly 0.96; verified against a direct dot product.
        def build(p):
            g = np.full((8, 8), 0.5, dtype=np.float64)
            flat = g.ravel()
            flat[0] = 0.5 + 0.25 * p[0]
            flat[1] = 0.5 + 0.25 * p[1]
            flat[2] = 0.5 + 0.25 * p[2]
            flat[3] = 0.5 + 0.25 * p[3]
            g = flat.reshape(8, 8)
            return Image(np.repeat(g[:, :, None], 3, axis=2).astype(np.float32))

        img_a = build([0.6, 0.8, -0.6, -0.8])
        img_b = build([0.8, 0.6, -0.8, -0.6])
        ea = embed_face(img_a, BBox(0, 0, 8, 8))
        eb = embed_face(img_b, BBox(0, 0, 8, 8))

        def oracle(img):
            gray = img.data.astype(np.float64).mean(axis=2).ravel()
            c = gray - gray.mean()
            return c / np.linalg.norm(c)

        expected = float(np.dot(oracle(img_a), oracle(img_b)))
        assert face_similarity(ea, eb) == pytest.approx(expected, abs=1e-12)
        assert face_similarity(ea, eb) == pytest.approx(0.96, abs=1e-9)

    def test_dimension_mismatch(self):
        a = FaceEmbedding(np.array([1.0, 0.0]))
        b = FaceEmbedding(np.array([1.0, 0.0, 0.0]) / 1.0)
        with pytest.raises(DimensionMismatch):
            face_similarity(a, b)

    def test_orthogonal_and_self(self):
        a = FaceEmbedding(np.array([1.0, 0.0]))
        b = FaceEmbedding(np.array([0.0, 1.0]))
        assert face_similarity(a, b) == 0.0
        assert face_similarity(a, a) == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_similarity_symmetric_bounded(self, seed):
        rng = np.random.default_rng(seed)
        va = rng.normal(size=16)
        vb = rng.normal(size=16)
        a = FaceEmbedding(va / np.linalg.norm(va))
        b = FaceEmbedding(vb / np.linalg.norm(vb))
        s1, s2 = face_similarity(a, b), face_similarity(b, a)
        assert s1 == s2
        assert -1.0 <= s1 <= 1.0
        gap = 1.0 - s1
        assert 0.0 <= gap <= 2.0


class TestSaliency:
    def test_uniform_image_all_zero(self):
        m = saliency_matte(blank(32, 32, 0.4))
        assert not m.binary().any()

    def test_white_square_on_black(self):
        data = np.zeros((64, 64, 3), dtype=np.float32)
        data[16:48, 16:48, :] = 1.0
        m = saliency_matte(Image(data)).binary()
        truth = np.zeros((64, 64), dtype=bool)
        truth[16:48, 16:48] = True
        inter = (m & truth).sum()
        union = (m | truth).sum()
        assert inter / union > 0.95

    def test_range_contract(self):
        rng = np.random.default_rng(9)
        m = saliency_matte(Image(rng.random((16, 16, 3)).astype(np.float32)))
        assert m.data.min() >= 0.0 and m.data.max() <= 1.0


class TestImageToImageAdapters:
    @pytest.mark.parametrize("fn", [retouch_skin, enhance_portrait])
    def test_dims_and_range_preserved(self, fn):
        rng = np.random.default_rng(17)
        img = Image(rng.random((24, 31, 3)).astype(np.float32))
        out = fn(img)
        assert (out.h, out.w) == (img.h, img.w)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_fuse_self_is_identity(self):
        img = blank(64, 64)
        marks = fiducial.paint_face(img, BBox(12, 12, 52, 52))
        out = fuse_faces(img, img, marks, marks)
        np.testing.assert_allclose(out.data, img.data, atol=1e-6)

    def test_fuse_degenerate_hull_propagates(self):
        img = blank(32, 32)
        line = LandmarkSet.from_array([[2, 2], [10, 10], [20, 20], [25, 25], [30, 30]])
        with pytest.raises(DegenerateHull):
            fuse_faces(img, img, line, line)


class TestRegistry:
    def test_defaults_bind_reference(self):
        reg = AdapterRegistry()
        assert reg.ids() == {name: "reference" for name in reg.ids()}

    def test_unknown_interface_rejected(self):
        with pytest.raises(ValueError):
            AdapterRegistry({"oracle": "reference"})

    def test_unknown_binding_rejected(self):
        with pytest.raises(ValueError):
            AdapterRegistry({"detector": "gpu-magic"})

    def test_command_adapter_round_trip(self):
        # stub external model: echoes a fixed single detection
        script = (
            "import sys, json; json.load(sys.stdin); "
            "print(json.dumps({'faces': [{'bbox': [4, 5, 20, 22], "
            "'confidence': 0.5, 'landmarks': [[6, 8], [14, 8], [10, 12], [8, 18], [13, 18]]}]}))"
        )
        reg = AdapterRegistry({"detector": f"command:{sys.executable} -c \"{script}\""})
        dets = reg.detector.detect(blank(32, 32))
        assert len(dets) == 1
        assert dets[0].bbox.x1 == 20
        assert dets[0].confidence == 0.5

    def test_command_adapter_failure_surfaces(self):
        from portraitforge.errors import AdapterFailure

        reg = AdapterRegistry({"matting": f"command:{sys.executable} -c 'import sys; sys.exit(3)'"})
        with pytest.raises(AdapterFailure):
            reg.matting.matte(blank(8, 8))

    def test_http_adapter_round_trip(self):
        import http.server
        import threading

        class Stub(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                assert body["op"] == "detect"
                resp = json.dumps({"faces": [{
                    "bbox": [2, 3, 9, 10], "confidence": 0.7,
                    "landmarks": [[3, 4], [8, 4], [5, 6], [4, 8], [7, 8]],
                }]}).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(resp)))
                self.end_headers()
                self.wfile.write(resp)

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Stub)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/detect"
            reg = AdapterRegistry({"detector": url})
            dets = reg.detector.detect(blank(16, 16))
            assert len(dets) == 1
            assert dets[0].confidence == 0.7
        finally:
            server.shutdown()
