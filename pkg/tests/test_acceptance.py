"""Acceptance criteria, one test per criterion, all on the mock stack.

Each run prints one ``ACCEPTANCE <criterion>: PASS|FAIL`` line (see
conftest). Golden files live under tests/golden; regenerate with
GOLDEN_UPDATE=1 after an intentional pipeline change.
"""

import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from portraitforge import fiducial
from portraitforge.adapters import ReferenceDetector, embed_face, face_similarity
from portraitforge.backend import InpaintRequest, MockBackend, RecordingBackend, make_backend
from portraitforge.geometry import (
    BBox,
    Image,
    LandmarkSet,
    Mask,
    boundary_ring,
    dilate,
    erode,
    estimate_affine,
)
from portraitforge.inference import (
    GenerationOptions,
    first_diffusion,
    generate_group,
    generate_portrait,
    prepare_inputs,
    second_diffusion,
    second_stage_mask,
    split_masks_multi,
)
from portraitforge.lora import LoraCheckpoint, merge_lora
from portraitforge.pngio import decode_image, load_image, save_png
from portraitforge.runs import load_user_bundle, run_training
from portraitforge.service.store import JOB_STATES, Store, _advance
from portraitforge.training import (
    TrainingConfig,
    ValidationReport,
    ensemble_merge,
    identity_reward,
    select_face_id_image,
    train_lora,
)

from fixtures import make_bundle, user_photo, user_photo_set

GOLDEN_DIR = Path(__file__).parent / "golden"


# -- 1. affine recovery -------------------------------------------------------

def _landmark_layout(rng):
    """A jittered canonical 5-point layout: landmark sets are face-shaped,
    which keeps the normal equations well conditioned (arbitrary random
    clouds can be near-collinear and amplify noise without bound)."""
    fractions = np.array(fiducial.LANDMARK_FRACTIONS)
    side = rng.uniform(60, 160)
    center = rng.uniform(-0.3, 0.3, size=2) * side
    jitter = rng.uniform(-0.05, 0.05, size=(5, 2)) * side
    return (fractions - 0.5) * side + center + jitter


def test_affine_recovery():
    rng = np.random.default_rng(20250808)
    t0 = time.perf_counter()
    done = 0
    while done < 1000:
        m = rng.uniform(-2, 2, size=(2, 3))
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if not 0.5 <= abs(det) <= 2.0:
            continue
        src = _landmark_layout(rng)
        dst = src @ m[:, :2].T + m[:, 2]

        exact = estimate_affine(LandmarkSet.from_array(src), LandmarkSet.from_array(dst))
        assert np.abs(exact.m - m).max() < 1e-9

        noisy_dst = dst + rng.normal(0.0, 0.01, size=(5, 2))
        noisy = estimate_affine(LandmarkSet.from_array(src), LandmarkSet.from_array(noisy_dst))
        assert np.abs(noisy.m - m).max() < 0.05
        done += 1
    assert time.perf_counter() - t0 < 5.0


# -- 2. mask calculus oracle equivalence --------------------------------------

def _disc_offsets(radius):
    out = []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy * dy + dx * dx <= radius * radius:
                out.append((dy, dx))
    return out


def _shift(arr, dy, dx, fill):
    out = np.full_like(arr, fill)
    ys = slice(max(0, dy), min(arr.shape[0], arr.shape[0] + dy))
    xs = slice(max(0, dx), min(arr.shape[1], arr.shape[1] + dx))
    ys_src = slice(max(0, -dy), min(arr.shape[0], arr.shape[0] - dy))
    xs_src = slice(max(0, -dx), min(arr.shape[1], arr.shape[1] - dx))
    out[ys, xs] = arr[ys_src, xs_src]
    return out


def scan_dilate(mask, radius):
    out = np.zeros_like(mask)
    for dy, dx in _disc_offsets(radius):
        out |= _shift(mask, dy, dx, False)
    return out


def scan_erode(mask, radius):
    out = np.ones_like(mask)
    for dy, dx in _disc_offsets(radius):
        out &= _shift(mask, dy, dx, True)  # beyond the border never counts
    return out


def test_mask_oracle_equivalence():
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    for i in range(200):
        mask = rng.random((32, 32)) > rng.uniform(0.3, 0.9)
        r = int(rng.integers(0, 5))
        m = Mask.from_bool(mask)
        assert np.array_equal(dilate(m, r).binary(), scan_dilate(mask, r))
        assert np.array_equal(erode(m, r).binary(), scan_erode(mask, r))
        r_out = int(rng.integers(1, 5))
        r_in = int(rng.integers(0, 4))
        expected_ring = scan_dilate(mask, r_out) & ~scan_erode(mask, r_in)
        assert np.array_equal(boundary_ring(m, r_out, r_in).binary(), expected_ring)
    assert time.perf_counter() - t0 < 10.0


# -- 3. inpaint contract conformance ------------------------------------------

def run_inpaint_contract(backend, rounds=100):
    rng = np.random.default_rng(4242)
    for i in range(rounds):
        h = int(rng.integers(8, 24))
        w = int(rng.integers(8, 24))
        img = Image(rng.random((h, w, 3)).astype(np.float32))
        mask = Mask((rng.random((h, w)) > 0.5).astype(np.float32))
        req = InpaintRequest(
            image=img, mask=mask,
            seed=int(rng.integers(0, 2**63)),
            denoise_strength=float(rng.uniform(0.05, 1.0)),
        )
        one = backend.inpaint(req)
        two = backend.inpaint(req)
        assert np.array_equal(one.data, two.data), "seed determinism"
        outside = mask.data < 0.5
        assert np.abs(one.data[outside] - img.data[outside]).max() <= 1 / 255
        assert one.data.min() >= 0.0 and one.data.max() <= 1.0
        zero = backend.inpaint(InpaintRequest(image=img, mask=Mask.zeros(h, w), seed=i))
        assert np.abs(zero.data - img.data).max() <= 1 / 255


def test_inpaint_contract_conformance():
    run_inpaint_contract(MockBackend(), rounds=100)
    extra = os.environ.get("EP_ACCEPTANCE_BACKEND")
    if extra:
        run_inpaint_contract(make_backend(extra), rounds=10)


# -- 4. ensemble math ----------------------------------------------------------

def _report(scores):
    n_c, n_t = len(scores), len(scores[0])
    images = [[Image.full(4, 4, 0.5) for _ in range(n_t)] for _ in range(n_c)]
    best_score, bi, bj = max(
        (scores[i][j], -i, -j) for i in range(n_c) for j in range(n_t))
    return ValidationReport(
        checkpoint_ids=[f"c{i}" for i in range(n_c)], stages=list(range(n_c)),
        scores=[list(r) for r in scores], images=images,
        flagged=[[False] * n_t for _ in range(n_c)],
        best_stage_index=-bi, best_template_index=-bj, best_score=best_score)


def test_ensemble_math():
    cks = train_lora([Image.full(8, 8, 0.5)],
                     TrainingConfig(user_id="acc", stages=3, allow_any_count=True))
    merged = ensemble_merge(_report([[0.9], [0.7], [0.5]]), cks, top_k=2)
    assert [w for _, w in merged.provenance] == [0.5625, 0.4375]

    rng = np.random.default_rng(11)
    for trial in range(20):
        n = int(rng.integers(1, 5))
        base = {
            "lora.down": rng.normal(size=(6, 4)).astype(np.float32),
            "lora.up": rng.normal(size=(4, 6)).astype(np.float32),
        }
        identical = [LoraCheckpoint(f"c{i}", i, dict(base)) for i in range(n)]
        weights = list(rng.uniform(0.05, 3.0, size=n))
        merged = merge_lora(identical, weights)
        for k in base:  # convexity fixed point / idempotence
            assert np.array_equal(merged.tensors[k], base[k])

        distinct = [
            LoraCheckpoint(f"d{i}", i, {
                k: rng.normal(size=v.shape).astype(np.float32)
                for k, v in base.items()})
            for i in range(n)
        ]
        m1 = merge_lora(distinct, weights)
        m2 = merge_lora(distinct, [w * 7.5 for w in weights])  # homogeneity
        perm = list(rng.permutation(n))
        m3 = merge_lora([distinct[i] for i in perm], [weights[i] for i in perm])
        for k in base:
            np.testing.assert_allclose(m1.tensors[k], m2.tensors[k], atol=1e-6)
            np.testing.assert_allclose(m1.tensors[k], m3.tensors[k], atol=1e-6)

    # tie-break: lower stage, then lower template index
    tied = _report([[0.4, 0.9], [0.9, 0.1]])
    assert (tied.best_stage_index, tied.best_template_index) == (0, 1)
    img = select_face_id_image(tied)
    assert img is tied.images[0][1]


# -- 5. end-to-end determinism + golden ----------------------------------------

def _train_and_generate(root: Path):
    user_dir = root / "users" / "golden-user"
    raw = user_dir / "raw"
    raw.mkdir(parents=True)
    for i, img in enumerate(user_photo_set(991, 5)):
        save_png(img, raw / f"{i + 1:04d}.png")
    run_training(user_dir, TrainingConfig(user_id="golden-user"))
    bundle = load_user_bundle(user_dir)
    template, _ = fiducial.make_portrait(256, 224, BBox(64, 56, 160, 176),
                                         background=0.18)
    result = generate_portrait(template, bundle, GenerationOptions(seed=20240101))
    out_path = root / "portrait.png"
    save_png(result.image, out_path)
    ensemble_files = {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted((user_dir / "ensemble").iterdir())
    }
    return user_dir, out_path, ensemble_files


def test_end_to_end_determinism(tmp_path):
    dir_a, out_a, ens_a = _train_and_generate(tmp_path / "a")
    dir_b, out_b, ens_b = _train_and_generate(tmp_path / "b")

    assert ens_a == ens_b
    assert (dir_a / "face_id.png").read_bytes() == (dir_b / "face_id.png").read_bytes()
    assert out_a.read_bytes() == out_b.read_bytes()

    golden_portrait = GOLDEN_DIR / "single_user_portrait.png"
    golden_face = GOLDEN_DIR / "face_id.png"
    golden_manifest = GOLDEN_DIR / "ensemble.sha256.json"
    if os.environ.get("GOLDEN_UPDATE") == "1":
        GOLDEN_DIR.mkdir(exist_ok=True)
        golden_portrait.write_bytes(out_a.read_bytes())
        golden_face.write_bytes((dir_a / "face_id.png").read_bytes())
        golden_manifest.write_text(json.dumps(ens_a, indent=2, sort_keys=True) + "\n")
    assert golden_portrait.is_file(), "golden missing; run with GOLDEN_UPDATE=1"
    # compare decoded pixels: PNG is lossless and this stays stable even if
    # a future codec version changes the compressed byte stream
    assert np.array_equal(load_image(out_a).data, load_image(golden_portrait).data)
    assert np.array_equal(
        load_image(dir_a / "face_id.png").data, load_image(golden_face).data)
    assert json.loads(golden_manifest.read_text()) == ens_a


# -- 6. control structure -------------------------------------------------------

def test_control_structure():
    bundle = make_bundle("ctrl", seed=40)
    template, _ = fiducial.make_portrait(224, 208, BBox(48, 40, 150, 168))
    rec = RecordingBackend(MockBackend())
    generate_portrait(template, bundle, GenerationOptions(seed=1), backend=rec)
    assert len(rec.requests) == 2
    assert [u.kind for u in rec.requests[0].controls] == ["canny", "color", "openpose"]
    assert [u.kind for u in rec.requests[1].controls] == ["canny", "tile"]


# -- 7. multi-ID ------------------------------------------------------------------

def test_multi_id():
    tpl, _ = fiducial.make_portrait(224, 384, BBox(32, 48, 144, 180), background=0.2)
    fiducial.paint_face(tpl, BBox(224, 60, 344, 196))
    opts = GenerationOptions(seed=31)
    splits = split_masks_multi(tpl, opts)
    assert len(splits) == 2
    (d0, _, m0), (d1, _, m1) = splits
    assert not (m0.binary() & m1.binary()).any()
    assert d0.bbox.center[0] < d1.bbox.center[0]

    users = [make_bundle("left", seed=41), make_bundle("right", seed=42)]
    rec = RecordingBackend(MockBackend())
    generate_group(tpl, users, opts, backend=rec)
    # left face processed first: its stage-1 mask is the left mask
    assert np.array_equal(rec.requests[0].mask.data, m0.data)
    assert np.array_equal(rec.requests[2].mask.data, m1.data)

    # pre-postprocess: rebuild the composite+seam image and check locality
    composite = tpl.data.copy()
    rings = np.zeros((tpl.h, tpl.w), dtype=bool)
    for (det, sub, mask), user in zip(splits, users):
        prep = prepare_inputs(sub, user.face_id, user.roop, opts,
                              face_id_landmarks=user.face_id_landmarks)
        out1 = first_diffusion(prep, user.merged, opts)
        out2 = second_diffusion(out1, prep, user.roop, user.merged, opts)
        sel = mask.binary()
        composite[sel] = out2.data[sel]
        rings |= boundary_ring(mask, opts.ring_outer, opts.ring_inner).binary()
    from portraitforge.controls import ControlUnit, canny_reference

    comp_img = Image(composite)
    final_pre = MockBackend().inpaint(InpaintRequest(
        image=comp_img, mask=Mask.from_bool(rings), prompt=opts.prompt,
        controls=[ControlUnit("canny", canny_reference(comp_img), opts.weight("canny"))],
        denoise_strength=opts.second_strength, steps=opts.second_steps,
        seed=opts.seed + 1000))
    covered = m0.binary() | m1.binary() | rings
    assert np.array_equal(final_pre.data[~covered], tpl.data[~covered])

    # one user, one face: group differs from single-ID only inside the ring
    single_tpl, _ = fiducial.make_portrait(256, 224, BBox(64, 56, 160, 176),
                                           background=0.18)
    user = make_bundle("solo", seed=43)
    sopts = GenerationOptions(seed=77)
    prep = prepare_inputs(single_tpl, user.face_id, user.roop, sopts,
                          face_id_landmarks=user.face_id_landmarks)
    single_pre = second_diffusion(
        first_diffusion(prep, user.merged, sopts),
        prep, user.roop, user.merged, sopts)
    det, sub, mask = split_masks_multi(single_tpl, sopts)[0]
    composite = single_tpl.data.copy()
    sel = mask.binary()
    composite[sel] = single_pre.data[sel]
    ring = boundary_ring(mask, sopts.ring_outer, sopts.ring_inner)
    comp_img = Image(composite)
    group_pre = MockBackend().inpaint(InpaintRequest(
        image=comp_img, mask=ring, prompt=sopts.prompt,
        controls=[ControlUnit("canny", canny_reference(comp_img), sopts.weight("canny"))],
        denoise_strength=sopts.second_strength, steps=sopts.second_steps,
        seed=sopts.seed + 1000))
    diff = np.any(group_pre.data != single_pre.data, axis=2)
    assert diff.any()
    assert not (diff & ~ring.binary()).any()


# -- 8. service state machines ----------------------------------------------------

def test_service_state_machines(tmp_path):
    rng = np.random.default_rng(123)
    for _ in range(300):  # fuzzed worker event sequences
        record = {"state": "queued"}
        trace = [0]
        for _ in range(int(rng.integers(1, 10))):
            target = JOB_STATES[int(rng.integers(0, len(JOB_STATES)))]
            _advance(record, JOB_STATES, target)
            if record["state"] == "failed":
                break
            trace.append(JOB_STATES.index(record["state"]))
        assert trace == sorted(trace), "backward transition persisted"

    # crash-restart marks in-flight records failed/interrupted
    store = Store(tmp_path / "data")
    job = store.create_job("u")
    store.update_job(job["job_id"], state="training", progress=0.5)
    task = store.create_task("t.png", ["u"], {})
    store2 = Store(tmp_path / "data")
    store2.recover()
    assert store2.get_job(job["job_id"])["state"] == "failed"
    assert store2.get_job(job["job_id"])["message"] == "interrupted"
    assert store2.get_task(task["task_id"])["message"] == "interrupted"

    # API preconditions: job exclusivity, 5-image minimum, count mismatch
    from fastapi.testclient import TestClient

    from portraitforge.pngio import encode_png
    from portraitforge.service.app import create_app
    from portraitforge.service.config import ServiceConfig

    client = TestClient(create_app(ServiceConfig(data_dir=tmp_path / "svc", workers=2)))

    def upload(uid, blobs):
        return client.post(
            f"/api/v1/users/{uid}/images",
            files=[("files", (f"{i}.png", b, "image/png")) for i, b in enumerate(blobs)])

    upload("few", [encode_png(user_photo(5)[0])] * 3)
    r = client.post("/api/v1/users/few/train")
    assert r.status_code == 422 and r.json()["error"]["code"] == "not_enough_images"

    upload("alice", [encode_png(img) for img in user_photo_set(300, 5)])
    r1 = client.post("/api/v1/users/alice/train", json={"stages": 2})
    assert r1.status_code == 200
    r2 = client.post("/api/v1/users/alice/train")
    assert r2.status_code == 409 and r2.json()["error"]["code"] == "job_already_running"
    deadline = time.time() + 120
    while True:
        body = client.get(f"/api/v1/jobs/{r1.json()['job_id']}").json()
        if body["state"] in ("done", "failed"):
            break
        assert time.time() < deadline
        time.sleep(0.1)
    assert body["state"] == "done"

    tid = client.get("/api/v1/templates").json()["templates"][0]["id"]
    r = client.post("/api/v1/generate",
                    json={"template_id": tid, "user_ids": ["alice", "alice"]})
    assert r.status_code == 422 and r.json()["error"]["code"] == "user_count_mismatch"


# -- 9. identity reward -------------------------------------------------------------

def test_identity_reward():
    photo, _ = user_photo(61)
    det = ReferenceDetector().detect(photo)[0]
    own = embed_face(photo, det.bbox)
    assert identity_reward(photo, [own]) == pytest.approx(1.0, abs=1e-6)

    assert identity_reward(Image.full(48, 48, 0.35), [own]) == -1.0

    others = []
    for seed in (62, 63, 64):
        img, _ = user_photo(seed, h=230, w=210)
        d = ReferenceDetector().detect(img)[0]
        others.append(embed_face(img, d.bbox))
    refs = others + [own]
    per_pair = [face_similarity(own, r) for r in refs]  # oracle: max over pairs
    assert identity_reward(photo, refs) == pytest.approx(max(per_pair), abs=1e-12)
