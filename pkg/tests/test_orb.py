import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavhandoff.geometry import CameraPose, tracking_station
from uavhandoff.vision.image import warp_similarity
from uavhandoff.vision.orb import (
    brief_describe,
    describe,
    detect,
    fast_detect,
    hamming,
    match_descriptors,
    orb,
    orientation,
    orientations,
)
from uavhandoff.vision.render import render_scene
from uavhandoff.world import SharkState


def bresenham_circle_r3():
    """The 16 ring pixels of radius 3, clockwise from straight up, built from
    one quadrant of the midpoint circle rather than copied."""
    quadrant = [(0, -3), (1, -3), (2, -2), (3, -1)]
    ring = []
    for k in range(4):
        for du, dv in quadrant:
            for _ in range(k):
                du, dv = -dv, du  # quarter turn clockwise on screen
            ring.append((du, dv))
    return ring


RING = bresenham_circle_r3()


def test_ring_geometry():
    assert len(RING) == 16 and len(set(RING)) == 16
    assert all(round(math.hypot(du, dv)) == 3 for du, dv in RING)


def naive_detect(img, t, arc=9, border=19, k=500):
    I = img.astype(int)
    h, w = I.shape
    corners = []
    for v in range(border, h - border):
        for u in range(border, w - border):
            p = I[v, u]
            ring = [I[v + dv, u + du] for du, dv in RING]
            hit = False
            for sign in (1, -1):
                flags = [sign * (x - p) > t for x in ring]
                run = best = 0
                for f in flags + flags:
                    run = run + 1 if f else 0
                    best = max(best, run)
                hit |= best >= arc
            if hit:
                corners.append((u, v))

    def sobel(u, v):
        gx = (I[v - 1, u + 1] + 2 * I[v, u + 1] + I[v + 1, u + 1]) - (I[v - 1, u - 1] + 2 * I[v, u - 1] + I[v + 1, u - 1])
        gy = (I[v + 1, u - 1] + 2 * I[v + 1, u] + I[v + 1, u + 1]) - (I[v - 1, u - 1] + 2 * I[v - 1, u] + I[v - 1, u + 1])
        return gx, gy

    resp = {}
    for u, v in corners:
        sxx = syy = sxy = 0
        for dv in range(-3, 4):
            for du in range(-3, 4):
                gx, gy = sobel(u + du, v + dv)
                sxx += gx * gx
                syy += gy * gy
                sxy += gx * gy
        resp[(u, v)] = 25 * (sxx * syy - sxy * sxy) - (sxx + syy) ** 2

    def rank(q):
        return (resp[q], -(q[1] * w + q[0]))

    kept = []
    for q in corners:
        nbs = [(q[0] + du, q[1] + dv) for du in (-1, 0, 1) for dv in (-1, 0, 1) if (du, dv) != (0, 0)]
        if all(rank(q) > rank(n) for n in nbs if n in resp):
            kept.append(q)
    kept.sort(key=lambda q: (-resp[q], q[1] * w + q[0]))
    return [(u, v, resp[(u, v)]) for u, v in kept[:k]]


def random_images(n=50, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if i % 2:
            out.append(rng.integers(0, 256, (64, 64), dtype=np.uint8))
        else:
            # blocky images produce many exactly tied Harris responses
            block = rng.integers(0, 4, (16, 16)) * 70
            out.append(np.kron(block, np.ones((4, 4))).astype(np.uint8))
    return out


def test_fast_matches_naive_on_random_images():
    total = 0
    for img in random_images():
        got = [(kp.u, kp.v, kp.response) for kp in fast_detect(img, 20)]
        assert got == naive_detect(img, 20)
        total += len(got)
    assert total > 100


def test_fast_constant_image_is_empty():
    assert fast_detect(np.full((80, 80), 123, dtype=np.uint8)) == []


def test_fast_single_bright_pixel():
    img = np.zeros((64, 64), dtype=np.uint8)
    img[32, 30] = 200
    kps = fast_detect(img, 20)
    assert [(k.u, k.v) for k in kps] == [(30, 32)]
    assert naive_detect(img, 20) == [(k.u, k.v, k.response) for k in kps]


def test_fast_square_corners_only():
    img = np.zeros((200, 200), dtype=np.uint8)
    img[50:150, 50:150] = 255
    kps = fast_detect(img, 20)
    corners = [(50, 50), (149, 50), (50, 149), (149, 149)]
    assert [(k.u, k.v, k.response) for k in kps] == naive_detect(img, 20)
    for k in kps:
        assert min(math.hypot(k.u - cu, k.v - cv) for cu, cv in corners) <= 4
    for cu, cv in corners:
        assert any(math.hypot(k.u - cu, k.v - cv) <= 4 for k in kps)


def test_fast_threshold_validated():
    with pytest.raises(ValueError):
        fast_detect(np.zeros((64, 64), dtype=np.uint8), 0)


def test_translation_equivariance():
    rng = np.random.default_rng(4)
    content = np.kron(rng.integers(0, 5, (25, 25)) * 50, np.ones((4, 4))).astype(np.uint8)
    base = None
    for du, dv in [(0, 0), (7, 3), (31, 40), (1, 29)]:
        canvas = np.full((220, 220), 90, dtype=np.uint8)
        canvas[30 + dv : 130 + dv, 30 + du : 130 + du] = content
        us, vs, r = detect(canvas, 20, max_keypoints=10_000)
        pts = sorted(zip((us - du).tolist(), (vs - dv).tolist(), r.tolist()))
        if base is None:
            base = pts
            assert len(base) > 20
        assert pts == base


def test_orientation_axis_case_and_flat():
    img = np.full((64, 64), 100, dtype=np.uint8)
    img[:, 33:] = 150
    kp = type("K", (), {"u": 32, "v": 32})
    assert orientation(img, kp) == 0.0
    assert orientation(np.full((64, 64), 77, dtype=np.uint8), kp) == 0.0


@pytest.fixture(scope="module")
def scene():
    shark = SharkState(0.0, 0.0, 0.6, 1.0)
    pose = CameraPose(tracking_station(shark.position, 0.0, 8.0))
    return render_scene(shark, pose, seed=3)


def test_orientation_rotates_with_image(scene):
    img = scene[100:380, 180:460]
    f = orb(img)
    rot = np.rot90(img).copy()  # (u, v) -> (v, W-1-u)
    w = img.shape[1]
    ang = orientations(rot, f.v, w - 1 - f.u)
    # a visual quarter turn counter-clockwise is -pi/2 in (u right, v down) coords
    diff = np.angle(np.exp(1j * (ang - f.angle + math.pi / 2)))
    assert np.all(np.abs(diff) <= 0.05)


def test_brief_identity(scene):
    f = orb(scene)
    kp = f.keypoints()[0]
    d1, d2 = brief_describe(scene, kp), brief_describe(scene, kp)
    assert np.array_equal(d1, d2) and hamming(d1, d2) == 0
    assert np.array_equal(describe(scene, f.u, f.v, f.angle), f.descriptors)


def _rotation_map(shape, deg):
    h, w = shape
    c = ((w - 1) / 2.0, (h - 1) / 2.0)
    t = math.radians(deg)

    def fwd(u, v):
        du, dv = u - c[0], v - c[1]
        return math.cos(t) * du - math.sin(t) * dv + c[0], math.sin(t) * du + math.cos(t) * dv + c[1]

    return fwd


def _usable(u, v, shape, margin=22):
    h, w = shape
    cu, cv = (w - 1) / 2, (h - 1) / 2
    # inside the rotated image and clear of the zero-filled corners
    return margin <= u < w - margin and margin <= v < h - margin and math.hypot(u - cu, v - cv) < min(h, w) / 2 - margin


def test_brief_steered_under_rotation(scene):
    rotated = warp_similarity(scene, 1.0, math.radians(15))
    fwd = _rotation_map(scene.shape, 15)
    f = orb(scene)
    close = total = 0
    for kp, d in zip(f.keypoints(), f.descriptors):
        qu, qv = fwd(kp.u, kp.v)
        if not (_usable(kp.u, kp.v, scene.shape) and _usable(qu, qv, scene.shape)):
            continue
        q = type("K", (), {"u": int(round(qu)), "v": int(round(qv))})
        ang = orientation(rotated, q)
        dq = describe(rotated, [q.u], [q.v], [ang])[0]
        total += 1
        close += hamming(d, dq) <= 64
    assert total > 100
    assert close / total >= 0.7


def test_matching_under_rotation(scene):
    """>= 70% of the accepted matches land within 2 px of the true mapping."""
    rotated = warp_similarity(scene, 1.0, math.radians(15))
    fwd = _rotation_map(scene.shape, 15)
    fa, fb = orb(scene), orb(rotated)
    pairs = match_descriptors(fa.descriptors, fb.descriptors)
    good = 0
    for m in pairs:
        qu, qv = fwd(fa.u[m.index_a], fa.v[m.index_a])
        good += math.hypot(fb.u[m.index_b] - qu, fb.v[m.index_b] - qv) <= 2.0
    assert len(pairs) >= 50
    assert good / len(pairs) >= 0.7


def test_hamming_basics():
    a = np.arange(32, dtype=np.uint8)
    assert hamming(a, a) == 0
    assert hamming(a, ~a) == 256
    b = a.copy()
    a2 = a.copy()
    a2[5], b[5] = 0xFF, 0x0F
    assert hamming(a2, b) == 4


@settings(max_examples=200)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
def test_hamming_is_metric(x, y, z):
    a, b, c = (np.frombuffer(v, dtype=np.uint8) for v in (x, y, z))
    assert hamming(a, b) == hamming(b, a)
    assert (hamming(a, b) == 0) == (x == y)
    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


def test_match_identity_and_removal():
    rng = np.random.default_rng(5)
    d = rng.integers(0, 256, (200, 32), dtype=np.uint8)
    same = match_descriptors(d, d)
    assert [(m.index_a, m.index_b, m.hamming) for m in same] == [(i, i, 0) for i in range(200)]
    drop = 17
    b = np.delete(d, drop, axis=0)
    got = {(m.index_a, m.index_b) for m in match_descriptors(d, b)}
    expect = {(i, i if i < drop else i - 1) for i in range(200) if i != drop}
    assert got == expect


def test_random_descriptors_rejected_by_ratio():
    rng = np.random.default_rng(6)
    a = rng.integers(0, 256, (300, 32), dtype=np.uint8)
    b = rng.integers(0, 256, (300, 32), dtype=np.uint8)
    dists = [hamming(x, y) for x, y in zip(a, b)]
    assert abs(np.mean(dists) - 128) < 2
    kept = match_descriptors(a, b, cross_check=False)
    assert len(kept) <= 0.05 * len(a)


def test_orb_deterministic(scene):
    f1, f2 = orb(scene), orb(scene)
    assert all(np.array_equal(x, y) for x, y in zip(f1, f2))
    assert 100 < len(f1) <= 500
    assert len(orb(scene, max_keypoints=50)) == 50
