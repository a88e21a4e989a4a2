import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motioncopy.data_io import Frame
from motioncopy.errors import DataError, FaceNotExtractable
from motioncopy.face_enhance import (
    BlendConfig, FacePoolEntry, FaceVectorField, blend, candidate_weights, extract_field,
    face_crop_rect, make_pool_entry, select_candidates, similarity,
)

from conftest import make_pose

NOSE, R_EYE, L_EYE, R_EAR, L_EAR = 0, 14, 15, 16, 17


def face_pose(dx=0.0, dy=0.0, frame_index=0, **over):
    pts = {R_EYE: (-1, 0), L_EYE: (1, 0), NOSE: (0, -1), R_EAR: (-2, 0), L_EAR: (2, 0)}
    pts.update(over)
    return make_pose(frame_index, {j: (x + dx, y + dy) for j, (x, y) in pts.items()})


def _field(rng):
    return FaceVectorField(rng.normal(size=(6, 2)) * 5)


def _gray(v, size=4):
    return Frame(np.full((size, size, 3), v, np.uint8))


def test_extract_field_hand_values():
    f = extract_field(face_pose())
    np.testing.assert_array_equal(f.v, [[2, 0], [-1, -1], [1, -1], [4, 0], [-2, 1], [2, 1]])


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_extract_field_translation_invariant(dx, dy):
    base = face_pose(dx=3.25, dy=-1.5)
    moved = base.translated(dx, dy)
    np.testing.assert_allclose(extract_field(moved).v, extract_field(base).v, atol=1e-9)


def test_extract_field_translation_exact_for_integers():
    np.testing.assert_array_equal(extract_field(face_pose(10, 10)).v, extract_field(face_pose()).v)


def test_extract_field_missing_nose():
    pose = make_pose(0, {NOSE: (0, 0, 0.0)})
    with pytest.raises(FaceNotExtractable, match="nose"):
        extract_field(pose)


def test_similarity_identical():
    f = extract_field(face_pose())
    assert similarity(f, f, 1e-8) == pytest.approx(1e8)


def test_similarity_unit_gaps():
    a = FaceVectorField(np.zeros((6, 2)))
    b = FaceVectorField(np.tile([0.6, 0.8], (6, 1)))
    assert similarity(a, b, 1e-15) == pytest.approx(1 / 6, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_similarity_symmetry_and_halving(seed):
    rng = np.random.default_rng(seed)
    a, b = _field(rng), _field(rng)
    assert similarity(a, b) == similarity(b, a)
    doubled = FaceVectorField(a.v + 2 * (b.v - a.v))
    assert similarity(a, doubled, 1e-15) == pytest.approx(similarity(a, b, 1e-15) / 2, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 5), st.floats(0.01, 10))
def test_similarity_monotone(seed, i, bump):
    rng = np.random.default_rng(seed)
    a, b = _field(rng), _field(rng)
    v = b.v.copy()
    gap = v[i] - a.v[i]
    direction = gap / np.linalg.norm(gap) if np.linalg.norm(gap) > 0 else np.array([1.0, 0.0])
    v[i] = v[i] + bump * direction
    assert similarity(a, FaceVectorField(v)) < similarity(a, b)


def _pool(fields):
    return [FacePoolEntry(f, _gray(10 * k), k) for k, f in enumerate(fields)]


def test_select_single_entry(rng):
    pool = _pool([_field(rng)])
    out = select_candidates(_field(rng), pool, BlendConfig(m=3))
    assert len(out) == 1 and out[0][0] is pool[0]


def test_select_top_three_sorted(rng):
    query = _field(rng)
    pool = _pool([_field(rng) for _ in range(5)])
    out = select_candidates(query, pool, BlendConfig(m=3))
    scores = sorted(((similarity(query, e.field), e.frame_index) for e in pool), reverse=True)
    assert [e.frame_index for e, _ in out] == [i for _, i in scores[:3]]
    assert [s for _, s in out] == sorted([s for _, s in out], reverse=True)


def test_select_tie_prefers_lower_frame_index(rng):
    f, q = _field(rng), _field(rng)
    pool = [FacePoolEntry(f, _gray(1), 7), FacePoolEntry(f, _gray(2), 3)]
    out = select_candidates(q, pool, BlendConfig(m=2))
    assert [e.frame_index for e, _ in out] == [3, 7]


def test_select_empty_pool(rng):
    with pytest.raises(DataError):
        select_candidates(_field(rng), [], BlendConfig())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_weights_sum_to_one(seed, m):
    rng = np.random.default_rng(seed)
    pool = _pool([_field(rng) for _ in range(6)])
    cands = select_candidates(_field(rng), pool, BlendConfig(m=m))
    assert abs(candidate_weights(cands).sum() - 1.0) <= 1e-12


def test_blend_projection_alpha_zero(rng):
    gen = Frame(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    cands = [(FacePoolEntry(_field(rng), Frame(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)), 0), 2.0)]
    out = blend(gen, cands, BlendConfig(alpha=0.0, beta=1.0))
    np.testing.assert_array_equal(out.pixels, gen.pixels)


def test_blend_single_candidate_alpha_one(rng):
    face = Frame(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    out = blend(_gray(0, 8), [(FacePoolEntry(_field(rng), face, 0), 0.3)],
                BlendConfig(alpha=1.0, beta=0.0))
    np.testing.assert_array_equal(out.pixels, face.pixels)


def test_blend_hand_value(rng):
    cands = [(FacePoolEntry(_field(rng), _gray(100), 0), 1.0),
             (FacePoolEntry(_field(rng), _gray(200), 1), 1.0)]
    out = blend(_gray(0), cands, BlendConfig(alpha=0.5, beta=0.5))
    assert (out.pixels == 75).all()


def test_blend_rounds_half_to_even(rng):
    # 0.5 * 1 + 0.5 * 0 = 0.5 -> 0 ; 0.5 * 3 = 1.5 -> 2
    c1 = [(FacePoolEntry(_field(rng), _gray(1), 0), 1.0)]
    assert (blend(_gray(0), c1, BlendConfig(alpha=0.5, beta=0.5)).pixels == 0).all()
    c3 = [(FacePoolEntry(_field(rng), _gray(3), 0), 1.0)]
    assert (blend(_gray(0), c3, BlendConfig(alpha=0.5, beta=0.5)).pixels == 2).all()


def test_blend_dimension_mismatch(rng):
    cands = [(FacePoolEntry(_field(rng), _gray(1, 5), 0), 1.0)]
    with pytest.raises(DataError):
        blend(_gray(0, 4), cands, BlendConfig())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1))
def test_blend_convex_bounds(seed, alpha):
    rng = np.random.default_rng(seed)
    gen = rng.integers(0, 256, (5, 5, 3), dtype=np.uint8)
    faces = [rng.integers(0, 256, (5, 5, 3), dtype=np.uint8) for _ in range(3)]
    cands = [(FacePoolEntry(_field(rng), Frame(f), k), float(rng.uniform(0.1, 2)))
             for k, f in enumerate(faces)]
    out = blend(Frame(gen), cands, BlendConfig(alpha=alpha, beta=1 - alpha)).pixels
    stack = np.stack([gen] + faces)
    assert (out >= stack.min(0)).all() and (out <= stack.max(0)).all()


def test_face_crop_scale_and_clamp():
    pose = make_pose(0, {NOSE: (5, 5), R_EYE: (0, 0), L_EYE: (20, 0)})
    x, y, w, h = face_crop_rect(pose, (100, 120, 3))
    assert w == h == 50 and (x, y) == (0, 0)


def test_pool_entry_canonical_size(synthetic_sequence):
    seq = synthetic_sequence
    e = make_pool_entry(seq.truth_fg[0], seq.poses[0])
    assert e.face_image.shape == (64, 64, 3)
