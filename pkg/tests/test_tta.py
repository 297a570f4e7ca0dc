import itertools

import numpy as np
import pytest

from rvoskit.errors import DimensionError
from rvoskit.geometry import Dims, hflip_prob, resize_bilinear
from rvoskit.manifest import Manifest, SequenceEntry
from rvoskit.raster import read_mask, write_mask, write_pfm
from rvoskit.tta import AugmentationSpec, AugmentedOutput, enumerate_augs, fuse, fuse_probs, fuse_tree, invert


def test_enumerate_augs():
    specs = enumerate_augs([288, 352, 448, 512, 640], True)
    assert len(specs) == 10
    assert [s.tag for s in specs[:4]] == ["s288_f0", "s288_f1", "s352_f0", "s352_f1"]
    assert len({s.tag for s in specs}) == 10
    assert enumerate_augs([360], False) == [AugmentationSpec(360, False)]
    assert len(enumerate_augs([352, 512, 720, 896], True)) == 8
    assert [s.short_side for s in enumerate_augs([640, 288], False)] == [288, 640]
    with pytest.raises(ValueError):
        enumerate_augs([288, 288], True)
    with pytest.raises(ValueError):
        enumerate_augs([], True)
    with pytest.raises(ValueError):
        AugmentationSpec(0)


def test_invert_identity_and_flip(rng):
    orig = Dims(12, 8)
    p = rng.random((8, 12)).astype(np.float32)
    assert np.array_equal(invert(AugmentedOutput(AugmentationSpec(8), p), orig), p)
    flipped = AugmentedOutput(AugmentationSpec(8, hflip=True), hflip_prob(p))
    assert np.array_equal(invert(flipped, orig), p)


def test_invert_constant_and_dims():
    orig = Dims(12, 8)
    out = invert(AugmentedOutput(AugmentationSpec(20), np.full((20, 30), 0.7, np.float32)), orig)
    assert out.shape == (8, 12) and np.all(out == np.float32(0.7))
    with pytest.raises(DimensionError):
        invert(AugmentedOutput(AugmentationSpec(20), np.zeros((20, 20), np.float32)), orig)


def test_invert_applies_unflip_then_resize(rng):
    orig = Dims(9, 6)
    spec = AugmentationSpec(10, hflip=True)
    p = rng.random((10, 15)).astype(np.float32)
    expected = resize_bilinear(hflip_prob(p), orig)
    assert np.array_equal(invert(AugmentedOutput(spec, p), orig), expected)


def test_fuse_single_identity_is_threshold(rng):
    p = rng.random((6, 9)).astype(np.float32)
    p[0, 0] = 0.5
    mask = fuse([AugmentedOutput(AugmentationSpec(6), p)], Dims(9, 6))
    assert np.array_equal(mask, (p >= 0.5).astype(np.uint8))
    assert mask[0, 0] == 1


def test_fuse_tie_goes_to_foreground():
    orig = Dims(1, 1)
    outs = [AugmentedOutput(AugmentationSpec(1), np.array([[0.2]], np.float32)),
            AugmentedOutput(AugmentationSpec(1, hflip=True), np.array([[0.8]], np.float32))]
    assert fuse(outs, orig).tolist() == [[1]]
    assert fuse(outs, orig, threshold=0.51).tolist() == [[0]]


def _random_outputs(rng, orig, sizes=(4, 6, 8), flip=True):
    return [AugmentedOutput(s, rng.random(tuple(reversed(s.dims_for(orig)))).astype(np.float32))
            for s in enumerate_augs(list(sizes), flip)]


def test_fuse_permutation_invariant(rng):
    orig = Dims(10, 6)
    outs = _random_outputs(rng, orig)[:5]
    ref = fuse(outs, orig)
    for perm in itertools.islice(itertools.permutations(outs), 0, None, 7):
        assert np.array_equal(fuse(list(perm), orig), ref)


def test_fuse_rejects_duplicates_and_empty(rng):
    orig = Dims(4, 4)
    out = AugmentedOutput(AugmentationSpec(4), np.zeros((4, 4), np.float32))
    with pytest.raises(ValueError):
        fuse([out, out], orig)
    with pytest.raises(ValueError):
        fuse([], orig)
    with pytest.raises(ValueError):
        fuse([out], orig, threshold=1.0)


def test_fuse_of_mirrored_partners_is_symmetric(rng):
    orig = Dims(11, 7)
    outs = []
    for size in (7, 10):
        spec = AugmentationSpec(size)
        d = spec.dims_for(orig)
        p = rng.random((d.height, d.width)).astype(np.float32)
        # the flip partner's output, once un-flipped, is the mirror image of p
        outs += [AugmentedOutput(spec, p), AugmentedOutput(AugmentationSpec(size, True), p)]
    mask = fuse(outs, orig)
    assert np.array_equal(mask, mask[:, ::-1])
    probs = fuse_probs(outs, orig)
    assert probs.min() >= 0.0 and probs.max() <= 1.0


def test_fuse_tree(tmp_path, rng):
    frames = tmp_path / "frames"
    frames.mkdir()
    write_mask(np.zeros((6, 10), np.uint8), frames / "00000.png")
    m = Manifest("valid", (SequenceEntry("v", "0", "x", ("00000",), str(frames)),))
    specs = enumerate_augs([3, 6], True)
    truth = np.zeros((6, 10), np.float32)
    truth[:, :4] = 1.0
    for s in specs:
        d = s.dims_for(Dims(10, 6))
        p = resize_bilinear(truth, d)
        if s.hflip:
            p = hflip_prob(p)
        (tmp_path / "pred" / s.tag / "v" / "0").mkdir(parents=True)
        if s.short_side == 3 and not s.hflip:
            write_mask((p >= 0.5).astype(np.uint8), tmp_path / "pred" / s.tag / "v" / "0" / "00000.png")
        else:
            write_pfm(p, tmp_path / "pred" / s.tag / "v" / "0" / "00000.pfm")
    assert fuse_tree(m, tmp_path / "pred", specs, tmp_path / "fused") == 1
    fused = read_mask(tmp_path / "fused" / "v" / "0" / "00000.png")
    assert np.array_equal(fused, truth.astype(np.uint8))


def test_fusing_identical_copies_equals_one(rng):
    # specs must be distinct, so copies differ only in a non-binding long cap
    orig = Dims(10, 6)
    p = rng.random((6, 10)).astype(np.float32)
    caps = [None, 100, 101, 102]
    one = fuse_probs([AugmentedOutput(AugmentationSpec(6), p)], orig)
    many = fuse_probs([AugmentedOutput(AugmentationSpec(6, long_cap=c), p) for c in caps], orig)
    np.testing.assert_allclose(many, one, rtol=0, atol=1e-7)
    assert np.array_equal(fuse([AugmentedOutput(AugmentationSpec(6, long_cap=c), p) for c in caps], orig),
                          fuse([AugmentedOutput(AugmentationSpec(6), p)], orig))
