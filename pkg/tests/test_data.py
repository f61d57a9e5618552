import logging

import numpy as np
import pytest

from lumina.data import (LowLightPair, SynthSettings, base_scenes, load_pairs, random_crop, read_png,
                         save_pairs, synth_pair, synth_pairs, to_image, to_tensor, write_png)
from lumina.errors import ConfigError, DataError


def test_png_round_trip_quantization(tmp_path, rng):
    img = rng.uniform(size=(7, 9, 3))
    write_png(tmp_path / "x.png", img)
    back = read_png(tmp_path / "x.png")
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_png_bytes_deterministic(tmp_path, rng):
    img = rng.uniform(size=(8, 8, 3))
    write_png(tmp_path / "a.png", img)
    write_png(tmp_path / "b.png", img)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_read_png_errors(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not an image")
    with pytest.raises(DataError):
        read_png(tmp_path / "bad.png")
    with pytest.raises(DataError):
        read_png(tmp_path / "missing.png")


def test_tensor_image_conversions(rng):
    img = rng.uniform(size=(5, 6, 3))
    t = to_tensor(img)
    assert t.shape == (1, 3, 5, 6)
    np.testing.assert_allclose(to_image(t), img.astype(np.float32))
    gray = to_image(t.data[:, :1])
    assert gray.shape == (5, 6, 3) and np.array_equal(gray[..., 0], gray[..., 2])


def test_load_pairs_sorted(tmp_path, rng):
    pairs = synth_pairs(base_scenes(2, 16, seed=1), 2, seed=0)
    pairs = [LowLightPair(p.I1, p.I2, name) for p, name in zip(pairs, ["zeta", "alpha"])]
    save_pairs(pairs, tmp_path)
    loaded = load_pairs(tmp_path)
    assert [p.id for p in loaded] == ["alpha", "zeta"]


def test_load_pairs_rejects_mismatch(tmp_path, rng, caplog):
    save_pairs(synth_pairs(base_scenes(1, 16), 1, seed=0), tmp_path)
    bad = tmp_path / "broken"
    bad.mkdir()
    write_png(bad / "a.png", rng.uniform(size=(16, 16, 3)))
    write_png(bad / "b.png", rng.uniform(size=(16, 12, 3)))
    with caplog.at_level(logging.WARNING):
        loaded = load_pairs(tmp_path)
    assert [p.id for p in loaded] == ["pair0000"]
    assert "broken" in caplog.text


def test_load_pairs_no_valid(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataError):
        load_pairs(tmp_path)
    with pytest.raises(DataError):
        load_pairs(tmp_path / "nope")


def test_synth_round_trip_through_disk(tmp_path, caplog):
    pairs = synth_pairs(base_scenes(3, 24, seed=2), 3, seed=5)
    save_pairs(pairs, tmp_path)
    with caplog.at_level(logging.WARNING):
        loaded = load_pairs(tmp_path)
    assert not caplog.records
    for p, q in zip(pairs, loaded):
        assert p.id == q.id
        assert np.abs(p.I1 - q.I1).max() <= 0.5 / 255 + 1e-6
        assert np.abs(p.I2 - q.I2).max() <= 0.5 / 255 + 1e-6


def test_synth_deterministic():
    bases = base_scenes(2, 20, seed=0)
    a, b = synth_pairs(bases, 3, seed=9), synth_pairs(bases, 3, seed=9)
    for p, q in zip(a, b):
        assert p.I1.tobytes() == q.I1.tobytes() and p.I2.tobytes() == q.I2.tobytes()
    c = synth_pairs(bases, 3, seed=10)
    assert a[0].I1.tobytes() != c[0].I1.tobytes()


def test_synth_shared_reflectance_within_noise():
    base = base_scenes(1, 32, seed=4)[0]
    sigma = 0.02
    pair, L1, L2 = synth_pair(base, np.random.default_rng(0), dtype=np.float64)
    r1 = pair.I1[0].transpose(1, 2, 0) / L1[..., None]
    r2 = pair.I2[0].transpose(1, 2, 0) / L2[..., None]
    # each ratio carries noise sigma / L, L >= 0.05
    tol = np.broadcast_to(3 * sigma * np.sqrt(1 / L1 ** 2 + 1 / L2 ** 2)[..., None], r1.shape)
    unclipped = (pair.I1[0].transpose(1, 2, 0) > 0) & (pair.I2[0].transpose(1, 2, 0) > 0)
    frac = np.mean((np.abs(r1 - r2) <= tol)[unclipped])
    assert min(L1.min(), L2.min()) >= 0.05 and max(L1.max(), L2.max()) <= 0.6
    assert frac > 0.99


def test_synth_degenerate_generator_identical():
    base = base_scenes(1, 16)[0]
    s = SynthSettings(noise_sigma=0.0, shared_field=True)
    pair, _, _ = synth_pair(base, np.random.default_rng(0), settings=s)
    assert pair.I1.tobytes() == pair.I2.tobytes()


def test_synth_skips_small_bases(caplog):
    bases = [np.full((8, 8, 3), 0.5), np.full((20, 20, 3), 0.5)]
    with caplog.at_level(logging.WARNING):
        pairs = synth_pairs(bases, 2, seed=0, crop=16)
    assert "smaller than crop" in caplog.text
    assert all(p.height == 20 for p in pairs)
    with pytest.raises(DataError):
        synth_pairs(bases[:1], 1, crop=16)


def test_random_crop_identity_and_determinism():
    pair = synth_pairs(base_scenes(1, 16), 1)[0]
    same = random_crop(pair, 16, np.random.default_rng(0))
    assert same.I1.tobytes() == pair.I1.tobytes()
    a = random_crop(pair, 8, np.random.default_rng(3))
    b = random_crop(pair, 8, np.random.default_rng(3))
    assert a.I1.tobytes() == b.I1.tobytes()
    with pytest.raises(ConfigError):
        random_crop(pair, 17, np.random.default_rng(0))


def test_random_crop_preserves_registration():
    pair = synth_pairs(base_scenes(1, 32, seed=3), 1, seed=1, settings=SynthSettings(noise_sigma=0.0))[0]
    ratio = pair.I1 / pair.I2
    crop = random_crop(pair, 12, np.random.default_rng(7))
    cr = crop.I1 / crop.I2
    H = W = 32
    hits = [(y, x) for y in range(H - 11) for x in range(W - 11)
            if np.array_equal(ratio[:, :, y:y + 12, x:x + 12], cr)
            and np.array_equal(pair.I1[:, :, y:y + 12, x:x + 12], crop.I1)]
    assert hits


def test_pair_shape_check():
    with pytest.raises(DataError):
        LowLightPair(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)), "x")
