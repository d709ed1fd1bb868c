"""Byte-exact round trips for the NRTW-IMG and NRTW-CKPT containers."""

import numpy as np
import pytest

from nrtw.errors import FormatError
from nrtw.formats import (
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    image_from_bytes,
    image_to_bytes,
    read_image,
    to_png_bytes,
    write_image,
)
from nrtw.networks import NetworkConfig, build_network
from nrtw.simulate import default_profile, generate_phantom, window_to_bytes
from nrtw.training import Checkpoint


def test_image_write_read_write_identical(tmp_path):
    img = generate_phantom(default_profile(32).spec)
    meta = {"sigma": 25.0, "seed": 3, "note": "phantom"}
    first = image_to_bytes(img, meta)
    loaded, loaded_meta = image_from_bytes(first)
    second = image_to_bytes(loaded, loaded_meta)
    assert first == second
    assert np.array_equal(loaded, img)
    assert loaded_meta == meta

    path = tmp_path / "img.img"
    write_image(path, img, meta)
    again, again_meta = read_image(path)
    assert np.array_equal(again, img)
    assert again_meta == meta


def test_image_header_errors():
    with pytest.raises(FormatError):
        image_from_bytes(b"not a container")
    good = image_to_bytes(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        image_from_bytes(good[:-4])  # truncated payload


def test_checkpoint_round_trip_bytes():
    cfg = NetworkConfig(kind="plain", num_layers=3, hidden_channels=4)
    params = build_network(cfg, seed=5)
    ckpt = Checkpoint(
        config=cfg,
        params=params,
        loss_history=[1.0, 0.5, 0.25],
        seed=5,
        dataset_fingerprint="abc123",
    )
    first = ckpt.to_bytes()
    loaded = Checkpoint.from_bytes(first)
    second = loaded.to_bytes()
    assert first == second
    assert loaded.seed == 5
    assert loaded.dataset_fingerprint == "abc123"
    assert loaded.loss_history == [1.0, 0.5, 0.25]
    assert loaded.config == cfg
    for name in params.names():
        assert np.array_equal(loaded.params[name].data, params[name].data)


def test_checkpoint_file_round_trip(tmp_path):
    cfg = NetworkConfig(kind="unet", depth=2, base_channels=4)
    ckpt = Checkpoint(config=cfg, params=build_network(cfg, seed=1), seed=1)
    path = tmp_path / "net.ckpt"
    ckpt.save(path)
    loaded = Checkpoint.load(path)
    assert loaded.to_bytes() == ckpt.to_bytes()


def test_checkpoint_payload_errors():
    cfg = NetworkConfig(kind="plain", num_layers=2, hidden_channels=2)
    data = checkpoint_to_bytes(
        cfg.to_dict(), {"w": np.zeros((2, 2), dtype=np.float32)}, seed=0
    )
    with pytest.raises(FormatError):
        checkpoint_from_bytes(data[:-4])
    with pytest.raises(FormatError):
        checkpoint_from_bytes(data + b"extra")
    with pytest.raises(FormatError):
        checkpoint_from_bytes(b"NRTW-IMG v1\n{}\n")


def test_png_export_round_trip():
    from PIL import Image as PILImage
    import io

    img = generate_phantom(default_profile(32).spec)
    gray = window_to_bytes(img, -160.0, 240.0)
    png = to_png_bytes(gray)
    decoded = np.asarray(PILImage.open(io.BytesIO(png)))
    assert decoded.dtype == np.uint8
    assert np.array_equal(decoded, gray)  # lossless
