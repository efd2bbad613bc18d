import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from kubecs.io import (
    BundleHeader,
    DataError,
    RawSource,
    fingerprint,
    load_config,
    load_frames,
    load_video,
    parse_config,
    read_bundle,
    read_pgm,
    save_video,
    split_gops,
    to_uint8,
    write_bundle,
    write_pgm,
)
from kubecs.pipeline import PadMode, SensingConfig, Variant, Weighting


def test_read_pgm_known_bytes(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n3 2\n255\n" + bytes([0, 1, 2, 253, 254, 255]))
    np.testing.assert_array_equal(read_pgm(p), [[0, 1, 2], [253, 254, 255]])


def test_read_pgm_with_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 # width\n1\n# max\n255\n" + bytes([7, 9]))
    np.testing.assert_array_equal(read_pgm(p), [[7, 9]])


def test_raster_may_start_with_whitespace_byte(tmp_path):
    p = tmp_path / "w.pgm"
    p.write_bytes(b"P5 2 1 255\n" + bytes([10, 32]))
    np.testing.assert_array_equal(read_pgm(p), [[10, 32]])


@pytest.mark.parametrize(
    "blob",
    [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n" + bytes(3), b"P5\n2 2\n65535\n" + bytes(8), b"P5\n2", b"P5\nx 2\n255\n"],
)
def test_malformed_pgm(tmp_path, blob):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(DataError):
        read_pgm(p)


def test_to_uint8_clip_and_round():
    x = np.array([-3.0, 0.49, 0.5, 1.5, 2.5, 254.5, 300.0])
    np.testing.assert_array_equal(to_uint8(x), [0, 0, 1, 2, 3, 255, 255])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_save_load_round_trip(tmp_path_factory, h, w, t, seed):
    frames = np.random.default_rng(seed).integers(0, 256, (t, h, w)).astype(np.uint8)
    d = tmp_path_factory.mktemp("frames")
    paths = save_video([frames], d)
    assert [p.name for p in paths] == [f"frame_{k:05d}.pgm" for k in range(t)]
    assert load_frames(d).tobytes() == frames.tobytes()


def test_save_clips_then_rounds(tmp_path):
    save_video([np.array([[[-10.0, 12.5, 254.6, 400.0]]])], tmp_path)
    np.testing.assert_array_equal(load_frames(tmp_path)[0], [[0, 13, 255, 255]])


def test_save_empty_list(tmp_path):
    dst = tmp_path / "none"
    assert save_video([], dst) == []
    assert not dst.exists()


def test_save_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        save_video([np.zeros((1, 2, 2))], blocker)


def test_raw_zeros_single_gop(tmp_path):
    p = tmp_path / "z.raw"
    p.write_bytes(bytes(2 * 8 * 8))
    gops = load_video(RawSource(str(p), 8, 8, 2), 2)
    assert len(gops) == 1 and gops[0].shape == (2, 8, 8) and not gops[0].any()


def test_raw_one_byte_short(tmp_path):
    p = tmp_path / "s.raw"
    p.write_bytes(bytes(2 * 8 * 8 - 1))
    with pytest.raises(DataError, match="127.*expected 128"):
        load_frames(RawSource(str(p), 8, 8, 2))


def test_raw_round_trip(tmp_path):
    frames = np.random.default_rng(5).integers(0, 256, (3, 5, 7)).astype(np.uint8)
    p = tmp_path / "r.raw"
    p.write_bytes(frames.tobytes())
    assert load_frames(RawSource(str(p), 7, 5, 3)).tobytes() == frames.tobytes()


def test_single_pgm_is_one_frame(tmp_path):
    write_pgm(tmp_path / "x.pgm", np.full((4, 6), 9))
    assert load_frames(tmp_path / "x.pgm").shape == (1, 4, 6)


def test_directory_order_and_size_check(tmp_path):
    write_pgm(tmp_path / "b.pgm", np.full((2, 2), 2))
    write_pgm(tmp_path / "a.pgm", np.full((2, 2), 1))
    np.testing.assert_array_equal(load_frames(tmp_path)[:, 0, 0], [1, 2])
    write_pgm(tmp_path / "c.pgm", np.zeros((3, 2)))
    with pytest.raises(DataError):
        load_frames(tmp_path)
    with pytest.raises(DataError):
        load_frames(tmp_path / "missing")


def test_split_gops_short_tail():
    gops = split_gops(np.zeros((10, 4, 4)), 4)
    assert [g.shape[0] for g in gops] == [4, 4, 2]


def header(layout):
    return BundleHeader(8, 4, "kcs", 0.3, 7, True, "error", "0123456789abcdef", 16, 24, 6, layout)


def test_bundle_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    layout = [(4, 6, 20), (2, 6, 10)]
    vectors = [[rng.standard_normal(m) for _ in range(n)] for _, n, m in layout]
    vectors[0][0][0] = np.nextafter(1.0, 2.0)  # exact float payload
    write_bundle(tmp_path / "b.kcs", header(layout), vectors)
    h, back = read_bundle(tmp_path / "b.kcs")
    assert h == header(layout)
    for ga, gb in zip(vectors, back):
        for a, b in zip(ga, gb):
            assert a.tobytes() == b.tobytes()


def test_bundle_header_is_text(tmp_path):
    write_bundle(tmp_path / "b", header([(4, 1, 2)]), [[np.zeros(2)]])
    text = (tmp_path / "b").read_bytes().split(b"\nend\n")[0].decode("ascii")
    assert text.startswith("KUBECS-MEASUREMENTS\nversion 1\n")
    assert "fingerprint 0123456789abcdef" in text


def test_bundle_errors(tmp_path):
    with pytest.raises(ValueError):
        write_bundle(tmp_path / "b", header([(4, 1, 2)]), [[np.zeros(3)]])
    write_bundle(tmp_path / "b", header([(4, 1, 2)]), [[np.zeros(2)]])
    data = (tmp_path / "b").read_bytes()
    (tmp_path / "t").write_bytes(data[:-1])
    with pytest.raises(DataError):
        read_bundle(tmp_path / "t")
    (tmp_path / "m").write_bytes(b"something else\nend\n")
    with pytest.raises(DataError):
        read_bundle(tmp_path / "m")
    (tmp_path / "v").write_bytes(data.replace(b"version 1", b"version 9"))
    with pytest.raises(DataError):
        read_bundle(tmp_path / "v")


CONFIG = """
# a comment
input = synthetic:moving-square
synth_size = 16x16
block_size = 8
gop = 4
variant = kcs, cube3d
weighting = perceptual
rates = 0.2, 0.4
seeds = 0,1,2
pad_mode = edge
shared_phi = no
"""


def test_parse_config():
    cfg = parse_config(CONFIG)
    assert cfg.variant == [Variant.KCS, Variant.CUBE3D]
    assert cfg.weighting == [Weighting.PERCEPTUAL]
    assert cfg.rates == [0.2, 0.4] and cfg.seeds == [0, 1, 2]
    assert cfg.pad_mode is PadMode.EDGE and cfg.shared_phi is False
    assert cfg.synth_size == (16, 16)
    gops = cfg.load_gops()
    assert [g.shape for g in gops] == [(4, 16, 16), (4, 16, 16)]
    sc = cfg.sensing_config(rate=0.4)
    assert sc.rate == 0.4 and sc.gop == 4 and not sc.shared_phi


@pytest.mark.parametrize(
    "text,match",
    [
        ("input = a\ncolour = red", "unknown key"),
        ("input = a\ngop = 4\ngop = 8", "duplicate"),
        ("input = a\nrates = 0.4, 0.2", "increasing"),
        ("input = a\nvariant = kcs3", "variant"),
        ("input = a\ngop = four", "gop"),
        ("gop = 4", "input"),
        ("input = a\nraw_width = 8", "raw"),
        ("input = a\njust text", "key = value"),
        ("input = a\nrates = 0.001", "rate too low"),
        ("input = a\nseeds =", "seeds"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(DataError, match=match):
        parse_config(text)


def test_load_config_missing(tmp_path):
    with pytest.raises(DataError):
        load_config(tmp_path / "nope.cfg")


def test_fingerprint_sensitivity():
    base = SensingConfig(Variant.KCS, 0.3, 8, 8, seed=1)
    fp = fingerprint(base, PadMode.ERROR)
    assert len(fp) == 16 and fp == fingerprint(SensingConfig(Variant.KCS, 0.3, 8, 8, seed=1), "error")
    others = [
        SensingConfig(Variant.CUBE3D, 0.3, 8, 8, seed=1),
        SensingConfig(Variant.KCS, 0.3, 8, 8, seed=2),
        SensingConfig(Variant.KCS, 0.4, 8, 8, seed=1),
        SensingConfig(Variant.KCS, 0.3, 8, 8, seed=1, shared_phi=False),
    ]
    assert all(fingerprint(c, PadMode.ERROR) != fp for c in others)
    assert fingerprint(base, PadMode.EDGE) != fp
    # weighting only affects reconstruction, not the measurements
    assert fingerprint(SensingConfig(Variant.KCS, 0.3, 8, 8, seed=1, weighting="rwl1"), "error") == fp
