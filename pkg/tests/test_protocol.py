"""Wire codec: byte layout, round trips, and every rejection path."""

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdeforge.equations import PARAM_FIELDS, Equation
from pdeforge.initializers import ic_param_count
from pdeforge.protocol import (
    MAGIC,
    VERSION,
    BadMagic,
    ChecksumMismatch,
    FormatError,
    FrameSample,
    ProtocolError,
    Truncated,
    VersionMismatch,
    decode,
    encode,
    read_sample,
)


def make_sample(seed=0, shape=(4, 4, 4), **overrides) -> FrameSample:
    gen = np.random.default_rng(seed)
    fields = dict(
        payload=gen.standard_normal(shape).astype(np.float32),
        equation_id=int(Equation.BURGERS),
        initializer_id=1,
        resolution=64,
        run_idx=2,
        frame_idx=7,
        channel_idx=1,
        canonical=True,
        pde_params=(2.5e-3,),
        ic_params=(4.0, -1.0, 1.0),
    )
    fields.update(overrides)
    return FrameSample(**fields)


class TestLayout:
    def test_header_starts_with_magic_and_version(self):
        buf = encode(make_sample())
        assert buf[:4] == MAGIC == b"TDPL"
        assert struct.unpack_from("<H", buf, 4)[0] == VERSION == 1

    def test_fixed_sizes(self):
        s = make_sample()
        buf = encode(s)
        n_params = len(s.pde_params) + len(s.ic_params)
        assert len(buf) == 19 + 4 * n_params + 15 + s.payload.nbytes

    def test_field_positions(self):
        s = make_sample(shape=(4, 5, 6))
        buf = encode(s)
        flags, eq, ic, res, run, frame, chan, canon, n_params = struct.unpack_from("<HBBHHHBBB", buf, 6)
        assert (eq, ic, res, run, frame, chan) == (2, 1, 64, 2, 7, 1)
        assert flags == 0 and canon == 1 and n_params == 4
        off = 19 + 4 * n_params
        dx, dy, dz, dtype_code, plen, crc = struct.unpack_from("<HHHBII", buf, off)
        assert (dx, dy, dz) == (4, 5, 6)
        assert dtype_code == 0
        assert plen == 4 * 4 * 5 * 6
        assert crc == zlib.crc32(s.payload.tobytes()) & 0xFFFFFFFF
        assert buf[off + 15 :] == s.payload.tobytes()

    def test_params_are_f32_le_in_order(self):
        s = make_sample()
        buf = encode(s)
        vals = struct.unpack_from("<4f", buf, 19)
        assert vals == s.pde_params + s.ic_params

    def test_normalized_flag_bit(self):
        buf = encode(make_sample(normalized=True))
        assert struct.unpack_from("<H", buf, 6)[0] == 1
        assert decode(buf).normalized

    def test_payload_is_c_order(self):
        s = make_sample(shape=(2, 3, 4))
        buf = encode(s)
        flat = np.frombuffer(buf[-s.payload.nbytes :], dtype="<f4")
        np.testing.assert_array_equal(flat.reshape(2, 3, 4), s.payload)


class TestRoundTrip:
    def test_identity(self):
        s = make_sample()
        assert decode(encode(s)) == s

    def test_no_ic_params_for_gaussian(self):
        s = make_sample(
            equation_id=int(Equation.KURAMOTO_SIVASHINSKY),
            initializer_id=0,
            pde_params=(),
            ic_params=(),
            channel_idx=0,
        )
        out = decode(encode(s))
        assert out == s
        assert out.pde_params == () and out.ic_params == ()

    def test_param_split_by_tables(self):
        s = make_sample(
            equation_id=int(Equation.FISHER_KPP),
            initializer_id=3,
            pde_params=(1e-3, 10.0),
            ic_params=(7.0, 0.0, 1.0),
        )
        out = decode(encode(s))
        assert out.pde_params == pytest.approx((1e-3, 10.0))
        assert out.ic_params == pytest.approx((7.0, 0.0, 1.0))

    def test_payload_values_bit_exact(self):
        s = make_sample(seed=42, shape=(8, 8, 8))
        out = decode(encode(s))
        assert out.payload.tobytes() == s.payload.tobytes()
        assert out.payload.dtype == np.float32

    def test_non_cubic_crop(self):
        s = make_sample(shape=(8, 4, 2))
        assert decode(encode(s)) == s

    @settings(max_examples=40, deadline=None)
    @given(
        eq=st.sampled_from(list(Equation)),
        ic=st.integers(0, 13),
        res=st.integers(0, 0xFFFF),
        run=st.integers(0, 0xFFFF),
        frame=st.integers(0, 0xFFFF),
        chan=st.integers(0, 0xFF),
        canonical=st.booleans(),
        normalized=st.booleans(),
        seed=st.integers(0, 2**31),
    )
    def test_hypothesis_round_trip(self, eq, ic, res, run, frame, chan, canonical, normalized, seed):
        gen = np.random.default_rng(seed)
        s = FrameSample(
            payload=gen.standard_normal((3, 2, 5)).astype(np.float32),
            equation_id=int(eq),
            initializer_id=ic,
            resolution=res,
            run_idx=run,
            frame_idx=frame,
            channel_idx=chan,
            canonical=canonical,
            normalized=normalized,
            pde_params=tuple(gen.uniform(-10, 10, len(PARAM_FIELDS[eq]))),
            ic_params=tuple(gen.uniform(-10, 10, ic_param_count(ic))),
        )
        assert decode(encode(s)) == s


class TestRejections:
    def test_bad_magic(self):
        buf = bytearray(encode(make_sample()))
        buf[0:4] = b"XXXX"
        with pytest.raises(BadMagic):
            decode(bytes(buf))

    def test_version_mismatch(self):
        buf = bytearray(encode(make_sample()))
        struct.pack_into("<H", buf, 4, 9)
        with pytest.raises(VersionMismatch):
            decode(bytes(buf))

    def test_truncated_everywhere(self):
        buf = encode(make_sample())
        for cut in (0, 3, 18, 19, 25, 33, len(buf) - 1):
            with pytest.raises(Truncated):
                decode(buf[:cut])

    def test_trailing_garbage(self):
        with pytest.raises(FormatError):
            decode(encode(make_sample()) + b"\x00")

    def test_payload_corruption_caught_by_crc(self):
        buf = bytearray(encode(make_sample()))
        buf[-1] ^= 0xFF
        with pytest.raises(ChecksumMismatch):
            decode(bytes(buf))

    def test_unknown_equation_id(self):
        buf = bytearray(encode(make_sample()))
        buf[8] = 200
        with pytest.raises(FormatError):
            decode(bytes(buf))

    def test_unknown_initializer_id(self):
        buf = bytearray(encode(make_sample()))
        buf[9] = 99
        with pytest.raises(FormatError):
            decode(bytes(buf))

    def test_dims_payload_disagreement(self):
        buf = bytearray(encode(make_sample()))
        struct.pack_into("<H", buf, 19 + 16, 5)  # dx: 4 -> 5
        with pytest.raises(FormatError):
            decode(bytes(buf))

    def test_unknown_dtype_code(self):
        buf = bytearray(encode(make_sample()))
        buf[19 + 16 + 6] = 3
        with pytest.raises(FormatError):
            decode(bytes(buf))

    def test_param_count_id_disagreement(self):
        buf = bytearray(encode(make_sample()))
        buf[9] = 0  # gaussian carries no ic params; count now wrong
        with pytest.raises(FormatError):
            decode(bytes(buf))

    def test_all_rejections_are_protocol_errors(self):
        assert issubclass(BadMagic, ProtocolError)
        assert issubclass(VersionMismatch, ProtocolError)
        assert issubclass(Truncated, ProtocolError)
        assert issubclass(ChecksumMismatch, ProtocolError)
        assert issubclass(FormatError, ProtocolError)

    def test_encode_validates_metadata(self):
        with pytest.raises(FormatError):
            encode(make_sample(pde_params=()))
        with pytest.raises(FormatError):
            encode(make_sample(equation_id=77))
        with pytest.raises(FormatError):
            encode(make_sample(run_idx=70000))
        with pytest.raises(FormatError):
            encode(make_sample(channel_idx=300))

    def test_sample_rejects_non_3d_payload(self):
        with pytest.raises(ValueError):
            make_sample(payload=np.zeros((4, 4), dtype=np.float32))


class ChunkReader:
    """Feed bytes in deliberately awkward chunk sizes."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def read_exact(self, n: int) -> bytes:
        out = self.blob[self.pos : self.pos + n]
        self.pos += len(out)
        return out


class TestReadSample:
    def test_stream_of_messages(self):
        samples = [make_sample(seed=i, frame_idx=i) for i in range(5)]
        reader = ChunkReader(b"".join(encode(s) for s in samples))
        got = []
        while (s := read_sample(reader.read_exact)) is not None:
            got.append(s)
        assert got == samples

    def test_clean_eof_returns_none(self):
        reader = ChunkReader(b"")
        assert read_sample(reader.read_exact) is None

    def test_eof_mid_header_raises(self):
        reader = ChunkReader(encode(make_sample())[:10])
        with pytest.raises(Truncated):
            read_sample(reader.read_exact)

    def test_eof_mid_payload_raises(self):
        buf = encode(make_sample())
        reader = ChunkReader(buf[: len(buf) - 7])
        with pytest.raises(Truncated):
            read_sample(reader.read_exact)

    def test_eof_between_messages_is_clean(self):
        buf = encode(make_sample())
        reader = ChunkReader(buf + buf)
        assert read_sample(reader.read_exact) is not None
        assert read_sample(reader.read_exact) is not None
        assert read_sample(reader.read_exact) is None


class TestEquality:
    def test_metadata_differences_detected(self):
        a = make_sample()
        assert a != make_sample(frame_idx=8)
        assert a != make_sample(normalized=True)
        assert a != make_sample(canonical=False)

    def test_payload_differences_detected(self):
        a = make_sample(seed=1)
        b = make_sample(seed=2)
        assert a != b

    def test_params_rounded_to_f32_on_construction(self):
        s = make_sample(pde_params=(0.1,))
        assert s.pde_params[0] == float(np.float32(0.1))
