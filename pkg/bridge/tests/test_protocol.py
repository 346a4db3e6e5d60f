import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmd_bridge import protocol as proto


def roundtrip(msg):
    stream = proto.Stream(io.BytesIO(proto.encode(msg)).read, lambda b: None)
    return stream.recv()


dims3 = st.tuples(st.integers(1, 4), st.integers(1, 8), st.integers(1, 8))


class TestRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(dims=dims3, t=st.integers(1, 100_000), ab=st.floats(1e-9, 1.0),
           seed=st.integers(0, 2**32 - 1))
    def test_eps_request(self, dims, t, ab, seed):
        data = np.random.default_rng(seed).standard_normal(dims).astype(np.float32)
        back = roundtrip(proto.EpsRequest(t_index=t, alpha_bar=ab, data=data))
        assert back.t_index == t and back.alpha_bar == ab
        np.testing.assert_array_equal(back.data, data)

    @settings(max_examples=30, deadline=None)
    @given(dims=dims3, seed=st.integers(0, 2**32 - 1))
    def test_eps_response(self, dims, seed):
        data = np.random.default_rng(seed).standard_normal(dims).astype(np.float32)
        np.testing.assert_array_equal(roundtrip(proto.EpsResponse(data)).data, data)

    @settings(max_examples=30, deadline=None)
    @given(text=st.text(max_size=128))
    def test_error(self, text):
        assert roundtrip(proto.ErrorFrame(text)).message == text

    @settings(max_examples=30, deadline=None)
    @given(t=st.integers(1, 10**6), b0=st.floats(1e-9, 0.9), b1=st.floats(1e-9, 0.999),
           dims=dims3)
    def test_handshake(self, t, b0, b1, dims):
        msg = proto.Handshake(t_train=t, beta_start=b0, beta_end=b1, dims=dims)
        assert roundtrip(msg) == msg


class TestFraming:
    def test_clean_eof_distinguished(self):
        stream = proto.Stream(io.BytesIO(b"").read, lambda b: None)
        with pytest.raises(proto.ConnectionClosed):
            stream.recv()

    def test_mid_frame_eof(self):
        data = proto.encode(proto.ErrorFrame("hello"))
        stream = proto.Stream(io.BytesIO(data[:-2]).read, lambda b: None)
        with pytest.raises(proto.FrameError, match="mid-frame"):
            stream.recv()

    def test_bad_magic(self):
        data = bytearray(proto.encode(proto.ErrorFrame("x")))
        data[:4] = b"EVIL"
        stream = proto.Stream(io.BytesIO(bytes(data)).read, lambda b: None)
        with pytest.raises(proto.FrameError, match="magic"):
            stream.recv()

    def test_wrong_version(self):
        data = bytearray(proto.encode(proto.ErrorFrame("x")))
        data[4] = 2
        stream = proto.Stream(io.BytesIO(bytes(data)).read, lambda b: None)
        with pytest.raises(proto.FrameError, match="version"):
            stream.recv()

    def test_tensor_count_mismatch(self):
        import struct

        payload = struct.pack("<I3I", 3, 2, 2, 2) + b"\x00" * 8  # needs 32 bytes
        raw = proto.HEADER.pack(proto.MAGIC, proto.VERSION, proto.T_EPS_RESPONSE, len(payload)) + payload
        stream = proto.Stream(io.BytesIO(raw).read, lambda b: None)
        with pytest.raises(proto.FrameError, match="byte count"):
            stream.recv()
