import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmd import wire
from rdmd.errors import ProtocolError


def roundtrip(msg):
    return wire.read_message(io.BytesIO(wire.encode_message(msg)))


small_dims = st.tuples(
    st.integers(1, 4), st.integers(1, 8), st.integers(1, 8)
)


class TestRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(dims=small_dims, t=st.integers(1, 10_000), ab=st.floats(1e-6, 1.0), seed=st.integers(0, 2**32 - 1))
    def test_eps_request(self, dims, t, ab, seed):
        data = np.random.default_rng(seed).standard_normal(dims).astype(np.float32)
        again = roundtrip(wire.EpsRequest(t_index=t, alpha_bar=ab, data=data))
        assert again.t_index == t
        assert again.alpha_bar == ab
        np.testing.assert_array_equal(again.data, data)

    @settings(max_examples=30, deadline=None)
    @given(dims=small_dims, seed=st.integers(0, 2**32 - 1))
    def test_eps_response(self, dims, seed):
        data = np.random.default_rng(seed).standard_normal(dims).astype(np.float32)
        np.testing.assert_array_equal(roundtrip(wire.EpsResponse(data=data)).data, data)

    @settings(max_examples=30, deadline=None)
    @given(message=st.text(max_size=200))
    def test_error_frame(self, message):
        assert roundtrip(wire.ErrorFrame(message=message)).message == message

    @settings(max_examples=30, deadline=None)
    @given(
        t_train=st.integers(1, 100_000),
        b0=st.floats(1e-8, 0.5),
        b1=st.floats(1e-8, 0.999),
        dims=small_dims,
    )
    def test_handshake(self, t_train, b0, b1, dims):
        msg = wire.Handshake(t_train=t_train, beta_start=b0, beta_end=b1, dims=dims)
        assert roundtrip(msg) == msg


class TestMalformedFrames:
    def test_bad_magic(self):
        frame = bytearray(wire.encode_message(wire.ErrorFrame("x")))
        frame[0:4] = b"NOPE"
        with pytest.raises(ProtocolError, match="magic"):
            wire.read_message(io.BytesIO(bytes(frame)))

    def test_bad_version(self):
        frame = bytearray(wire.encode_message(wire.ErrorFrame("x")))
        frame[4] = 9
        with pytest.raises(ProtocolError, match="version"):
            wire.read_message(io.BytesIO(bytes(frame)))

    def test_unknown_msg_type(self):
        with pytest.raises(ProtocolError, match="msg_type"):
            wire.read_message(io.BytesIO(wire.encode_frame(99, b"")))

    def test_truncated_stream(self):
        frame = wire.encode_message(wire.EpsResponse(np.zeros((1, 2, 2), np.float32)))
        with pytest.raises(ProtocolError, match="closed"):
            wire.read_message(io.BytesIO(frame[:-5]))

    def test_tensor_length_mismatch(self):
        good = wire.encode_message(wire.EpsResponse(np.zeros((1, 2, 2), np.float32)))
        # extend payload without fixing dims
        broken = wire.encode_frame(wire.MsgType.EPS_RESPONSE, good[17:] + b"\x00" * 4)
        with pytest.raises(ProtocolError, match="length"):
            wire.read_message(io.BytesIO(broken))

    def test_implausible_ndim(self):
        import struct

        payload = struct.pack("<I", 99)
        with pytest.raises(ProtocolError, match="ndim"):
            wire.read_message(io.BytesIO(wire.encode_frame(wire.MsgType.EPS_RESPONSE, payload)))

    def test_request_must_be_3d(self):
        with pytest.raises(ProtocolError, match="3-D"):
            wire.encode_message(
                wire.EpsRequest(t_index=1, alpha_bar=0.5, data=np.zeros((2, 2), np.float32))
            )
