import pytest

from hpcm.bitstream import HEADER_SIZE, Bitstream
from hpcm.errors import CorruptBitstreamError


def _stream():
    return Bitstream((8, 4, 4), 2**63 + 5, 3, 1, b"zz", b"yyyy")


def test_roundtrip_and_layout():
    s = _stream()
    data = s.to_bytes()
    assert data[:4] == b"HPCM" and HEADER_SIZE == 28
    assert len(data) == len(s) == 28 + 4 + 2 + 4 + 4
    assert Bitstream.from_bytes(data) == s


@pytest.mark.parametrize("mutate", [
    lambda d: d[:-1],
    lambda d: d + b"\0",
    lambda d: b"XPCM" + d[4:],
    lambda d: d[:4] + b"\x02\x00" + d[6:],
    lambda d: d[:27] + b"\x07" + d[28:],
    lambda d: d[:10],
])
def test_malformed_containers_rejected(mutate):
    with pytest.raises(CorruptBitstreamError):
        Bitstream.from_bytes(mutate(_stream().to_bytes()))
