import numpy as np
import pytest

from tvtfsim.aes import hamming_weight, hypothesis_matrix, hypothetical_leakage, sbox_lookup


def test_sbox_known_values():
    assert sbox_lookup(0x00) == 0x63
    assert sbox_lookup(0x53) == 0xED


def test_sbox_bijective():
    image = {sbox_lookup(b) for b in range(256)}
    assert len(image) == 256


def test_hamming_weight_cases():
    assert hamming_weight(0x00) == 0
    assert hamming_weight(0xFF) == 8
    assert hamming_weight(0xA5) == 4  # 1010_0101


def test_hypothetical_leakage():
    assert hypothetical_leakage(0x00, 0x00) == 4  # HW(0x63)
    # pt ^ k == 0x53 -> sbox 0xED -> HW 6
    assert hypothetical_leakage(0x53, 0x00) == 6
    assert hypothetical_leakage(0xA7, 0xF4) == 6
    for b in (0x00, 0x37, 0xFF):
        assert hypothetical_leakage(b, b) == 4


def test_byte_range_rejected():
    with pytest.raises(ValueError):
        sbox_lookup(256)
    with pytest.raises(ValueError):
        hamming_weight(-1)
    with pytest.raises(ValueError):
        hypothetical_leakage(0, 300)


def test_hypothesis_matrix_matches_scalar():
    rng = np.random.default_rng(0)
    pts = rng.integers(0, 256, 40, dtype=np.uint8)
    mat = hypothesis_matrix(pts)
    assert mat.shape == (40, 256)
    for i in (0, 17, 39):
        for guess in (0, 91, 255):
            assert mat[i, guess] == hypothetical_leakage(int(pts[i]), guess)
