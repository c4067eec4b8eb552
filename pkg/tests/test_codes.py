"""Code generation, packing, and codebook persistence.

The MSB-first packing is pinned with hand values because the digest
layer hashes exactly these bytes; a silent bit-order change would
invalidate every stored template.
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mebauth.codes import (
    CodeBook,
    MebCode,
    deserialize_bits,
    export_codebook,
    generate_code,
    generate_codebook,
    hamming,
    import_codebook,
    serialize_bits,
)
from mebauth.errors import (
    ConfigError,
    DuplicateUserError,
    FormatError,
    MebAuthError,
    ShapeError,
)
from mebauth.rng import make_rng


def code_of(bits) -> MebCode:
    return MebCode(np.asarray(bits, dtype=np.uint8))


# ---------------------------------------------------------------------------
# code objects


def test_code_length_must_be_positive_byte_multiple():
    for k in (0, -8, 7, 12, 9):
        with pytest.raises(ConfigError):
            generate_code(k, make_rng(0))
    assert generate_code(8, make_rng(0)).k == 8


def test_mebcode_validates_shape_and_values():
    with pytest.raises(ConfigError):
        code_of(np.zeros((2, 4)))
    with pytest.raises(ConfigError):
        code_of([0, 1, 2, 0, 0, 0, 0, 0])
    with pytest.raises(ConfigError):
        code_of([0, 1] * 6)  # 12 bits


def test_mebcode_bits_are_read_only():
    code = generate_code(16, make_rng(1))
    with pytest.raises(ValueError):
        code.bits[0] = 1


def test_mebcode_equality_and_hash():
    a = code_of([1, 0] * 4)
    b = code_of([1, 0] * 4)
    c = code_of([0, 1] * 4)
    d = code_of([1, 0] * 8)
    assert a == b and hash(a) == hash(b)
    assert a != c and a != d
    assert a != "not a code"


# ---------------------------------------------------------------------------
# packing


def test_packing_is_msb_first():
    assert serialize_bits(code_of([1, 0, 0, 0, 0, 0, 0, 0])) == b"\x80"
    assert serialize_bits(code_of([0, 0, 0, 0, 0, 0, 0, 1])) == b"\x01"
    # 0xAB = 10101011, 0xCD = 11001101, first bit listed = most significant
    bits = [1, 0, 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 1]
    assert serialize_bits(code_of(bits)) == b"\xab\xcd"


def test_deserialize_checks_byte_count():
    with pytest.raises(FormatError):
        deserialize_bits(b"\x00\x01", 8)
    with pytest.raises(ConfigError):
        deserialize_bits(b"\x00", 7)


@given(st.binary(min_size=1, max_size=64))
def test_bytes_round_trip(data):
    code = deserialize_bits(data, len(data) * 8)
    assert serialize_bits(code) == data


@given(st.lists(st.integers(0, 1), min_size=8, max_size=64).filter(lambda b: len(b) % 8 == 0))
def test_bits_round_trip(bits):
    code = code_of(bits)
    assert deserialize_bits(serialize_bits(code), code.k) == code


# ---------------------------------------------------------------------------
# hamming distance


def test_hamming_hand_values():
    a = code_of([1, 0, 1, 0, 1, 0, 1, 0])
    assert hamming(a, a) == 0
    assert hamming(a, code_of([0, 1, 0, 1, 0, 1, 0, 1])) == 8
    assert hamming(a, code_of([1, 0, 1, 0, 1, 0, 1, 1])) == 1


def test_hamming_rejects_length_mismatch():
    with pytest.raises(ShapeError):
        hamming(generate_code(8, make_rng(0)), generate_code(16, make_rng(0)))


@given(st.binary(min_size=4, max_size=32), st.data())
def test_hamming_matches_integer_popcount(data_a, data):
    data_b = data.draw(st.binary(min_size=len(data_a), max_size=len(data_a)))
    a = deserialize_bits(data_a, len(data_a) * 8)
    b = deserialize_bits(data_b, len(data_a) * 8)
    xor = int.from_bytes(data_a, "big") ^ int.from_bytes(data_b, "big")
    assert hamming(a, b) == xor.bit_count()


# ---------------------------------------------------------------------------
# generation


def test_generate_code_is_deterministic_per_seed():
    a = generate_code(256, make_rng(7))
    b = generate_code(256, make_rng(7))
    c = generate_code(256, make_rng(8))
    assert a == b
    assert a != c


def test_generate_code_is_roughly_balanced():
    # 4 sigma on Bin(8192, 1/2): |ones - 4096| < 4 * sqrt(8192/4) = 181
    code = generate_code(8192, make_rng(11))
    assert abs(int(code.bits.sum()) - 4096) < 181


# ---------------------------------------------------------------------------
# codebooks


def test_generate_codebook_one_distinct_code_per_user():
    ids = [f"u{i}" for i in range(100)]
    book = generate_codebook(ids, 8, make_rng(3))  # 256 possible codes: collisions likely
    assert book.user_ids() == ids
    assert book.k == 8
    assert len({serialize_bits(c) for c in book.codes.values()}) == 100


def test_generate_codebook_rejects_unsatisfiable_request():
    with pytest.raises(ConfigError):
        generate_codebook([f"u{i}" for i in range(200)], 8, make_rng(0))


def test_generate_codebook_rejects_duplicate_ids():
    with pytest.raises(DuplicateUserError):
        generate_codebook(["a", "b", "a"], 64, make_rng(0))


def test_generate_codebook_deterministic_per_seed():
    ids = ["a", "b", "c"]
    first = generate_codebook(ids, 64, make_rng(5))
    again = generate_codebook(ids, 64, make_rng(5))
    assert all(first[u] == again[u] for u in ids)


def test_codebook_validations():
    with pytest.raises(ConfigError):
        CodeBook({})
    with pytest.raises(ConfigError):
        CodeBook({"a": generate_code(8, make_rng(0)), "b": generate_code(16, make_rng(0))})
    same = code_of([1, 0] * 4)
    with pytest.raises(ConfigError):
        CodeBook({"a": same, "b": code_of([1, 0] * 4)})


def test_codebook_mapping_interface():
    book = generate_codebook(["x", "y"], 16, make_rng(2))
    assert len(book) == 2
    assert book["x"] == book.codes["x"]


# ---------------------------------------------------------------------------
# export / import


def test_codebook_file_round_trip(tmp_path):
    ids = ["alice", "bob", "carol"]
    book = generate_codebook(ids, 64, make_rng(9))
    path = tmp_path / "codes.tsv"
    export_codebook(book, path)
    loaded = import_codebook(path)
    assert loaded.user_ids() == ids
    assert all(loaded[u] == book[u] for u in ids)


def test_export_rejects_unrepresentable_user_id(tmp_path):
    book = CodeBook({"a\tb": generate_code(8, make_rng(0))})
    with pytest.raises(ConfigError):
        export_codebook(book, tmp_path / "codes.tsv")


@pytest.mark.parametrize(
    "lines",
    [
        ["not the header", "a\tff"],
        ["MEBCODEBOOK v1", "a ff"],  # no tab
        ["MEBCODEBOOK v1", "a\tzz"],  # bad hex
        ["MEBCODEBOOK v1", "a\tff", "a\t00"],  # duplicate user
        ["MEBCODEBOOK v1", "a\tff\t00"],  # extra field
    ],
)
def test_import_rejects_malformed_files(tmp_path, lines):
    path = tmp_path / "codes.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(FormatError):
        import_codebook(path)


def test_import_of_header_only_file_fails(tmp_path):
    path = tmp_path / "codes.tsv"
    path.write_text("MEBCODEBOOK v1\n", encoding="utf-8")
    with pytest.raises(MebAuthError):
        import_codebook(path)
