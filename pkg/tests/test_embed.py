import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absorbing_zsl.embed import (
    EmbeddingTable,
    class_prototype,
    cosine_matrix,
    cosine_similarity,
    load_embeddings,
    write_embeddings,
)
from absorbing_zsl.errors import DimensionMismatch, DuplicateName, EmptyList, ParseError, ZeroVector

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def nonzero_vectors(dim):
    return st.lists(finite, min_size=dim, max_size=dim).filter(
        lambda v: math.sqrt(sum(x * x for x in v)) > 1e-3
    )


class TestLoadEmbeddings:
    def test_parses_bytes_stream(self):
        table = load_embeddings(io.BytesIO(b"cat,1.0,0.0\ndog,0.0,1.0"))
        assert table.dimension == 2
        assert table.names == ("cat", "dog")
        np.testing.assert_array_equal(table.vectors, [[1.0, 0.0], [0.0, 1.0]])

    def test_ragged_rows(self):
        with pytest.raises(DimensionMismatch):
            load_embeddings(io.BytesIO(b"cat,1.0,0.0\ndog,0.0"))

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            load_embeddings(io.BytesIO(b"cat,0.0,0.0"))

    def test_duplicate_name(self):
        with pytest.raises(DuplicateName):
            load_embeddings(b"cat,1,0\ncat,0,1\n")

    @pytest.mark.parametrize("text", [b"cat,1.0,abc\n", b"cat\n", b",1.0,2.0\n", b""])
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            load_embeddings(text)

    def test_text_stream_utf8_and_blank_lines(self):
        table = load_embeddings(io.StringIO("élan,1,2\n\nbear,3,4\n"))
        assert table.names == ("élan", "bear")

    def test_order_preserved_and_not_normalized(self):
        table = load_embeddings(b"b,3,4\na,1,0\n")
        assert table.names == ("b", "a")
        np.testing.assert_array_equal(table.vector("b"), [3.0, 4.0])

    def test_roundtrip(self):
        table = EmbeddingTable(("x", "y"), [[0.1, 1e-17], [-2.5, 3.0]])
        buf = io.StringIO()
        write_embeddings(table, buf)
        again = load_embeddings(buf.getvalue().encode())
        assert again.names == table.names
        np.testing.assert_array_equal(again.vectors, table.vectors)

    def test_table_is_read_only(self):
        table = load_embeddings(b"cat,1,0\n")
        with pytest.raises(ValueError):
            table.vectors[0, 0] = 5.0

    def test_subset(self):
        table = load_embeddings(b"a,1,0\nb,0,1\nc,1,1\n")
        sub = table.subset(["c", "a"])
        assert sub.names == ("c", "a")
        np.testing.assert_array_equal(sub.vectors, [[1, 1], [1, 0]])
        with pytest.raises(KeyError):
            table.subset(["zzz"])

    def test_from_pairs(self):
        with pytest.raises(EmptyList):
            EmbeddingTable.from_pairs([])
        with pytest.raises(DimensionMismatch):
            EmbeddingTable.from_pairs([("a", [1, 0]), ("b", [1])])


class TestCosineSimilarity:
    @pytest.mark.parametrize(
        "u, v, expected",
        [
            ([1, 0], [1, 0], 1.0),
            ([1, 0], [0, 1], 0.0),
            ([1, 1], [1, 0], 1 / math.sqrt(2)),
        ],
    )
    def test_examples(self, u, v, expected):
        assert cosine_similarity(u, v) == pytest.approx(expected, abs=1e-15)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0, 0], [1, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity([1, 0], [1, 0, 0])

    @given(st.integers(1, 8).flatmap(lambda d: st.tuples(nonzero_vectors(d), nonzero_vectors(d))))
    def test_symmetric_and_bounded(self, pair):
        u, v = pair
        a = cosine_similarity(u, v)
        assert abs(a - cosine_similarity(v, u)) <= 1e-12
        assert -1.0 <= a <= 1.0

    @given(st.integers(1, 8).flatmap(nonzero_vectors), st.floats(1e-3, 1e3))
    def test_positive_scaling(self, u, c):
        assert abs(cosine_similarity(u, [c * x for x in u]) - 1.0) <= 1e-12

    def test_clamped_for_near_parallel(self):
        u = np.array([0.1, 0.2, 0.3]) * 3.0000000000000004
        assert cosine_similarity(u, u) <= 1.0

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((3, 5))
        M = cosine_matrix(a, b)
        for i in range(4):
            for j in range(3):
                assert M[i, j] == pytest.approx(cosine_similarity(a[i], b[j]), abs=1e-12)


class TestClassPrototype:
    def test_singleton_normalized(self):
        np.testing.assert_allclose(class_prototype([[2, 0]]), [1, 0], atol=1e-12)

    def test_symmetric_mean(self):
        s = 1 / math.sqrt(2)
        np.testing.assert_allclose(class_prototype([[1, 0], [0, 1]]), [s, s], atol=1e-15)

    def test_cancellation(self):
        with pytest.raises(ZeroVector):
            class_prototype([[1, 0], [-1, 0]])

    def test_empty(self):
        with pytest.raises(EmptyList):
            class_prototype([])

    def test_mixed_dimensions(self):
        with pytest.raises(DimensionMismatch):
            class_prototype([[1, 0], [1, 0, 0]])

    @settings(max_examples=50)
    @given(st.integers(1, 8).flatmap(nonzero_vectors))
    def test_singleton_property(self, v):
        v = np.asarray(v)
        np.testing.assert_allclose(class_prototype([v]), v / np.linalg.norm(v), atol=1e-12)

    def test_seven_member_prototype_is_unit_mean_direction(self):
        rng = np.random.default_rng(0)
        members = rng.standard_normal((7, 10)) + 2.0
        proto = class_prototype(members)
        assert np.linalg.norm(proto) == pytest.approx(1.0, abs=1e-12)
        assert cosine_similarity(proto, members.mean(axis=0)) == pytest.approx(1.0, abs=1e-12)
