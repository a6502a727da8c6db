import json

import numpy as np
import pytest

from fastgnh.exceptions import ResourceError
from fastgnh.util import (
    check_memory,
    digest_arrays,
    jsonable,
    loglog_slope,
    median_time,
    pair_stream,
    parse_number_list,
    rng_stream,
)


class TestStreams:
    def test_reproducible(self):
        assert np.array_equal(rng_stream(3, 1).random(5), rng_stream(3, 1).random(5))
        assert not np.array_equal(rng_stream(3, 1).random(5), rng_stream(3, 2).random(5))

    def test_pair_order_does_not_matter(self):
        assert np.array_equal(pair_stream(0, 4, 9).random(3), pair_stream(0, 9, 4).random(3))
        assert not np.array_equal(pair_stream(0, 4, 9, 0).random(3), pair_stream(0, 4, 9, 1).random(3))


class TestParsing:
    def test_number_list(self):
        assert parse_number_list("100,1000, 1e4") == (100, 1000, 10000)
        assert parse_number_list("0.5,2", float) == (0.5, 2.0)
        assert parse_number_list([1, 2]) == (1, 2)
        assert parse_number_list("") == ()

    def test_jsonable(self):
        value = {"a": np.float32(0.5), 1: np.arange(3), "b": (np.nan, np.inf, 2.0)}
        converted = jsonable(value)
        assert converted == {"a": 0.5, "1": [0, 1, 2], "b": [None, None, 2.0]}
        json.dumps(converted, allow_nan=False)


def test_loglog_slope():
    xs = np.array([10, 100, 1000])
    assert loglog_slope(xs, 3.0 / np.sqrt(xs)) == pytest.approx(-0.5)


def test_median_time():
    calls = []
    seconds, result = median_time(lambda: calls.append(1) or len(calls), repeats=3)
    assert seconds >= 0
    assert result == 3


def test_check_memory():
    check_memory(10, None, "anything")
    check_memory(10, 10, "anything")
    with pytest.raises(ResourceError, match="C tensors needs 11 bytes"):
        check_memory(11, 10, "C tensors")


def test_digest_depends_on_shape():
    a = np.arange(6.0)
    assert digest_arrays(a) == digest_arrays(a.copy())
    assert digest_arrays(a) != digest_arrays(a.reshape(2, 3))
