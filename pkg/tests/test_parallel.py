import numpy as np
from hypothesis import given, settings, strategies as st

from coagss import _parallel


def test_env_var(monkeypatch):
    monkeypatch.setenv("COAGSS_THREADS", "3")
    assert _parallel.thread_count() == 3
    monkeypatch.setenv("COAGSS_THREADS", "zero")
    assert _parallel.thread_count() == 1
    monkeypatch.setenv("COAGSS_THREADS", "-4")
    assert _parallel.thread_count() == 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 200), threads=st.integers(1, 9))
def test_order_independent_of_threads(n, threads):
    f = lambda i: np.sin(i) * 1e-3 + i
    assert np.array_equal(_parallel.map_indices(f, n, threads), _parallel.map_indices(f, n, 1))
