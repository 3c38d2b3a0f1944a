import numpy as np
from scipy.optimize import linear_sum_assignment


def assert_multiset_close(a, b, tol):
    """Match two eigenvalue collections as multisets, order-free.

    Complex spectra have no canonical sort, so pairing is done by
    minimum-cost assignment and the worst matched distance is checked.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    assert a.size == b.size, "multisets differ in size: %d vs %d" % (a.size, b.size)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    worst = float(cost[rows, cols].max())
    assert worst <= tol, "worst matched distance %.3e > %.3e" % (worst, tol)
