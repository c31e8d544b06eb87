import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_slice_pd(rng, n, lo=0.005, hi=0.3):
    return rng.uniform(lo, hi, size=n)


def set_partitions(items):
    """All set partitions of a list, as lists of blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]


def set_partition_coefficients(pd, zfm, r):
    """Residue coefficients b_1..b_r from the double sum over set partitions.

    ``zfm[j-1]`` is the factorial moment E[(Z)_j]; the first power sum is
    taken as zero.
    """
    import itertools
    import math

    p = np.asarray(pd, dtype=float)

    def psum(m):
        return 0.0 if m == 1 else float(np.sum(p**m))

    out = []
    for k in range(1, r + 1):
        total = 0.0
        for sigma in set_partitions(list(range(k))):
            # tau <= sigma factorises into one set partition per block of sigma
            per_block = []
            for block in sigma:
                terms = []
                for tau_b in set_partitions(block):
                    m = len(tau_b)
                    mobius = (-1.0) ** (m - 1) * math.factorial(m - 1)
                    zprod = math.prod(zfm[len(d) - 1] for d in tau_b)
                    terms.append(mobius * zprod * psum(m))
                per_block.append(terms)
            for combo in itertools.product(*per_block):
                total += math.prod(combo)
        out.append(total / math.factorial(k))
    return np.array(out)


# acceptance results, keyed by criterion label, printed after the run
ACCEPTANCE = {}


def record(label, ok, detail=""):
    """Store and print one acceptance line, then fail the test if needed."""
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE[label] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("abc")), s)):
        terminalreporter.write_line(ACCEPTANCE[label])
