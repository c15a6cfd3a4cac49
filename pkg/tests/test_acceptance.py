"""Every acceptance criterion at its stated tolerance, one line per criterion."""

import pytest

from slowfast.acceptance import CHECKS

RESULTS = []


@pytest.mark.slow
@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, len(CHECKS) + 1)])
def test_criterion(check, recwarn):
    res = check()
    RESULTS.append(res)
    print(res.line())
    for k, v in res.details.items():
        print(f"    {k}: {v}")
    assert res.passed, res.line()
