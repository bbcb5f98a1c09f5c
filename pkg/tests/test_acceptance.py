"""Acceptance gate: one pass/fail line per criterion, at the stated tolerances."""
import pytest

from rescomp import acceptance as ACC


@pytest.mark.parametrize("cid", sorted(ACC.CRITERIA), ids=lambda i: f"criterion_{i}")
def test_criterion(cid, capsys):
    res = ACC.CRITERIA[cid](0)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
