import pytest

from hrt.graph import CycleError, find_cycle, topological_order


def test_chain():
    assert topological_order(["C", "B", "A"], [("A", "B"), ("B", "C")]) == ["A", "B", "C"]


def test_ties_break_lexicographically():
    assert topological_order(["C", "B", "A"], [("A", "C"), ("B", "C")]) == ["A", "B", "C"]


def test_cycle():
    with pytest.raises(CycleError) as info:
        topological_order(["A", "B", "C"], [("A", "B"), ("B", "A"), ("B", "C")])
    assert sorted(info.value.cycle) == ["A", "B"]
    assert sorted(find_cycle(["A", "B"], [("A", "B"), ("B", "A")])) == ["A", "B"]
    assert find_cycle(["A", "B"], [("A", "B")]) == []
