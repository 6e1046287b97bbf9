import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from budgetot.feasibility import PrioritySpec, check_priority_conditions, check_theorem1
from budgetot.generators import gaussian2, prioritized_count, ranks, tasks
from budgetot.io import (
    FileFormatError,
    read_index_csv,
    read_json,
    read_matrix_csv,
    read_pairs_csv,
    read_triplets_csv,
    read_vector_csv,
    write_index_csv,
    write_json,
    write_matrix_csv,
    write_triplets_csv,
    write_vector_csv,
)


def test_gaussian2_shape_and_marginals():
    inst = gaussian2(30, 30, seed=7)
    assert inst.cost.shape == (30, 30)
    np.testing.assert_allclose(inst.marginals.a, 1 / 30)
    assert inst.cost.max() == 1.0 and inst.cost.min() >= 0
    raw = gaussian2(30, 30, seed=7, normalize=False)
    X, Y = raw.points
    assert raw.cost[2, 5] == pytest.approx(np.sum((X[2] - Y[5]) ** 2))
    np.testing.assert_array_equal(gaussian2(5, 4, seed=7).cost, gaussian2(5, 4, seed=7).cost)


def test_tasks_priority_conditions():
    inst = tasks(n=32, rho_s=9, rho_t=5, r=0.1, h=8, seed=1)
    assert len(inst.prioritized) == prioritized_count(32, 0.1) == 3
    assert check_theorem1(inst.marginals, inst.budget)
    assert check_priority_conditions(inst.marginals, inst.budget, PrioritySpec(inst.prioritized, 8))
    assert 0 <= inst.cost.min() and inst.cost.max() <= 1


def test_ranks_costs():
    inst = ranks(5, 4, seed=3)
    assert set(np.unique(np.round(inst.cost, 12))) <= {0.0, 0.5, round(2 / 3, 12), 0.75}
    assert all(sorted(r) == [1, 2, 3, 4] for r in inst.ranks.tolist())


@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_matrix_round_trip(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("io") / "m.csv"
    write_matrix_csv(path, M)
    np.testing.assert_array_equal(read_matrix_csv(path), M)


def test_vector_index_triplet_json_round_trips(tmp_path):
    v = np.random.default_rng(0).dirichlet(np.ones(7))
    write_vector_csv(tmp_path / "v.csv", v)
    np.testing.assert_array_equal(read_vector_csv(tmp_path / "v.csv"), v)
    write_index_csv(tmp_path / "i.csv", [3, 1, 4])
    assert read_index_csv(tmp_path / "i.csv") == [3, 1, 4]
    T = np.array([[0.1 / 3, 0.0], [1e-12, 0.7]])
    write_triplets_csv(tmp_path / "t.csv", T)
    np.testing.assert_array_equal(read_triplets_csv(tmp_path / "t.csv", (2, 2)), [[0.1 / 3, 0], [0, 0.7]])
    write_json(tmp_path / "r.json", {"x": np.float64(np.nan), "y": np.arange(2)})
    assert read_json(tmp_path / "r.json") == {"x": None, "y": [0, 1]}
    (tmp_path / "p.csv").write_text("i,j\n0,1\n2,2\n")
    assert read_pairs_csv(tmp_path / "p.csv") == {(0, 1), (2, 2)}


def test_malformed_files(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# rows=2 cols=2\n1,2\n3\n")
    with pytest.raises(FileFormatError):
        read_matrix_csv(bad)
    bad.write_text("# rows=3 cols=2\n1,2\n3,4\n")
    with pytest.raises(FileFormatError):
        read_matrix_csv(bad)
    bad.write_text("1,x\n")
    with pytest.raises(FileFormatError):
        read_matrix_csv(bad)
    with pytest.raises(FileNotFoundError):
        read_matrix_csv(tmp_path / "missing.csv")
