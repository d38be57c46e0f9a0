import numpy as np
import pytest

from difair.groups import GroupSpace
from difair.metrics import ProbTable


@pytest.fixture
def two_cell_space():
    return GroupSpace(names=("g",), values=(("a", "b"),))


def make_prob_table(rows, weights=None, outcomes=None, space=None):
    """ProbTable over a single synthetic attribute with one value per row."""
    rows = np.asarray(rows, dtype=float)
    n_cells, k = rows.shape
    if space is None:
        space = GroupSpace(
            names=("g",), values=(tuple(f"v{i}" for i in range(n_cells)),)
        )
    if weights is None:
        weights = np.full(n_cells, 1.0 / n_cells)
    return ProbTable(
        space=space,
        outcomes=tuple(outcomes or (f"y{j}" for j in range(k))),
        probs=rows,
        support=np.ones(n_cells, dtype=bool),
        group_weights=np.asarray(weights, dtype=float),
    )
