import numpy as np
import pytest

from clutternav import critic as cr
from clutternav.constants import FEATURE_DIM, N_MAX
from clutternav.features import StateMatrix


def make_state(rng: np.random.Generator, n_valid: int) -> StateMatrix:
    """Random normalized-looking state with n_valid rows at random indices."""
    rows = np.zeros((N_MAX, FEATURE_DIM))
    mask = np.zeros(N_MAX, dtype=bool)
    idx = np.sort(rng.choice(N_MAX, size=n_valid, replace=False))
    rows[idx] = rng.uniform(0.0, 1.0, size=(n_valid, FEATURE_DIM))
    mask[idx] = True
    return StateMatrix(rows=rows, mask=mask, id_map={int(i): int(i) for i in idx})


def action_value_net(q_by_row: dict[int, float]) -> cr.CriticParams:
    """Exact lookup critic: Q(s, row) = q_by_row[row], state ignored.

    Built from ReLU layers so the values are reproduced bit-exactly.
    """
    rows = sorted(q_by_row)
    h = len(rows)
    w1 = np.zeros((cr.INPUT_WIDTH, h))
    for j, row in enumerate(rows):
        w1[cr.STATE_WIDTH + row, j] = 1.0
    w2 = np.eye(h)
    w3 = np.array([[float(q_by_row[row])] for row in rows])
    return cr.CriticParams(
        w1=w1, b1=np.zeros(h), w2=w2, b2=np.zeros(h), w3=w3, b3=np.zeros(1),
        activation="relu",
    )


def linear_net(w: np.ndarray, bias: float = 0.0, shift: float = 2.0) -> cr.CriticParams:
    """Exact affine critic Q = w . x + bias.

    Identity layers with the ReLU kink shifted below the input range, so
    both the value and the input gradient are exact (gradient is w
    itself, bit for bit) for all inputs in [-shift, inf)."""
    d = cr.INPUT_WIDTH
    w = np.asarray(w, dtype=float)
    return cr.CriticParams(
        w1=np.eye(d), b1=np.full(d, shift),
        w2=np.eye(d), b2=np.zeros(d),
        w3=w[:, None], b3=np.array([bias - shift * w.sum()]),
        activation="relu",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(712024)
