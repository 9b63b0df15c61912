import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from feeler import gp, oracle, space


@pytest.fixture
def toy_space():
    return space.toy_space_2d()


@pytest.fixture
def unit_square():
    return space.DesignSpace(variables=(
        space.VariableSpec("a", space.CONTINUOUS, 0.0, 1.0),
        space.VariableSpec("b", space.CONTINUOUS, 0.0, 1.0),
    ))


@pytest.fixture
def quiet_oracle(toy_space):
    """Noise-free rater panel over the 2-d toy space."""
    return oracle.toy_oracle(toy_space, rater_noise=0.0)


@pytest.fixture
def noisy_oracle(toy_space):
    return oracle.toy_oracle(toy_space, rater_noise=0.5)


@pytest.fixture
def small_gp(unit_square):
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 1, size=(8, 2))
    Y = 2.0 + np.sin(4 * X[:, 0]) + X[:, 1] ** 2
    params = gp.KernelParams(width=0.4, jitter=1e-6)
    return gp.fit(X, Y, params)


def train_toy_stage2(orc, spc, seed, n_labeled=30, raters=20,
                     N=800, n=25, M=50, tune_steps=6):
    """Headless two-stage training against a synthetic oracle.

    A compact stand-in for the full pipeline used where tests only need
    a finalized stage-2 model over a known ground truth.
    """
    from feeler import preference
    from feeler.seeds import child_seed

    batch = space.sample_uniform(spc, child_seed(seed, "labels"), n_labeled)
    ys = []
    for i, x in enumerate(batch):
        scores = [oracle.rate_likert(orc, x, child_seed(seed, f"rater-{i}-{r}"))
                  for r in range(raters)]
        ys.append(np.mean(scores))
    X = space.normalize(spc, batch)
    params = gp.select_params(X, ys, gp.default_param_grid())
    stage1 = gp.fit(X, ys, params)

    items_raw, pairs = preference.generate_candidate_pairs(
        stage1, spc, N=N, n=n, M=M, seed=child_seed(seed, "pairs"))
    relations = tuple(
        oracle.vote_pair(orc, items_raw[i], items_raw[j],
                         seed=child_seed(seed, f"vote-{m}"), id_i=i, id_j=j)
        for m, (i, j) in enumerate(pairs)
    )
    data = preference.ComparisonDataset(items=space.normalize(spc, items_raw),
                                        relations=relations)
    (width, noise), _ = preference.tune_hyperparameters(
        data, width_init=params.width, noise_init=0.5, steps=tune_steps)
    return preference.fit_preference_model(data.items, data.relations,
                                           width=width, noise=noise)
