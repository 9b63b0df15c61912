"""Design spaces and the core GP regressor.

Defines a two-variable search-box-like space, samples design solutions,
fits the RBF Gaussian process on synthetic scores, and shows how the
evidence grid picks a kernel width.
"""

import numpy as np

from feeler import gp
from feeler.space import normalize, sample_uniform, toy_space_2d, validate

space = toy_space_2d()
print(f"space: {[v.name for v in space.variables]}, d={space.dimension}")

batch = sample_uniform(space, seed=0, count=15)
print(f"sampled {len(batch)} solutions, all valid:",
      all(not validate(space, row) for row in batch))

# a made-up smooth preference: tall boxes with mid-size fonts score higher
U = normalize(space, batch)
scores = 2.5 + 1.5 * np.exp(-((U[:, 0] - 0.6) ** 2 + (U[:, 1] - 0.5) ** 2) / 0.1)

params = gp.select_params(U, scores, gp.default_param_grid())
model = gp.fit(U, scores, params)
print(f"evidence-selected width={params.width}, jitter={params.jitter}")

for query in ([49.0, 17.0], [30.0, 11.0]):
    mean, var = gp.predict(model, normalize(space, np.array(query)))
    print(f"predict at {query}: {mean:.2f} +/- {np.sqrt(var):.2f}")

mean_at_train, var_at_train = gp.predict(model, U[0])
print(f"at a training point: mean {mean_at_train:.3f} (label {scores[0]:.3f}), "
      f"variance {var_at_train:.2e}")
