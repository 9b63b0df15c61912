"""Stage 1: collective Likert labeling plus Expected-Improvement batches.

A simulated 20-rater panel labels a random round-0 batch; the fitted
model then proposes a round-1 batch by EI argmax sampling. The round-1
batch should score clearly higher on the hidden ground truth.
"""

import numpy as np

from feeler import gp
from feeler.oracle import rate_likert, toy_oracle, true_preference
from feeler.proactive import (
    aggregate,
    batch_size,
    best_observed,
    duplicates_in,
    expected_improvement,
    filter_raters,
    select_next_batch,
    RatingRecord,
)
from feeler.space import normalize, sample_uniform, toy_space_2d

space = toy_space_2d()
oracle = toy_oracle(space, peak=np.array([0.5833, 0.62]),
                    widths=np.array([0.10, 0.35]), rater_noise=0.5)

b = batch_size(space.dimension)
print(f"labeling budget per round: 3*2^{space.dimension} = {b}")

round0 = sample_uniform(space, seed=1, count=b)
records = []
for i, x in enumerate(round0):
    for rater in range(20):
        records.append(RatingRecord(f"r{rater}", f"s{i}",
                                    rate_likert(oracle, x, 1000 * rater + i), rater))
retained = filter_raters(records, duplicates_in(records))
labels = [aggregate(f"s{i}", round0[i], records, retained, 0) for i in range(b)]
print(f"round 0 labeled, {len(retained)} raters retained, "
      f"best observed y = {best_observed(labels):.2f}")

model = gp.fit(normalize(space, round0), [l.y for l in labels],
               gp.select_params(normalize(space, round0), [l.y for l in labels],
                                gp.default_param_grid()))

plan = select_next_batch(model, space, a=1000, b=b,
                         f_star=best_observed(labels), seed=2, round_index=1)
r0_true = np.mean([true_preference(oracle, x) for x in round0])
r1_true = np.mean([true_preference(oracle, x) for x in plan.batch])
print(f"mean true preference: round-0 random {r0_true:.2f} -> round-1 EI {r1_true:.2f}")

mean, var = gp.predict(model, normalize(space, plan.batch))
ei = expected_improvement(mean, np.sqrt(var), best_observed(labels))
print(f"EI of selected batch: min {ei.min():.3f}, max {ei.max():.3f}")
