"""Sampling walk-through: degree sequences, pairings, null and planted graphs.

Run:  python demos/01_sampling_and_serialization.py
"""

import numpy as np

from factorcavity import (DegreeSpec, ldgm, pair_uniform, pin,
                          sample_degree_sequence, sample_null, sample_planted,
                          sample_pruned_sequence, uniform_assignment)
from factorcavity.rng import substream

rng = substream(2024, 0)

print("== degree specs ==")
dspec = DegreeSpec.from_mapping({2: 0.5, 3: 0.5})
kspec = DegreeSpec.constant(3)
print(f"variable degrees: support {dspec.support}, mean {dspec.mean}")
print(f"poisson(2.5) truncated: {DegreeSpec.poisson(2.5).max_value} max, "
      f"{DegreeSpec.poisson(2.5).truncated_mass:.1e} mass dropped")

print("\n== balanced sequence: totals must match ==")
seq = sample_degree_sequence(12, dspec, kspec, seed=1)
print(f"n={seq.n}, m={seq.m}, total degree {seq.total_var_degree} "
      f"(rejections before acceptance: {seq.rejections})")

print("\n== pruned sequence: deliberate slack leaves cavities ==")
pruned = sample_pruned_sequence(12, 0.2, dspec, kspec, seed=2)
print(f"n={pruned.n}, m={pruned.m}, cavities {pruned.cavity_count}")

print("\n== uniform pairing (configuration model) ==")
g = pair_uniform(pruned, seed=3)
print(f"factor neighbourhoods: {g.factor_vars[:4]} ...")
print(f"unmatched clones per variable: {g.cavity_counts()}")

print("\n== null model: weights independent of the topology ==")
model = ldgm(0.15, DegreeSpec.constant(2), DegreeSpec.constant(2))
g = sample_null(8, model.dspec, model.kspec, model.family, seed=4)
print(f"labels per factor: {g.factor_tables}")

print("\n== planted model: graph drawn around a ground truth ==")
seq = sample_degree_sequence(8, model.dspec, model.kspec, seed=5)
sigma = uniform_assignment(8, 2, substream(6, 0))
planted = sample_planted(seq, sigma, model.family, theta=2, seed=7)
print(f"ground truth: {sigma}")
print(f"labels now lean toward the parity of sigma: {planted.factor_tables}")
print(f"pins (forced to the ground truth): {planted.pins}")
print(f"colouring attempts used: {planted.meta['colouring_attempts']}")

print("\n== pinning an arbitrary graph ==")
pinned = pin(g, theta=3, seed=8)
print(f"direct pins: {pinned.pins}")

print("\n== line-oriented serialization ==")
text = planted.to_text()
print(text)
