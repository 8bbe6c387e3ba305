"""
Prediction consistency under support resampling
===============================================

Fix a query set, draw two independent 1-shot support sets, and count how
many query predictions survive. Cosine prototypes ignore the noisy norm of a
one-sample centroid, so their decisions move less.
"""

# %%
from shotmetric import HeadConfig, consistency_rate, evaluate
from shotmetric.synth import reference_spec

spec = reference_spec(seed=11)
trials = 300

for head in ("proto_euclidean", "proto_cosine"):
    cfg = HeadConfig(head)
    agree = consistency_rate(spec, cfg, shot=1, queries_per_class=15, trials=trials, rng_seed=11)
    acc = evaluate(spec, cfg, shot=1, queries_per_class=15, trials=trials, rng_seed=11)
    print(f"{head:16s} agreement={agree:.3f}  accuracy={acc.mean_accuracy:.2f} +/- {acc.half_ci95:.2f}")

# %%
# Agreement rises with shot for both heads as prototypes stabilise.
for shot in (1, 4, 16):
    rates = [consistency_rate(spec, HeadConfig(h), shot, 15, 100, 11)
             for h in ("proto_euclidean", "proto_cosine")]
    print(f"shot={shot:2d}  euclid={rates[0]:.3f}  cosine={rates[1]:.3f}")
