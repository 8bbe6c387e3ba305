"""
Euclidean and cosine prototype heads
====================================

Builds a small synthetic 5-way episode and compares the two prototype heads,
then shows what a LayerNorm after FEAT-style refinement does to prototypes.
"""

# %%
import numpy as np

from shotmetric import FeatWeights, HeadConfig, classify, compute_prototypes, feat_refine
from shotmetric.synth import reference_spec, sample_episode

spec = reference_spec(seed=11)
episode, labels = sample_episode(spec, shot=1, queries_per_class=15, rng_seed=0)
print(f"{episode.way}-way, {episode.shots[0]}-shot, d={episode.dim}, {len(labels)} queries")

# %%
# Same episode, two heads. Temperature only rescales logits, so it changes the
# probabilities but never the argmax.
for head in ("proto_euclidean", "proto_cosine"):
    for sigma in (1.0, 10.0):
        logits, pred = classify(episode, HeadConfig(head, temperature=sigma))
        acc = np.mean(pred.indices == labels)
        conf = pred.probabilities.max(axis=1).mean()
        print(f"{head:16s} sigma={sigma:5.1f}  accuracy={acc:.3f}  mean max-prob={conf:.3f}")

# %%
# FEAT-style refinement. With LayerNorm every prototype ends up with zero mean
# and unit spread, so prototype norms no longer carry information.
rng = np.random.default_rng(1)
protos = compute_prototypes(episode)
for ln in (False, True):
    w = FeatWeights.random(episode.dim, rng, scale=0.5, layer_norm=ln)
    refined = feat_refine(protos, w)
    print(f"layer_norm={ln!s:5s} prototype norms:", np.round(np.linalg.norm(refined, axis=1), 3))
