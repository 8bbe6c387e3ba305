"""
Shot-sensitivity heatmaps from published accuracy grids
=======================================================

Decomposes a train-shot x test-shot accuracy grid into test-shot bias, model
bias and the residual heatmap, then tabulates scores and cosine gains for
every bundled Euclidean/cosine pair.
"""

# %%
import numpy as np

from shotmetric import decompose, gain_table
from shotmetric.sensitivity import format_report_csv, load_published_grid, published_grid_names

pub = load_published_grid("inat_conv4__proto")
report = decompose(pub.grid)
np.set_printoptions(precision=2, suppress=True)
print(pub.grid.label)
print("raw accuracies\n", pub.grid.values)
print("test-shot bias (row means)", report.row_means)
print("model bias", report.model_bias)
print("corrected heatmap\n", report.heatmap)
print(f"score = {report.score:.2f}")

# %%
# The same report in its CSV form
print(format_report_csv(report))

# %%
print(f"{'setting':18s} {'model':6s} {'euclid':>7s} {'cosine':>7s}   gain at test shot 1 .. 32")
for name in published_grid_names():
    setting, model = name.split("__")
    if model not in ("proto", "feat", "frn"):
        continue
    e = load_published_grid(name).grid
    c = load_published_grid(f"{setting}__cosine_{model}").grid
    gains = " ".join(f"{g:+6.2f}" for g in gain_table(e, c))
    print(f"{setting:18s} {model:6s} {decompose(e).score:7.2f} {decompose(c).score:7.2f}   {gains}")
