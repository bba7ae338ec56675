# # Causal structure among five stock indices
#
# The matrix below is an estimated mixing matrix for daily returns of five
# market indices (rows) in terms of five independent sources (columns).
# Zeros are entries that a bootstrap test could not tell apart from zero.
# Recovery turns it into a causal graph between the indices.

import numpy as np

from pscm.io import to_dot
from pscm.recovery import RecoveryConfig, recover

names = ["DJI", "N225", "N100", "HSI", "SSEC"]
W = np.array([
    [0.9096, 0.2761, 0.0, 0.0, 0.0],
    [0.0, 0.7993, 0.0, 0.7414, 0.2048],
    [0.4412, 0.7738, 0.1805, -0.2962, 0.0],
    [0.1537, 0.4141, 0.2902, 0.1992, 0.9398],
    [0.1480, 0.2048, 1.0, 0.4624, 0.3513],
])

# Rows with fewer sources come first in the causal order.  DJI uses only two.

res = recover(W, RecoveryConfig(prune_threshold=0.1))
print("processing order:", [names[i] for i in res.order_used])

# Total effects, then the direct effects before and after pruning at 0.1.

np.set_printoptions(precision=3, suppress=True)
print("total effects\n", res.total_effects)
print("direct effects (unpruned)\n", res.A_hat)
for cause, effect in res.edges():
    print(f"  {names[cause]:>5} -> {names[effect]:<5} {res.A_pruned[effect, cause]: .3f}")

# Graphviz rendering of the pruned graph: `dot -Tpng stock.dot -o stock.png`.

with open("stock.dot", "w") as fh:
    fh.write(to_dot(res.A_pruned, names=names, graph_name="stocks"))
print("wrote stock.dot")
