# %% [markdown]
# # Leader observers: shared-state gain versus per-agent correction
#
# The naive observer corrects with ``I (x) S0 - mu H (x) I``. For a leader with
# eigenvalues +1 and -1 no scalar gain makes it Schur, whatever the graph.
# Multiplying the correction through ``S0`` gives ``(I - mu H) (x) S0``, whose
# stable gains form the interval computed below.

# %%
import numpy as np

from coopreg import mu_interval, naive_observer_feasibility, observer_matrix, spectral_radius
from coopreg.observer import naive_observer_matrix

S0 = np.diag([1.0, -1.0])
H = np.array([[2.0, -1.0], [-1.0, 2.0]])

print("naive feasible:", naive_observer_feasibility(S0, H).feasible)
print("proposed interval:", mu_interval(S0, H).as_dict())

# %%
grid = np.linspace(-0.5, 1.5, 401)
naive = [spectral_radius(naive_observer_matrix(S0, H, mu)) for mu in grid]
proposed = [spectral_radius(observer_matrix(S0, H, mu)) for mu in grid]
print("smallest naive radius on the grid:", min(naive))
print("smallest proposed radius on the grid:", min(proposed))

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(grid, naive, label="naive")
    ax.plot(grid, proposed, label="proposed")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("mu")
    ax.set_ylabel("spectral radius")
    ax.legend()
    fig.tight_layout()
    fig.savefig("observer_comparison.png", dpi=120)
