# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Actuation, robustness and randomization
#
# Short versions of the analysis commands.  The full-size runs are
# `dexrl analyze actuation|robustness|rewards|randomization`.

# %%
from dexrl import bench
from dexrl.algos import train

cfg = bench.parse_config("analysis.vibration_seeds = 5\nnpg.max_iters = 30\n")

# %% [markdown]
# ## Vibration of random rollouts
#
# Joint-angle traces go through a DFT and the largest non-DC magnitudes are
# summed.  Position targets smooth the command through the PD loop, so they
# vibrate least.

# %%
for row in bench.actuation_analysis(cfg):
    print(f"{row['scheme']:15s} raw {row['raw_vibration']:8.1f}  score {row['vibration_score']:.4f}")

# %% [markdown]
# ## Robustness of a trained policy

# %%
policy = train(cfg.env, cfg.train, seed=0).policy
for row in bench.robustness_sweep(policy, cfg.env, "obs_action_noise", [0, 10, 20], 5):
    print(row)
for row in bench.robustness_sweep(policy, cfg.env, "init_angle", [-45, 0, 45], 5):
    print(row)

# %% [markdown]
# ## Held-out dynamics
#
# Variant A trains on nominal dynamics, variant B resamples PD gains and
# friction every episode.  Both are evaluated on gains outside the training
# band.

# %%
for row in bench.randomization_study(cfg, variants=["A", "B"], seeds=[0]):
    print(row)
