# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Learning from scratch vs learning with demonstrations
#
# Natural policy gradient from a random initialization against DAPG, which
# first clones 20 scripted demos and then keeps a decaying demo term in the
# gradient.  One seed per method keeps this to a couple of minutes.

# %%
from dexrl.algos import TrainConfig, train
from dexrl.demos import collect_demos
from dexrl.envs import EnvConfig

env = EnvConfig(task="valve")
demos = collect_demos(env, n=20, seed=123)

# %%
scratch = train(env, TrainConfig(algo="npg"), seed=0)
dapg = train(env, TrainConfig(algo="dapg"), seed=0, demos=demos)

# %%
for name, res in (("npg", scratch), ("dapg", dapg)):
    c = res.curve
    print(f"{name:4s} iterations to success {res.iterations_to_success}, "
          f"iteration-0 success {c[0].success_rate:.1f}, final return {c[-1].eval_return:.1f}")

# %% [markdown]
# Per-iteration KL between consecutive policies stays near the trust-region
# size (0.05 by default).

# %%
print("max KL", max(r.kl for r in scratch.curve[1:]))
for r in scratch.curve[::3]:
    print(r.iteration, r.env_steps, round(r.success_rate, 1), round(r.kl, 4))
