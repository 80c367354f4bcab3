"""Policy-gradient learning of simulated dexterous manipulation, with and
without demonstrations."""
from .algos import (DapgConfig, DegenerateCurvature, NpgConfig, TrainConfig, TrainResult,
                    UpdateReport, behavior_cloning, dapg_gradient, evaluate, npg_update,
                    reinforce_gradient, train)
from .demos import (DemoSet, ExpertFailure, collect_demos, load_demos, save_demos,
                    scripted_expert, verify_demos)
from .envs import (Actuation, ConfigError, EnvConfig, RandomizationConfig, Task, VecEnv,
                   env_create, reward_fn, success)
from .numkit import conjugate_gradient, dft_magnitudes, vibration_metric
from .policy import (GaussianPolicy, fisher_vector_product, load_policy, log_prob, make_policy,
                     save_policy)
from .rollout import Trajectory, replay, rollout_batch

__version__ = "0.1.0"
