"""Incrementally learned shared autonomy workbench.

Pretrain an assistive policy on rule-generated kinematic trajectories, deploy
it behind a cosine-similarity gate that lets the user pause and override it,
and fine-tune it after every trial from corrected interaction data with
layered supervision and a partial (transformer-only) parameter update.
"""

from .arbitration import (Gate, GateConfig, GateDecision, GateOutcome,
                          TrialLog, run_trial, user_to_robot_action)
from .env import Env, Metrics, subtask_complete
from .errors import ConfigError, IlsaError, ShapeError, TrainingError
from .geometry import Box, normalize_angle, normalize_angles
from .incremental import (FinetuneConfig, FinetuneReport, OverwriteEpisode,
                          build_corrected_trajectory, find_overwrite_episodes,
                          assemble_finetune_plan, finetune,
                          trainable_partitions_for)
from .nn import PARTITIONS, Adam, ParamSet, load_checkpoint, save_checkpoint
from .policy import (LossMask, PolicyConfig, PolicyOutput, TrainConfig,
                     build_policy_params, encode_state, forward, loss_demo,
                     loss_direc, loss_order, loss_total, pretrain,
                     state_features)
from .simuser import (AblationTable, ExperimentResult, OracleConfig,
                      infer_phase, layout_for, make_oracle, make_policy_fn,
                      oracle_action, plan_route, run_ablation, run_experiment)
from .tasks import builtin_tasks, cereal_pour, load_task, pill_bottle, without_obstacles
from .trajgen import (GenConfig, generate_task_trajectories, interpolate,
                      sample_layout, synth_user_action)
from .types import (MAX_DELTA_NORM, MAX_STEP, ROT_STEP, Pose, Provenance,
                    RobotAction, Step, StepSource, SubtaskKind, SubtaskSpec,
                    TargetRule, TaskSpec, TaskState, Trajectory, UserAction,
                    apply_delta, ee_positions, final_state, pose_delta,
                    subtask_target, transition, verify_consistency)

__version__ = "0.1.0"
