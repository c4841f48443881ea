"""puppetbench: desk-scale imitation-learning workbench for an expressive
17-DoF humanoid (record, encode, train, generate, analyze)."""

from .robot import (
    JointSpec,
    RobotModel,
    ServoState,
    default_model,
    forward_kinematics,
    load_model,
    save_model,
    step_servo,
)
from .bus import BusFrame, SimBus, decode_frame, encode_frame, transact
from .actions import (
    ActionSequence,
    ChannelLayout,
    CommandVocabulary,
    Dataset,
    NormalizedSequence,
    default_vocabulary,
    denormalize,
    load_action,
    load_dataset,
    normalize,
    save_action,
    save_dataset,
)
from .recording import (
    LivePuppet,
    PuppetSource,
    RecordingConfig,
    ScriptedPuppet,
    SequencePuppet,
    TimedTarget,
    annotate,
    endeffector_record,
    kinesthetic_record,
)
from .ik import IkConfig, IkObjective, IkSolution, solve
from .mtrnn import (
    MtrnnConfig,
    MtrnnNetwork,
    NeuronState,
    TrainConfig,
    forward_step,
    generate,
    load_network,
    rollout_states,
    save_network,
    train,
)
from .analysis import PcaResult, pca, separation_score, trajectory_rmse

__version__ = "0.1.0"
