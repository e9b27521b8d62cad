"""beamsight: desk-scale vision-aided blockage prediction and proactive handoff.

A numpy toolkit that simulates a dynamic street scene observed by mmWave
basestations with cameras, builds bimodal (detections + beams) sequence
datasets, trains a recurrent future-link-status predictor against a
beam-only baseline, and evaluates proactive handoff between two
basestations.
"""

from .config import (
    DatasetConfig,
    ExperimentConfig,
    ScenarioConfig,
    TrainConfig,
    load_experiment_config,
    load_scenario_config,
)
from .errors import BeamsightError, DataError, NumericError
from .scene import (
    Basestation,
    Camera,
    Detection,
    DetectorNoiseModel,
    SceneObject,
    UlaGeometry,
    VehicleClass,
    World,
    build_world,
    detect,
    project_object,
    step_world,
)
from .phy import (
    ChannelPath,
    Codebook,
    array_response,
    channel_vector,
    los_status,
    received_power,
    select_beam,
    steering_vector,
    synthesize_paths,
)

__version__ = "0.1.0"

__all__ = [
    "Basestation", "BeamsightError", "Camera", "ChannelPath", "Codebook",
    "DataError", "DatasetConfig", "Detection", "DetectorNoiseModel",
    "ExperimentConfig", "NumericError", "ScenarioConfig", "SceneObject",
    "TrainConfig", "UlaGeometry", "VehicleClass", "World", "array_response",
    "build_world", "channel_vector", "detect", "load_experiment_config",
    "load_scenario_config", "los_status", "project_object", "received_power",
    "select_beam", "steering_vector", "step_world", "synthesize_paths",
]
