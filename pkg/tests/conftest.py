import math
from pathlib import Path

import numpy as np
import pytest

from d2k_pipeline.dynamics import RobotModel, load_robot_model

REPO_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_MODEL_FILE = REPO_ROOT / "configs" / "lightweight7.yaml"

# effectively a point mass: keeps the inertia invariant satisfied while
# contributing nothing measurable to the torques under test
EPS_INERTIA = 1e-12 * np.eye(3)


def make_two_link_planar(m1=1.0, m2=1.0, l1=1.0, l2=1.0, g=9.81, friction=0.0):
    """Two revolute joints about z, links along x, point masses at the link tips.

    Gravity acts along -y of the base frame, i.e. in the plane of motion, so
    the closed-form planar gravity/Coriolis torques apply.
    """
    return RobotModel(
        name="two-link-planar",
        n_joints=2,
        a=[0.0, l1],
        d=[0.0, 0.0],
        alpha=[0.0, 0.0],
        theta_offset=[0.0, 0.0],
        mass=[m1, m2],
        com=[[l1, 0.0, 0.0], [l2, 0.0, 0.0]],
        inertia=[EPS_INERTIA, EPS_INERTIA],
        q_min=[-math.pi, -math.pi],
        q_max=[math.pi, math.pi],
        qd_max=[10.0, 10.0],
        qdd_max=[100.0, 100.0],
        tau_max=[1000.0, 1000.0],
        gravity=[0.0, -g, 0.0],
        viscous_friction=[friction, friction],
        flange=[l2, 0.0, 0.0],
    )


def make_pendulum(m=1.3, l=0.7, g=9.81):
    """Single link about z, point mass m at distance l, gravity along -y."""
    return RobotModel(
        name="pendulum",
        n_joints=1,
        a=[0.0],
        d=[0.0],
        alpha=[0.0],
        theta_offset=[0.0],
        mass=[m],
        com=[[l, 0.0, 0.0]],
        inertia=[EPS_INERTIA],
        q_min=[-math.pi],
        q_max=[math.pi],
        qd_max=[10.0],
        qdd_max=[100.0],
        tau_max=[100.0],
        gravity=[0.0, -g, 0.0],
        flange=[l, 0.0, 0.0],
    )


def random_state_arrays(model, rng, qd_span=1.0, qdd_span=1.0):
    n = model.n_joints
    q = rng.uniform(model.q_min, model.q_max)
    qd = rng.uniform(-qd_span, qd_span, n) * model.qd_max
    qdd = rng.uniform(-qdd_span, qdd_span, n) * model.qdd_max
    return q, qd, qdd


@pytest.fixture(scope="session")
def default_model():
    return load_robot_model(DEFAULT_MODEL_FILE)


@pytest.fixture(scope="session")
def two_link():
    return make_two_link_planar()


@pytest.fixture(scope="session")
def pendulum():
    return make_pendulum()


TWO_LINK_YAML = """\
name: two-link-planar
n_joints: 2
alpha: [0.0, 0.0]
a: [0.0, 1.0]
d: [0.0, 0.0]
theta_offset: [0.0, 0.0]
flange: [1.0, 0.0, 0.0]
mass: [1.0, 1.0]
com:
  - [1.0, 0.0, 0.0]
  - [1.0, 0.0, 0.0]
inertia:
  - [[1.0e-12, 0.0, 0.0], [0.0, 1.0e-12, 0.0], [0.0, 0.0, 1.0e-12]]
  - [[1.0e-12, 0.0, 0.0], [0.0, 1.0e-12, 0.0], [0.0, 0.0, 1.0e-12]]
q_min: [-3.1, -3.1]
q_max: [3.1, 3.1]
qd_max: [10.0, 10.0]
qdd_max: [100.0, 100.0]
tau_max: [100.0, 100.0]
gravity: [0.0, -9.81, 0.0]
viscous_friction: [0.05, 0.05]
"""


def write_two_link_model(path):
    path = Path(path)
    path.write_text(TWO_LINK_YAML)
    return path


def pipeline_config_doc(base_dir, model_path, sites=None, **overrides):
    base = Path(base_dir)
    doc = {
        "robot_model": str(model_path),
        "store_endpoint": f"dir:{base / 'store'}",
        "sweep_endpoint": f"dir:{base / 'repo'}",
        "report_dir": str(base / "reports"),
        "seed": 0,
        "sites": sites or [
            {"site": "llt", "instance_id": "llt-arm", "seed": 1,
             "counts": {"train": 4, "validation": 2, "evaluation": 0},
             "perturbation": {"mass_scale": 1.05}},
            {"site": "wzl", "instance_id": "wzl-arm", "seed": 2,
             "counts": {"train": 4, "validation": 2, "evaluation": 0},
             "perturbation": {"payload_mass": 0.3}},
        ],
        "nightly": {"configs_per_round": 2, "epochs": 2, "folds": 2,
                    "sequence_length": 16, "batch_size": 8,
                    "hidden_sizes": [16], "layer_range": [1, 1]},
        "k2d": {"n_bins": 8, "threshold": 0.5, "trajectories_per_directive": 2},
    }
    doc.update(overrides)
    return doc


def write_pipeline_config(base_dir, model_path, sites=None, **overrides):
    import yaml as _yaml

    doc = pipeline_config_doc(base_dir, model_path, sites, **overrides)
    path = Path(base_dir) / "pipeline.yaml"
    path.write_text(_yaml.safe_dump(doc))
    return path
