"""Multi-site robot-dynamics data pipeline.

Simulated trajectory generation with ground-truth inverse dynamics, a
FAIR-annotated trajectory store with named views, a recurrent inverse
dynamics learner with sweep-coordinated training and a gated model
repository, and a four-setup transfer-learning benchmark.
"""

__version__ = "0.1.0"
