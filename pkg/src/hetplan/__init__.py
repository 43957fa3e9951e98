"""Cost-based planning and simulation for ML-inference workflow DAGs on
tiered heterogeneous infrastructure."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    IDENTITY,
    CostBreakdown,
    InfrastructureSpec,
    LogicalPlan,
    OperatorNode,
    PhysicalPlan,
    Worker,
    propagate_throughput,
    topological_orderings,
    validate,
)
from .profiles import (  # noqa: F401
    AccuracyProfile,
    ModelVariant,
    ProfileSet,
    estimate_output_accuracy,
    required_input_accuracy,
    throughput_coefficient,
    unit_compute_cost,
)
