"""Non-locality toolkit for two-party no-signaling boxes.

Quantifies non-locality via the local/non-local decomposition linear program,
simulates deterministic adaptive 2->1 wirings, searches all two-copy
distillation protocols exhaustively, and classifies the binary box family
into distillable / bound / cost-stable regions.
"""

from .boxes import (
    BehaviorBox,
    BoxDiagnostics,
    BoxError,
    DimensionError,
    FamilyPoint,
    Relabeling,
    box_dumps,
    box_loads,
    chsh_max,
    chsh_values,
    closed_form_cost,
    extremal_boxes,
    family_box,
    iso_box,
    make_named_box,
    nlc_box,
    random_ns_box,
    read_box,
    relabel,
    tensor_product,
    twirl,
    validate,
    write_box,
)
from .epr2 import (
    DeterministicStrategy,
    Epr2Result,
    SolverOptions,
    certify,
    enumerate_strategies,
    epr2_cost,
    epr2_cost_two_copies,
    strategy_count,
)
from .wiring import (
    PartyWiring,
    StrategyTensor,
    apply_wiring,
    enumerate_party_wirings,
    named_wiring,
    to_tensor,
    wiring_from_text,
    wiring_to_text,
)
from .distill import (
    RegionClassification,
    SearchOptions,
    SearchResult,
    classify_point,
    distillable_2copy,
    fast_eval_kernel,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
