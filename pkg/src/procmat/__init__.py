"""Process matrices, local instruments, and composition of bipartite processes."""
from .bases import gellmann_basis, product_basis, pti_basis, signature_count
from .certificate import Certificate, Check
from .composition import (
    BilinearRule,
    SpanError,
    check_R1,
    check_R1prime,
    check_R2,
    check_R3,
    fit_bilinear_rule,
    lemma1_certificate,
    lemma2_certificate,
    lemma3_certificate,
    mixed_order_pair,
    rule_from_tensor_product,
    tensor_compose,
    tensor_product,
    theorem_certificate,
)
from .instruments import (
    Instrument,
    born_probability,
    choi_from_kraus,
    probability_table,
    random_instrument,
    validate_instrument,
)
from .processes import (
    CausalClass,
    Party,
    ProcessMatrix,
    causal_class,
    channel_process,
    mixture,
    opposite_order_pair,
    project_LV,
    project_LVN,
    projector_rank,
    random_process,
    state_process,
    validate_process,
)
from .tensorspace import (
    FactorLabel,
    LabeledOperator,
    Port,
    factor,
    identity,
    kron,
    partial_trace,
    reorder_factors,
    trace_and_replace,
)

__version__ = "0.1.0"
