from .assumptions import (
    Assumption,
    AssumptionReport,
    check_assumptions,
    check_state_assumptions,
    controllability_matrix,
    observability_matrix,
)
from .generators import (
    mixed_switching,
    multisine,
    random_sls,
    random_switching,
    three_state_example,
)
from .sls_model import (
    DiscreteState,
    MarkovSequence,
    Quadruple,
    SlsModel,
    SwitchingSequence,
    generate_markov,
    markov,
    response,
    simulate,
    state_transition,
)
