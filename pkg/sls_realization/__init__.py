from .pipeline import EstimationReport, meta_run
from .system import DiscreteState, MarkovSequence, SlsModel, SwitchingSequence, generate_markov
from .utils.config import RunConfig, config_run
