"""Counter-guided tuning space search with offline replay simulation."""

from .bottlenecks import BottleneckVector, analyze, react
from .counters import ArchProfile, canonicalize, classify
from .errors import CounterTuneError
from .models import (ExactModelSet, ModelSet, load_model_set, save_model_set,
                     train_decision_tree, train_model_set, train_regression)
from .search import (DatasetReplaySource, SearchTrace, SubprocessMeasurementSource,
                     normalize_scores, run_profile_search, run_random_search,
                     score_configurations, weighted_select)
from .space import (Dataset, MeasurementRecord, TuningConfiguration, TuningParameter,
                    TuningSpace, binary_subspace_key, load_dataset, load_dataset_dir,
                    save_dataset, well_performing_set)
from .harness import (ConvergenceReport, CrossEvalReport, ExperimentSpec, cross_evaluate,
                      report, simulate)
from .synth import GENERATOR_PRESETS, build_dataset, gen_synthetic

__version__ = "0.1.0"
