"""difair: intersectional fairness auditing and fairness-regularized
training for tabular classifiers."""

__version__ = "0.1.0"

from .data import (
    DataFormatError,
    Dataset,
    FeatureScaler,
    Schema,
    SchemaColumn,
    SchemaError,
    SplitSpec,
    biased_population,
    example_schema_path,
    gaussian_hiring_population,
    load_csv,
    split,
    synth_biased,
    synth_gaussian_hiring,
    synth_simpsons,
    synth_simpsons_dataset,
    write_scenario_csv,
)
from .groups import (
    GroupSpace,
    OutcomeTable,
    Subgroup,
    SubgroupCollection,
    build_table,
    enumerate_subgroups,
    project,
)
from .metrics import (
    EstimatorSpec,
    FairnessReport,
    ProbTable,
    audit_gamma_monotonicity,
    bias_amplification,
    build_report,
    check_confounder_theorem,
    check_intersectionality,
    check_privacy_bound,
    check_utility_bound,
    eighty_pct_rule,
    epsilon_df,
    epsilon_dfc,
    epsilon_per_group,
    gamma_sf,
    gini,
    project_probs,
    table_to_probs,
)
from .model import (
    Classifier,
    OptimState,
    accuracy,
    adam_step,
    forward,
    init_classifier,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from .train import PenaltySpec, TrainConfig, TrainTrace, penalty_value, train

__all__ = [name for name in dir() if not name.startswith("_")]
