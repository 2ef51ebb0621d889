"""Certified robustness and data poisoning for Naive Bayes over incomplete data."""

from .data import (
    Binner,
    Dataset,
    Schema,
    active_domain,
    apply_discretizer,
    fit_discretizer,
    inject_missing,
    load_csv,
    read_points,
    split,
    synthetic_dataset,
)
from .decision import (
    CertifyVerdict,
    LabelBounds,
    Support,
    approx_certify,
    certify,
    certify_batch,
    certify_iterate,
    enumerate_worlds,
    min_max_support,
    oracle_certify,
    predict,
    support,
)
from .errors import NBRobustError
from .poisoning import (
    PoisonPlan,
    alter_prediction,
    plan_is_effective,
    poison_multi,
    poison_random,
    poison_single,
    poison_smart_random,
    poisoning_rate,
    verify_plan,
)
from .stats import FrequencyIndex, build_index, counts_for, scan_counts

__version__ = "0.1.0"
