"""Probabilistic multi-label classification with a sequential integrator."""

from .constraints import (
    ConstraintSet,
    Literal,
    eval_full,
    parse_dimacs,
    sat_with_prefix,
    serialize_dimacs,
    split_valid_invalid,
)
from .data import (
    LabeledSet,
    SplitDataset,
    TabularDataset,
    ToySpec,
    dataset_to_csv,
    gen_toy,
    parse_arff_lite,
    parse_csv_dataset,
    split,
    split_unsupervised,
)
from .errors import (
    ContractError,
    EnumerationCapError,
    NumericError,
    ParseError,
    SeqLabelError,
    ShapeError,
)
from .inference import (
    SamplingStrategy,
    ancestral_sample,
    beam_search,
    beam_search_sat,
    exact_topk,
    independent_topk,
)
from .losses import (
    base_bce_loss,
    compute_masks,
    constraint_loss,
    supervised_loss,
)
from .model import (
    BaseSeqModel,
    SeqOnlyModel,
    base_predict,
    cond_predict,
    encode_cond_input,
    enumerate_valuations,
    joint_logprob_seq,
    joint_prob_base,
    load_bundle,
    save_bundle,
    seq_only_cond_predict,
)
from .nnet import AdamState, DenseNet, TrainConfig, adam_step, backward, forward, train_loop
from .pipeline import (
    DecoderSpec,
    EvalReport,
    evaluate,
    pseudo_label,
    train_base_stage,
    train_seq_stage,
    train_with_constraint_loss,
    train_with_pseudo_labels,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
