"""Dataset containers, text formats, splits, and the synthetic generator."""

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet, parse_dimacs
from .errors import ContractError, ParseError, ShapeError


@dataclass
class TabularDataset:
    """Numeric features plus binary label columns."""

    feature_names: list[str]
    label_names: list[str]
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=bool)
        if self.X.ndim != 2 or self.Y.ndim != 2 or len(self.X) != len(self.Y):
            raise ShapeError("X and Y must be 2-d with matching row counts")
        if self.X.shape[1] != len(self.feature_names):
            raise ShapeError("feature count does not match feature_names")
        if self.Y.shape[1] != len(self.label_names):
            raise ShapeError("label count does not match label_names")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_labels(self) -> int:
        return self.Y.shape[1]

    def __len__(self) -> int:
        return len(self.X)


@dataclass
class LabeledSet:
    """A bare (features, labels) pair used by the training stages."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=bool)
        if self.X.ndim != 2 or self.Y.ndim != 2 or len(self.X) != len(self.Y):
            raise ShapeError("X and Y must be 2-d with matching row counts")

    def __len__(self) -> int:
        return len(self.X)


@dataclass
class SplitDataset:
    """Supervised/unsupervised/validation/test partition of one dataset.

    `unsupervised_ratio` records which fraction of the training rows had
    their labels withheld (0.3 means 30% of training rows are unsupervised).
    """

    train_supervised: LabeledSet
    train_unsupervised: np.ndarray
    validation: LabeledSet
    test: LabeledSet
    unsupervised_ratio: float = 0.0


def _strip_quotes(token: str) -> str:
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


def parse_arff_lite(text: str, labels) -> TabularDataset:
    """Parse the flat ARFF subset: numeric features, binary {0,1} labels.

    `labels` selects the label columns, either a list of attribute names (the
    given order becomes the label order) or an integer count meaning the last
    that many attributes. Sparse rows, string attributes, and missing values
    are out of scope and rejected.
    """
    attr_names: list[str] = []
    attr_binary: list[bool] = []
    saw_relation = False
    data_from: int | None = None
    rows: list[tuple[int, str]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        low = line.lower()
        if data_from is None:
            if low.startswith("@relation"):
                saw_relation = True
            elif low.startswith("@attribute"):
                parts = line.split(None, 2)
                if len(parts) != 3:
                    raise ParseError(f"malformed attribute line {line!r}", lineno)
                name = _strip_quotes(parts[1])
                spec = parts[2].strip()
                if spec.lower() == "numeric":
                    attr_binary.append(False)
                elif spec.startswith("{") and spec.endswith("}"):
                    values = sorted(v.strip() for v in spec[1:-1].split(","))
                    if values != ["0", "1"]:
                        raise ParseError(
                            f"attribute {name!r} must be numeric or {{0,1}}, got {spec}", lineno
                        )
                    attr_binary.append(True)
                else:
                    raise ParseError(
                        f"attribute {name!r} must be numeric or {{0,1}}, got {spec}", lineno
                    )
                attr_names.append(name)
            elif low.startswith("@data"):
                if not saw_relation:
                    raise ParseError("missing @relation before @data", lineno)
                if not attr_names:
                    raise ParseError("no attributes declared before @data", lineno)
                data_from = lineno
            else:
                raise ParseError(f"unexpected line {line!r} in header", lineno)
        else:
            rows.append((lineno, line))

    if data_from is None:
        raise ParseError("missing @data section", 1)

    if isinstance(labels, int):
        if not 1 <= labels < len(attr_names):
            raise ContractError(
                f"label count must be in 1..{len(attr_names) - 1}, got {labels}"
            )
        label_names = attr_names[-labels:]
    else:
        label_names = [str(name) for name in labels]
        if not label_names:
            raise ContractError("empty label name list")
        missing = [name for name in label_names if name not in attr_names]
        if missing:
            raise ContractError(f"label attributes not in file: {missing}")
        if len(set(label_names)) != len(label_names):
            raise ContractError("duplicate label names")
        if len(label_names) >= len(attr_names):
            raise ContractError("at least one attribute must remain a feature")

    label_idx = {attr_names.index(name): pos for pos, name in enumerate(label_names)}
    feature_names = [name for i, name in enumerate(attr_names) if i not in label_idx]

    X = np.empty((len(rows), len(feature_names)))
    Y = np.empty((len(rows), len(label_names)), dtype=bool)
    for r, (lineno, line) in enumerate(rows):
        if line.startswith("{"):
            raise ParseError("sparse ARFF rows are not supported", lineno)
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) != len(attr_names):
            raise ParseError(
                f"row has {len(cells)} values, expected {len(attr_names)}", lineno
            )
        fcol = 0
        for i, cell in enumerate(cells):
            if i in label_idx:
                if cell not in ("0", "1"):
                    raise ParseError(f"label value must be 0 or 1, got {cell!r}", lineno)
                Y[r, label_idx[i]] = cell == "1"
            else:
                try:
                    X[r, fcol] = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric feature value {cell!r}", lineno) from None
                if attr_binary[i] and cell not in ("0", "1"):
                    raise ParseError(f"binary attribute holds {cell!r}", lineno)
                fcol += 1
    return TabularDataset(feature_names, label_names, X, Y)


def parse_csv_dataset(text: str, label_count: int) -> TabularDataset:
    """Parse a plain CSV with a header row; the last `label_count` columns are labels."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ParseError("empty input", 1)
    header = [cell.strip() for cell in lines[0].split(",")]
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names", 1)
    if not 1 <= label_count < len(header):
        raise ContractError(
            f"label count must be in 1..{len(header) - 1}, got {label_count}"
        )
    n_feat = len(header) - label_count
    X = np.empty((len(lines) - 1, n_feat))
    Y = np.empty((len(lines) - 1, label_count), dtype=bool)
    for r, line in enumerate(lines[1:], start=2):
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) != len(header):
            raise ParseError(f"row has {len(cells)} values, expected {len(header)}", r)
        for i, cell in enumerate(cells):
            if i < n_feat:
                try:
                    X[r - 2, i] = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric feature value {cell!r}", r) from None
            else:
                if cell not in ("0", "1"):
                    raise ParseError(f"label value must be 0 or 1, got {cell!r}", r)
                Y[r - 2, i - n_feat] = cell == "1"
    return TabularDataset(header[:n_feat], header[n_feat:], X, Y)


def dataset_to_csv(ds: TabularDataset) -> str:
    """CSV that `parse_csv_dataset` reads back bit-identically (repr floats)."""
    lines = [",".join(ds.feature_names + ds.label_names)]
    for x, y in zip(ds.X, ds.Y):
        cells = [repr(float(v)) for v in x] + ["1" if b else "0" for b in y]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# Default rectangles per toy scenario: (x_min, x_max, y_min, y_max) per label.
TOY_RECTANGLES = {
    "complete": ((0.25, 0.75, 0.25, 0.75), (0.25, 0.75, 0.25, 0.75)),
    "partial": ((0.1, 0.6, 0.2, 0.7), (0.35, 0.9, 0.3, 0.8)),
    "disjoint": ((0.05, 0.45, 0.05, 0.45), (0.55, 0.95, 0.55, 0.95)),
}

TOY_DIMACS = "p cnf 2 1\n-1 2 0\n"


def _rects_overlap(r1, r2) -> bool:
    return r1[0] < r2[1] and r2[0] < r1[1] and r1[2] < r2[3] and r2[2] < r1[3]


@dataclass(frozen=True)
class ToySpec:
    """Two rectangle-membership labels over points drawn uniformly from the unit square."""

    scenario: str
    n_samples: int = 10000
    seed: int = 0
    rect1: tuple = None
    rect2: tuple = None

    def __post_init__(self):
        if self.scenario not in TOY_RECTANGLES:
            raise ContractError(
                f"unknown scenario {self.scenario!r}; choose from {sorted(TOY_RECTANGLES)}"
            )
        if self.n_samples < 1:
            raise ContractError("n_samples must be positive")
        if self.rect1 is None:
            object.__setattr__(self, "rect1", TOY_RECTANGLES[self.scenario][0])
        if self.rect2 is None:
            object.__setattr__(self, "rect2", TOY_RECTANGLES[self.scenario][1])
        for rect in (self.rect1, self.rect2):
            if len(rect) != 4 or not all(0.0 <= v <= 1.0 for v in rect):
                raise ContractError(f"rectangle {rect} must lie within the unit square")
            if not (rect[0] < rect[1] and rect[2] < rect[3]):
                raise ContractError(f"rectangle {rect} has empty extent")
        if self.scenario == "complete" and self.rect1 != self.rect2:
            raise ContractError("scenario 'complete' needs identical rectangles")
        if self.scenario == "partial" and (
            self.rect1 == self.rect2 or not _rects_overlap(self.rect1, self.rect2)
        ):
            raise ContractError("scenario 'partial' needs distinct overlapping rectangles")
        if self.scenario == "disjoint" and _rects_overlap(self.rect1, self.rect2):
            raise ContractError("scenario 'disjoint' needs non-overlapping rectangles")


def gen_toy(spec: ToySpec) -> tuple[TabularDataset, ConstraintSet]:
    """Sample the toy dataset and its companion implication constraint.

    Label o1 marks points inside the first rectangle, o2 inside the second.
    The returned constraint states that o1 implies o2; the data satisfies it
    everywhere only in the 'complete' scenario.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.random((spec.n_samples, 2))

    def inside(rect):
        return (
            (X[:, 0] >= rect[0])
            & (X[:, 0] <= rect[1])
            & (X[:, 1] >= rect[2])
            & (X[:, 1] <= rect[3])
        )

    Y = np.stack([inside(spec.rect1), inside(spec.rect2)], axis=1)
    ds = TabularDataset(["x1", "x2"], ["o1", "o2"], X, Y)
    return ds, parse_dimacs(TOY_DIMACS)


def split(ds: TabularDataset, fractions, seed: int) -> SplitDataset:
    """Shuffle and split into train/validation/test by fractions summing to 1."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ContractError("need three positive fractions (train, validation, test)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(ds)
    n_train = int(fractions[0] * n)
    n_valid = int(fractions[1] * n)
    n_test = n - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise ContractError(f"split of {n} rows leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    tr, va, te = perm[:n_train], perm[n_train : n_train + n_valid], perm[n_train + n_valid :]
    return SplitDataset(
        train_supervised=LabeledSet(ds.X[tr], ds.Y[tr]),
        train_unsupervised=np.empty((0, ds.n_features)),
        validation=LabeledSet(ds.X[va], ds.Y[va]),
        test=LabeledSet(ds.X[te], ds.Y[te]),
    )


def split_unsupervised(sd: SplitDataset, ratio: float, seed: int) -> SplitDataset:
    """Withhold labels from a fraction of the supervised training rows."""
    if not 0.0 <= ratio < 1.0:
        raise ContractError(f"unsupervised ratio must lie in [0, 1), got {ratio}")
    sup = sd.train_supervised
    n_unsup = int(ratio * len(sup))
    if len(sup) - n_unsup < 1:
        raise ContractError("unsupervised split would leave no supervised rows")
    if n_unsup == 0:
        return SplitDataset(sup, sd.train_unsupervised, sd.validation, sd.test, ratio)
    perm = np.random.default_rng(seed).permutation(len(sup))
    uns, keep = perm[:n_unsup], perm[n_unsup:]
    return SplitDataset(
        train_supervised=LabeledSet(sup.X[keep], sup.Y[keep]),
        train_unsupervised=np.vstack([sd.train_unsupervised, sup.X[uns]]),
        validation=sd.validation,
        test=sd.test,
        unsupervised_ratio=ratio,
    )
