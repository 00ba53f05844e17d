"""Exception hierarchy.

Each family maps to one CLI exit code (config=2, data=3, training=4,
internal=5).
"""


class PPMError(Exception):
    exit_code = 5


class ConfigError(PPMError):
    exit_code = 2


class DataError(PPMError):
    exit_code = 3


class TrainingError(PPMError):
    exit_code = 4


# -- data ---------------------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"missing column: {name!r}")
        self.name = name


class UnparseableTimestamp(DataError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: cannot parse timestamp {value!r}")
        self.row = row
        self.value = value


class NegativeDuration(DataError):
    """Raised only in strict mode; by default such rows are dropped and counted."""

    def __init__(self, row):
        super().__init__(f"row {row}: end timestamp precedes start timestamp")
        self.row = row


class ReservedLabel(DataError):
    def __init__(self, row, label):
        super().__init__(f"row {row}: reserved label {label!r} in input")
        self.row = row


class EmptyLog(DataError):
    def __init__(self, msg="event log contains no events"):
        super().__init__(msg)


class TooFewTraces(DataError):
    def __init__(self, n):
        super().__init__(f"need at least 3 traces to split, got {n}")
        self.n = n


class LengthMismatch(DataError):
    def __init__(self, a, b):
        super().__init__(f"length mismatch: {a} vs {b}")


class EmptyTestSet(DataError):
    def __init__(self):
        super().__init__("no test samples to evaluate")


# -- config -------------------------------------------------------------

class ConfigViolation(ConfigError):
    pass


class IndivisibleHeads(ConfigError):
    def __init__(self, d_model, heads):
        super().__init__(f"d_model={d_model} is not divisible by heads={heads}")


# -- training / selection -------------------------------------------------

class NonFiniteLoss(TrainingError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class AllCandidatesFailed(TrainingError):
    def __init__(self):
        super().__init__("every grid candidate failed")


class EmptyCandidateSet(TrainingError):
    def __init__(self):
        super().__init__("candidate set is empty")


class NonPositiveLoss(TrainingError):
    def __init__(self, index, value):
        super().__init__(f"candidate {index}: validation loss {value} is not positive")
        self.index = index


# -- internal -----------------------------------------------------------

class ShapeMismatch(PPMError):
    def __init__(self, op, got, expected):
        super().__init__(f"{op}: got shape {got}, expected {expected}")
        self.op = op
        self.got = got
        self.expected = expected


class IndexOutOfRange(PPMError):
    def __init__(self, index, size):
        super().__init__(f"index {index} out of range for {size} classes")
