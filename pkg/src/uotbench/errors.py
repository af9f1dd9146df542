"""Exception types raised across the package."""


class UotBenchError(Exception):
    """Base class for all package-specific errors."""


# -- measures ----------------------------------------------------------------

class AllMassBelowThreshold(UotBenchError):
    """Every pixel intensity is at or below the support threshold."""


class EmptyDataset(UotBenchError):
    """An operation that needs at least one record got none."""


class DiskOutOfDomain(UotBenchError):
    """A translated disk does not fit inside the unit square."""


# -- transport ---------------------------------------------------------------

class MassMismatch(UotBenchError):
    """Balanced transport requires equal total masses."""


class SolverFailure(UotBenchError):
    """The exact LP solver failed to reach optimality."""


class InfiniteCostMass(UotBenchError):
    """A transport plan puts mass on an infinite-cost entry."""


# -- distmat -----------------------------------------------------------------

class CorruptCache(UotBenchError):
    """Cache file has a bad magic, version, or length."""


class FingerprintMismatch(UotBenchError):
    """Cache was built from a different dataset or parameters."""


class PairSolveFailure(UotBenchError):
    """A pairwise distance solve failed; carries the offending pair."""

    def __init__(self, i: int, j: int, cause: Exception):
        super().__init__(f"distance solve failed for pair ({i}, {j}): {cause}")
        self.pair = (i, j)
        self.cause = cause

    def __reduce__(self):  # keep picklable across process-pool boundaries
        return (PairSolveFailure, (self.pair[0], self.pair[1], self.cause))


# -- embed -------------------------------------------------------------------

class DegenerateSpectrum(UotBenchError):
    """All singular values are zero; no dimension can be chosen."""


class InsufficientSpectrum(UotBenchError):
    """Too few usable Laplacian eigenvalues for the requested dimension."""


class BandwidthBisectionFailure(UotBenchError):
    """Perplexity bisection did not reach tolerance within the step budget."""


class ConvergenceFailure(UotBenchError):
    """An eigensolver did not converge."""


# -- learn / cluster / stats -------------------------------------------------

class ClassTooSmall(UotBenchError):
    """A class has too few members to split."""


class SingularCovariance(UotBenchError):
    """Pooled covariance is numerically singular even after ridging."""


class LengthMismatch(UotBenchError):
    """Two label/prediction vectors differ in length."""


class MissingMetric(UotBenchError):
    """A verdict needs results for all three metrics."""


# -- cli ---------------------------------------------------------------------

class SizeTooLarge(UotBenchError):
    """Requested subsample exceeds the dataset size."""


class ConfigError(UotBenchError):
    """Experiment config file is malformed or inconsistent."""


class IoFailure(UotBenchError):
    """Reading or writing an output artifact failed."""
