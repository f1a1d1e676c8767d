"""Exception hierarchy.

Every error raised by the package derives from :class:`BiscaleError` so the
CLI can map failures to a module-qualified message and exit code 1.
"""


class BiscaleError(Exception):
    module = "biscale"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


# ingest
class IngestError(BiscaleError):
    module = "ingest"


class MalformedHeader(IngestError):
    pass


class UnsupportedLinkType(IngestError):
    pass


class RowParseError(IngestError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line


# aggregate
class AggregateError(BiscaleError):
    module = "aggregate"


class EmptyStream(AggregateError):
    pass


class TooFewPackets(AggregateError):
    pass


# sketch
class SketchError(BiscaleError):
    module = "sketch"


class MismatchedGrids(SketchError):
    pass


# wavelet / leaders
class WaveletError(BiscaleError):
    module = "wavelet"


class SeriesTooShort(WaveletError):
    def __init__(self, msg, j_max_achievable=0):
        super().__init__(msg)
        self.j_max_achievable = j_max_achievable


class LeaderError(BiscaleError):
    module = "leaders"


class TooFewOctaves(LeaderError):
    pass


class AllLeadersZero(LeaderError):
    pass


# estimate
class EstimateError(BiscaleError):
    module = "estimate"


class RangeNotCovered(EstimateError):
    pass


class DegenerateWeights(EstimateError):
    pass


# flows
class FlowError(BiscaleError):
    module = "flows"


class TooFewFlows(FlowError):
    pass


class DegenerateTail(FlowError):
    pass


class SingularCovariance(FlowError):
    pass


# synth
class SynthError(BiscaleError):
    module = "synth"


class EmbeddingNotPSD(SynthError):
    pass
