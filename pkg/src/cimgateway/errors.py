"""Exception types shared across the gateway."""


class GatewayError(Exception):
    """Base class for all errors raised by this package."""


# --- class library -----------------------------------------------------------

class LibraryError(GatewayError):
    pass


class MalformedXml(GatewayError):
    """Input is not parseable XML, or violates the expected document shape."""


class DanglingSuperclass(LibraryError):
    def __init__(self, class_name, superclass):
        super().__init__(f"class {class_name!r} inherits from unknown class {superclass!r}")
        self.class_name = class_name
        self.superclass = superclass


class InheritanceCycle(LibraryError):
    def __init__(self, class_name):
        super().__init__(f"inheritance cycle through class {class_name!r}")
        self.class_name = class_name


class DuplicateClass(LibraryError):
    def __init__(self, name):
        super().__init__(f"duplicate class or datatype definition {name!r}")
        self.name = name


class UnknownKind(LibraryError):
    """A datatype resolves to a value kind outside the closed primitive set."""

    def __init__(self, datatype, kind):
        super().__init__(f"datatype {datatype!r} has unsupported value kind {kind!r}")
        self.datatype = datatype
        self.kind = kind


class UnknownClass(LibraryError):
    def __init__(self, class_name):
        super().__init__(f"unknown class {class_name!r}")
        self.class_name = class_name


class UnknownType(LibraryError):
    def __init__(self, declared_type):
        super().__init__(f"type {declared_type!r} is neither a primitive kind nor a datatype")
        self.declared_type = declared_type


# --- topology ----------------------------------------------------------------

class TopologyError(GatewayError):
    pass


class DuplicateMrid(TopologyError):
    def __init__(self, mrid):
        super().__init__(f"two descriptions share the identifier {mrid!r}")
        self.mrid = mrid


class MissingId(TopologyError):
    def __init__(self, class_name):
        super().__init__(f"description of class {class_name!r} carries neither rdf:ID nor rdf:about")
        self.class_name = class_name


# --- storage / schema --------------------------------------------------------

class StorageFailure(GatewayError):
    """I/O or constraint error from the embedded store; the catalog is unchanged."""


# --- mapping / sync ----------------------------------------------------------

class DuplicateTag(GatewayError):
    def __init__(self, tag):
        super().__init__(f"manifest reuses tag {tag!r}")
        self.tag = tag


class DuplicateTarget(GatewayError):
    def __init__(self, mrid, attribute):
        super().__init__(f"two tags claim ({mrid!r}, {attribute!r})")
        self.mrid = mrid
        self.attribute = attribute


class SourceUnreachable(GatewayError):
    """The local data source could not be reached; no partial result is available."""


class FatalStoreFailure(GatewayError):
    """The sync loop lost its store and terminated."""


class UnknownMrid(GatewayError):
    def __init__(self, mrid):
        super().__init__(f"no element with mRID {mrid!r}")
        self.mrid = mrid


class UnknownTag(GatewayError):
    def __init__(self, tag):
        super().__init__(f"no tag {tag!r}")
        self.tag = tag


# --- gateway pipeline --------------------------------------------------------

class PipelineError(GatewayError):
    """A topology reload failed; carries the stage that broke.

    The previous gateway state keeps serving whenever one of these is raised.
    """

    stage = "unknown"

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause


class ParseFailed(PipelineError):
    stage = "parse"


class ValidationFatal(PipelineError):
    stage = "validate"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MigrationFailed(PipelineError):
    stage = "apply"


class MappingFailed(PipelineError):
    stage = "mapping"


class SyncRestartFailed(PipelineError):
    stage = "sync"


class NotReady(GatewayError):
    """No successful reload yet; topology-dependent endpoints cannot answer."""


class Unauthorized(GatewayError):
    pass


class NotWritable(GatewayError):
    def __init__(self, mrid, attribute):
        super().__init__(f"({mrid!r}, {attribute!r}) is not a writable bound attribute")
        self.mrid = mrid
        self.attribute = attribute


class TypeMismatch(GatewayError):
    def __init__(self, attribute, expected, literal):
        super().__init__(f"value {literal!r} does not parse as {expected} for {attribute!r}")
        self.attribute = attribute
        self.expected = expected
        self.literal = literal


class SourceRejected(GatewayError):
    def __init__(self, tag, reason):
        super().__init__(f"source rejected write to {tag!r}: {reason}")
        self.tag = tag
        self.reason = reason


# --- simulator ---------------------------------------------------------------

class ScenarioInvalid(GatewayError):
    pass
