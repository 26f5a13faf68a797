"""Exception hierarchy.

Everything raised on purpose derives from :class:`HATError`. Subclasses of
:class:`InputError` describe bad inputs (the CLI maps them to exit code 2);
the rest are runtime conditions (exit code 3).
"""


class HATError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def to_record(self):
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class InputError(HATError, ValueError):
    code = "validation"


# taxonomy
class CycleDetected(InputError):
    pass


class MultipleRoots(InputError):
    pass


class DanglingEdge(InputError):
    pass


class LeafWithChildren(InputError):
    pass


class UnknownNode(InputError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidParentKind(InputError):
    pass


class DuplicateNode(InputError):
    pass


# annotation / support sets
class EmptyClass(InputError):
    pass


class MissingSignature(InputError):
    pass


class NotUnseenLeaf(InputError):
    pass


class UnknownAttribute(InputError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NoContrast(HATError):
    """Positive and negative pools coincide; the classifier is skipped."""

    code = "no_contrast"


class EmptyPositives(HATError):
    code = "empty_positives"


# classifier
class EmptySet(InputError):
    pass


class NonFiniteFeature(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class FallbackCost(HATError):
    """Too few samples for stratified cross-validation."""

    code = "fallback_cost"


# transfer / baselines
class AttributeUntransferable(HATError):
    code = "attribute_untransferable"


class ClassUnscorable(HATError):
    code = "class_unscorable"


class TooFewSamples(InputError):
    pass


class MissingRootClassifier(HATError):
    code = "missing_root_classifier"


class NoActiveAttributes(InputError):
    pass


# eval
class LengthMismatch(InputError):
    pass


class EmptyGtClass(InputError):
    pass


class DegenerateLabels(InputError):
    pass


# synth / ingestion
class InvalidSpec(InputError):
    pass


class ParseError(InputError):
    pass


class SchemaError(InputError):
    pass
