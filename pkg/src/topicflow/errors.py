"""Exception types shared across the engine.

Every error the HTTP layer maps to a 4xx status lives here so the service
module can translate them uniformly.
"""


class TopicflowError(Exception):
    """Base class for all engine errors."""

    code = "error"


class InvalidCut(TopicflowError):
    code = "invalid_cut"


class LimitExceeded(TopicflowError):
    code = "limit_exceeded"


class DomainError(TopicflowError):
    code = "domain_error"


class ParseError(TopicflowError):
    code = "parse_error"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DuplicateId(TopicflowError):
    code = "duplicate_id"


class EmptyVocabulary(TopicflowError):
    code = "empty_vocabulary"


class NonSquare(TopicflowError):
    code = "non_square"


class EmptyAlignment(TopicflowError):
    code = "empty_alignment"


class ViewportTooSmall(TopicflowError):
    code = "viewport_too_small"


class BadConfig(TopicflowError):
    code = "bad_config"


class OutOfOrderBatch(TopicflowError):
    code = "out_of_order_batch"


class UnknownNode(TopicflowError):
    code = "unknown_node"


class UnknownDocument(TopicflowError):
    code = "unknown_document"


class NotInCut(TopicflowError):
    code = "not_in_cut"


class NotSiblingGroup(TopicflowError):
    code = "not_sibling_group"


class LeafSplit(TopicflowError):
    code = "leaf_split"


class EmptyQueryVector(TopicflowError):
    code = "empty_query_vector"
