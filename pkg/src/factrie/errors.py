"""Exception hierarchy shared across the package."""


class FactrieError(Exception):
    """Base class for all package errors."""


class InputError(FactrieError):
    """Malformed or unusable user input (files, flags, datasets)."""


class MissingLabel(InputError):
    """An entity has neither a canonical title nor a usable label/description."""


class UnresolvableLabel(InputError):
    """A triple references an entity absent from the label table."""


class TripleFormatError(InputError):
    """A triple or label line does not match the expected layout."""


class MissingGold(InputError):
    """A transcript has no matching gold record."""


class TrieError(FactrieError):
    pass


class PrefixConflict(TrieError):
    """Inserting a sequence that is a strict prefix of an existing path (or vice versa)."""


class UnknownPrefix(TrieError):
    """The queried token sequence is not a path in the tree."""


class AlreadyConsumed(TrieError):
    """The fact's remaining-leaf count is already zero for this session."""


class StoreError(FactrieError):
    pass


class BackendWrite(StoreError):
    pass


class BackendRead(StoreError):
    pass


class SerializationFailure(StoreError):
    pass


class NotFound(StoreError):
    """No record exists for the requested prefix."""


class CorruptRecord(StoreError):
    pass


class UnsupportedVersion(StoreError):
    pass


class EngineError(FactrieError):
    pass


class ExhaustedBranch(EngineError):
    """Every leaf under the current cursor has been consumed."""


class IllegalToken(EngineError):
    """A constrained-mode token outside the allowed set (host-integration bug)."""


class TokenizerMismatch(EngineError):
    """Model and index were built with different tokenizer fingerprints."""
