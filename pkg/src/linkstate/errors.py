"""Exception types raised by the framework.

Everything derives from LinkstateError so callers (and the CLI) can catch one
base class. ParseError and ScriptError keep ValueError as a second base because
they signal malformed input data.
"""


class LinkstateError(Exception):
    """Base class for all framework errors."""


class ParseError(LinkstateError, ValueError):
    """Malformed JSON or a structurally invalid encoded state/diff/log."""


# --- callback collections ---------------------------------------------------

class DuplicateCallback(LinkstateError):
    """The same function is already registered as an immediate callback."""


class ResumeWithoutDelay(LinkstateError):
    """resume() called more times than delay()."""


class UnknownHandle(LinkstateError):
    """remove_callback() got a handle that is not registered here."""


class ReentrantFlush(LinkstateError):
    """flush_frame() called while a flush is already running."""


class Disposed(LinkstateError):
    """Operation on an object or collection that was disposed."""


# --- linkable objects -------------------------------------------------------

class DuplicateName(LinkstateError):
    """A child with this name is already registered."""


class CycleDetected(LinkstateError):
    """Registration would make the ownership graph cyclic."""


class TypeMismatch(LinkstateError):
    """A value failed a variable's type verifier in an explicit check."""


# --- dynamic objects --------------------------------------------------------

class DuplicateClass(LinkstateError):
    """A factory is already registered under this class name."""


class UnknownClass(LinkstateError):
    """No factory registered under this class name."""


class NameRequired(LinkstateError):
    """Hash map entries need a non-empty name."""


class UnknownName(LinkstateError):
    """No entry with this name."""


class InvalidPermutation(LinkstateError):
    """set_name_order() got names that are not a subset permutation."""


class NoRoot(LinkstateError):
    """Global mode needs the object attached under a hash map root."""


# --- linking ----------------------------------------------------------------

class SelfLink(LinkstateError):
    """An object cannot be linked to itself."""


class DuplicateLink(LinkstateError):
    """These two endpoints are already linked."""


class AlreadyUnlinked(LinkstateError):
    """unlink() called twice on the same link."""


# --- history ----------------------------------------------------------------

class AlreadyAttached(LinkstateError):
    """This history log already records a root."""


class NothingToUndo(LinkstateError):
    """Undo at the beginning of the log."""


class NothingToRedo(LinkstateError):
    """Redo at the end of the log."""


class IndexOutOfRange(LinkstateError):
    """jump_to() index outside [0, step count]."""


class VersionMismatch(LinkstateError):
    """An exported log has an unsupported format version."""


# --- sync -------------------------------------------------------------------

class MalformedMessage(LinkstateError):
    """A sync message failed frame or field validation."""


class ScriptError(LinkstateError, ValueError):
    """A simulation script failed validation."""


# --- qualified keys ---------------------------------------------------------

class EmptyComponent(LinkstateError):
    """Key type and local name must be non-empty strings."""


class KeyTypeMismatch(LinkstateError):
    """Columns with different key types cannot be joined."""


class MissingColumn(LinkstateError):
    """The CSV is missing a named column."""
