"""Exception types shared across the toolkit."""


class ResubError(Exception):
    """Base class for all toolkit errors."""


# --- binary mapping ---------------------------------------------------------

class MalformedImage(ResubError):
    pass


class StrippedNoDynsym(ResubError):
    """Neither .symtab nor .dynsym present; a sidecar symbol file is required."""


class NoTargetFunction(ResubError):
    pass


class UnresolvedExternal(ResubError):
    def __init__(self, name):
        super().__init__(f"module references {name!r} but the host does not define it")
        self.name = name


class DuplicateHostSymbol(ResubError):
    def __init__(self, name):
        super().__init__(f"symbol {name!r} defined more than once in the host scan")
        self.name = name


class TargetTooSmall(ResubError):
    """Host function is shorter than the entry patch; hooking would overflow it."""


class StaleMappingTable(ResubError):
    """Image hash in the table does not match the file on disk."""


# --- relocation engine ------------------------------------------------------

class ImageNotMapped(ResubError):
    def __init__(self, name):
        super().__init__(f"no mapping for image {name!r} in the process map")
        self.name = name


class UnsupportedArch(ResubError):
    pass


class ProtectFailed(ResubError):
    pass


class SlotWriteFailed(ResubError):
    def __init__(self, name):
        super().__init__(f"could not write GOT slot for {name!r}")
        self.name = name


class PidFileWriteFailed(ResubError):
    pass


# --- context construction ---------------------------------------------------

class ParseFailure(ResubError):
    def __init__(self, file, location, detail=""):
        super().__init__(f"{file}:{location}: {detail or 'parse failure'}")
        self.file = file
        self.location = location


class UnknownReferencedType(ResubError):
    def __init__(self, name):
        super().__init__(f"type {name!r} referenced but never declared and not a builtin")
        self.name = name


class CyclicByValueDependency(ResubError):
    def __init__(self, names):
        super().__init__(f"unemittable by-value type cycle: {sorted(names)}")
        self.names = frozenset(names)


class MissingCalleePrototype(ResubError):
    def __init__(self, name):
        super().__init__(f"no prototype available for callee {name!r}")
        self.name = name


# --- build / repair loop ----------------------------------------------------

class CompilerNotFound(ResubError):
    pass


class CompileTimeout(ResubError):
    pass


class NoBlocksFound(ResubError):
    """A repair response contained no well-formed SEARCH/REPLACE block."""


class SearchNotFound(ResubError):
    def __init__(self, fragment):
        preview = fragment[:60].replace("\n", "\\n")
        super().__init__(f"search text not found: {preview!r}...")
        self.fragment = fragment


class BudgetExhausted(ResubError):
    pass


class RegressionIntroduced(ResubError):
    """A repair iteration broke a previously passing test and was rolled back."""


# --- tracing ----------------------------------------------------------------

class AlignmentFailed(ResubError):
    pass


class NoLineMap(ResubError):
    pass


class AttachFailed(ResubError):
    pass


class TraceTimeout(ResubError):
    pass


# --- sanitizer stage --------------------------------------------------------

class UnresolvableFrame(ResubError):
    """Sanitizer report present but no frame maps into the substitute source."""


# --- harness ----------------------------------------------------------------

class HarnessSetupFailed(ResubError):
    pass


class FixtureBuildFailed(ResubError):
    pass


class NotApplicable(ResubError):
    """Requested defect tag cannot be injected into this function shape."""
