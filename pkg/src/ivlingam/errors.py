"""Exception hierarchy shared by the library and the CLI (which maps them to exit codes)."""


class IvlingamError(Exception):
    pass


class InputError(IvlingamError, ValueError):
    """Malformed or inconsistent input: unknown names, cycles, bad files."""


class NumericalError(IvlingamError, ArithmeticError):
    """Ill-conditioned systems, weak instruments, solver non-convergence."""


class GenerationError(IvlingamError, RuntimeError):
    """A random model generator exhausted its rejection budget."""
