"""
Exceptions to be used when working with log-supermodular models
"""


class SubmodularConfigurationException(Exception):
    """
    Exception to raise when a run or a command line invocation is misconfigured.
    """

    pass


class UnknownFlagException(SubmodularConfigurationException):
    """
    Exception to raise when an unknown flag or configuration key is given.
    """

    pass


class MalformedValueException(SubmodularConfigurationException):
    """
    Exception to raise when a flag or configuration value cannot be parsed.
    """

    pass


class MissingSubcommandException(SubmodularConfigurationException):
    """
    Exception to raise when the command line has no subcommand.
    """

    pass


class SubmodularDataException(Exception):
    """
    Exception to raise when input data is invalid.
    """

    pass


class DimensionMismatchException(SubmodularDataException):
    """
    Exception to raise when a vector does not match the model dimension.
    """

    pass


class PreconditionViolationException(SubmodularDataException):
    """
    Exception to raise when an operation is called outside its domain.
    """

    pass


class SubmodularSolverException(Exception):
    """
    Exception to raise when a numerical routine cannot complete.
    """

    pass


class ProblemTooLargeException(SubmodularSolverException):
    """
    Exception to raise when an enumeration routine is asked for too many variables.
    """

    pass


class UnsupportedStructureException(SubmodularSolverException):
    """
    Exception to raise when a solver does not support a set function type.
    """

    pass


class NotTrainedException(SubmodularSolverException):
    """
    Exception to raise when a training state is finalized before any step.
    """

    pass
