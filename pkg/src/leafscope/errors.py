class LeafscopeError(Exception):
    """Base class for errors caused by bad input rather than a bug.

    The command line maps these to exit code 1.
    """
