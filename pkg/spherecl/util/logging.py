"""
:module: spherecl.util.logging
:purpose:
    Helper methods for setting up logging to the command line and for
    rendering caught exceptions as one-line diagnostics.

:attribution:
    The duplicate-handler guard in :meth:`~.setup_terminal_logger` follows
    the Python Logging Cookbook
    https://docs.python.org/3/howto/logging-cookbook.html
    and a bug-fix provided by StackExchange user "Euclides"
    from Sep 8, 2015 for preventing duplicate StreamHandler instances.
"""

import logging

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def rich_error_message(e):
    """One-line 'TypeName: message' rendering of a caught exception, the
    form the command line tool prints on its error stream
    (e.g., 'ArityError: loss requires M >= 2, got M=1')

    :type e: Exception
    :rtype: str
    """
    return f'{type(e).__name__}: {e}'


def setup_terminal_logger(name, level=logging.INFO):
    """Attach a single stderr StreamHandler to the named logger. Repeat
    calls (the test suite, an ipython session re-running the demo) update
    the level of the existing handler instead of stacking new ones.

    :param name: logger name, 'spherecl' captures every module of the package
    :type name: str
    :param level: logging level, defaults to logging.INFO
    :type level: int or str, optional
    :return: Logger
    :rtype: logging.Logger
    """
    Logger = logging.getLogger(name)
    Logger.setLevel(level)

    # Prevent duplication during testing
    # Solution from https://stackoverflow.com/questions/31403679/python-logging-module-duplicated-console-output-ipython-notebook-qtconsole
    handler_console = None
    for h in Logger.handlers:
        if isinstance(h, logging.StreamHandler):
            handler_console = h
            break
    if handler_console is None:
        # StreamHandler defaults to sys.stderr
        ch = logging.StreamHandler()
        ch.setFormatter(logging.Formatter(LOG_FORMAT))
        Logger.addHandler(ch)
    else:
        handler_console.setLevel(level)
    return Logger
