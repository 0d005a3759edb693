from . import plan, report, simulate, sweep, validate

# Registration order is the order shown by --help.
COMMANDS = [plan, simulate, sweep, report, validate]

__all__ = ["COMMANDS"]
