"""Exception hierarchy for the spin-transfer simulator."""


class SimulationError(ValueError):
    """Base class for every error raised by the simulator."""


class DuplicateLabel(SimulationError):
    """A degree of freedom appears twice in a composite state."""


class UnknownLabel(SimulationError):
    """A channel or trace names a degree of freedom the state does not have."""


class EmptyRemainder(SimulationError):
    """A partial trace would discard every degree of freedom."""


class LabelMismatch(SimulationError):
    """Two states (or a state and an operation) disagree on their labels."""


class NonPureTarget(SimulationError):
    """A fidelity target is not a rank-1 state."""


class InvalidChannel(SimulationError):
    """Kraus operators do not satisfy the constraints of their channel kind."""


class UnsortedSequence(SimulationError):
    """Pulse events are not ordered in time."""


class InvalidEfficiency(SimulationError):
    """A loss-budget stage efficiency is outside (0, 1]."""


class InvalidParameter(SimulationError):
    """A configuration value is outside its allowed range."""


class ConfigParse(SimulationError):
    """A configuration file could not be parsed."""
