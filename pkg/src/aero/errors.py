"""Exception hierarchy shared by every aero module."""


class AeroError(Exception):
    """Base class for all library errors."""


# graph model
class DagError(AeroError):
    pass


class DuplicateId(DagError):
    pass


class CapacityExceeded(DagError):
    pass


class CycleDetected(DagError):
    pass


class MissingEndpoint(DagError):
    pass


class UnknownTask(DagError):
    pass


# wire format
class PacketError(AeroError):
    pass


class InvalidPacket(PacketError):
    pass


class DecodeError(PacketError):
    pass


class Truncated(DecodeError):
    pass


class InvalidOpcode(DecodeError):
    pass


class BadBitmapIndex(DecodeError):
    pass


class TrailingBytes(DecodeError):
    pass


class BundleError(PacketError):
    pass


class MissingFirstPacket(BundleError):
    pass


class GapInSequence(BundleError):
    pass


class UncoveredGroupMember(BundleError):
    pass


class UnexpectedMember(BundleError):
    pass


class DuplicateMember(BundleError):
    pass


class BadInsertDescriptor(BundleError):
    pass


# energy
class EnergyError(AeroError):
    pass


class NonPositiveInput(EnergyError):
    pass


class TaskExceedsCapacity(EnergyError):
    pass


class StarvedForever(EnergyError):
    pass


class TraceError(EnergyError):
    pass


# update integration
class UpdateError(AeroError):
    pass


class UpdateInFlight(UpdateError):
    pass


class BadUpdate(UpdateError):
    pass


class RemoveWhileRunning(UpdateError):
    pass


class SimulationError(AeroError):
    """Raised when a run deadlocks or exceeds its step budget."""


class ConfigError(AeroError):
    pass
