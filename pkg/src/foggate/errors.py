"""Exception hierarchy shared by every foggate module."""


class FogGateError(Exception):
    """Base class for all foggate errors."""


class ConfigurationError(FogGateError, ValueError):
    """Unsupported parameter or missing required configuration."""


class InvalidIdentityError(FogGateError, ValueError):
    """A serial ID or key that cannot identify a device."""


class DecryptionError(FogGateError):
    """Authenticated decryption failed.

    Wrong key and tampered ciphertext are deliberately not told apart.
    """


# ledger


class LedgerError(FogGateError):
    pass


class InvalidArgumentError(LedgerError, ValueError):
    pass


class LedgerLoadError(LedgerError):
    """The ledger file is missing, truncated or cannot be decoded."""


class IntegrityError(LedgerError):
    """The chain decodes but its hash links do not verify."""

    def __init__(self, message, first_bad_index=None):
        super().__init__(message)
        self.first_bad_index = first_bad_index


class NotFoundError(LedgerError, KeyError):
    pass


# packets


class PacketError(FogGateError):
    pass


class ConstructionError(PacketError, ValueError):
    pass


class VersionError(PacketError):
    pass


class ParseError(PacketError):
    pass


class OuterDecryptionError(PacketError):
    pass


class InnerDecryptionError(PacketError):
    pass


class IdentityMismatchError(PacketError):
    pass


# nodes and transport


class StateError(FogGateError):
    """Operation not allowed in the node's current phase."""


class TransportError(FogGateError, OSError):
    pass
