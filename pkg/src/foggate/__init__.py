"""Ledger-gated public-key access control for fog IoT networks.

A server keeps a hash-linked ledger of device identities and grants access
only to packets that decrypt, verify and match a registered, allowed device.
``foggate.harness`` runs STRIDE attack scenarios against the whole system.
"""

from .audit import AuditEvent, Reason, Verdict
from .client import ClientNode, Phase
from .crypto import KeyPair, generate_keypair
from .errors import FogGateError
from .identity import DeviceIdentity
from .ledger import Ledger, Status, genesis, verify_chain
from .packet import InnerMessage, MessageType, create_packet, decrypt_inner, open_packet
from .server import ServerNode

__version__ = "0.1.0"

__all__ = [
    "AuditEvent", "ClientNode", "DeviceIdentity", "FogGateError", "InnerMessage", "KeyPair",
    "Ledger", "MessageType", "Phase", "Reason", "ServerNode", "Status", "Verdict",
    "create_packet", "decrypt_inner", "generate_keypair", "genesis", "open_packet",
    "verify_chain",
]
