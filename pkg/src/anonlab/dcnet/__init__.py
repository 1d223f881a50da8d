"""DC-net engine: full-pairwise and client/multi-server topologies."""

from .blame import CULPRIT, INCONCLUSIVE, BlameResult, blame, verify_accusation
from .group import (CLIENT_SERVER, FULL, ClientBehavior, CommitmentRegistry, Group, GroupDescriptor,
                    ScheduleAbortedError, SeedTable, ServerBehavior, SetupError, Slot, SlotSchedule,
                    assign_slots, create_group, next_schedule, setup_group)
from .rounds import (CLEAN, CORRUPTED, INCOMPLETE, JAMMED, SUPPRESSED, Accusation, ClientCiphertext,
                     IncompleteRoundError, RoundAbortedError, RoundTranscript, ServerCiphertext,
                     client_submit, combine, detect_disruption, finalize_online_set, server_commit)
from .session import BULLETIN, HUB, Session, SessionConfig, SessionResult, run_session

__all__ = [
    "CULPRIT", "INCONCLUSIVE", "BlameResult", "blame", "verify_accusation",
    "CLIENT_SERVER", "FULL", "ClientBehavior", "CommitmentRegistry", "Group", "GroupDescriptor",
    "ScheduleAbortedError", "SeedTable", "ServerBehavior", "SetupError", "Slot", "SlotSchedule",
    "assign_slots", "create_group", "next_schedule", "setup_group",
    "CLEAN", "CORRUPTED", "INCOMPLETE", "JAMMED", "SUPPRESSED", "Accusation", "ClientCiphertext",
    "IncompleteRoundError", "RoundAbortedError", "RoundTranscript", "ServerCiphertext",
    "client_submit", "combine", "detect_disruption", "finalize_online_set", "server_commit",
    "BULLETIN", "HUB", "Session", "SessionConfig", "SessionResult", "run_session",
]
