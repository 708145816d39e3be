"""Federated transport, wire format, ledger and the comparison baselines."""

from .baselines import BaselineResult, baseline_model, baseline_words, compare_models
from .ledger import CommLedger, FrameRecord, control_formula, ledger_formula
from .protocol import Client, InProcessTransport, Server, run_federated
from .wire import (
    ClientUpload,
    MsgType,
    ScalarExchange,
    ServerBroadcast,
    data_words,
    decode_frame,
    decode_message,
    encode_frame,
    encode_message,
)

__all__ = [
    "BaselineResult",
    "baseline_model",
    "baseline_words",
    "compare_models",
    "CommLedger",
    "FrameRecord",
    "control_formula",
    "ledger_formula",
    "Client",
    "InProcessTransport",
    "Server",
    "run_federated",
    "ClientUpload",
    "MsgType",
    "ScalarExchange",
    "ServerBroadcast",
    "decode_message",
    "encode_message",
    "data_words",
    "decode_frame",
    "encode_frame",
]
