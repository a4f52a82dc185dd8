"""Oblivious transfer: base OT, IKNP extension, and the provider API."""

from .base import base_ot_recv, base_ot_send
from .extension import IknpReceiver, IknpSender, OTReuseError, RandomOTBatch, random_ot_batch
from .providers import DealerProvider, OTProvider, make_provider

__all__ = [
    "base_ot_send",
    "base_ot_recv",
    "IknpSender",
    "IknpReceiver",
    "RandomOTBatch",
    "random_ot_batch",
    "OTReuseError",
    "DealerProvider",
    "OTProvider",
    "make_provider",
]
