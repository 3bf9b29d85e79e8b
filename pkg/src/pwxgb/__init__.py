"""Privacy-preserving vertical XGBoost for wind power forecasting.

Data-owning wind farms keep their feature columns local; three compute
servers aggregate gradient histograms under 2-of-3 replicated secret sharing
over the ring of 64-bit integers, and participants are picked by an MMD
similarity graph.
"""

from .boost import BoostParams, oracle_predict, oracle_train
from .errors import PwxgbError
from .federated import FederatedModel, predict, train
from .net import PartyTopology, connect

__all__ = [
    "BoostParams",
    "FederatedModel",
    "PartyTopology",
    "PwxgbError",
    "connect",
    "oracle_predict",
    "oracle_train",
    "predict",
    "train",
]
__version__ = "0.1.0"
