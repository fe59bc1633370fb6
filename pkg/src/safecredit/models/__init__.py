"""Learned constraint models: recurrent credit assignment and a cost+budget baseline."""

from safecredit.models.cost_budget import CbModel
from safecredit.models.ssv import SsvModel
from safecredit.models.training import TrainReport, bce_loss, train_model

__all__ = ["CbModel", "SsvModel", "TrainReport", "bce_loss", "train_model"]
