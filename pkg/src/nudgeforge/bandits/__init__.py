from .common import Decision
from .egreedy import egreedy_choose
from .linucb import LinUcbState
from .thompson import TsState
from .whittle import RestlessArmModel, allocate_topk, whittle_index

__all__ = [
    "Decision",
    "LinUcbState",
    "RestlessArmModel",
    "TsState",
    "allocate_topk",
    "egreedy_choose",
    "whittle_index",
]
