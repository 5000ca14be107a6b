"""Hierarchical mid-level visual elements for cross-category compatibility."""
from ._accel import BACKEND
from .compat import CompatModel, encode_image, explain_pair, recommend, score_pair
from .corpus import CatalogItem, CompatPair, DatasetSplit
from .elements import BaseBank, train_lda
from .evaluation import roc_auc
from .features import RegionFeature, RegionGeometry, load_features
from .miner import Itemset, MiningConfig, Rule, TransactionDb, mine_frequent, mine_rules

__version__ = "0.1.0"
