"""Character-level dependency parsing with latent intra-word structure."""

from .chart import (arc_marginals, c2f_eisner, c2f_inside, constrained_eisner,
                    constrained_inside, eisner_decode, inside, merge_c2f_scores)
from .convert import (narrow_forest, pseudo_structure, recover_with_fallback,
                      recover_word_tree, word_tree_to_forest)
from .core import (INTRA, MASK_VALUE, C2fArcScores, CharSentence, CharTree, EmptyForestError,
                   ForestSpec, IllegalStructure, LabelSet, NoValidTreeError, Segmentation,
                   WordTree, arc_admissible, validate_char_tree)
from .training import (LossBreakdown, Model, TrainConfig, label_decode, labeled_forest_loss,
                       train, tree_loss)

__version__ = "0.1.0"
