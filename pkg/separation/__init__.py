from .scan import (Classification, Cell, UnitFinding, SeparationReport, classify_cells, classify_partition,
                   scan_factor, scan_covariate, scan_grouped, scan_interaction, scan_dataset)
from .tree import TreeNode, Split, Witness, fit_tree

__all__ = [
    'Classification', 'Cell', 'UnitFinding', 'SeparationReport', 'classify_cells', 'classify_partition',
    'scan_factor', 'scan_covariate', 'scan_grouped', 'scan_interaction', 'scan_dataset',
    'TreeNode', 'Split', 'Witness', 'fit_tree',
]
