from .design import DesignMatrices, BlockDesign, build_design, INTERCEPT
from .identifiability import IdentifiabilityReport, check_identifiability
from .scaling import ScalingRecord, CovariateScale, FactorContrast, standardize
from .schema import ColumnKind, Column, ColumnSchema, Dataset, load_csv

__all__ = [
    'ColumnKind', 'Column', 'ColumnSchema', 'Dataset', 'load_csv',
    'ScalingRecord', 'CovariateScale', 'FactorContrast', 'standardize',
    'DesignMatrices', 'BlockDesign', 'build_design', 'INTERCEPT',
    'IdentifiabilityReport', 'check_identifiability',
]
