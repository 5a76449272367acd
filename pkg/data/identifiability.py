import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .design import DesignMatrices

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockRank:
    group: str
    q: int
    n_groups: int
    full_rank_groups: int

    @property
    def ok(self) -> bool:
        return self.full_rank_groups > 0


@dataclass(frozen=True)
class IdentifiabilityReport:
    n: int
    n_fixed: int
    n_random_coefficients: int
    n_covariance_parameters: int
    blocks: tuple[BlockRank, ...] = field(default=())

    @property
    def n_parameters(self) -> int:
        return self.n_fixed + self.n_random_coefficients + self.n_covariance_parameters

    @property
    def observations_ok(self) -> bool:
        return self.n > self.n_parameters

    @property
    def passed(self) -> bool:
        return self.observations_ok and all(block.ok for block in self.blocks)

    def failures(self) -> list[str]:
        reasons = []
        if not self.observations_ok:
            reasons.append(f'{self.n} observations for {self.n_parameters} parameters')
        for block in self.blocks:
            if not block.ok:
                reasons.append(f"block '{block.group}': no group has a full-rank ({block.q}-column) design")
        return reasons

    def to_dict(self) -> dict:
        return {
            'passed': self.passed,
            'n': self.n,
            'n_parameters': self.n_parameters,
            'n_fixed': self.n_fixed,
            'n_random_coefficients': self.n_random_coefficients,
            'n_covariance_parameters': self.n_covariance_parameters,
            'observations_ok': self.observations_ok,
            'blocks': [{**asdict(block), 'ok': block.ok} for block in self.blocks],
            'failures': self.failures(),
        }


def check_identifiability(design: DesignMatrices) -> IdentifiabilityReport:
    """
    Two necessary conditions: more observations than parameters (fixed, random coefficients,
    standard deviations and correlations), and, per random block, at least one group whose
    rows give a full-column-rank block design.
    """
    blocks = []
    n_random = n_cov = 0
    for block in design.blocks:
        n_random += block.q * block.n_groups
        n_cov += block.q + block.q * (block.q - 1) // 2
        full_rank = sum(1 for rows in block.rows_by_group()
                        if len(rows) >= block.q and np.linalg.matrix_rank(block.Z[rows]) == block.q)
        blocks.append(BlockRank(block.group, block.q, block.n_groups, full_rank))

    report = IdentifiabilityReport(design.n, 1 + design.p, n_random, n_cov, tuple(blocks))
    if report.passed:
        _log.info(f'Identifiability: {report.n} observations, {report.n_parameters} parameters; passed')
    else:
        _log.warning(f'Identifiability failed: {"; ".join(report.failures())}')
    return report
