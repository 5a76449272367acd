import math
import re

IDENTIFIER = re.compile(r'[A-Za-z_][A-Za-z0-9_.]*')

MISSING_TOKENS = ('', 'NA')


def is_identifier(name: str) -> bool:
    return IDENTIFIER.fullmatch(name) is not None


def is_missing(cell: str) -> bool:
    return cell.strip() in MISSING_TOKENS


def parse_float(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None
