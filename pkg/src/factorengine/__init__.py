"""Cross-sectional factor computation over point-in-time panel data."""

from ._core import BACKEND
from .errors import (ContractViolation, DefinitionError, EmptyUniverseError, FactorEngineError,
                     FactorLookupError, IntegrityError, ParameterError, ParseError,
                     RegistrationError, SchemaError)
from .expr import ratio
from .lags import Lag, OffsetColumnManager, OffsetKey, join_with_offset, lagged_name, shift_back
from .mispricing import MispricingFactors, load_coefficients
from .panel import (CANONICAL_COLUMNS, ColumnSchema, FillStrategy, Frequency, PanelFrame,
                    fill_missing, ingest, resample, winsorize, zscore)
from .registry import (ALL, FactorDef, FactorEngine, FactorRegistry, FactorResult, SkipRecord,
                       advanced_factor, check_requirements, simple_factor)

__version__ = "0.1.0"

__all__ = ["advanced_factor", "ALL", "BACKEND", "CANONICAL_COLUMNS", "check_requirements",
           "ColumnSchema", "ContractViolation", "DefinitionError", "EmptyUniverseError",
           "FactorDef", "FactorEngine", "FactorEngineError", "FactorLookupError", "FactorRegistry",
           "FactorResult", "fill_missing", "FillStrategy", "Frequency", "ingest", "IntegrityError",
           "join_with_offset", "Lag", "lagged_name", "load_coefficients", "MispricingFactors",
           "OffsetColumnManager", "OffsetKey", "PanelFrame", "ParameterError", "ParseError",
           "ratio", "RegistrationError", "resample", "SchemaError", "shift_back", "simple_factor",
           "SkipRecord", "winsorize", "zscore"]
