__version__ = "1.0.0"

from .errors import (  # noqa: E402
    ConfigError,
    DataError,
    GeoclustError,
    NoElbowError,
    NumericError,
    StageError,
)
from .raster_io import RasterGrid, read_raster, write_raster  # noqa: E402
from .postprocess import LabelGrid  # noqa: E402
from .catalog import Catalog, CatalogAdapter  # noqa: E402
from .model import Model  # noqa: E402
from .synthetic import SyntheticSceneSpec, generate_synthetic  # noqa: E402
from .pipeline import PipelineConfig, load_config, run_pipeline  # noqa: E402

__all__ = [
    "Catalog",
    "CatalogAdapter",
    "ConfigError",
    "DataError",
    "GeoclustError",
    "LabelGrid",
    "Model",
    "NoElbowError",
    "NumericError",
    "PipelineConfig",
    "RasterGrid",
    "StageError",
    "SyntheticSceneSpec",
    "generate_synthetic",
    "load_config",
    "read_raster",
    "run_pipeline",
    "write_raster",
]
