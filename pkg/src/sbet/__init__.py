"""System-bath entanglement theory (SBET) correlations for bosonic,
fermionic and classical open systems, with exact oracles to check them.

Set ``SBET_NUM_THREADS`` before the first import to cap BLAS threads.
"""

import os as _os

if "SBET_NUM_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SBET_NUM_THREADS"])

from .baths import (  # noqa: E402
    BosonBathSpec,
    DiscreteLevels,
    DiscreteModes,
    Drude,
    FermiBathSpec,
    Tabulated,
    TabulatedHybridization,
    discretize_hybridization,
    discretize_spectral_density,
    kernel_spectrum,
)
from .boson import (  # noqa: E402
    DrivenGrids,
    DriveProfile,
    GaussianPulse,
    SystemCorrelations,
    run_driven,
    run_field_free,
)
from .classical import LangevinEnsembleSpec, langevin_oracle, quantum_fdt_check, run_classical  # noqa: E402
from .config import RunConfig, parse_config  # noqa: E402
from .errors import NumericalError, PipelineOrderError, SbetError, ValidationError  # noqa: E402
from .fermion import FermiSystemCorrelations, run_fermion  # noqa: E402
from .grid import ComplexSeries, TailPolicy, TimeGrid, TwoTimeField  # noqa: E402
from .io import ingest_system_correlations, read_record, write_field, write_series  # noqa: E402
from .oracles import QuadraticBosonModel, QuadraticFermionModel  # noqa: E402
from .verify import VerifyReport, run_verify  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "BosonBathSpec",
    "ComplexSeries",
    "DiscreteLevels",
    "DiscreteModes",
    "DrivenGrids",
    "DriveProfile",
    "Drude",
    "FermiBathSpec",
    "FermiSystemCorrelations",
    "GaussianPulse",
    "LangevinEnsembleSpec",
    "NumericalError",
    "PipelineOrderError",
    "QuadraticBosonModel",
    "QuadraticFermionModel",
    "RunConfig",
    "SbetError",
    "SystemCorrelations",
    "Tabulated",
    "TabulatedHybridization",
    "TailPolicy",
    "TimeGrid",
    "TwoTimeField",
    "ValidationError",
    "VerifyReport",
    "discretize_hybridization",
    "discretize_spectral_density",
    "ingest_system_correlations",
    "kernel_spectrum",
    "langevin_oracle",
    "parse_config",
    "quantum_fdt_check",
    "read_record",
    "run_classical",
    "run_driven",
    "run_fermion",
    "run_field_free",
    "run_verify",
    "write_field",
    "write_series",
]
