"""Quantum state transfer along spin chains with an optimizing extended receiver."""
from .basis import MultiIndex, Partition, SectorBasis, enumerate_sector
from .hamiltonian import ChainSpec, CouplingMode
from .evolution import BlockOperator, compose_w, evolution_operator, find_t0

__all__ = [
    "BlockOperator",
    "ChainSpec",
    "CouplingMode",
    "MultiIndex",
    "Partition",
    "SectorBasis",
    "compose_w",
    "enumerate_sector",
    "evolution_operator",
    "find_t0",
]
