"""
JSON document models for instances, query-commit instances, adversarial
AdWords sequences and fractional allocations.

Documents are validated with pydantic on load; the domain objects in
instance_model / socs_adwords are built from the validated models.

Usage:
    from schemas import InstanceDocument

    doc = InstanceDocument.model_validate_json(text)
    text = doc.model_dump_json(by_alias=True, exclude_none=True, indent=2)
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

SCHEMA_VERSION = "socs-lab/1"


class VersionedDocument(BaseModel):
    """Base for top-level documents carrying the schema version."""

    version: str = SCHEMA_VERSION

    @field_validator('version')
    @classmethod
    def check_version(cls, value: str) -> str:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported document version '{value}', expected '{SCHEMA_VERSION}'")
        return value


# ============================================================================
# Non-IID instances
# ============================================================================

class AgentDocument(BaseModel):
    """Offline agent."""
    model_config = ConfigDict(extra='forbid')

    id: str
    weight: Optional[float] = None
    budget: Optional[float] = None


class TypeDocument(BaseModel):
    """Online type; exactly one payload matches the instance class."""
    model_config = ConfigDict(extra='forbid')

    id: str
    edges: Optional[List[str]] = None
    bids: Optional[Dict[str, float]] = None
    weights: Optional[Dict[str, float]] = None


class ArrivalEntry(BaseModel):
    """One (type, probability) pair of a step's distribution."""
    model_config = ConfigDict(extra='forbid')

    type: str
    prob: float


class InstanceDocument(VersionedDocument):
    """Non-IID instance file."""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    problem_class: str = Field(alias="class")
    T: int
    agents: List[AgentDocument]
    types: List[TypeDocument]
    arrivals: List[List[ArrivalEntry]]

    @field_validator('T')
    @classmethod
    def check_horizon(cls, value: int) -> int:
        if value < 1:
            raise ValueError("T must be at least 1")
        return value


# ============================================================================
# Query-commit instances
# ============================================================================

class QueryCommitDocument(VersionedDocument):
    """Query-commit instance file; p rows follow I, columns follow J."""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    online: List[str] = Field(alias="I")
    offline: List[str] = Field(alias="J")
    p: List[List[float]]
    weights: Optional[Dict[str, float]] = None


# ============================================================================
# Adversarial AdWords sequences
# ============================================================================

class BudgetDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    budget: float


class SequenceStepDocument(BaseModel):
    """One adversarial step: bids and an optional fractional allocation."""
    model_config = ConfigDict(extra='forbid')

    bids: Dict[str, float]
    mu: Optional[Dict[str, float]] = None


class SequenceDocument(VersionedDocument):
    """Adversarial AdWords sequence file."""
    model_config = ConfigDict(extra='forbid')

    agents: List[BudgetDocument]
    steps: List[SequenceStepDocument]


# ============================================================================
# Allocations
# ============================================================================

class AllocationRow(BaseModel):
    """One x_{ij}^t entry; t is 1-based in files."""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    t: int
    type: str
    agent: str
    x: float


class AllocationDocument(VersionedDocument):
    rows: List[AllocationRow]
