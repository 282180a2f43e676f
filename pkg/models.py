from typing import List, Optional, Dict, Any, Tuple, Literal
import math

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_serializer,
    field_validator,
    model_serializer,
    model_validator,
)

import config

TWO_PI = 2.0 * math.pi

# Public gate set: name -> arity. RX/RH/RCNOT are exp(-i theta G / 2) for the
# involutory gates G = X, H, CNOT; they carry angle symbols of a message.
GATE_ARITY = {
    "H": 1, "X": 1, "S": 1, "T": 1, "RZ": 1, "RY": 1, "CNOT": 2,
    "RX": 1, "RH": 1, "RCNOT": 2,
}
PARAMETRIC_GATES = frozenset({"RZ", "RY", "RX", "RH", "RCNOT"})
ROTATION_FAMILY = {"X": "RX", "H": "RH", "CNOT": "RCNOT"}

# --- Matrix encoding helpers ---

def matrix_to_pairs(matrix: np.ndarray) -> List[List[float]]:
    """Row-major list of [re, im] pairs."""
    flat = np.asarray(matrix, dtype=np.complex128).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def pairs_to_matrix(pairs: Any, dim: int) -> np.ndarray:
    """Inverse of matrix_to_pairs for a dim x dim matrix."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] != dim * dim:
        raise ValueError(f"expected {dim * dim} [re, im] pairs, got shape {arr.shape}")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(dim, dim)


# --- Core quantum types ---

class QubitSubset(BaseModel):
    """Strictly increasing qubit indices; serialized as a bare JSON list."""
    model_config = ConfigDict(frozen=True)

    indices: Tuple[int, ...]

    @model_validator(mode="before")
    @classmethod
    def _from_sequence(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)):
            return {"indices": tuple(data)}
        return data

    @field_validator("indices")
    @classmethod
    def _strictly_increasing(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(i < 0 for i in value):
            raise ValueError(f"qubit indices must be non-negative: {value}")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"qubit indices must be strictly increasing: {value}")
        return value

    @model_serializer
    def _as_list(self) -> List[int]:
        return list(self.indices)

    @property
    def size(self) -> int:
        return len(self.indices)

    def fits(self, num_qubits: int) -> bool:
        return all(i < num_qubits for i in self.indices)

    def issubset(self, other: "QubitSubset") -> bool:
        return set(self.indices) <= set(other.indices)


class GateOp(BaseModel):
    """One gate application. Targets are ordered (control first for CNOT)."""
    model_config = ConfigDict(frozen=True)

    gate: str
    targets: Tuple[int, ...]
    param: Optional[float] = None

    @model_validator(mode="after")
    def _check_signature(self) -> "GateOp":
        if self.gate not in GATE_ARITY:
            raise ValueError(f"unknown gate {self.gate!r}; gate set is {sorted(GATE_ARITY)}")
        if len(self.targets) != GATE_ARITY[self.gate]:
            raise ValueError(
                f"gate {self.gate} takes {GATE_ARITY[self.gate]} target(s), got {len(self.targets)}"
            )
        if len(set(self.targets)) != len(self.targets) or any(t < 0 for t in self.targets):
            raise ValueError(f"invalid targets {self.targets} for {self.gate}")
        parametric = self.gate in PARAMETRIC_GATES
        if parametric and self.param is None:
            raise ValueError(f"gate {self.gate} requires an angle")
        if not parametric and self.param is not None:
            raise ValueError(f"gate {self.gate} takes no angle")
        if parametric and not (0.0 <= self.param < TWO_PI):
            raise ValueError(f"angle {self.param} outside [0, 2pi)")
        return self


class DensityMatrix(BaseModel):
    """
    2^n x 2^n complex matrix standing for a quantum state.

    Construction checks shape and finiteness only; physical validity
    (Hermitian, unit trace, PSD) is reported by quantum_core.validate_density.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_qubits: int = Field(ge=0)
    matrix: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _decode_pairs(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("matrix"), list):
            dim = 2 ** int(data.get("num_qubits", 0))
            data = {**data, "matrix": pairs_to_matrix(data["matrix"], dim)}
        return data

    @field_validator("matrix")
    @classmethod
    def _freeze(cls, value: np.ndarray) -> np.ndarray:
        arr = np.array(value, dtype=np.complex128)
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shape(self) -> "DensityMatrix":
        if self.num_qubits > config.max_qubits():
            raise ValueError(f"{self.num_qubits} qubits exceeds the cap of {config.max_qubits()}")
        dim = 2 ** self.num_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"expected {dim}x{dim} matrix, got {self.matrix.shape}")
        return self

    @field_serializer("matrix")
    def _encode_pairs(self, matrix: np.ndarray) -> List[List[float]]:
        return matrix_to_pairs(matrix)

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits


class DensityReport(BaseModel):
    valid: bool
    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float


# --- Keys ---

class CircuitDescription(BaseModel):
    """Ordered gate list; used both for private keys and compiled U_m."""
    model_config = ConfigDict(populate_by_name=True)

    num_qubits: int = Field(alias="N", ge=1)
    ops: List[GateOp] = []
    seed: int = 0
    security_parameter: int = Field(default=0, alias="lambda", ge=0)

    @model_validator(mode="after")
    def _check_ops(self) -> "CircuitDescription":
        for op in self.ops:
            if any(t >= self.num_qubits for t in op.targets):
                raise ValueError(f"{op.gate}{op.targets} out of range for {self.num_qubits} qubits")
        if self.security_parameter and self.depth > config.DEPTH_CONSTANT * self.security_parameter:
            raise ValueError(
                f"depth {self.depth} exceeds cap {config.DEPTH_CONSTANT * self.security_parameter}"
            )
        return self

    @property
    def depth(self) -> int:
        """ASAP-scheduled circuit depth."""
        level = [0] * self.num_qubits
        for op in self.ops:
            start = max(level[t] for t in op.targets) + 1
            for t in op.targets:
                level[t] = start
        return max(level, default=0)


class PrivateKey(BaseModel):
    """Stored flat as {version, N, lambda, seed, ops}."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: int = config.FORMAT_VERSION
    circuit: CircuitDescription
    cached_state: Optional[DensityMatrix] = Field(default=None, exclude=True)

    @model_validator(mode="before")
    @classmethod
    def _nest_circuit(cls, data: Any) -> Any:
        if isinstance(data, dict) and "circuit" not in data:
            flat = dict(data)
            version = flat.pop("version", config.FORMAT_VERSION)
            return {"version": version, "circuit": flat}
        return data

    @model_serializer(mode="wrap")
    def _flatten(self, handler) -> Dict[str, Any]:
        data = handler(self)
        return {"version": data["version"], **data["circuit"]}


class PublicKeyEntry(BaseModel):
    """One (subset, marginal) pair; marginal serialized as bare [re, im] pairs."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    subset: QubitSubset
    marginal: DensityMatrix

    @model_validator(mode="before")
    @classmethod
    def _decode_marginal(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("marginal"), list):
            size = len(data["subset"]) if isinstance(data.get("subset"), (list, tuple)) else 0
            data = {**data, "marginal": {"num_qubits": size, "matrix": data["marginal"]}}
        return data

    @model_validator(mode="after")
    def _check_size(self) -> "PublicKeyEntry":
        if self.marginal.num_qubits != self.subset.size:
            raise ValueError(f"marginal on {self.marginal.num_qubits} qubits for subset {self.subset.indices}")
        return self

    @field_serializer("marginal")
    def _encode_marginal(self, marginal: DensityMatrix) -> List[List[float]]:
        return matrix_to_pairs(marginal.matrix)


class PublicKey(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    version: int = config.FORMAT_VERSION
    num_qubits: int = Field(alias="N", ge=2)
    k: int = Field(ge=1)
    security_parameter: int = Field(default=0, alias="lambda", ge=0)
    entries: List[PublicKeyEntry]

    @model_validator(mode="after")
    def _check_coverage(self) -> "PublicKey":
        if self.k >= self.num_qubits:
            raise ValueError(f"k={self.k} must be smaller than N={self.num_qubits}")
        subsets = [e.subset.indices for e in self.entries]
        if len(subsets) != math.comb(self.num_qubits, self.k):
            raise ValueError(f"expected {math.comb(self.num_qubits, self.k)} entries, got {len(subsets)}")
        if subsets != sorted(subsets) or len(set(subsets)) != len(subsets):
            raise ValueError("entries must be distinct and sorted lexicographically")
        for e in self.entries:
            if e.subset.size != self.k or not e.subset.fits(self.num_qubits):
                raise ValueError(f"entry subset {e.subset.indices} invalid for N={self.num_qubits}, k={self.k}")
        return self

    def lookup(self, subset: QubitSubset) -> Optional[DensityMatrix]:
        for entry in self.entries:
            if entry.subset.indices == subset.indices:
                return entry.marginal
        return None


class ConsistencyReport(BaseModel):
    consistent: bool
    max_disagreement: float
    worst_pair: Optional[Tuple[QubitSubset, QubitSubset]] = None
    pairs_checked: int


# --- Messages and the public gate rule ---

class SymbolSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    kind: Literal["skip", "nonparametric", "angle"]
    angle: Optional[float] = None

    @model_validator(mode="after")
    def _angle_iff_kind(self) -> "SymbolSpec":
        if self.kind == "angle":
            if self.angle is None or not (0.0 <= self.angle < TWO_PI):
                raise ValueError(f"symbol {self.id!r} needs an angle in [0, 2pi)")
        elif self.angle is not None:
            raise ValueError(f"symbol {self.id!r} of kind {self.kind} takes no angle")
        return self


class Alphabet(BaseModel):
    symbols: List[SymbolSpec] = Field(min_length=1)

    @field_validator("symbols")
    @classmethod
    def _distinct(cls, value: List[SymbolSpec]) -> List[SymbolSpec]:
        ids = [s.id for s in value]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate symbols in alphabet: {ids}")
        return value

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.symbols]

    def get(self, symbol: str) -> Optional[SymbolSpec]:
        for spec in self.symbols:
            if spec.id == symbol:
                return spec
        return None


class Message(BaseModel):
    """A finite word over an alphabet, as written (leftmost symbol first)."""
    model_config = ConfigDict(frozen=True)

    word: Tuple[str, ...] = ()
    gamma: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _length_bound(self) -> "Message":
        if self.gamma is not None and len(self.word) > self.gamma:
            raise ValueError(f"message length {len(self.word)} exceeds gamma={self.gamma}")
        return self

    @property
    def text(self) -> str:
        return "".join(self.word)

    def __len__(self) -> int:
        return len(self.word)


class GateTemplate(BaseModel):
    """Cycle entry: a gate and its targets, angle supplied by the message symbol."""
    model_config = ConfigDict(frozen=True)

    gate: str
    targets: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_arity(self) -> "GateTemplate":
        if self.gate not in GATE_ARITY:
            raise ValueError(f"unknown gate {self.gate!r}")
        if len(self.targets) != GATE_ARITY[self.gate]:
            raise ValueError(f"gate {self.gate} takes {GATE_ARITY[self.gate]} target(s)")
        return self


class GateRule(BaseModel):
    alphabet: Alphabet
    cycle: List[GateTemplate] = Field(min_length=1)
    gamma: int = Field(default=config.DEFAULT_GAMMA, ge=1)


class CollisionReport(BaseModel):
    messages_checked: int
    max_len: int
    same_length: bool
    collisions: List[Tuple[str, str]] = []


# --- Tomography ---

class MeasurementRecord(BaseModel):
    """
    Outcome counts for one product Pauli setting on a subset.

    Outcome strings use '+' / '-' per measured qubit. Exact (infinite-shot)
    records carry Born probabilities instead of counts and shots = 0.
    """
    subset: QubitSubset
    basis: str = Field(pattern=r"^[XYZ]+$")
    shots: int = Field(ge=0)
    counts: Dict[str, int] = {}
    probabilities: Optional[Dict[str, float]] = None

    @model_validator(mode="after")
    def _consistent(self) -> "MeasurementRecord":
        if len(self.basis) != self.subset.size:
            raise ValueError(f"basis {self.basis} does not match subset of size {self.subset.size}")
        if sum(self.counts.values()) != self.shots:
            raise ValueError(f"counts sum to {sum(self.counts.values())}, expected {self.shots}")
        for outcome in list(self.counts) + list(self.probabilities or {}):
            if len(outcome) != len(self.basis) or set(outcome) - {"+", "-"}:
                raise ValueError(f"malformed outcome {outcome!r}")
        if self.probabilities is None and self.shots == 0:
            raise ValueError("record has neither counts nor probabilities")
        return self


class TomographyEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    subset: QubitSubset
    raw: np.ndarray
    projected: DensityMatrix
    shots_used: int


# --- Protocol ---

class SessionConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    num_qubits: int = Field(alias="N")
    k: int
    m_size: int = Field(alias="M")
    epsilon: float = config.DEFAULT_EPSILON
    delta: float = config.DEFAULT_DELTA
    noise_p: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = 0
    security_parameter: int = Field(default=4, alias="lambda", ge=1)
    shots: Optional[int] = Field(default=None, ge=1)
    exact: bool = False
    diagnostic: bool = False
    sample_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    metric: Literal["trace", "infidelity"] = "trace"

    @model_validator(mode="after")
    def _check_ranges(self) -> "SessionConfig":
        if not (1 <= self.k < self.m_size < self.num_qubits):
            raise ValueError(
                f"need 1 <= k < M < N, got k={self.k}, M={self.m_size}, N={self.num_qubits}"
            )
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        return self


class Challenge(BaseModel):
    """The verifier's M-qubit index string s_M."""
    model_config = ConfigDict(populate_by_name=True)

    subset: QubitSubset
    nonce: int
    num_qubits: int = Field(alias="N")
    k: int

    @model_validator(mode="after")
    def _k_m_n(self) -> "Challenge":
        m = self.subset.size
        if not (self.k < m < self.num_qubits):
            raise ValueError(f"challenge size M={m} violates k < M < N (k={self.k}, N={self.num_qubits})")
        if not self.subset.fits(self.num_qubits):
            raise ValueError(f"challenge {self.subset.indices} out of range for N={self.num_qubits}")
        return self


class SubsetCheck(BaseModel):
    subset: QubitSubset
    distance: float
    threshold: float
    shots: int
    basis_transcripts: List[MeasurementRecord] = []


class VerdictReport(BaseModel):
    verdict: Literal["ACCEPT", "REJECT"]
    threshold: float
    metric: str = "trace"
    per_subset: List[SubsetCheck] = []
    first_failure: Optional[QubitSubset] = None
    total_copies_consumed: int = 0

    @model_validator(mode="after")
    def _verdict_matches(self) -> "VerdictReport":
        failing = any(c.distance > self.threshold for c in self.per_subset)
        if failing != (self.verdict == "REJECT"):
            raise ValueError("verdict inconsistent with reported distances")
        return self

    @property
    def max_distance(self) -> float:
        return max((c.distance for c in self.per_subset), default=0.0)


class SignatureBundle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: int = config.FORMAT_VERSION
    message: Message
    challenge: Challenge
    copies: int = Field(ge=0)
    state: DensityMatrix


class SessionTranscript(BaseModel):
    mode: Literal["authenticate", "sign-verify"]
    config: SessionConfig
    challenge: Challenge
    message: Optional[Message] = None
    per_subset: List[SubsetCheck]
    verdict: Literal["ACCEPT", "REJECT"]
    copies_consumed: int
    copies_sent: int


# --- Security harness ---

class CldmInstance(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    version: int = config.FORMAT_VERSION
    num_qubits: int = Field(alias="N", ge=1)
    entries: List[PublicKeyEntry]
    beta: float = Field(default=config.DEFAULT_BETA, ge=0.0)


class FeasibilityResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: Literal["Feasible", "Infeasible", "Undecided"]
    witness: Optional[DensityMatrix] = None
    residual: float
    iterations: int


class GameQuery(BaseModel):
    message: Message
    bundle: SignatureBundle


class GameTranscript(BaseModel):
    strategy: str
    queries: List[GameQuery] = []
    forgery_message: Message
    forgery: SignatureBundle
    forged_message_fresh: bool
    verdict: Literal["ACCEPT", "REJECT"]
    report: VerdictReport

    @property
    def won(self) -> bool:
        return self.forged_message_fresh and self.verdict == "ACCEPT"


class AttackReport(BaseModel):
    strategy: str
    trials: int
    wins: int
    win_rate: float
    disqualified: int = 0
    max_distances: List[float] = []


class CalibrationReport(BaseModel):
    status: Literal["SEPARATED", "NO_SEPARATION"]
    epsilon_star: Optional[float] = None
    noise_p: float
    trials: int
    honest_p99: float
    forgery_p1: float
    signal_p1: float = Field(description="1st percentile of the key signal left after noise")
    honest_distances: List[float]
    forgery_distances: List[float]


# --- Run manifest ---

class RunManifest(BaseModel):
    command: str
    seed: int
    config: Optional[SessionConfig] = None
    arguments: Dict[str, Any] = {}
    inputs: Dict[str, str] = {}
    outputs: Dict[str, str] = {}
    versions: Dict[str, Any] = {}
