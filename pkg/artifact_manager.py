from typing import Dict, Optional, Type, TypeVar
import hashlib
import json
import logging
import os

from pydantic import BaseModel, ValidationError

import config
from errors import ArtifactIOError, FormatError
from models import (
    CldmInstance,
    PrivateKey,
    PublicKey,
    RunManifest,
    SignatureBundle,
)
from keygen_service import prepare_state

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


class ArtifactManager:
    """
    Reads and writes the JSON artifacts of a run: keys, challenges,
    signature bundles, reports, oracle instances and run manifests.

    Output is deterministic (sorted keys, no timestamps) so identical runs
    produce byte-identical files.
    """

    def __init__(self, base_dir: Optional[str] = None):
        """
        Args:
            base_dir: directory relative paths resolve against (defaults to
                QMPSIG_ARTIFACT_DIR, then the working directory)
        """
        self.base_dir = base_dir or os.getenv("QMPSIG_ARTIFACT_DIR") or "."
        self.written: Dict[str, str] = {}
        self.read: Dict[str, str] = {}

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    # --- Generic ---

    def save(self, model: BaseModel, path: str) -> str:
        """Serialize a model by alias and return the file's SHA-256."""
        payload = json.dumps(
            json.loads(model.model_dump_json(by_alias=True, exclude_none=True)),
            indent=2,
            sort_keys=True,
        ) + "\n"
        full = self.resolve(path)
        try:
            parent = os.path.dirname(full)
            if parent:
                os.makedirs(parent, exist_ok=True)
            with open(full, "w", encoding="utf-8") as f:
                f.write(payload)
        except OSError as e:
            raise ArtifactIOError(f"cannot write {full}: {e}") from e
        digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        self.written[path] = digest
        logger.debug("wrote %s (%s)", full, digest[:12])
        return digest

    def load(self, model_cls: Type[ModelT], path: str) -> ModelT:
        """Parse a JSON artifact, mapping parse and schema errors to FormatError."""
        full = self.resolve(path)
        try:
            with open(full, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ArtifactIOError(f"cannot read {full}: {e}") from e
        try:
            data = json.loads(text)
            model = model_cls.model_validate(data)
        except (json.JSONDecodeError, ValidationError, ValueError) as e:
            raise FormatError(f"{full} is not a valid {model_cls.__name__}: {e}") from e
        version = getattr(model, "version", config.FORMAT_VERSION)
        if version != config.FORMAT_VERSION:
            raise FormatError(f"{full} has format version {version}, expected {config.FORMAT_VERSION}")
        self.read[path] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return model

    # --- Typed helpers ---

    def save_private_key(self, sk: PrivateKey, path: str) -> str:
        return self.save(sk, path)

    def load_private_key(self, path: str) -> PrivateKey:
        """Load a private key and rebuild its cached state from the circuit."""
        sk = self.load(PrivateKey, path)
        return sk.model_copy(update={"cached_state": prepare_state(sk.circuit)})

    def save_public_key(self, pk: PublicKey, path: str) -> str:
        return self.save(pk, path)

    def load_public_key(self, path: str) -> PublicKey:
        return self.load(PublicKey, path)

    def load_bundle(self, path: str) -> SignatureBundle:
        return self.load(SignatureBundle, path)

    def load_instance(self, path: str) -> CldmInstance:
        """Load an oracle instance; a public-key file is accepted as well."""
        full = self.resolve(path)
        try:
            with open(full, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ArtifactIOError(f"cannot read {full}: {e}") from e
        except json.JSONDecodeError as e:
            raise FormatError(f"{full} is not valid JSON: {e}") from e
        if isinstance(data, dict) and "k" in data:
            pk = self.load_public_key(path)
            return CldmInstance(num_qubits=pk.num_qubits, entries=list(pk.entries))
        return self.load(CldmInstance, path)

    def write_manifest(self, manifest: RunManifest, path: str) -> str:
        """Write a manifest listing every artifact this manager touched."""
        complete = manifest.model_copy(update={
            "inputs": {**manifest.inputs, **self.read},
            "outputs": {**manifest.outputs, **self.written},
            "versions": {
                "code": config.CODE_VERSION,
                "format": config.FORMAT_VERSION,
                **manifest.versions,
            },
        })
        return self.save(complete, path)
