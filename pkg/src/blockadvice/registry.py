"""Directory-backed model registry.

Each model is one weight file (``<id>.avnw``) plus its JSON sidecar. Loads
are routed by the sidecar's architecture id to the matching network class,
which re-validates every tensor name and shape against a freshly built
instance, so a mislabeled or truncated file can never come up as a model.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .advgen import AdviceGenerator, advgen_from_arrays
from .grounding import (
    CorrectiveGrounder,
    Grounder,
    RestrictiveGrounder,
    grounder_from_arrays,
)
from .nn import Module, load_weights, save_weights, sidecar_path
from .predictor import CoordPredictor, predictor_from_arrays

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class RegistryError(Exception):
    pass


class ModelNotFound(RegistryError):
    pass


def _loader_for(architecture: str):
    if architecture.startswith("grounder."):
        return grounder_from_arrays
    if architecture.startswith("e2e."):
        return predictor_from_arrays
    if architecture.startswith("advgen."):
        return advgen_from_arrays
    raise RegistryError(f"unknown architecture id: {architecture!r}")


class ModelRegistry:
    """Maps model ids to weight files under one directory."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._cache: dict[str, object] = {}

    def path(self, model_id: str) -> Path:
        if not _ID_RE.match(model_id) or ".." in model_id:
            raise RegistryError(f"invalid model id: {model_id!r}")
        return self.root / f"{model_id}.avnw"

    def exists(self, model_id: str) -> bool:
        return self.path(model_id).exists()

    def list_models(self) -> list[dict]:
        """Id and architecture for every readable model, sorted by id."""
        out = []
        for p in sorted(self.root.glob("*.avnw")):
            try:
                _, meta = load_weights(p)
            except Exception:
                continue
            out.append({"id": p.stem, "architecture": meta.get("architecture")})
        return out

    def save(self, model_id: str, model: Module, meta: dict) -> Path:
        path = self.path(model_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_weights(path, dict(model.state_arrays()), meta)
        self._cache.pop(model_id, None)
        return path

    def load_raw(self, model_id: str) -> tuple[dict[str, np.ndarray], dict]:
        path = self.path(model_id)
        if not path.exists():
            raise ModelNotFound(f"no such model: {model_id!r}")
        return load_weights(path)

    def load(self, model_id: str):
        """Load and cache a model, routed by its architecture id."""
        if model_id not in self._cache:
            arrays, meta = self.load_raw(model_id)
            architecture = meta.get("architecture")
            if not isinstance(architecture, str):
                raise RegistryError(f"model {model_id!r} has no architecture id")
            self._cache[model_id] = _loader_for(architecture)(arrays, meta)
        return self._cache[model_id]

    def _load_typed(self, model_id: str, cls, what: str):
        model = self.load(model_id)
        if not isinstance(model, cls):
            raise RegistryError(f"model {model_id!r} is not {what}")
        return model

    def load_restrictive_grounder(self, model_id: str) -> RestrictiveGrounder:
        return self._load_typed(model_id, RestrictiveGrounder, "a restrictive grounder")

    def load_corrective_grounder(self, model_id: str) -> CorrectiveGrounder:
        return self._load_typed(model_id, CorrectiveGrounder, "a corrective grounder")

    def load_grounder(self, model_id: str) -> Grounder:
        return self._load_typed(model_id, Grounder, "a grounder")

    def load_predictor(self, model_id: str) -> CoordPredictor:
        return self._load_typed(model_id, CoordPredictor, "a coordinate predictor")

    def load_advgen(self, model_id: str) -> AdviceGenerator:
        return self._load_typed(model_id, AdviceGenerator, "an advice generator")

    def sidecar(self, model_id: str) -> Path:
        return sidecar_path(self.path(model_id))


DEFAULT_MODEL_IDS: dict[str, str] = {
    "baseline": "baseline",
    "restrictive": "restrictive",
    "corrective": "corrective",
    "advgen_source": "advgen_source",
    "advgen_target": "advgen_target",
    "grounder_restrictive": "grounder_restrictive",
    "grounder_corrective": "grounder_corrective",
}


def load_protocol_models(registry: ModelRegistry, protocol, names=None):
    """The models one protocol needs, under the conventional ids."""
    from .advice import Head
    from .protocols import ADVGEN_PROTOCOLS, PREDICTOR_ROLE, ProtocolModels

    ids = dict(DEFAULT_MODEL_IDS)
    ids.update(names or {})
    predictor_id = ids.get("predictor") or ids[PREDICTOR_ROLE[protocol]]
    used = {"predictor": predictor_id}
    advgen = None
    if protocol in ADVGEN_PROTOCOLS:
        advgen = {
            Head.SOURCE: registry.load_advgen(ids["advgen_source"]),
            Head.TARGET: registry.load_advgen(ids["advgen_target"]),
        }
        used["advgen_source"] = ids["advgen_source"]
        used["advgen_target"] = ids["advgen_target"]
    return ProtocolModels(
        predictor=registry.load_predictor(predictor_id), advgen=advgen, ids=used
    )


def load_bundle(registry: ModelRegistry, names=None):
    """Everything compare_protocols needs, under the conventional ids."""
    from .advice import Head
    from .protocols import ModelBundle

    ids = dict(DEFAULT_MODEL_IDS)
    ids.update(names or {})
    return ModelBundle(
        baseline=registry.load_predictor(ids["baseline"]),
        restrictive=registry.load_predictor(ids["restrictive"]),
        corrective=registry.load_predictor(ids["corrective"]),
        advgen={
            Head.SOURCE: registry.load_advgen(ids["advgen_source"]),
            Head.TARGET: registry.load_advgen(ids["advgen_target"]),
        },
        ids={k: ids[k] for k in ("baseline", "restrictive", "corrective", "advgen_source", "advgen_target")},
    )
