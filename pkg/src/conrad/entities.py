"""Domain ownership and content categories."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

CATEGORIES = ("Advertising", "Analytics", "Social", "Content", "Other")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Entity:
    name: str
    domains: frozenset[str]
    category: str = "Other"


class EntityCatalog:
    """Immutable entity index; unknown domains map to nothing."""

    def __init__(self, entities=(), version: str | None = None):
        self.entities: dict[str, Entity] = {}
        self._owner: dict[str, Entity] = {}
        self.version = version
        for ent in entities:
            if ent.category not in CATEGORIES:
                raise CatalogError(f"entity {ent.name!r}: unknown category {ent.category!r}")
            if not ent.domains:
                raise CatalogError(f"entity {ent.name!r} has no domains")
            if ent.name in self.entities:
                raise CatalogError(f"duplicate entity {ent.name!r}")
            for d in ent.domains:
                if d in self._owner:
                    raise CatalogError(f"domain {d!r} claimed by {self._owner[d].name!r} and {ent.name!r}")
                self._owner[d] = ent
            self.entities[ent.name] = ent

    def __len__(self):
        return len(self.entities)

    def __bool__(self):
        return True

    @classmethod
    def from_json(cls, doc: dict) -> "EntityCatalog":
        if not isinstance(doc, dict) or not isinstance(doc.get("entities"), list):
            raise CatalogError("catalog must be an object with an 'entities' list")
        ents = []
        for item in doc["entities"]:
            try:
                ents.append(Entity(str(item["name"]),
                                   frozenset(str(d).lower() for d in item["domains"]),
                                   str(item.get("category", "Other"))))
            except (KeyError, TypeError) as exc:
                raise CatalogError(f"bad entity entry {item!r}: {exc}") from None
        return cls(ents, version=doc.get("version"))

    @classmethod
    def load(cls, path: str | Path) -> "EntityCatalog":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CatalogError(f"{path}: {exc}") from None
        return cls.from_json(doc)

    @classmethod
    def bundled(cls) -> "EntityCatalog":
        text = resources.files("conrad").joinpath("data/entities.json").read_text(encoding="utf-8")
        return cls.from_json(json.loads(text))

    def to_json(self) -> dict:
        doc = {"entities": [
            {"name": e.name, "category": e.category, "domains": sorted(e.domains)}
            for e in sorted(self.entities.values(), key=lambda e: e.name)
        ]}
        if self.version:
            doc["version"] = self.version
        return doc

    def entity_of(self, domain: str) -> Entity | None:
        return self._owner.get(domain)

    def entity_name(self, domain: str) -> str:
        """Owning entity's name, or the domain itself when unknown."""
        ent = self._owner.get(domain)
        return ent.name if ent else domain

    def same_provider(self, a: str | None, b: str | None) -> bool:
        if a is None or b is None:
            return False
        if a == b:
            return True
        ea, eb = self._owner.get(a), self._owner.get(b)
        return ea is not None and ea is eb

    def categorize(self, domain: str) -> str:
        ent = self._owner.get(domain)
        return ent.category if ent else "Other"


EMPTY_CATALOG = EntityCatalog()
