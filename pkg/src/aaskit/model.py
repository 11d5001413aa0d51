"""Reduced in-memory model of Industry 4.0 asset administration shells.

The model covers shells, submodels and five kinds of submodel elements
(property, collection, operation, capability and file reference). It is the
shared vocabulary of the whole package: the generators build it, the package
writer serializes it and the HTTP service navigates it.

All values are immutable after construction and safe to share between
threads; "mutation" means building a new environment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

from enum import Enum

ID_SHORT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

# Practical bound on collection nesting; deeper trees are rejected by validate().
MAX_COLLECTION_DEPTH = 8

_INTEGER_RE = re.compile(r"[+-]?[0-9]+\Z")
_DECIMAL_RE = re.compile(r"[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][+-]?[0-9]+)?\Z")
_BOOLEANS = ("true", "false")


class ValueType(str, Enum):
    """Lexical value spaces usable in properties and parameters."""

    STRING = "string"
    INTEGER = "integer"
    DECIMAL = "decimal"
    BOOLEAN = "boolean"


class AssetKind(str, Enum):
    SOFTWARE_COMPONENT = "SoftwareComponent"
    ROBOT_SYSTEM = "RobotSystem"


@dataclass(frozen=True)
class ParamSpec:
    """Schema of a single capability parameter.

    ``bounds`` is an inclusive numeric range, meaningful only for integer and
    decimal parameters. ``choices`` enumerates the allowed strings for string
    parameters. At most one of the two is set.
    """

    name: str
    value_type: ValueType
    required: bool = True
    bounds: tuple[float, float] | None = None
    choices: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Property:
    id_short: str
    value_type: ValueType
    value: str


@dataclass(frozen=True)
class Collection:
    id_short: str
    elements: tuple["SubmodelElement", ...] = ()


@dataclass(frozen=True)
class OperationDecl:
    """Callable operation signature: named, typed in/out parameters."""

    id_short: str
    in_params: tuple[tuple[str, ValueType], ...] = ()
    out_params: tuple[tuple[str, ValueType], ...] = ()


@dataclass(frozen=True)
class CapabilityDecl:
    """A commandable skill: name, free-text description, parameter schema."""

    id_short: str
    description: str = ""
    param_schema: tuple[ParamSpec, ...] = ()


@dataclass(frozen=True)
class FileRef:
    id_short: str
    mime_type: str
    relative_path: str


SubmodelElement = Union[Property, Collection, OperationDecl, CapabilityDecl, FileRef]


@dataclass(frozen=True)
class Submodel:
    id: str
    id_short: str
    semantic_id: str | None = None
    elements: tuple[SubmodelElement, ...] = ()


@dataclass(frozen=True)
class Shell:
    id: str
    id_short: str
    asset_kind: AssetKind
    submodel_refs: tuple[str, ...] = ()


@dataclass(frozen=True)
class AasEnvironment:
    """A set of shells plus the submodel pool they reference.

    Submodels live in one flat pool so that several shells may share one and
    so that unreferenced ("orphan") submodels can ride along in a package.
    """

    shells: tuple[Shell, ...] = ()
    submodels: tuple[Submodel, ...] = ()

    def shell(self, id_short: str) -> Shell | None:
        for shell in self.shells:
            if shell.id_short == id_short:
                return shell
        return None

    def submodel_by_id(self, submodel_id: str) -> Submodel | None:
        for sm in self.submodels:
            if sm.id == submodel_id:
                return sm
        return None

    def submodels_of(self, shell: Shell) -> tuple[Submodel, ...]:
        """Submodels referenced by ``shell``, in reference order."""
        found = []
        for ref in shell.submodel_refs:
            sm = self.submodel_by_id(ref)
            if sm is not None:
                found.append(sm)
        return tuple(found)

    @property
    def orphan_submodels(self) -> tuple[Submodel, ...]:
        referenced = {ref for shell in self.shells for ref in shell.submodel_refs}
        return tuple(sm for sm in self.submodels if sm.id not in referenced)


class NotFound(KeyError):
    """A path segment did not address any node."""

    def __init__(self, segment: str, path: str):
        super().__init__(segment)
        self.segment = segment
        self.path = path

    def __str__(self) -> str:
        return f"no node {self.segment!r} while resolving {self.path!r}"


def resolve(env: AasEnvironment, path: str) -> Shell | Submodel | SubmodelElement:
    """Address a node by a slash-separated idShort path.

    ``Shell``, ``Shell/Submodel`` and ``Shell/Submodel/Element[/...]`` forms
    are accepted; matching is case-sensitive. Raises :class:`NotFound` with
    the first segment that fails.
    """
    if not path:
        raise NotFound("", path)
    segments = path.split("/")
    shell = env.shell(segments[0])
    if shell is None:
        raise NotFound(segments[0], path)
    if len(segments) == 1:
        return shell
    submodel = None
    for sm in env.submodels_of(shell):
        if sm.id_short == segments[1]:
            submodel = sm
            break
    if submodel is None:
        raise NotFound(segments[1], path)
    node: Submodel | SubmodelElement = submodel
    for segment in segments[2:]:
        children = getattr(node, "elements", None)
        if children is None:
            raise NotFound(segment, path)
        for child in children:
            if child.id_short == segment:
                node = child
                break
        else:
            raise NotFound(segment, path)
    return node


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


def _xml_safe(text: str) -> bool:
    # XML 1.0 cannot carry control characters below 0x20 except tab/LF/CR,
    # not even as character references.
    try:
        text.encode("utf-8")
    except UnicodeEncodeError:
        return False
    return all(ch >= " " or ch in "\t\n\r" for ch in text)


def lexically_valid(value: str, value_type: ValueType) -> bool:
    """Whether ``value`` lies in the lexical space of ``value_type``."""
    if value_type is ValueType.STRING:
        return _xml_safe(value)
    if value_type is ValueType.INTEGER:
        return bool(_INTEGER_RE.match(value))
    if value_type is ValueType.DECIMAL:
        return bool(_DECIMAL_RE.match(value))
    return value in _BOOLEANS


def _check_identifier(value: str, path: str, out: list[Violation]) -> None:
    if not value or any(ch.isspace() for ch in value) or not _xml_safe(value):
        out.append(Violation("BadIdentifier", path, f"invalid identifier {value!r}"))


def _check_id_short(value: str, path: str, out: list[Violation]) -> None:
    if not value or "/" in value or not _xml_safe(value):
        out.append(Violation("BadIdShort", path, f"invalid idShort {value!r}"))


def _check_param_spec(spec: ParamSpec, path: str, out: list[Violation]) -> None:
    if not spec.name or not _xml_safe(spec.name):
        out.append(Violation("BadParamSpec", path, f"invalid parameter name {spec.name!r}"))
    if spec.bounds is not None:
        if spec.value_type not in (ValueType.INTEGER, ValueType.DECIMAL):
            out.append(
                Violation("BadParamSpec", path, f"range constraint on {spec.value_type.value} parameter {spec.name!r}")
            )
        elif spec.bounds[0] > spec.bounds[1]:
            out.append(Violation("BadParamSpec", path, f"empty range {spec.bounds} on parameter {spec.name!r}"))
    if spec.choices is not None:
        if spec.value_type is not ValueType.STRING:
            out.append(
                Violation("BadParamSpec", path, f"enumeration constraint on {spec.value_type.value} parameter {spec.name!r}")
            )
        elif not spec.choices:
            out.append(Violation("BadParamSpec", path, f"empty enumeration on parameter {spec.name!r}"))
        else:
            for choice in spec.choices:
                if not _xml_safe(choice):
                    out.append(Violation("BadText", path, f"unserializable enumeration value on {spec.name!r}"))
    if spec.bounds is not None and spec.choices is not None:
        out.append(Violation("BadParamSpec", path, f"parameter {spec.name!r} has both range and enumeration"))


def _check_elements(elements: Iterable[SubmodelElement], path: str, depth: int, out: list[Violation]) -> None:
    seen: set[str] = set()
    for el in elements:
        el_path = f"{path}/{el.id_short}"
        _check_id_short(el.id_short, el_path, out)
        if el.id_short in seen:
            out.append(Violation("DuplicateIdShort", el_path, "sibling idShort reused"))
        seen.add(el.id_short)
        if isinstance(el, Property):
            if not lexically_valid(el.value, el.value_type):
                out.append(
                    Violation("LexicalMismatch", el_path, f"value {el.value!r} not valid for {el.value_type.value}")
                )
        elif isinstance(el, Collection):
            if depth > MAX_COLLECTION_DEPTH:
                out.append(Violation("NestingTooDeep", el_path, f"collection nesting exceeds {MAX_COLLECTION_DEPTH}"))
            else:
                _check_elements(el.elements, el_path, depth + 1, out)
        elif isinstance(el, OperationDecl):
            for name, _vt in el.in_params + el.out_params:
                if not name or not _xml_safe(name):
                    out.append(Violation("BadParamSpec", el_path, f"invalid operation parameter name {name!r}"))
        elif isinstance(el, CapabilityDecl):
            if not _xml_safe(el.description):
                out.append(Violation("BadText", el_path, "unserializable description"))
            param_names = set()
            for spec in el.param_schema:
                _check_param_spec(spec, el_path, out)
                if spec.name in param_names:
                    out.append(Violation("DuplicateIdShort", el_path, f"parameter name {spec.name!r} reused"))
                param_names.add(spec.name)
        elif isinstance(el, FileRef):
            for text in (el.mime_type, el.relative_path):
                if not _xml_safe(text):
                    out.append(Violation("BadText", el_path, "unserializable file reference"))


def validate(env: AasEnvironment) -> list[Violation]:
    """Check every structural invariant; an empty list means well-formed.

    Violations are data, not exceptions, so callers can report all of them
    at once.
    """
    out: list[Violation] = []

    ids: set[str] = set()
    for shell in env.shells:
        _check_identifier(shell.id, shell.id_short, out)
        if shell.id in ids:
            out.append(Violation("DuplicateId", shell.id, "identifier reused"))
        ids.add(shell.id)
    for sm in env.submodels:
        _check_identifier(sm.id, sm.id_short, out)
        if sm.id in ids:
            out.append(Violation("DuplicateId", sm.id, "identifier reused"))
        ids.add(sm.id)

    shell_names: set[str] = set()
    for shell in env.shells:
        if not ID_SHORT_RE.match(shell.id_short):
            out.append(Violation("BadIdShort", shell.id_short, f"shell idShort {shell.id_short!r} not an identifier"))
        if shell.id_short in shell_names:
            out.append(Violation("DuplicateIdShort", shell.id_short, "shell idShort reused"))
        shell_names.add(shell.id_short)

        seen_refs: set[str] = set()
        referenced_short: set[str] = set()
        for ref in shell.submodel_refs:
            if ref in seen_refs:
                out.append(Violation("DuplicateSubmodelRef", shell.id_short, f"duplicate reference {ref!r}"))
            seen_refs.add(ref)
            target = env.submodel_by_id(ref)
            if target is None:
                out.append(Violation("DanglingSubmodelRef", shell.id_short, f"reference {ref!r} does not resolve"))
                continue
            if target.id_short in referenced_short:
                out.append(
                    Violation(
                        "DuplicateIdShort",
                        f"{shell.id_short}/{target.id_short}",
                        "submodel idShort reused within one shell",
                    )
                )
            referenced_short.add(target.id_short)

    orphan_names: set[str] = set()
    for sm in env.orphan_submodels:
        if sm.id_short in orphan_names:
            out.append(Violation("DuplicateIdShort", f"~/{sm.id_short}", "orphan submodel idShort reused"))
        orphan_names.add(sm.id_short)

    for sm in env.submodels:
        owner = None
        for shell in env.shells:
            if sm.id in shell.submodel_refs:
                owner = shell
                break
        path = f"{owner.id_short}/{sm.id_short}" if owner else f"~/{sm.id_short}"
        _check_id_short(sm.id_short, path, out)
        if sm.semantic_id is not None and (not sm.semantic_id or not _xml_safe(sm.semantic_id)):
            out.append(Violation("BadIdentifier", path, "invalid semanticId"))
        _check_elements(sm.elements, path, 1, out)

    return out


# --- canonical JSON projections, shared by the HTTP service and the CLI ---


def param_spec_to_json(spec: ParamSpec) -> dict:
    obj: dict = {"name": spec.name, "type": spec.value_type.value, "required": spec.required}
    if spec.bounds is not None:
        obj["range"] = list(spec.bounds)
    if spec.choices is not None:
        obj["enum"] = list(spec.choices)
    return obj


def element_to_json(el: SubmodelElement) -> dict:
    if isinstance(el, Property):
        return {"kind": "property", "idShort": el.id_short, "valueType": el.value_type.value, "value": el.value}
    if isinstance(el, Collection):
        return {"kind": "collection", "idShort": el.id_short, "elements": [element_to_json(c) for c in el.elements]}
    if isinstance(el, OperationDecl):
        return {
            "kind": "operation",
            "idShort": el.id_short,
            "in": [{"name": n, "valueType": vt.value} for n, vt in el.in_params],
            "out": [{"name": n, "valueType": vt.value} for n, vt in el.out_params],
        }
    if isinstance(el, CapabilityDecl):
        return {
            "kind": "capability",
            "idShort": el.id_short,
            "description": el.description,
            "params": [param_spec_to_json(p) for p in el.param_schema],
        }
    return {"kind": "file", "idShort": el.id_short, "mimeType": el.mime_type, "path": el.relative_path}


def submodel_to_json(sm: Submodel) -> dict:
    obj: dict = {"idShort": sm.id_short, "id": sm.id}
    if sm.semantic_id is not None:
        obj["semanticId"] = sm.semantic_id
    obj["elements"] = [element_to_json(el) for el in sm.elements]
    return obj


def shell_to_json(shell: Shell, env: AasEnvironment) -> dict:
    return {
        "idShort": shell.id_short,
        "id": shell.id,
        "assetKind": shell.asset_kind.value,
        "submodels": [sm.id_short for sm in env.submodels_of(shell)],
    }


def env_to_json(env: AasEnvironment) -> dict:
    return {
        "shells": [
            {**shell_to_json(shell, env), "submodels": [submodel_to_json(sm) for sm in env.submodels_of(shell)]}
            for shell in env.shells
        ],
        "orphanSubmodels": [submodel_to_json(sm) for sm in env.orphan_submodels],
    }
