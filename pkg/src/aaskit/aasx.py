"""Deterministic AASX packaging: a zip with one XML environment document.

The package layout and the XML vocabulary are deliberately small and fully
documented in ``docs/aasx-format.md``. Writing is bit-reproducible: fixed
entry order, stored (uncompressed) entries, epoch timestamps, fixed attribute
order, UTF-8 with LF line endings. ``read_aasx(write_aasx(env))`` returns a
structurally equal environment.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass
from enum import Enum
from xml.etree import ElementTree as ET

from .model import (
    AasEnvironment,
    AssetKind,
    CapabilityDecl,
    Collection,
    FileRef,
    OperationDecl,
    ParamSpec,
    Property,
    Shell,
    Submodel,
    SubmodelElement,
    ValueType,
    Violation,
    validate,
)

AASX_ENV_ENTRY = "aasx/env.xml"

_XML_DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>\n'

# Zip metadata pinned for reproducibility. Entries are stored uncompressed so
# output bytes do not depend on the zlib build.
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class AasxError(Exception):
    """Base class for package read/write errors."""


class InvalidEnvironment(AasxError):
    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations) or "invalid environment")
        self.violations = violations


class NotAZip(AasxError):
    pass


class MissingEntry(AasxError):
    def __init__(self, entry: str):
        super().__init__(f"package is missing entry {entry!r}")
        self.entry = entry


class XmlError(AasxError):
    def __init__(self, message: str, position: tuple[int, int] | None = None):
        if position is not None:
            message = f"line {position[0]}, column {position[1]}: {message}"
        super().__init__(message)
        self.position = position


class ModelError(AasxError):
    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations) or "model violations")
        self.violations = violations


# --- XML writing -------------------------------------------------------------


def _param_spec_node(spec: ParamSpec) -> ET.Element:
    attrs = {"name": spec.name, "valueType": spec.value_type.value, "required": "true" if spec.required else "false"}
    if spec.bounds is not None:
        attrs["lo"] = str(spec.bounds[0])
        attrs["hi"] = str(spec.bounds[1])
    node = ET.Element("param", attrs)
    if spec.choices is not None:
        for choice in spec.choices:
            ET.SubElement(node, "choice", {"value": choice})
    return node


def _element_node(el: SubmodelElement) -> ET.Element:
    if isinstance(el, Property):
        return ET.Element("property", {"idShort": el.id_short, "valueType": el.value_type.value, "value": el.value})
    if isinstance(el, Collection):
        node = ET.Element("collection", {"idShort": el.id_short})
        node.extend(_element_node(child) for child in el.elements)
        return node
    if isinstance(el, OperationDecl):
        node = ET.Element("operation", {"idShort": el.id_short})
        for name, vt in el.in_params:
            ET.SubElement(node, "param", {"kind": "in", "name": name, "valueType": vt.value})
        for name, vt in el.out_params:
            ET.SubElement(node, "param", {"kind": "out", "name": name, "valueType": vt.value})
        return node
    if isinstance(el, CapabilityDecl):
        node = ET.Element("capability", {"idShort": el.id_short, "description": el.description})
        node.extend(_param_spec_node(spec) for spec in el.param_schema)
        return node
    return ET.Element("file", {"idShort": el.id_short, "mimeType": el.mime_type, "path": el.relative_path})


def env_to_xml(env: AasEnvironment) -> str:
    """Serialize to the canonical XML document (deterministic text)."""
    root = ET.Element("environment")
    for shell in env.shells:
        shell_node = ET.SubElement(
            root, "shell", {"id": shell.id, "idShort": shell.id_short, "kind": shell.asset_kind.value}
        )
        for ref in shell.submodel_refs:
            ET.SubElement(shell_node, "submodelRef", {"id": ref})
    for sm in env.submodels:
        attrs = {"id": sm.id, "idShort": sm.id_short}
        if sm.semantic_id is not None:
            attrs["semanticId"] = sm.semantic_id
        sm_node = ET.SubElement(root, "submodel", attrs)
        sm_node.extend(_element_node(el) for el in sm.elements)
    ET.indent(root, space="  ")
    return _XML_DECLARATION + ET.tostring(root, encoding="unicode") + "\n"


def write_aasx(env: AasEnvironment) -> bytes:
    """Serialize a validated environment to deterministic package bytes."""
    violations = validate(env)
    if violations:
        raise InvalidEnvironment(violations)
    text = env_to_xml(env)
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w") as archive:
        info = zipfile.ZipInfo(AASX_ENV_ENTRY, date_time=_ZIP_EPOCH)
        info.compress_type = zipfile.ZIP_STORED
        info.create_system = 3
        info.external_attr = 0o644 << 16
        archive.writestr(info, text.encode("utf-8"))
    return buffer.getvalue()


# --- XML reading -------------------------------------------------------------


def _attr(node: ET.Element, name: str) -> str:
    value = node.get(name)
    if value is None:
        raise XmlError(f"<{node.tag}> is missing attribute {name!r}")
    return value


def _parse_value_type(node: ET.Element, attr: str = "valueType") -> ValueType:
    raw = _attr(node, attr)
    try:
        return ValueType(raw)
    except ValueError:
        raise XmlError(f"unknown valueType {raw!r} on <{node.tag}>") from None


def _parse_bound(raw: str, value_type: ValueType) -> float:
    try:
        return int(raw) if value_type is ValueType.INTEGER else float(raw)
    except ValueError:
        raise XmlError(f"invalid range bound {raw!r}") from None


def _parse_param_spec(node: ET.Element) -> ParamSpec:
    value_type = _parse_value_type(node)
    required_raw = node.get("required", "true")
    if required_raw not in ("true", "false"):
        raise XmlError(f"invalid required flag {required_raw!r}")
    bounds = None
    if node.get("lo") is not None or node.get("hi") is not None:
        bounds = (_parse_bound(_attr(node, "lo"), value_type), _parse_bound(_attr(node, "hi"), value_type))
    choices = None
    children = list(node)
    if children:
        for child in children:
            if child.tag != "choice":
                raise XmlError(f"unknown element kind '{child.tag}' inside <param>")
        choices = tuple(_attr(child, "value") for child in children)
    return ParamSpec(
        name=_attr(node, "name"), value_type=value_type, required=required_raw == "true", bounds=bounds, choices=choices
    )


def _parse_element(node: ET.Element) -> SubmodelElement:
    if node.tag == "property":
        return Property(id_short=_attr(node, "idShort"), value_type=_parse_value_type(node), value=_attr(node, "value"))
    if node.tag == "collection":
        return Collection(id_short=_attr(node, "idShort"), elements=tuple(_parse_element(c) for c in node))
    if node.tag == "operation":
        in_params = []
        out_params = []
        for child in node:
            if child.tag != "param":
                raise XmlError(f"unknown element kind '{child.tag}' inside <operation>")
            kind = _attr(child, "kind")
            entry = (_attr(child, "name"), _parse_value_type(child))
            if kind == "in":
                in_params.append(entry)
            elif kind == "out":
                out_params.append(entry)
            else:
                raise XmlError(f"unknown operation parameter kind {kind!r}")
        return OperationDecl(id_short=_attr(node, "idShort"), in_params=tuple(in_params), out_params=tuple(out_params))
    if node.tag == "capability":
        params = []
        for child in node:
            if child.tag != "param":
                raise XmlError(f"unknown element kind '{child.tag}' inside <capability>")
            params.append(_parse_param_spec(child))
        return CapabilityDecl(
            id_short=_attr(node, "idShort"), description=node.get("description", ""), param_schema=tuple(params)
        )
    if node.tag == "file":
        return FileRef(id_short=_attr(node, "idShort"), mime_type=_attr(node, "mimeType"), relative_path=_attr(node, "path"))
    raise XmlError(f"unknown element kind '{node.tag}'")


def xml_to_env(text: str) -> AasEnvironment:
    """Parse the canonical XML document; the result is not yet validated."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlError(exc.msg or "XML parse error", position=exc.position) from exc
    if root.tag != "environment":
        raise XmlError(f"expected <environment> document, got <{root.tag}>")
    shells = []
    submodels = []
    for node in root:
        if node.tag == "shell":
            raw_kind = _attr(node, "kind")
            try:
                kind = AssetKind(raw_kind)
            except ValueError:
                raise XmlError(f"unknown asset kind {raw_kind!r}") from None
            refs = []
            for child in node:
                if child.tag != "submodelRef":
                    raise XmlError(f"unknown element kind '{child.tag}' inside <shell>")
                refs.append(_attr(child, "id"))
            shells.append(
                Shell(id=_attr(node, "id"), id_short=_attr(node, "idShort"), asset_kind=kind, submodel_refs=tuple(refs))
            )
        elif node.tag == "submodel":
            submodels.append(
                Submodel(
                    id=_attr(node, "id"),
                    id_short=_attr(node, "idShort"),
                    semantic_id=node.get("semanticId"),
                    elements=tuple(_parse_element(child) for child in node),
                )
            )
        else:
            raise XmlError(f"unknown element kind '{node.tag}'")
    return AasEnvironment(shells=tuple(shells), submodels=tuple(submodels))


def read_aasx(data: bytes) -> AasEnvironment:
    """Read package bytes back into a validated environment."""
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise NotAZip(str(exc)) from exc
    with archive:
        try:
            raw = archive.read(AASX_ENV_ENTRY)
        except KeyError:
            raise MissingEntry(AASX_ENV_ENTRY) from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise XmlError(f"environment document is not UTF-8: {exc}") from exc
    env = xml_to_env(text)
    violations = validate(env)
    if violations:
        raise ModelError(violations)
    return env


# --- structural diff ---------------------------------------------------------


class DiffKind(str, Enum):
    MISSING = "missing"
    EXTRA = "extra"
    VALUE_CHANGED = "valueChanged"


@dataclass(frozen=True)
class Difference:
    path: str
    kind: DiffKind
    detail: str = ""

    def __str__(self) -> str:
        suffix = f" ({self.detail})" if self.detail else ""
        return f"{self.kind.value} at {self.path}{suffix}"


def _diff_keyed(a_items, b_items, path_of, recurse, out: list[Difference]) -> None:
    a_by_key = {item.id_short: item for item in a_items}
    b_by_key = {item.id_short: item for item in b_items}
    for key, item in a_by_key.items():
        if key not in b_by_key:
            out.append(Difference(path_of(key), DiffKind.MISSING))
        else:
            recurse(item, b_by_key[key], path_of(key))
    for key in b_by_key:
        if key not in a_by_key:
            out.append(Difference(path_of(key), DiffKind.EXTRA))


def _diff_elements(a: SubmodelElement, b: SubmodelElement, path: str, out: list[Difference]) -> None:
    if type(a) is not type(b):
        out.append(Difference(path, DiffKind.VALUE_CHANGED, f"element kind {type(a).__name__} -> {type(b).__name__}"))
        return
    if isinstance(a, Collection):
        _diff_keyed(a.elements, b.elements, lambda k: f"{path}/{k}", lambda x, y, p: _diff_elements(x, y, p, out), out)
        return
    if a != b:
        if isinstance(a, Property) and a.value != b.value:
            out.append(Difference(path, DiffKind.VALUE_CHANGED, f"{a.value!r} -> {b.value!r}"))
        else:
            out.append(Difference(path, DiffKind.VALUE_CHANGED))


def _diff_submodels(a: Submodel, b: Submodel, path: str, out: list[Difference]) -> None:
    if (a.id, a.semantic_id) != (b.id, b.semantic_id):
        out.append(Difference(path, DiffKind.VALUE_CHANGED, "submodel metadata"))
    _diff_keyed(a.elements, b.elements, lambda k: f"{path}/{k}", lambda x, y, p: _diff_elements(x, y, p, out), out)


def diff(a: AasEnvironment, b: AasEnvironment) -> list[Difference]:
    """Structural differences, addressed by resolve-style paths.

    Nodes present in ``a`` but not ``b`` report ``missing``; nodes only in
    ``b`` report ``extra``. Orphan submodels are compared under ``~/`` paths.
    An empty list means the environments are structurally equal.
    """
    out: list[Difference] = []

    def diff_shell(sa: Shell, sb: Shell, path: str) -> None:
        if (sa.id, sa.asset_kind) != (sb.id, sb.asset_kind):
            out.append(Difference(path, DiffKind.VALUE_CHANGED, "shell metadata"))
        _diff_keyed(
            a.submodels_of(sa),
            b.submodels_of(sb),
            lambda k: f"{path}/{k}",
            lambda x, y, p: _diff_submodels(x, y, p, out),
            out,
        )

    _diff_keyed(a.shells, b.shells, lambda k: k, diff_shell, out)
    _diff_keyed(
        a.orphan_submodels,
        b.orphan_submodels,
        lambda k: f"~/{k}",
        lambda x, y, p: _diff_submodels(x, y, p, out),
        out,
    )
    return out
