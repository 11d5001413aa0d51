"""Parsing and validation of component and system description documents.

Components and systems are described by small JSON documents (see the
``*.component.json`` and ``*.system.json`` schemas in the README). Parsing is
strict: unknown fields are rejected and every error names the exact document
path it refers to, e.g. ``skills[1].params[0].type``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .model import ID_SHORT_RE, ParamSpec, ValueType

DEFAULT_ENVIRONMENT = "unspecified"

_RESERVED_TECHNICAL_DATA_KEYS = ("license", "environment")


class ModelDocumentError(Exception):
    """Base class for component/system document errors."""


class DocumentSyntaxError(ModelDocumentError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SchemaError(ModelDocumentError):
    """Missing field, unknown field, or a field of the wrong JSON type."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvariantError(ModelDocumentError):
    """Structurally well-formed document that breaks a model invariant."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnresolvedComponent(ModelDocumentError):
    def __init__(self, name: str):
        super().__init__(f"referenced component {name!r} was not supplied")
        self.name = name


class UnknownSkillInTaskPlot(ModelDocumentError):
    def __init__(self, plot: str, skill: str):
        super().__init__(f"task plot {plot!r} uses unknown skill {skill!r}")
        self.plot = plot
        self.skill = skill


class Direction(str, Enum):
    PROVIDES = "provides"
    REQUIRES = "requires"


@dataclass(frozen=True)
class ServicePort:
    name: str
    direction: Direction
    pattern: str
    message_type: str


@dataclass(frozen=True)
class SkillDefinition:
    name: str
    description: str
    params: tuple[ParamSpec, ...]
    result_fields: tuple[tuple[str, ValueType], ...]


@dataclass(frozen=True)
class Nameplate:
    manufacturer: str
    product_designation: str
    serial_number: str | None = None
    address: str | None = None


@dataclass(frozen=True)
class DocEntry:
    title: str
    uri: str


@dataclass(frozen=True)
class ComponentModel:
    name: str
    version: str
    license: str
    environment: str
    services: tuple[ServicePort, ...]
    skills: tuple[SkillDefinition, ...]
    technical_data: tuple[tuple[str, str], ...]
    nameplate: Nameplate
    documentation: tuple[DocEntry, ...]


@dataclass(frozen=True)
class TaskPlot:
    name: str
    description: str
    skills_used: tuple[str, ...]
    params: tuple[ParamSpec, ...] = ()


@dataclass(frozen=True)
class ComponentInstance:
    instance_name: str
    component_name: str


@dataclass(frozen=True)
class SystemModel:
    name: str
    instances: tuple[ComponentInstance, ...]
    task_plots: tuple[TaskPlot, ...]
    expose: tuple[str, ...] | None = None


# --- strict JSON walking helpers -------------------------------------------

_TYPE_NAMES = {dict: "object", list: "array", str: "string", bool: "boolean", int: "number", float: "number"}


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _require(obj: Mapping, key: str, path: str, kind: type):
    field = _join(path, key)
    if key not in obj:
        raise SchemaError(field, "missing required field")
    return _check_kind(obj[key], kind, field)


def _optional(obj: Mapping, key: str, path: str, kind: type, default):
    if key not in obj:
        return default
    return _check_kind(obj[key], kind, _join(path, key))


def _check_kind(value, kind: type, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(path, f"expected number, got {_TYPE_NAMES.get(type(value), type(value).__name__)}")
        return value
    if kind is str and isinstance(value, bool):
        raise SchemaError(path, "expected string, got boolean")
    if not isinstance(value, kind):
        raise SchemaError(
            path, f"expected {_TYPE_NAMES.get(kind, kind.__name__)}, got {_TYPE_NAMES.get(type(value), type(value).__name__)}"
        )
    return value


def _reject_unknown(obj: Mapping, allowed: Iterable[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SchemaError(_join(path, str(key)), "unknown field")


def _load_document(text: str):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(data, dict):
        raise SchemaError("", "document root must be an object")
    return data


def _identifier(value: str, path: str) -> str:
    if not ID_SHORT_RE.match(value):
        raise InvariantError(path, f"{value!r} is not a valid name (expected [A-Za-z][A-Za-z0-9_]*)")
    return value


def _parse_value_type(value: str, path: str) -> ValueType:
    try:
        return ValueType(value)
    except ValueError:
        raise SchemaError(path, f"unknown type {value!r}") from None


def _parse_param(obj, path: str) -> ParamSpec:
    _check_kind(obj, dict, path)
    _reject_unknown(obj, ("name", "type", "required", "range", "enum"), path)
    name = _require(obj, "name", path, str)
    value_type = _parse_value_type(_require(obj, "type", path, str), _join(path, "type"))
    required = _optional(obj, "required", path, bool, True)

    bounds = None
    if "range" in obj:
        raw = _check_kind(obj["range"], list, _join(path, "range"))
        if len(raw) != 2:
            raise SchemaError(_join(path, "range"), "range must be [lo, hi]")
        lo = _check_kind(raw[0], float, _join(path, "range"))
        hi = _check_kind(raw[1], float, _join(path, "range"))
        if value_type not in (ValueType.INTEGER, ValueType.DECIMAL):
            raise InvariantError(_join(path, "range"), f"range constraint on {value_type.value} parameter")
        if value_type is ValueType.INTEGER:
            if lo != int(lo) or hi != int(hi):
                raise InvariantError(_join(path, "range"), "integer parameter needs integral bounds")
            lo, hi = int(lo), int(hi)
        else:
            lo, hi = float(lo), float(hi)
        if lo > hi:
            raise InvariantError(_join(path, "range"), f"empty range [{lo}, {hi}]")
        bounds = (lo, hi)

    choices = None
    if "enum" in obj:
        if bounds is not None:
            raise InvariantError(_join(path, "enum"), "parameter cannot carry both range and enum")
        raw = _check_kind(obj["enum"], list, _join(path, "enum"))
        if value_type is not ValueType.STRING:
            raise InvariantError(_join(path, "enum"), f"enum constraint on {value_type.value} parameter")
        if not raw:
            raise InvariantError(_join(path, "enum"), "enum must not be empty")
        choices = tuple(_check_kind(item, str, _join(path, "enum")) for item in raw)

    return ParamSpec(name=name, value_type=value_type, required=required, bounds=bounds, choices=choices)


def _parse_params(obj, path: str) -> tuple[ParamSpec, ...]:
    raw = _optional(obj, "params", path, list, [])
    params = tuple(_parse_param(item, f"{_join(path, 'params')}[{i}]") for i, item in enumerate(raw))
    seen: set[str] = set()
    for spec in params:
        if spec.name in seen:
            raise InvariantError(_join(path, "params"), f"duplicate parameter name {spec.name!r}")
        seen.add(spec.name)
    return params


def _parse_skill(obj, path: str) -> SkillDefinition:
    _check_kind(obj, dict, path)
    _reject_unknown(obj, ("name", "description", "params", "results"), path)
    name = _identifier(_require(obj, "name", path, str), _join(path, "name"))
    description = _optional(obj, "description", path, str, "")
    params = _parse_params(obj, path)
    results = []
    for i, item in enumerate(_optional(obj, "results", path, list, [])):
        rpath = f"{_join(path, 'results')}[{i}]"
        _check_kind(item, dict, rpath)
        _reject_unknown(item, ("name", "type"), rpath)
        results.append(
            (_require(item, "name", rpath, str), _parse_value_type(_require(item, "type", rpath, str), _join(rpath, "type")))
        )
    return SkillDefinition(name=name, description=description, params=params, result_fields=tuple(results))


def parse_component(text: str) -> ComponentModel:
    """Parse a ``*.component.json`` document into a :class:`ComponentModel`."""
    data = _load_document(text)
    _reject_unknown(
        data,
        ("name", "version", "license", "environment", "services", "skills", "technicalData", "nameplate", "documentation"),
        "",
    )

    name = _identifier(_require(data, "name", "", str), "name")
    version = _require(data, "version", "", str)
    if not version:
        raise InvariantError("version", "version must not be empty")
    license_ = _require(data, "license", "", str)
    environment = _optional(data, "environment", "", str, DEFAULT_ENVIRONMENT)

    services = []
    for i, item in enumerate(_optional(data, "services", "", list, [])):
        path = f"services[{i}]"
        _check_kind(item, dict, path)
        _reject_unknown(item, ("name", "direction", "pattern", "messageType"), path)
        sname = _identifier(_require(item, "name", path, str), _join(path, "name"))
        raw_dir = _optional(item, "direction", path, str, Direction.PROVIDES.value)
        try:
            direction = Direction(raw_dir)
        except ValueError:
            raise SchemaError(_join(path, "direction"), f"must be 'provides' or 'requires', got {raw_dir!r}") from None
        services.append(
            ServicePort(
                name=sname,
                direction=direction,
                pattern=_require(item, "pattern", path, str),
                message_type=_require(item, "messageType", path, str),
            )
        )
    seen_services = set()
    for port in services:
        if port.name in seen_services:
            raise InvariantError("services", f"duplicate service name {port.name!r}")
        seen_services.add(port.name)

    skills = tuple(_parse_skill(item, f"skills[{i}]") for i, item in enumerate(_optional(data, "skills", "", list, [])))
    seen_skills = set()
    for skill in skills:
        if skill.name in seen_skills:
            raise InvariantError("skills", f"duplicate skill name {skill.name!r}")
        seen_skills.add(skill.name)

    technical = []
    raw_td = _optional(data, "technicalData", "", dict, {})
    for key, value in raw_td.items():
        path = _join("technicalData", key)
        _identifier(key, path)
        if key in _RESERVED_TECHNICAL_DATA_KEYS:
            raise InvariantError(path, f"{key!r} is set via the dedicated top-level field")
        technical.append((key, _check_kind(value, str, path)))

    raw_np = _require(data, "nameplate", "", dict)
    _reject_unknown(raw_np, ("manufacturer", "productDesignation", "serialNumber", "address"), "nameplate")
    nameplate = Nameplate(
        manufacturer=_require(raw_np, "manufacturer", "nameplate", str),
        product_designation=_require(raw_np, "productDesignation", "nameplate", str),
        serial_number=_optional(raw_np, "serialNumber", "nameplate", str, None),
        address=_optional(raw_np, "address", "nameplate", str, None),
    )

    documentation = []
    for i, item in enumerate(_optional(data, "documentation", "", list, [])):
        path = f"documentation[{i}]"
        _check_kind(item, dict, path)
        _reject_unknown(item, ("title", "uri"), path)
        documentation.append(DocEntry(title=_require(item, "title", path, str), uri=_require(item, "uri", path, str)))

    return ComponentModel(
        name=name,
        version=version,
        license=license_,
        environment=environment,
        services=tuple(services),
        skills=skills,
        technical_data=tuple(technical),
        nameplate=nameplate,
        documentation=tuple(documentation),
    )


def parse_system(text: str, components: Iterable[ComponentModel]) -> SystemModel:
    """Parse a ``*.system.json`` document, resolving references against ``components``."""
    by_name: dict[str, ComponentModel] = {}
    for cm in components:
        if cm.name in by_name and by_name[cm.name] != cm:
            raise InvariantError("components", f"two different components supplied under name {cm.name!r}")
        by_name[cm.name] = cm

    data = _load_document(text)
    _reject_unknown(data, ("name", "components", "taskPlots", "expose"), "")
    name = _identifier(_require(data, "name", "", str), "name")

    instances = []
    for i, item in enumerate(_require(data, "components", "", list)):
        path = f"components[{i}]"
        _check_kind(item, dict, path)
        _reject_unknown(item, ("instance", "component"), path)
        inst = _identifier(_require(item, "instance", path, str), _join(path, "instance"))
        comp = _require(item, "component", path, str)
        if comp not in by_name:
            raise UnresolvedComponent(comp)
        instances.append(ComponentInstance(instance_name=inst, component_name=comp))
    seen_instances = set()
    for inst in instances:
        if inst.instance_name in seen_instances:
            raise InvariantError("components", f"duplicate instance name {inst.instance_name!r}")
        seen_instances.add(inst.instance_name)

    available_skills = {
        skill.name for inst in instances for skill in by_name[inst.component_name].skills
    }

    plots = []
    for i, item in enumerate(_optional(data, "taskPlots", "", list, [])):
        path = f"taskPlots[{i}]"
        _check_kind(item, dict, path)
        _reject_unknown(item, ("name", "description", "skillsUsed", "params"), path)
        pname = _identifier(_require(item, "name", path, str), _join(path, "name"))
        description = _optional(item, "description", path, str, "")
        used = tuple(
            _check_kind(s, str, f"{_join(path, 'skillsUsed')}[{j}]")
            for j, s in enumerate(_optional(item, "skillsUsed", path, list, []))
        )
        for skill in used:
            if skill not in available_skills:
                raise UnknownSkillInTaskPlot(pname, skill)
        plots.append(TaskPlot(name=pname, description=description, skills_used=used, params=_parse_params(item, path)))
    seen_plots = set()
    for plot in plots:
        if plot.name in seen_plots:
            raise InvariantError("taskPlots", f"duplicate task plot name {plot.name!r}")
        seen_plots.add(plot.name)

    expose = None
    if "expose" in data:
        raw = _check_kind(data["expose"], list, "expose")
        plot_names = {p.name for p in plots}
        expose = tuple(_check_kind(s, str, f"expose[{i}]") for i, s in enumerate(raw))
        for entry in expose:
            if entry not in available_skills and entry not in plot_names:
                raise InvariantError("expose", f"{entry!r} is neither a component skill nor a task plot")

    return SystemModel(name=name, instances=tuple(instances), task_plots=tuple(plots), expose=expose)


def load_component_file(path: str | Path) -> ComponentModel:
    return parse_component(Path(path).read_text(encoding="utf-8"))


def load_system_file(path: str | Path, components: Iterable[ComponentModel]) -> SystemModel:
    return parse_system(Path(path).read_text(encoding="utf-8"), components)


def load_component_dir(path: str | Path) -> list[ComponentModel]:
    """Parse every ``*.component.json`` found directly in ``path``, sorted by file name."""
    return [load_component_file(p) for p in sorted(Path(path).glob("*.component.json"))]


# --- serialization back to documents ----------------------------------------


def _param_to_document(spec: ParamSpec) -> dict:
    obj: dict = {"name": spec.name, "type": spec.value_type.value, "required": spec.required}
    if spec.bounds is not None:
        obj["range"] = list(spec.bounds)
    if spec.choices is not None:
        obj["enum"] = list(spec.choices)
    return obj


def component_to_document(cm: ComponentModel) -> dict:
    """Inverse of :func:`parse_component`, with all defaults materialized."""
    nameplate: dict = {"manufacturer": cm.nameplate.manufacturer, "productDesignation": cm.nameplate.product_designation}
    if cm.nameplate.serial_number is not None:
        nameplate["serialNumber"] = cm.nameplate.serial_number
    if cm.nameplate.address is not None:
        nameplate["address"] = cm.nameplate.address
    return {
        "name": cm.name,
        "version": cm.version,
        "license": cm.license,
        "environment": cm.environment,
        "services": [
            {"name": s.name, "direction": s.direction.value, "pattern": s.pattern, "messageType": s.message_type}
            for s in cm.services
        ],
        "skills": [
            {
                "name": s.name,
                "description": s.description,
                "params": [_param_to_document(p) for p in s.params],
                "results": [{"name": n, "type": vt.value} for n, vt in s.result_fields],
            }
            for s in cm.skills
        ],
        "technicalData": dict(cm.technical_data),
        "nameplate": nameplate,
        "documentation": [{"title": d.title, "uri": d.uri} for d in cm.documentation],
    }


def system_to_document(sm: SystemModel) -> dict:
    """Inverse of :func:`parse_system`."""
    doc: dict = {
        "name": sm.name,
        "components": [{"instance": i.instance_name, "component": i.component_name} for i in sm.instances],
        "taskPlots": [
            {
                "name": p.name,
                "description": p.description,
                "skillsUsed": list(p.skills_used),
                "params": [_param_to_document(spec) for spec in p.params],
            }
            for p in sm.task_plots
        ],
    }
    if sm.expose is not None:
        doc["expose"] = list(sm.expose)
    return doc
