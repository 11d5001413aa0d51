"""Deterministic mapping from component/system models to AAS environments.

A software component maps to a shell with the six data sheet submodels
(ComponentDefinition, Capabilities, TechnicalData, Operations, Nameplate,
Documentation). A robot system maps to a shell with BillOfMaterials,
TechnicalData, Operations, Nameplate, Documentation and Capabilities, where
Capabilities is the union of all component skills plus the task plots.

Equal inputs always produce structurally equal environments, so serialized
packages are byte-stable. The accumulated runtime metrics submodel
(OperationalData) is attached separately by :func:`refresh_operational_data`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .commands import TelemetryLedger
from .ingest import ComponentModel, SystemModel, TaskPlot
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
)

COMPONENT_SUBMODELS = ("ComponentDefinition", "Capabilities", "TechnicalData", "Operations", "Nameplate", "Documentation")
SYSTEM_SUBMODELS = ("BillOfMaterials", "TechnicalData", "Operations", "Nameplate", "Documentation", "Capabilities")
OPERATIONAL_DATA = "OperationalData"

GENERIC_OPERATIONS = ("pushCapability", "getStatus", "getOutput", "deleteCommand")

_MIME_BY_EXTENSION = {
    ".pdf": "application/pdf",
    ".md": "text/markdown",
    ".html": "text/html",
    ".htm": "text/html",
    ".txt": "text/plain",
    ".json": "application/json",
    ".xml": "application/xml",
}


class NoSystemShell(Exception):
    """The environment does not contain a robot system shell."""


class ConflictingSkillSchemas(Exception):
    """Two capabilities share one name but disagree on their schemas."""

    def __init__(self, name: str):
        super().__init__(f"conflicting schemas for capability {name!r}")
        self.name = name


@dataclass(frozen=True)
class GenerationReport:
    shell_id: str
    submodels_emitted: tuple[str, ...]
    warnings: tuple[str, ...] = ()


def component_shell_id(name: str) -> str:
    return f"urn:aas:component:{name}"


def system_shell_id(name: str) -> str:
    return f"urn:aas:system:{name}"


def submodel_id(shell_id: str, id_short: str) -> str:
    # Derivable and collision-free: the owning shell id is globally unique.
    return f"{shell_id}/submodels/{id_short}"


def _semantic_id(id_short: str) -> str:
    return f"urn:aas:semantics:submodel:{id_short}"


def _submodel(shell_id: str, id_short: str, elements: Sequence[SubmodelElement]) -> Submodel:
    return Submodel(
        id=submodel_id(shell_id, id_short),
        id_short=id_short,
        semantic_id=_semantic_id(id_short),
        elements=tuple(elements),
    )


def _generic_operations() -> tuple[OperationDecl, ...]:
    s = ValueType.STRING
    return (
        OperationDecl("pushCapability", in_params=(("capability", s), ("params", s)), out_params=(("commandId", s),)),
        OperationDecl("getStatus", in_params=(("commandId", s),), out_params=(("state", s),)),
        OperationDecl("getOutput", in_params=(("commandId", s),), out_params=(("outcome", s), ("details", s))),
        OperationDecl("deleteCommand", in_params=(("commandId", s),), out_params=(("state", s),)),
    )


def _sanitize_id_short(text: str, taken: set[str]) -> str:
    cleaned = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in text)
    if not cleaned or not cleaned[0].isalpha():
        cleaned = "doc_" + cleaned
    candidate = cleaned
    n = 2
    while candidate in taken:
        candidate = f"{cleaned}_{n}"
        n += 1
    taken.add(candidate)
    return candidate


def _mime_for(uri: str) -> str:
    lowered = uri.lower()
    for ext, mime in _MIME_BY_EXTENSION.items():
        if lowered.endswith(ext):
            return mime
    return "application/octet-stream"


def _documentation_elements(cm: ComponentModel) -> tuple[SubmodelElement, ...]:
    taken: set[str] = set()
    return tuple(
        FileRef(id_short=_sanitize_id_short(entry.title, taken), mime_type=_mime_for(entry.uri), relative_path=entry.uri)
        for entry in cm.documentation
    )


def _nameplate_elements(cm: ComponentModel) -> tuple[SubmodelElement, ...]:
    elements: list[SubmodelElement] = [
        Property("manufacturer", ValueType.STRING, cm.nameplate.manufacturer),
        Property("productDesignation", ValueType.STRING, cm.nameplate.product_designation),
    ]
    if cm.nameplate.serial_number is not None:
        elements.append(Property("serialNumber", ValueType.STRING, cm.nameplate.serial_number))
    if cm.nameplate.address is not None:
        elements.append(Property("address", ValueType.STRING, cm.nameplate.address))
    return tuple(elements)


def gen_component_aas(cm: ComponentModel) -> AasEnvironment:
    """Build the component data sheet: one shell with the six fixed submodels."""
    shell_id = component_shell_id(cm.name)

    definition = tuple(
        Collection(
            id_short=port.name,
            elements=(
                Property("direction", ValueType.STRING, port.direction.value),
                Property("pattern", ValueType.STRING, port.pattern),
                Property("messageType", ValueType.STRING, port.message_type),
            ),
        )
        for port in cm.services
    )

    capabilities = tuple(
        CapabilityDecl(id_short=skill.name, description=skill.description, param_schema=skill.params)
        for skill in cm.skills
    )

    technical: list[SubmodelElement] = [
        Property("license", ValueType.STRING, cm.license),
        Property("environment", ValueType.STRING, cm.environment),
    ]
    technical.extend(Property(key, ValueType.STRING, value) for key, value in cm.technical_data)

    submodels = (
        _submodel(shell_id, "ComponentDefinition", definition),
        _submodel(shell_id, "Capabilities", capabilities),
        _submodel(shell_id, "TechnicalData", technical),
        _submodel(shell_id, "Operations", _generic_operations()),
        _submodel(shell_id, "Nameplate", _nameplate_elements(cm)),
        _submodel(shell_id, "Documentation", _documentation_elements(cm)),
    )
    shell = Shell(
        id=shell_id,
        id_short=cm.name,
        asset_kind=AssetKind.SOFTWARE_COMPONENT,
        submodel_refs=tuple(sm.id for sm in submodels),
    )
    return AasEnvironment(shells=(shell,), submodels=submodels)


def merge_capabilities(
    components: Sequence[ComponentModel], task_plots: Sequence[TaskPlot]
) -> tuple[tuple[CapabilityDecl, ...], list[str]]:
    """Union of all component skills plus the task plots, in first-seen order.

    Same-named skills with structurally identical parameter schemas collapse
    to one entry and produce a warning; diverging schemas (or a task plot
    colliding with a skill name) raise :class:`ConflictingSkillSchemas`.
    """
    decls: dict[str, CapabilityDecl] = {}
    warnings: list[str] = []
    for cm in components:
        for skill in cm.skills:
            existing = decls.get(skill.name)
            if existing is None:
                decls[skill.name] = CapabilityDecl(skill.name, skill.description, skill.params)
            elif existing.param_schema == skill.params:
                warnings.append(f"skill {skill.name!r} is defined by several components; deduplicated")
            else:
                raise ConflictingSkillSchemas(skill.name)
    for plot in task_plots:
        if plot.name in decls:
            raise ConflictingSkillSchemas(plot.name)
        decls[plot.name] = CapabilityDecl(plot.name, plot.description, plot.params)
    return tuple(decls.values()), warnings


def _distinct_components(sm: SystemModel, components: Iterable[ComponentModel]) -> list[ComponentModel]:
    by_name = {cm.name: cm for cm in components}
    ordered: list[ComponentModel] = []
    seen: set[str] = set()
    for inst in sm.instances:
        if inst.component_name in seen:
            continue
        seen.add(inst.component_name)
        cm = by_name.get(inst.component_name)
        if cm is None:
            raise KeyError(f"component {inst.component_name!r} not supplied")
        ordered.append(cm)
    return ordered


def gen_system_aas(sm: SystemModel, components: Iterable[ComponentModel]) -> AasEnvironment:
    """Build the system data sheet: one robot system shell with the six fixed submodels."""
    components = list(components)
    shell_id = system_shell_id(sm.name)
    by_name = {cm.name: cm for cm in components}
    used = _distinct_components(sm, components)

    bom = tuple(
        Collection(
            id_short=inst.instance_name,
            elements=(
                Property("component", ValueType.STRING, inst.component_name),
                Property("version", ValueType.STRING, by_name[inst.component_name].version),
                Property("license", ValueType.STRING, by_name[inst.component_name].license),
            ),
        )
        for inst in sm.instances
    )

    licenses = ", ".join(sorted({cm.license for cm in used})) if used else ""
    technical = (
        Property("componentCount", ValueType.INTEGER, str(len(sm.instances))),
        Property("taskPlotCount", ValueType.INTEGER, str(len(sm.task_plots))),
        Property("licenses", ValueType.STRING, licenses),
    )

    capabilities, _warnings = merge_capabilities(used, sm.task_plots)
    if sm.expose is not None:
        exposed = set(sm.expose)
        capabilities = tuple(decl for decl in capabilities if decl.id_short in exposed)

    submodels = (
        _submodel(shell_id, "BillOfMaterials", bom),
        _submodel(shell_id, "TechnicalData", technical),
        _submodel(shell_id, "Operations", _generic_operations()),
        _submodel(shell_id, "Nameplate", (Property("productDesignation", ValueType.STRING, sm.name),)),
        _submodel(shell_id, "Documentation", ()),
        _submodel(shell_id, "Capabilities", capabilities),
    )
    shell = Shell(
        id=shell_id,
        id_short=sm.name,
        asset_kind=AssetKind.ROBOT_SYSTEM,
        submodel_refs=tuple(s.id for s in submodels),
    )
    return AasEnvironment(shells=(shell,), submodels=submodels)


def _format_decimal(value: float) -> str:
    return repr(float(value))


def refresh_operational_data(env: AasEnvironment, ledger: TelemetryLedger) -> AasEnvironment:
    """Return ``env`` with the OperationalData submodel rebuilt from ``ledger``.

    One statistics collection is emitted per capability of the system shell
    (all zero when the skill never ran), plus entries for any ledger skills
    not listed there. Raises :class:`NoSystemShell` if the environment has no
    robot system shell.
    """
    system = None
    for shell in env.shells:
        if shell.asset_kind is AssetKind.ROBOT_SYSTEM:
            system = shell
            break
    if system is None:
        raise NoSystemShell("environment has no robot system shell")

    skill_names: list[str] = []
    for sm in env.submodels_of(system):
        if sm.id_short == "Capabilities":
            skill_names = [el.id_short for el in sm.elements if isinstance(el, CapabilityDecl)]
            break
    for extra in sorted(ledger.per_skill):
        if extra not in skill_names:
            skill_names.append(extra)

    elements: list[SubmodelElement] = [
        Property("kilometersTravelled", ValueType.DECIMAL, _format_decimal(ledger.total_distance_meters / 1000.0)),
        Property("hoursOfOperation", ValueType.DECIMAL, _format_decimal(ledger.hours_of_operation())),
    ]
    for name in skill_names:
        stats = ledger.per_skill.get(name)
        count = stats.count if stats else 0
        success = stats.success_count if stats else 0
        error = stats.error_count if stats else 0
        duration = stats.total_duration_seconds if stats else 0.0
        rate = success / count if count else 0.0
        mean = duration / count if count else 0.0
        elements.append(
            Collection(
                id_short=name,
                elements=(
                    Property("count", ValueType.INTEGER, str(count)),
                    Property("successCount", ValueType.INTEGER, str(success)),
                    Property("errorCount", ValueType.INTEGER, str(error)),
                    Property("successRate", ValueType.DECIMAL, _format_decimal(rate)),
                    Property("meanDurationSeconds", ValueType.DECIMAL, _format_decimal(mean)),
                ),
            )
        )

    od = _submodel(system.id, OPERATIONAL_DATA, elements)
    submodels = list(env.submodels)
    for i, sm in enumerate(submodels):
        if sm.id == od.id:
            submodels[i] = od
            break
    else:
        submodels.append(od)

    shells = list(env.shells)
    if od.id not in system.submodel_refs:
        shells[shells.index(system)] = replace(system, submodel_refs=system.submodel_refs + (od.id,))
    return AasEnvironment(shells=tuple(shells), submodels=tuple(submodels))


def generation_report(env: AasEnvironment, warnings: Sequence[str] = ()) -> GenerationReport:
    shell = env.shells[0]
    return GenerationReport(
        shell_id=shell.id,
        submodels_emitted=tuple(sm.id_short for sm in env.submodels_of(shell)),
        warnings=tuple(warnings),
    )


def capability_schemas(env: AasEnvironment) -> dict[str, tuple[ParamSpec, ...]]:
    """Commandable capabilities of the environment, as a name-to-schema map.

    The robot system shell wins when present; otherwise a sole shell is used.
    An empty map means nothing is commandable.
    """
    shell = None
    for candidate in env.shells:
        if candidate.asset_kind is AssetKind.ROBOT_SYSTEM:
            shell = candidate
            break
    if shell is None and len(env.shells) == 1:
        shell = env.shells[0]
    if shell is None:
        return {}
    for sm in env.submodels_of(shell):
        if sm.id_short == "Capabilities":
            return {el.id_short: el.param_schema for el in sm.elements if isinstance(el, CapabilityDecl)}
    return {}
