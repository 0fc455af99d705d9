"""IFC4 element classes this package can instantiate.

Each entry lists the attributes that follow the eight inherited from
IfcElement (GlobalId ... Tag), in schema order.
"""

ELEMENT_TAIL_ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "IfcBeam": ("PredefinedType",),
    "IfcBuildingElementProxy": ("PredefinedType",),
    "IfcChimney": ("PredefinedType",),
    "IfcColumn": ("PredefinedType",),
    "IfcCovering": ("PredefinedType",),
    "IfcCurtainWall": ("PredefinedType",),
    "IfcDoor": ("OverallHeight", "OverallWidth", "PredefinedType",
                "OperationType", "UserDefinedOperationType"),
    "IfcFooting": ("PredefinedType",),
    "IfcFurniture": ("PredefinedType",),
    "IfcGeographicElement": ("PredefinedType",),
    "IfcMember": ("PredefinedType",),
    "IfcPile": ("PredefinedType", "ConstructionType"),
    "IfcPlate": ("PredefinedType",),
    "IfcRailing": ("PredefinedType",),
    "IfcRamp": ("PredefinedType",),
    "IfcRampFlight": ("PredefinedType",),
    "IfcRoof": ("PredefinedType",),
    "IfcShadingDevice": ("PredefinedType",),
    "IfcSlab": ("PredefinedType",),
    "IfcStair": ("PredefinedType",),
    "IfcStairFlight": ("PredefinedType",),
    "IfcTransportElement": ("PredefinedType",),
    "IfcWall": ("PredefinedType",),
    "IfcWindow": ("OverallHeight", "OverallWidth", "PredefinedType",
                  "PartitioningType", "UserDefinedPartitioningType"),
}

PROXY_CLASS = "IfcBuildingElementProxy"

KNOWN_CLASSES = frozenset(ELEMENT_TAIL_ATTRIBUTES)


def has_predefined_type(ifc_class: str) -> bool:
    return "PredefinedType" in ELEMENT_TAIL_ATTRIBUTES[ifc_class]


def canonical_class_name(name: str) -> str | None:
    """Case-insensitive lookup returning the schema spelling, or None."""
    lowered = name.lower()
    for cls in KNOWN_CLASSES:
        if cls.lower() == lowered:
            return cls
    return None
