"""Exception types shared across the pipeline."""


class GripperDesignError(Exception):
    """Base class for all errors raised by this package."""


class MeshLoadError(GripperDesignError):
    """File missing, unreadable, or not parseable under the declared format."""


class MalformedGeometryError(GripperDesignError):
    """Geometry violates mesh invariants (bad indices, non-finite coords, no faces)."""


class DegenerateInputError(GripperDesignError):
    """Point set too degenerate for the requested fit (coplanar/collinear)."""


class SegmentationError(GripperDesignError):
    """Segmentation stage cannot proceed (e.g. no ray ever hit the mesh)."""


class TaskError(GripperDesignError):
    """Assembly task file is inconsistent or references unknown data."""


class UngraspableComponentError(GripperDesignError):
    """No collision-free grasp exists for a component in some operation."""

    def __init__(self, component_id: str, operation_index: int, reason: str = ""):
        self.component_id = component_id
        self.operation_index = operation_index
        msg = f"component '{component_id}' is not graspable in operation {operation_index}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class InfeasibleCoverError(GripperDesignError):
    """Some component is not covered by any sampled gripper parameter set."""

    def __init__(self, component_ids):
        self.component_ids = list(component_ids)
        super().__init__(
            "no sampled gripper covers component(s): " + ", ".join(self.component_ids)
        )
