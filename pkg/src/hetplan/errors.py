"""Exception types shared across the package."""


class HetplanError(Exception):
    """Base class for all hetplan errors."""


class CycleError(HetplanError):
    """The workflow graph contains a cycle."""


class ProfileError(HetplanError):
    """A model profile is malformed or inconsistent with the workflow."""


class InstanceError(HetplanError):
    """An instance file or plan file is malformed."""


class ForbiddenRouteError(HetplanError):
    """A cost computation hit a forbidden (downward) tier pair."""

    def __init__(self, edge, tier_from, tier_to):
        self.edge = edge
        self.tier_from = tier_from
        self.tier_to = tier_to
        super().__init__(
            f"edge {edge[0]}->{edge[1]} routes traffic from tier {tier_from} "
            f"down to tier {tier_to}, which is forbidden"
        )


class EnumerationGuardError(HetplanError):
    """The exhaustive search would exceed the configured combination budget."""

    def __init__(self, estimate, limit):
        self.estimate = estimate
        self.limit = limit
        super().__init__(
            f"estimated {estimate} combinations exceeds the enumeration guard ({limit})"
        )
