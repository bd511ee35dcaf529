"""Exception hierarchy shared across the package."""


class RelsynthError(Exception):
    """Base class for all package errors."""


class ConfigError(RelsynthError):
    """Malformed or missing configuration (dataset config, endpoint config)."""


class DataValidationError(RelsynthError):
    """Dataset content violates its declared schema or relationships."""


class DanglingForeignKeyError(DataValidationError):
    def __init__(self, table: str, column: str, value: str):
        self.table = table
        self.column = column
        self.value = value
        super().__init__(
            f"foreign key {table}.{column} = {value!r} does not resolve to any parent row"
        )


class RelationshipCycleError(DataValidationError):
    def __init__(self, detail: str):
        super().__init__(f"relationship graph is not a tree: {detail}")


class SchemaViolation(RelsynthError):
    """A generated sample does not conform to the compiled entity schema."""

    def __init__(self, reasons):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons) or "schema violation")


class EndpointError(RelsynthError):
    """Transport-level failure talking to the completion endpoint."""


class SchemaRejectedError(EndpointError):
    """The endpoint refused the structured-output schema itself."""


class StructuredOutputViolation(RelsynthError):
    """Endpoint returned content that is not JSON despite a schema constraint."""


class SpecHashMismatchError(RelsynthError):
    """Artifacts produced under different discretization specs were mixed."""


class PromptBudgetError(RelsynthError):
    """Prompt exceeds the context budget even with all references dropped."""
