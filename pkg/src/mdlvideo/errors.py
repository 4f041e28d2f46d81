"""Exception types shared across the package."""


class MdlError(Exception):
    """Base class for all package errors."""


class DimensionError(MdlError):
    """An operand has the wrong rank, shape, or channel count for an op."""

    def __init__(self, op: str, detail: str):
        self.op = op
        self.detail = detail
        super().__init__(f"{op}: {detail}")


class ContractError(MdlError):
    """An argument violates an op's contract (non-scalar loss, bad label, ...)."""


class RoutingError(MdlError):
    """A batch was routed to a domain the network does not know."""


class ConfigError(MdlError):
    """Invalid configuration: unknown keys, bad values, impossible requests."""


class NanLossError(MdlError):
    """Training aborted because a loss became non-finite."""

    def __init__(self, domain_id: int, update_index: int, value: float):
        self.domain_id = domain_id
        self.update_index = update_index
        self.value = value
        super().__init__(
            f"non-finite loss {value!r} in domain {domain_id} "
            f"at update {update_index}"
        )
