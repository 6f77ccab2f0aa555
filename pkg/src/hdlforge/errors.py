"""Exception types raised across the pipeline."""


class ForgeError(Exception):
    pass


class InvariantViolation(ForgeError):
    pass


class MalformedJson(ForgeError):
    pass


class MissingField(ForgeError):
    def __init__(self, name: str) -> None:
        super().__init__(f"missing field {name!r}")
        self.name = name


class ParseError(ForgeError):
    pass


class NoModuleFound(ParseError):
    pass


class UnterminatedModule(ParseError):
    def __init__(self, name: str) -> None:
        super().__init__(f"module {name!r} has no endmodule")
        self.name = name


class UnparseablePortList(ParseError):
    pass


class ToolFailure(ForgeError):
    pass


class ClientUnavailable(ForgeError):
    pass


class StoreUnavailable(ForgeError):
    pass


class ConfigError(ForgeError):
    pass


class StageFailure(ForgeError):
    def __init__(self, stage: str, detail: str) -> None:
        super().__init__(f"{stage}: {detail}")
        self.stage = stage
        self.detail = detail
