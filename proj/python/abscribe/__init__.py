"""Documents with in-place text variations and reusable prompt buttons."""


class AbscribeError(Exception):
    """Raised for every engine error; ``code`` is the snake_case error name."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


from ._core import Service, load_workspace, run_cli  # noqa: E402

__all__ = ["AbscribeError", "Service", "load_workspace", "run_cli"]
