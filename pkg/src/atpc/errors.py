class AtpcError(Exception):
    """Base class for all errors raised by the toolkit."""


class ParseError(AtpcError):
    """Malformed input file. The message names the file and line."""

    def __init__(self, path, lineno, detail):
        self.path = str(path)
        self.lineno = lineno
        self.detail = detail
        where = f"{self.path}:{lineno}" if lineno is not None else self.path
        super().__init__(f"{where}: {detail}")
