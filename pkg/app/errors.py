"""Foutklassen voor planforge.

Elke fout draagt een stabiele code; de klasse bepaalt de exit code van de CLI.
"""


class PlanforgeError(Exception):
    """Basisfout met een stabiele code en optionele details."""

    exit_code = 1

    def __init__(self, code, message="", **details):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message
        self.details = details

    def to_dict(self):
        data = {"error": self.code}
        if self.message:
            data["message"] = self.message
        data.update(self.details)
        return data


class DataError(PlanforgeError):
    """Data- of validatiefout (exit 1)."""

    exit_code = 1


class UsageError(PlanforgeError):
    """Verkeerd gebruik of ongeldige configuratie (exit 2)."""

    exit_code = 2


class StorageError(PlanforgeError):
    """Lees- of schrijffout op schijf (exit 3)."""

    exit_code = 3


class SimulatedCrash(Exception):
    """Geïnjecteerde crash voor fault-injection tests; geen opruimwerk."""

    def __init__(self, where):
        super().__init__(where)
        self.where = where
