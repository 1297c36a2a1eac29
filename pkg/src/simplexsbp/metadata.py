from datetime import datetime, timezone
from pydantic import BaseModel, Field

from simplexsbp import __version__


def _now() -> datetime:
    return datetime.now(timezone.utc)


class ChangeLog(BaseModel):
    time: datetime = Field(default_factory=_now)
    fields: list[str] = Field(default_factory=list, min_length=1)


class Metadata(BaseModel):
    created_at: datetime = Field(default_factory=_now)
    tool_version: str = __version__
    change_logs: list[ChangeLog] = Field(default_factory=list)

    class Config:
        extra = "allow"

    def __setattr__(self, name: str, value: object) -> None:
        if name == "created_at":
            if hasattr(self, name):
                raise ValueError(f"'{name}' field is immutable and cannot be changed.")
        super().__setattr__(name, value)

    def log_change(self, fields: list[str]) -> None:
        self.change_logs.append(ChangeLog(fields=fields))


class Residuals(BaseModel):
    class Config:
        extra = "allow"

    def worst(self) -> float:
        values = [float(v) for v in self.model_dump().values() if isinstance(v, (int, float))]
        return max(values, default=0.0)
