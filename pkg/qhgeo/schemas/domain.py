"""
Pydantic schemas for domain specification files.
"""
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

DomainKind = Literal["bitmap-file", "square", "disk", "annulus", "product-3d", "custom-union"]


class DomainSpec(BaseModel):
    """Parametric or file-backed description of a bounded open set."""

    model_config = ConfigDict(extra="forbid")

    kind: DomainKind
    # square / box: x0, x1, y0, y1 (, z0, z1)
    bounds: Optional[List[float]] = None
    # disk / annulus
    center: Optional[List[float]] = None
    radius: Optional[float] = Field(default=None, gt=0)
    inner_radius: Optional[float] = Field(default=None, gt=0)
    # bitmap-file
    path: Optional[Path] = None
    # product-3d
    slice: Optional["DomainSpec"] = None
    z_range: Optional[List[float]] = None
    # custom-union
    boxes: List[List[float]] = Field(default_factory=list)
    disks: List[List[float]] = Field(default_factory=list)
    allow_pruning: bool = False

    @model_validator(mode="after")
    def check_parameters(self) -> "DomainSpec":
        """Each kind must carry parameters describing a nonempty bounded set."""
        if self.kind == "square":
            b = self.bounds
            if b is None or len(b) not in (4, 6):
                raise ValueError("square needs bounds = x0,x1,y0,y1[,z0,z1]")
            for lo, hi in zip(b[0::2], b[1::2]):
                if not lo < hi:
                    raise ValueError("square bounds must satisfy lo < hi")
        elif self.kind in ("disk", "annulus"):
            if self.center is None or len(self.center) != 2 or self.radius is None:
                raise ValueError(f"{self.kind} needs center = x,y and radius")
            if self.kind == "annulus":
                if self.inner_radius is None or not self.inner_radius < self.radius:
                    raise ValueError("annulus needs 0 < inner_radius < radius")
        elif self.kind == "bitmap-file":
            if self.path is None:
                raise ValueError("bitmap-file needs path")
        elif self.kind == "product-3d":
            if self.slice is None or self.z_range is None or len(self.z_range) != 2:
                raise ValueError("product-3d needs slice and z_range = z0,z1")
            if self.slice.kind in ("product-3d", "bitmap-file"):
                raise ValueError("product-3d slice must be a parametric planar set")
            if not self.z_range[0] < self.z_range[1]:
                raise ValueError("z_range must satisfy z0 < z1")
        elif self.kind == "custom-union":
            if not self.boxes and not self.disks:
                raise ValueError("custom-union needs boxes or disks")
            for box in self.boxes:
                if len(box) != 4 or not (box[0] < box[1] and box[2] < box[3]):
                    raise ValueError(f"bad box {box}")
            for disk in self.disks:
                if len(disk) != 3 or disk[2] <= 0:
                    raise ValueError(f"bad disk {disk}")
        return self


class BitmapSidecar(BaseModel):
    """Origin and spacing of a bitmap; origin is the centre of pixel (row=last, col=0)."""

    origin: List[float] = Field(min_length=2, max_length=2)
    spacing: float = Field(gt=0)


DomainSpec.model_rebuild()
