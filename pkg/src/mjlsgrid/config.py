"""Model configuration: JSON loading, validation, and serialization.

A model file declares the grid, the transition kernel (block
probabilities or a raw density matrix), the coefficient fields, and
optionally an initial density and default run parameters.  Validation
runs in two passes: structural (JSON schema, errors carry a JSON
pointer) and semantic (kernel rows integrate to one, D'D = I, the
initial density is a probability density).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .fields import (
    InitialDensity,
    KernelDensity,
    MatrixField,
    ModeGrid,
    build_grid,
    build_markov_kernel_from_blocks,
    eval_affine_field,
    eval_scaled_field,
    per_component_constant,
)
from .system import SystemModel

__all__ = ["RunConfig", "load_config", "save_config", "bundled_config_path", "BUNDLED_CONFIGS"]

BUNDLED_CONFIGS = ("solar", "game2d")


@dataclass(frozen=True)
class RunConfig:
    """Run parameters; file-level defaults, overridden by CLI flags."""

    problem_path: str
    out_dir: str = "out"
    gamma: float | None = None
    tol: float | None = None
    max_iter: int | None = None
    horizon: int | None = None
    paths: int | None = None
    seed: int | None = None
    grid_cells: int | None = None

    def merged(self, **overrides) -> "RunConfig":
        updates = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **updates)


def bundled_config_path(name: str) -> Path:
    """Filesystem path of one of the shipped example configurations."""
    if name not in BUNDLED_CONFIGS:
        raise ConfigError(f"unknown bundled config {name!r}; available: {BUNDLED_CONFIGS}")
    return Path(str(resources.files("mjlsgrid").joinpath(f"configs/{name}.json")))


def _schema() -> dict:
    with resources.files("mjlsgrid").joinpath("schema/model.schema.json").open("r") as fh:
        return json.load(fh)


def _pointer(err: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def _matrix(entry, pointer: str, shape=None) -> np.ndarray:
    try:
        mat = np.atleast_2d(np.asarray(entry, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{pointer}: not a numeric matrix ({exc})") from exc
    if mat.ndim != 2:
        raise ConfigError(f"{pointer}: expected a matrix, got array of rank {mat.ndim}")
    if shape is not None and mat.shape != shape:
        raise ConfigError(f"{pointer}: expected shape {shape}, got {mat.shape}")
    return mat


def _build_field(grid: ModeGrid, name: str, spec: dict) -> MatrixField:
    ptr = f"/fields/{name}"
    kind = spec["kind"]
    if kind == "cells":
        per_cell = spec.get("per_cell")
        if per_cell is None:
            raise ConfigError(f"{ptr}: kind 'cells' needs a 'per_cell' array")
        if len(per_cell) != grid.M:
            raise ConfigError(f"{ptr}/per_cell: expected {grid.M} matrices, got {len(per_cell)}")
        mats = [_matrix(m, f"{ptr}/per_cell/{i}") for i, m in enumerate(per_cell)]
        try:
            return MatrixField(grid, np.stack(mats))
        except ValueError as exc:
            raise ConfigError(f"{ptr}: {exc}") from exc
    per_comp = spec.get("per_component")
    if per_comp is None:
        raise ConfigError(f"{ptr}: kind {kind!r} needs a 'per_component' array")
    if len(per_comp) != grid.n_components:
        raise ConfigError(
            f"{ptr}/per_component: expected {grid.n_components} entries, got {len(per_comp)}"
        )
    try:
        if kind == "affine":
            pairs = []
            for ci, entry in enumerate(per_comp):
                if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                    raise ConfigError(
                        f"{ptr}/per_component/{ci}: affine entry must be a [M1, M2] pair"
                    )
                pairs.append(
                    (_matrix(entry[0], f"{ptr}/per_component/{ci}/0"),
                     _matrix(entry[1], f"{ptr}/per_component/{ci}/1"))
                )
            return eval_affine_field(grid, pairs)
        if kind == "constant":
            return per_component_constant(
                grid, [_matrix(m, f"{ptr}/per_component/{ci}") for ci, m in enumerate(per_comp)]
            )
        if kind == "scaled_by_t":
            return eval_scaled_field(
                grid, [_matrix(m, f"{ptr}/per_component/{ci}") for ci, m in enumerate(per_comp)]
            )
    except ValueError as exc:
        raise ConfigError(f"{ptr}: {exc}") from exc
    raise ConfigError(f"{ptr}/kind: unknown field kind {kind!r}")


def _build_initial_density(grid: ModeGrid, spec: dict | None) -> InitialDensity:
    if spec is None or spec["kind"] == "uniform":
        return InitialDensity.uniform(grid)
    values = spec.get("values")
    if values is None:
        raise ConfigError(f"/initial_density: kind {spec['kind']!r} needs 'values'")
    try:
        if spec["kind"] == "per_component":
            if len(values) != grid.n_components:
                raise ConfigError(
                    f"/initial_density/values: expected {grid.n_components} entries, got {len(values)}"
                )
            dens = np.asarray(values, dtype=float)[grid.comp_of]
        else:  # cells
            if len(values) != grid.M:
                raise ConfigError(
                    f"/initial_density/values: expected {grid.M} entries, got {len(values)}"
                )
            dens = np.asarray(values, dtype=float)
        return InitialDensity(grid, dens)
    except ValueError as exc:
        raise ConfigError(f"/initial_density: {exc}") from exc


def model_from_dict(doc: dict, grid_cells: int | None = None) -> SystemModel:
    """Build and validate a SystemModel from a parsed configuration."""
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ConfigError(f"{_pointer(first) or '/'}: {first.message}")

    comp_specs = doc["grid"]["components"]
    if grid_cells is not None:
        comp_specs = [{**c, "cells": int(grid_cells)} for c in comp_specs]
        if any(spec.get("kind") == "cells" for spec in doc["fields"].values()):
            raise ConfigError("/grid: cannot override cell counts when fields are given per cell")
        init = doc.get("initial_density")
        if init is not None and init.get("kind") == "cells":
            raise ConfigError("/grid: cannot override cell counts with a per-cell initial density")
    try:
        grid = build_grid([(c["label"], c["interval"], c["cells"]) for c in comp_specs])
    except ValueError as exc:
        raise ConfigError(f"/grid: {exc}") from exc

    kspec = doc["kernel"]
    try:
        if "block_probs" in kspec:
            kernel = build_markov_kernel_from_blocks(
                grid, _matrix(kspec["block_probs"], "/kernel/block_probs")
            )
        else:
            g = _matrix(kspec["density"], "/kernel/density", shape=(grid.M, grid.M))
            kernel = KernelDensity(grid, g)
    except ValueError as exc:
        raise ConfigError(f"/kernel: {exc}") from exc

    fields = {name: _build_field(grid, name, spec) for name, spec in doc["fields"].items()}
    A = fields["A"]
    C = fields["C"]
    n = A.rows
    B = fields.get("B")
    D = fields.get("D")
    if B is None:
        m = D.cols if D is not None else 1
        B = MatrixField.zeros(grid, n, m)
    if D is None:
        D = MatrixField.identity(grid, B.cols)
    F = fields.get("F", MatrixField.zeros(grid, n, 1))
    nu0 = _build_initial_density(grid, doc.get("initial_density"))
    try:
        return SystemModel(grid=grid, kernel=kernel, nu0=nu0, A=A, B=B, C=C, D=D, F=F)
    except ValueError as exc:
        raise ConfigError(f"/fields: {exc}") from exc


def load_config(path: str | Path, grid_cells: int | None = None) -> tuple[SystemModel, RunConfig]:
    """Load a model file (or bundled name) plus its run-parameter defaults."""
    if isinstance(path, str) and path in BUNDLED_CONFIGS:
        path = bundled_config_path(path)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    defaults = dict(doc.get("defaults", {}))
    if grid_cells is not None:
        defaults["grid_cells"] = grid_cells
    model = model_from_dict(doc, grid_cells=defaults.get("grid_cells"))
    run = RunConfig(problem_path=str(path), **defaults)
    return model, run


def save_config(model: SystemModel, path: str | Path) -> None:
    """Serialize a model with per-cell field data; reloading is bit-exact."""
    grid = model.grid
    doc = {
        "grid": {
            "components": [
                {"label": c.label, "interval": [c.lo, c.hi], "cells": c.cells}
                for c in grid.components
            ]
        },
        "kernel": {"density": model.kernel.g.tolist()},
        "fields": {
            name: {"kind": "cells", "per_cell": getattr(model, name).values.tolist()}
            for name in ("A", "B", "C", "D", "F")
        },
        "initial_density": {"kind": "cells", "values": model.nu0.values.tolist()},
    }
    Path(path).write_text(json.dumps(doc))
