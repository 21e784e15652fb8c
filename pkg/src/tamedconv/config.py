"""Experiment configuration: schema, validation and object construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .bounds import BoundInputs
from .noise import NoiseOperator, hs_norm
from .scheme import TruncationPolicy
from .spectral import SpectralOperator
from .timegrid import TimeGrid

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing field {where}.{key}")
    return mapping[key]


@dataclass(frozen=True)
class ExperimentConfig:
    operator_spec: dict
    noise_spec: dict
    grid_spec: dict
    projection_spec: dict
    policy_spec: dict
    params: dict
    replications: int
    seed: int
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        if raw.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"schema must be {SCHEMA_VERSION}, got {raw.get('schema')!r}")
        cfg = cls(
            operator_spec=_require(raw, "operator", "config"),
            noise_spec=_require(raw, "noise", "config"),
            grid_spec=_require(raw, "grid", "config"),
            projection_spec=_require(raw, "projections", "config"),
            policy_spec=_require(raw, "policy", "config"),
            params=_require(raw, "params", "config"),
            replications=int(_require(raw, "replications", "config")),
            seed=int(_require(raw, "seed", "config")),
            base_dir=base_dir or Path.cwd(),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} does not contain a mapping")
        return cls.from_dict(raw, base_dir=path.parent)

    # -- constructed objects ------------------------------------------------

    def operator(self) -> SpectralOperator:
        spec = self.operator_spec
        if "eigenvalues" in spec:
            return SpectralOperator(np.asarray(spec["eigenvalues"], dtype=float))
        rule = _require(spec, "rule", "operator")
        n_max = int(_require(spec, "n_max", "operator"))
        if rule == "dirichlet_laplacian":
            return SpectralOperator.dirichlet_laplacian(n_max)
        raise ConfigError(f"unknown operator.rule {rule!r}")

    def noise(self) -> NoiseOperator:
        spec = self.noise_spec
        beta = float(_require(spec, "beta", "noise"))
        kind = _require(spec, "type", "noise")
        if kind == "diagonal":
            n_max = self.operator().n_modes
            return NoiseOperator.power_law(
                n_max, float(spec.get("c", 1.0)), float(_require(spec, "q", "noise")), beta)
        if kind == "dense":
            path = self.base_dir / _require(spec, "file", "noise")
            return NoiseOperator(np.loadtxt(path, delimiter=",", ndmin=2), beta)
        raise ConfigError(f"unknown noise.type {kind!r}")

    def grids(self) -> list:
        spec = self.grid_spec
        kind = _require(spec, "type", "grid")
        T = self.horizon
        if kind == "uniform":
            ms = spec["M"] if isinstance(spec.get("M"), list) else [spec.get("M")]
            if not ms or any(m is None for m in ms):
                raise ConfigError("grid.M must be an integer or list of integers")
            return [TimeGrid.uniform(T, int(m)) for m in ms]
        if kind == "explicit":
            return [TimeGrid(tuple(_require(spec, "nodes", "grid")))]
        raise ConfigError(f"unknown grid.type {kind!r}")

    def projections(self) -> tuple:
        spec = self.projection_spec
        ns = spec.get("N")
        ks = spec.get("K")
        ns = ns if isinstance(ns, list) else [ns]
        ks = ks if isinstance(ks, list) else [ks]
        if any(v is None for v in ns) or any(v is None for v in ks):
            raise ConfigError("projections.N and projections.K are required")
        return [int(v) for v in ns], [int(v) for v in ks]

    def policy(self) -> TruncationPolicy:
        spec = self.policy_spec
        kind = _require(spec, "kind", "policy")
        try:
            return TruncationPolicy(
                kind=kind,
                q=float(spec.get("q", 0.0)),
                c=float(spec.get("c", 1.0)),
                exponent=float(spec.get("exponent", 0.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"policy: {exc}") from exc

    @property
    def horizon(self) -> float:
        return float(self.params.get("T", 1.0))

    def bound_inputs(self, mesh: float, gamma: Optional[float] = None,
                     rho: Optional[float] = None) -> BoundInputs:
        op = self.operator()
        B = self.noise()
        pr = self.params
        try:
            return BoundInputs(
                p=float(pr.get("p", 2.0)),
                beta=B.beta,
                gamma=float(pr.get("gamma", 0.0)) if gamma is None else gamma,
                eta=float(pr.get("eta", 0.0)),
                rho=float(pr.get("rho", 0.0)) if rho is None else rho,
                T=self.horizon,
                C_chi=float(pr.get("C_chi", 1.0)),
                hs_beta=hs_norm(B, op, B.beta),
                hs_zero=hs_norm(B, op, 0.0),
                sup_lambda=op.sup_eigenvalue,
                mesh=mesh,
            )
        except ValueError as exc:
            raise ConfigError(f"params: {exc}") from exc

    def validate(self) -> None:
        op = self.operator()
        B = self.noise()
        if B.n_state_modes != op.n_modes:
            raise ConfigError("noise: row count must match operator.n_max")
        ns, ks = self.projections()
        for n in ns:
            if not 1 <= n <= op.n_modes:
                raise ConfigError(f"projections.N: {n} outside 1..{op.n_modes}")
        for k in ks:
            if not 0 <= k <= B.n_noise_modes:
                raise ConfigError(f"projections.K: {k} outside 0..{B.n_noise_modes}")
        self.grids()
        self.policy()
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        grids = self.grids()
        self.bound_inputs(mesh=float(max(g.mesh() for g in grids)))
