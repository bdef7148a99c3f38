"""
Experiment configuration.

A configuration is one JSON (or json5) document validated by the models below;
unknown keys are rejected. Command-line flags override single keys.
"""

from typing import Literal, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

import cslab.file
import cslab.log
from cslab.errors import ValidationError
from cslab.sampling import LevelScheme
from cslab.wavelet import WaveletSystem

_logger = cslab.log.internal_logger()


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WaveletConfig(_Strict):
    nu: int = Field(default=4, ge=1, description="vanishing moments.")
    j0: int = Field(default=4, ge=0, description="coarsest scale J0.")
    family: Literal["minimum-phase", "symlet", "db", "sym"] = "minimum-phase"


class SchemeConfig(_Strict):
    N: Optional[list[int]] = Field(default=None, description="sampling bandwidths, defaults to M.")
    m: Optional[list[int]] = Field(default=None, description="local sample counts, defaults to full sampling.")
    M: list[int] = Field(description="sparsity bandwidths.")
    s: Optional[list[int]] = Field(default=None, description="local sparsities, defaults to 1 per level.")
    r0: int = Field(default=0, ge=0, description="saturated leading levels.")
    q: float = Field(default=0.0, ge=0, description="last level exponent of the allocation formula.")
    K: Optional[int] = Field(default=None, ge=1, description="data fidelity bandwidth, defaults to M_r.")


class WeightsConfig(_Strict):
    mode: Literal["unweighted", "inverse-sqrt-s", "explicit", "recommended"] = "inverse-sqrt-s"
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _explicit_values(self):
        if self.mode == "explicit" and not self.values:
            raise ValueError("weights.values is required with mode=explicit")
        return self


class SolverConfig(_Strict):
    eta: float = Field(default=1e-6, ge=0, description="residual radius.")
    tol_feas: float = Field(default=1e-6, gt=0)
    tol_gap: float = Field(default=1e-6, gt=0)
    max_iters: int = Field(default=200_000, ge=1)


class SignalConfig(_Strict):
    position: Optional[int] = Field(default=None, ge=0, description="a single basis function.")
    coefficients: Optional[dict[int, float]] = Field(default=None, description="basis position -> coefficient.")
    grid_file: Optional[str] = Field(default=None, description="CSV with a 'value' column of 2^g cell values.")

    @model_validator(mode="after")
    def _one_source(self):
        n = sum(x is not None for x in (self.position, self.coefficients, self.grid_file))
        if n != 1:
            raise ValueError("signal needs exactly one of position, coefficients, grid_file")
        if self.coefficients is not None:
            if not self.coefficients:
                raise ValueError("signal.coefficients is empty")
            if min(self.coefficients) < 0:
                raise ValueError("signal.coefficients has a negative position %d" % (min(self.coefficients)))
        return self


class ExperimentConfig(_Strict):
    wavelet: WaveletConfig = WaveletConfig()
    scheme: SchemeConfig
    weights: WeightsConfig = WeightsConfig()
    solver: SolverConfig = SolverConfig()
    signal: Optional[SignalConfig] = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    quality: Optional[int] = Field(default=None, ge=0)
    coherence_averaging: Literal["exact", "oversampled"] = Field(
        default="oversampled", description="cell averages for coherence tables, oversampled is the cascade route."
    )
    coherence_margin: int = Field(default=0, ge=0, description="extra cascade depth of the oversampled route.")
    out: str = "out"
    mode: Literal["infinite", "finite", "series"] = "infinite"
    reference_depth: int = Field(default=12, ge=1)
    theta_target: float = Field(default=0.9, gt=0, lt=1)
    scan_cap: int = Field(default=8, ge=0)
    delta: float = Field(default=0.5, gt=0)
    eps: float = Field(default=0.5, gt=0, lt=1)
    c_univ: float = Field(default=1.0, gt=0)
    theta: Optional[float] = Field(default=None, gt=0, description="balancing constant for allocation, computed if unset.")
    formula: Literal["levels", "general", "recovery", "haar", "haar-weighted"] = "levels"
    guarantee: bool = Field(default=False, description="require recovery guarantees (rejects nu=2).")
    trials: int = Field(default=10_000, ge=1, description="randomized probe trials.")
    ripl_seeds: int = Field(default=5, ge=1, description="patterns in the ripl seed sweep.")
    workers: Optional[int] = Field(default=None, ge=1)

    def wavelet_system(self) -> WaveletSystem:
        """builds and validates the wavelet system."""
        w = self.wavelet
        sys = WaveletSystem.daubechies(w.nu, w.j0, w.family)
        msg = sys.guarantee_warning()
        if msg is not None:
            if self.guarantee:
                raise ValidationError(msg)
            _logger.warning(msg)
        return sys

    def level_scheme(self, with_m: bool = True) -> LevelScheme:
        """builds and validates the level scheme (m defaults to full sampling)."""
        sc = self.scheme
        N = sc.N if sc.N is not None else sc.M
        s = sc.s if sc.s is not None else [1] * len(sc.M)
        m = None
        if with_m:
            widths = [b - a for a, b in zip([0] + N[:-1], N)]
            m = sc.m if sc.m is not None else widths
        return LevelScheme(tuple(N), tuple(sc.M), tuple(s), None if m is None else tuple(m), sc.r0)

    def data_bandwidth(self) -> int:
        return self.scheme.K if self.scheme.K is not None else self.scheme.M[-1]


FLAG_KEYS = ("seed", "quality", "out", "mode", "theta_target", "delta", "eps", "c_univ")


def load_config(path: str = None, overrides: dict = None) -> ExperimentConfig:
    """
    loads a configuration file (json or json5) and applies overrides.

    Args:
        path (str, optional): the configuration file. Defaults to None (overrides only).
        overrides (dict, optional): top level keys overriding the file, None values are ignored.

    Raises:
        ValidationError: on unreadable files, unknown keys or invalid values.

    Returns:
        ExperimentConfig: the validated configuration.
    """
    js = {}
    if path is not None:
        try:
            js = cslab.file.from_json_file(path)
        except (OSError, ValueError) as ex:
            raise ValidationError("cannot read config %s" % (path), ex=ex)
    for k, v in (overrides or {}).items():
        if v is not None:
            js[k] = v
    try:
        return ExperimentConfig.model_validate(js)
    except pydantic.ValidationError as ex:
        raise ValidationError("invalid configuration: %s" % (ex), ex=ex)
