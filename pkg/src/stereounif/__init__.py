"""Stereographic-projection uniformity tests on the hypersphere S^q."""

from .coefficients import (
    CoefficientTable,
    KernelSpec,
    build_table,
    expected_h0,
    gegenbauer_coef,
    harmonic_dim,
    series_variance,
    tail_variance,
)
from .distributions import (
    LocalAlternative,
    NullCache,
    NullModel,
    asymptotic_power,
    noncentrality,
    run_test,
    sample_alt_asymptotic,
    sample_null_asymptotic,
    sample_null_exact,
)
from .experiments import ExperimentConfig, run_cell, run_experiment
from .rng import RandomStream
from .sample import SphericalSample, read_sample_csv, write_sample_csv
from .samplers import (
    CapSpec,
    RotSymSpec,
    projected_cdf_Fq,
    sample_cap,
    sample_rotsym,
    sample_uad,
    sample_uniform_sphere,
    tangent_normal_compose,
)
from .statistics import (
    StatSpec,
    TestReport,
    TieError,
    evaluate,
    stat_bingham,
    stat_kfold,
    stat_pn,
    stat_rayleigh,
    stat_tn,
    stat_tnk,
)

__version__ = "0.1.0"
