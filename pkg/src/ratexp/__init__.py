"""Marginal-data tests of rational expectations."""

__version__ = "0.1.0"

from .engine import TestConfig, TestReport, run_test
from .oracle import DiscreteDist, check_mps, construct_martingale_coupling
from .sample_io import PooledSample, load_pooled_sample, winsorize_upper
from .variants import (combined_test, direct_test, naive_mean_test, test_with_rounding,
                       test_with_selection, test_with_shocks, variance_test)

__all__ = [
    "DiscreteDist", "PooledSample", "TestConfig", "TestReport", "check_mps", "combined_test",
    "construct_martingale_coupling", "direct_test", "load_pooled_sample", "naive_mean_test",
    "run_test", "test_with_rounding", "test_with_selection", "test_with_shocks", "variance_test",
    "winsorize_upper",
]
