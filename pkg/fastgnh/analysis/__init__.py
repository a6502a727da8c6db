from .problem import Problem, build_problem, load_data
from .report import ExperimentReport
from .convergence import SamplingConvergence, run_convergence
from .compression import (
    CompressionComparison,
    SampledCompression,
    run_compression,
    run_sampled_compression,
)
from .memory import run_memory_report
