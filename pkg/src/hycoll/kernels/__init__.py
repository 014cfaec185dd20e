"""Application kernels: SUMMA matrix multiply and a 2D Poisson solver."""
from .poisson import PoissonConfig, manufactured_problem, poisson_run, row_partition
from .stats import KernelRecord, KernelStats
from .summa import SummaConfig, assemble, summa_matrices, summa_run
