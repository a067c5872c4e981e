import os

# Timed acceptance criteria are one-CPU-core budgets; pin BLAS threads before
# numpy first loads.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(var, "1")
