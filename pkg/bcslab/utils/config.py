import os

from dotenv import load_dotenv

load_dotenv(override=True)  # priority: .env > global


class Config:
    """Project configuration class"""
    # Parallelism
    THREADS = int(os.getenv("BCSLAB_THREADS", os.cpu_count() or 1))
    LOG_LEVEL = os.getenv("BCSLAB_LOG_LEVEL", "INFO")

    # Solver tolerances
    GAP_TOL = float(os.getenv("BCSLAB_GAP_TOL", 1e-10))
    TC_TOL = float(os.getenv("BCSLAB_TC_TOL", 1e-8))
    DAMPING = float(os.getenv("BCSLAB_DAMPING", 0.5))
    MAXITER = int(os.getenv("BCSLAB_MAXITER", 50000))
    ANDERSON_WINDOW = 5

    # Removable singularities switch to series below this argument
    SERIES_SWITCH = 1e-4
    POWER_ITER_RTOL = 1e-6
    POWER_ITER_MAXITER = 2000

    # Dense eigendecomposition cap, 2M <= 4096
    DENSE_CAP = 4096
    MAX_POINTS_PER_DIM = {1: 64, 2: 44, 3: 12}

    # bdg-scaling box side when --L is not given; 3D, n = 8, h in [0.05, 0.4] fits an H1 exponent in [1.2, 1.8]
    BDG_SCALING_BOX_SIDE = 12.0

    # Random block states are clipped into [eps, 1 - eps]
    BLOCK_CLIP = 1e-6

    # Certificate constants (existential in theory, configurable here)
    CERT_C1 = 0.01
    CERT_C2 = 10.0

    SCHEMA_VERSION = 1

    @classmethod
    def validate(cls):
        """Validate that configured values are usable"""
        if cls.THREADS < 1:
            raise ValueError(f"BCSLAB_THREADS must be >= 1, got {cls.THREADS}")
        for name in ("GAP_TOL", "TC_TOL"):
            value = getattr(cls, name)
            if value <= 0:
                raise ValueError(f"BCSLAB_{name} must be positive, got {value}")
        if not 0 < cls.DAMPING <= 1:
            raise ValueError(f"BCSLAB_DAMPING must lie in (0, 1], got {cls.DAMPING}")
        if cls.MAXITER < 1:
            raise ValueError(f"BCSLAB_MAXITER must be >= 1, got {cls.MAXITER}")
        return True
