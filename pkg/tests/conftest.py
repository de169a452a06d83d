import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

# make the reference oracle importable from any test module
sys.path.insert(0, str(Path(__file__).parent))

# fixed example generation keeps suite output reproducible run to run
settings.register_profile(
    "det", derandomize=True, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("det")
