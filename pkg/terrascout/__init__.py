# TerraScout - constrained active-learning exploration of gridded scalar fields
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("terrascout")
except PackageNotFoundError:
    __version__ = "0.0.0-dev"

# ── Centralized project identity ──
# All modules import from here — no scattered name references.
PROJECT_NAME = "TerraScout"
SUMMARY_FILENAME = "summary.csv"
ECHO_FILENAME = "campaign.echo"
TRACE_PREFIX = "trace_"
PLOT_PREFIX = "plot_"
