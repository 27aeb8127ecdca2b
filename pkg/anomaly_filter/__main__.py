"""Allow `python -m anomaly_filter`."""
import sys

from .cli import main

sys.exit(main())
