"""Two-ellipse benchmark, both noise readings.  Extra arguments go to study.py."""

import sys

sys.argv[1:1] = ["tc1"]
from study import main  # noqa: E402

main()
