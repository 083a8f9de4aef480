"""
grap - loss-weight tuning by gradient alignment

Same as the ``grap`` console script: ``python main.py run -c configs/default.yaml``
"""

import sys

from grapApp.cli import main

if __name__ == "__main__":
    sys.exit(main())
