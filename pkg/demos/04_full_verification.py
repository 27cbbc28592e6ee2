"""Run every verification suite through the command line and summarize.

Equivalent to::

    genbackward verify --suite all --output demo-out
    genbackward report --output demo-out

Takes a few minutes at the reference sizes.  The exit status is 0 only if
every check passed.
"""

import os
import sys

from genbackward import cli

OUT = os.environ.get("GENBACKWARD_OUTPUT", "demo-out")

status = cli.main(["verify", "--suite", "all", "--output", OUT])
status = max(status, cli.main(["report", "--output", OUT]))
sys.exit(status)
