import sys

from leaderlab.cli import main

sys.exit(main())
