import sys

from anonypipe.cli import main

sys.exit(main())
