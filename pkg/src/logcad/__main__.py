import sys

from logcad.cli import main

sys.exit(main())
