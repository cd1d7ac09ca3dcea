import sys

from wmrunner.server import main

sys.exit(main())
