import sys

from d2dcache.cli import main

sys.exit(main())
