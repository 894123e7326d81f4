import sys

from symvar.cli import main

sys.exit(main())
