import sys

from solarprob.cli import main

sys.exit(main())
