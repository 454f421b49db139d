import sys

from taumodel.cli import main

sys.exit(main())
