import sys

from flowprop.cli import main

sys.exit(main())
