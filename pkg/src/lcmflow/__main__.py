import sys

from lcmflow.cli import main

sys.exit(main())
