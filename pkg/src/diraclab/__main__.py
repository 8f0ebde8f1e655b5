import sys

from diraclab.cli import main

sys.exit(main())
