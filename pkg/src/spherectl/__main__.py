import sys

from spherectl.cli import main

sys.exit(main())
