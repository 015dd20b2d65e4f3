import sys

from cbcforge.cli import main

sys.exit(main())
