import sys

from actcert.cli import main

sys.exit(main())
