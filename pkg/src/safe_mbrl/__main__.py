import sys

from safe_mbrl.cli import main

sys.exit(main())
