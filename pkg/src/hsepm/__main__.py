import sys

from hsepm.cli import main

sys.exit(main())
