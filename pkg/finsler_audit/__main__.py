import sys

from finsler_audit.cli import main

sys.exit(main())
