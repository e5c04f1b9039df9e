import sys

from rmtdetect.cli import main

sys.exit(main())
