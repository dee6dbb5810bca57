import sys

from crtinfer.cli import main

sys.exit(main())
