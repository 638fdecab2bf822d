import sys

from wavepolymer.cli import main

sys.exit(main())
