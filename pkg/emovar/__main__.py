import sys

from emovar.main import main

sys.exit(main())
