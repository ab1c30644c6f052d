import sys

from dgpirl.cli import main

sys.exit(main())
