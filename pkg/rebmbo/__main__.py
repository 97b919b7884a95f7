import sys

from rebmbo.cli import main


sys.exit(main())
