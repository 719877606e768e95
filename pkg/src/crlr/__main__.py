import sys

import crlr.cli


sys.exit(crlr.cli.main())
